#pragma once

#include "crisk/crisk.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace crisk::testing {

// Random competing-risks data with ties, censoring and J = 2.
inline CompetingRisksDataset random_dataset(std::size_t n, std::size_t p, std::uint64_t seed, double censor = 0.3,
                                         bool ties = true) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> t(n);
    std::vector<int> s(n);
    Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal(gen);
        double e = std::exp(0.5 * z(static_cast<Eigen::Index>(i), 0));
        double x = -std::log(unif(gen)) / e;
        t[i] = ties ? std::ceil(x * 4.0) / 4.0 : x;
        double u = unif(gen);
        s[i] = u < censor ? 0 : (u < censor + (1 - censor) * 0.6 ? 1 : 2);
    }
    return CompetingRisksDataset(std::move(t), std::move(s), std::move(z), {}, 2);
}

// The four-subject example: times 1..4, status 1, 2, 0, 1.
inline CompetingRisksDataset four_rows() {
    Matrix z(4, 1);
    z << 0.2, -0.4, 1.0, 0.5;
    return CompetingRisksDataset({1, 2, 3, 4}, {1, 2, 0, 1}, z, {}, 2);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("crisk_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Central finite-difference gradient of the log partial likelihood.
inline Vector fd_gradient(const CoxProblem& P, const Vector& beta, double h = 1e-5) {
    Vector g(beta.size());
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        Vector a = beta, b = beta;
        a[j] += h;
        b[j] -= h;
        g[j] = (log_partial_likelihood(P, a) - log_partial_likelihood(P, b)) / (2 * h);
    }
    return g;
}

inline double max_rel_error(const Vector& a, const Vector& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace crisk::testing
