#pragma once

#include "crisk/common.hpp"
#include "crisk/csv.hpp"
#include "crisk/dataset.hpp"
#include "crisk/rng.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace crisk {

enum class SimModel { pcsh, psdh };
enum class Structure { independent, exchangeable, ar1 };
enum class Design { continuous, binary_balanced, binary_sparse };

inline SimModel parse_sim_model(const std::string& s) {
    if (s == "pcsh") return SimModel::pcsh;
    if (s == "psdh") return SimModel::psdh;
    throw Error("unknown model '" + s + "' (expected pcsh or psdh)");
}

inline Structure parse_structure(const std::string& s) {
    if (s == "independent") return Structure::independent;
    if (s == "exchangeable") return Structure::exchangeable;
    if (s == "ar1") return Structure::ar1;
    throw Error("unknown structure '" + s + "' (expected independent, exchangeable or ar1)");
}

inline Design parse_design(const std::string& s) {
    if (s == "continuous") return Design::continuous;
    if (s == "binary_balanced") return Design::binary_balanced;
    if (s == "binary_sparse") return Design::binary_sparse;
    throw Error("unknown design '" + s + "' (expected continuous, binary_balanced or binary_sparse)");
}

inline std::string to_string(SimModel m) { return m == SimModel::pcsh ? "pcsh" : "psdh"; }
inline std::string to_string(Structure s) {
    return s == Structure::independent ? "independent" : s == Structure::exchangeable ? "exchangeable" : "ar1";
}
inline std::string to_string(Design d) {
    return d == Design::continuous ? "continuous" : d == Design::binary_balanced ? "binary_balanced" : "binary_sparse";
}

/// Dichotomization threshold of a design (values below it are coded 1).
inline std::optional<double> design_threshold(Design d) {
    if (d == Design::binary_balanced) return 0.0;
    if (d == Design::binary_sparse) return -1.0;
    return std::nullopt;
}

/// Cause-1 coefficients: (1.96, -0.79, -0.5, -1.35, 1.29) on the first five covariates.
inline Vector default_beta1(std::size_t p) {
    Vector b = Vector::Zero(static_cast<Eigen::Index>(p));
    const double v[] = {1.96, -0.79, -0.5, -1.35, 1.29};
    for (std::size_t j = 0; j < 5 && j < p; ++j) b[static_cast<Eigen::Index>(j)] = v[j];
    return b;
}

/// Cause-2 coefficients: (-1.16, -0.86, 0.5) on covariates 11-13 when p >= 13, else zero.
inline Vector default_beta2(std::size_t p) {
    Vector b = Vector::Zero(static_cast<Eigen::Index>(p));
    if (p >= 13) {
        b[10] = -1.16;
        b[11] = -0.86;
        b[12] = 0.5;
    }
    return b;
}

struct SimConfig {
    SimModel model = SimModel::pcsh;
    std::size_t n = 500;
    std::size_t p = 20;
    Structure structure = Structure::independent;
    Design design = Design::continuous;
    Vector beta1;                  // empty: default_beta1(p)
    Vector beta2;                  // empty: default_beta2(p)
    double lambda01 = 0.15;
    double lambda02 = 0.10;
    double p_mix = 0.6;
    double censor_max = 20.0;      // censoring ~ U(0, censor_max); infinity disables censoring
    double rho = 0.5;
    std::size_t block = 10;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;      // distinguishes study cells sharing a seed
    std::uint64_t replicate = 0;
};

/// True generating model with closed-form cumulative incidence.
struct SimTruth {
    SimModel model = SimModel::pcsh;
    Vector beta1, beta2;
    double lambda01 = 0.15, lambda02 = 0.10, p_mix = 0.6;

    /// P(cause | z), the limit of the CIF as t -> infinity.
    double cause_probability(int cause, const Vector& z) const {
        const double e1 = std::exp(beta1.dot(z)), e2 = std::exp(beta2.dot(z));
        if (model == SimModel::pcsh) {
            const double h1 = lambda01 * e1, h2 = lambda02 * e2;
            return (cause == 1 ? h1 : h2) / (h1 + h2);
        }
        const double p1 = -std::expm1(e1 * std::log1p(-p_mix));
        return cause == 1 ? p1 : 1.0 - p1;
    }

    double cif(int cause, double t, const Vector& z) const {
        if (cause != 1 && cause != 2) throw Error("cause out of range");
        if (t <= 0.0) return 0.0;
        const double e1 = std::exp(beta1.dot(z)), e2 = std::exp(beta2.dot(z));
        if (model == SimModel::pcsh) {
            const double h1 = lambda01 * e1, h2 = lambda02 * e2;
            const double total = h1 + h2;
            return (cause == 1 ? h1 : h2) / total * -std::expm1(-total * t);
        }
        if (cause == 1) return -std::expm1(e1 * std::log1p(-p_mix * -std::expm1(-t)));
        return cause_probability(2, z) * -std::expm1(-e2 * t);
    }
};

namespace detail {

inline Matrix block_cholesky(Structure s, std::size_t size, double rho) {
    Matrix R = Matrix::Identity(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t k = 0; k < size; ++k)
            if (i != k)
                R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    s == Structure::exchangeable
                        ? rho
                        : std::pow(rho, std::abs(static_cast<double>(i) - static_cast<double>(k)));
    return R.llt().matrixL();
}

/// One subject's covariate row from its own stream.
inline void draw_covariates(Rng& rng, const SimConfig& cfg, const std::vector<Matrix>& chol, double* row) {
    std::normal_distribution<double> normal;
    Vector e;
    for (std::size_t start = 0, b = 0; start < cfg.p; start += cfg.block, ++b) {
        const std::size_t len = std::min(cfg.block, cfg.p - start);
        e.resize(static_cast<Eigen::Index>(len));
        for (std::size_t k = 0; k < len; ++k) e[static_cast<Eigen::Index>(k)] = normal(rng);
        if (cfg.structure != Structure::independent) e = chol[b] * e;
        for (std::size_t k = 0; k < len; ++k) row[start + k] = e[static_cast<Eigen::Index>(k)];
    }
    if (auto a = design_threshold(cfg.design))
        for (std::size_t k = 0; k < cfg.p; ++k) row[k] = row[k] < *a ? 1.0 : 0.0;
}

inline std::vector<Matrix> covariate_factors(const SimConfig& cfg) {
    std::vector<Matrix> chol;
    if (cfg.structure == Structure::independent) return chol;
    for (std::size_t start = 0; start < cfg.p; start += cfg.block)
        chol.push_back(block_cholesky(cfg.structure, std::min(cfg.block, cfg.p - start), cfg.rho));
    return chol;
}

inline Rng subject_stream(const SimConfig& cfg, std::size_t i) {
    return Rng({cfg.seed, cfg.stream, cfg.replicate, static_cast<std::uint64_t>(i)});
}

}  // namespace detail

inline SimTruth make_truth(const SimConfig& cfg) {
    SimTruth t;
    t.model = cfg.model;
    t.beta1 = cfg.beta1.size() ? cfg.beta1 : default_beta1(cfg.p);
    t.beta2 = cfg.beta2.size() ? cfg.beta2 : default_beta2(cfg.p);
    if (static_cast<std::size_t>(t.beta1.size()) != cfg.p || static_cast<std::size_t>(t.beta2.size()) != cfg.p)
        throw Error("true coefficient length differs from p");
    t.lambda01 = cfg.lambda01;
    t.lambda02 = cfg.lambda02;
    t.p_mix = cfg.p_mix;
    return t;
}

/// n x p covariate matrix: standard normal marginals in blocks of `block` columns
/// (exchangeable or AR(1) correlation within a block), optionally dichotomized.
inline Matrix gen_covariates(const SimConfig& cfg) {
    if (cfg.p == 0 || cfg.block == 0) throw Error("p and block size must be positive");
    auto chol = detail::covariate_factors(cfg);
    Matrix z(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.p));
    std::vector<double> row(cfg.p);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        Rng rng = detail::subject_stream(cfg, i);
        detail::draw_covariates(rng, cfg, chol, row.data());
        for (std::size_t j = 0; j < cfg.p; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return z;
}

struct SimData {
    CompetingRisksDataset data;
    SimTruth truth;
};

/// Draws a dataset from the configured model. Each subject uses its own random stream
/// keyed by (seed, stream, replicate, subject), so output does not depend on scheduling.
inline SimData simulate(const SimConfig& cfg) {
    SimTruth truth = make_truth(cfg);
    auto chol = detail::covariate_factors(cfg);
    const std::size_t n = cfg.n, p = cfg.p;
    std::vector<double> time(n);
    std::vector<int> status(n);
    Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    std::vector<double> row(p);
    Vector zi(static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = detail::subject_stream(cfg, i);
        detail::draw_covariates(rng, cfg, chol, row.data());
        for (std::size_t j = 0; j < p; ++j) zi[static_cast<Eigen::Index>(j)] = row[j];
        z.row(static_cast<Eigen::Index>(i)) = zi.transpose();
        const double e1 = std::exp(truth.beta1.dot(zi)), e2 = std::exp(truth.beta2.dot(zi));
        const double u_time = rng.uniform(), u_cause = rng.uniform(), u_cens = rng.uniform();
        double t;
        int cause;
        if (cfg.model == SimModel::pcsh) {
            const double h1 = cfg.lambda01 * e1, h2 = cfg.lambda02 * e2;
            t = -std::log(u_time) / (h1 + h2);
            cause = u_cause < h1 / (h1 + h2) ? 1 : 2;
        } else {
            const double p1 = truth.cause_probability(1, zi);
            cause = u_cause < p1 ? 1 : 2;
            if (cause == 1) {
                // Invert CIF1(t)/CIF1(inf) = u in closed form.
                const double inner = -std::expm1(std::log1p(-u_time * p1) / e1);
                t = -std::log1p(-inner / cfg.p_mix);
            } else {
                t = -std::log(u_time) / e2;
            }
        }
        const double c = std::isinf(cfg.censor_max) ? kInf : cfg.censor_max * u_cens;
        if (c < t) {
            time[i] = c;
            status[i] = 0;
        } else {
            time[i] = t;
            status[i] = cause;
        }
    }
    return {CompetingRisksDataset(std::move(time), std::move(status), std::move(z), {}, 2), std::move(truth)};
}

inline double true_cif_pcsh(const Vector& z, double t, const SimTruth& truth, int cause = 1) {
    SimTruth tt = truth;
    tt.model = SimModel::pcsh;
    return tt.cif(cause, t, z);
}

inline double true_cif_psdh(const Vector& z, double t, const SimTruth& truth, int cause = 1) {
    SimTruth tt = truth;
    tt.model = SimModel::psdh;
    return tt.cif(cause, t, z);
}

/// Evaluation point for continuous designs: every covariate at 0.5.
inline Vector continuous_z0(std::size_t p) { return Vector::Constant(static_cast<Eigen::Index>(p), 0.5); }

/// Seed for binary-design evaluation points (first seed whose draw gives z0 = (0,1,0,1,1) on the
/// cause-1 support and zeros on the cause-2 support).
inline constexpr std::uint64_t kBinaryZ0Seed = 898;

/// Evaluation point for binary designs: independent Bernoulli(0.5) entries drawn in order
/// from the stream keyed by (seed, 0, 0). Prefixes agree across p.
inline Vector binary_z0(std::size_t p, std::uint64_t seed = kBinaryZ0Seed) {
    Rng rng({seed, 0, 0});
    Vector z(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) z[static_cast<Eigen::Index>(j)] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    return z;
}

inline Vector design_z0(Design d, std::size_t p, std::uint64_t seed = kBinaryZ0Seed) {
    return d == Design::continuous ? continuous_z0(p) : binary_z0(p, seed);
}

/// `time,cif1,cif2` on an even grid over [0, t_max].
inline void write_truth(const SimTruth& truth, const Vector& z0, double t_max, std::size_t points, std::ostream& os) {
    csv::Writer w(os);
    w.row({"time", "cif1", "cif2"});
    for (std::size_t k = 0; k < points; ++k) {
        const double t = points == 1 ? t_max : t_max * static_cast<double>(k) / static_cast<double>(points - 1);
        w.row({csv::num(t), csv::num(truth.cif(1, t, z0)), csv::num(truth.cif(2, t, z0))});
    }
}

}  // namespace crisk
