#pragma once

#include "crisk/cox.hpp"
#include "crisk/finegray.hpp"
#include "crisk/predict.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace crisk {

struct ScreenOptions {
    double alpha = 0.05;
    std::optional<std::size_t> top_m;
    std::size_t min_ones = 10;          // binary columns with fewer ones are excluded
};

struct ScreenEntry {
    std::size_t index = 0;
    double beta = 0.0;
    double statistic = 0.0;             // Wald z, or signed root of the score statistic
    double p_value = 1.0;
    std::string method;                 // wald | score | excluded
};

struct ScreenResult {
    std::vector<ScreenEntry> entries;   // one per covariate, in column order
    std::vector<std::size_t> retained;  // ascending p-value
    ScreenOptions options;
};

namespace detail {

inline bool is_binary_column(const Matrix& z, Eigen::Index j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        if (z(i, j) != 0.0 && z(i, j) != 1.0) return false;
    return true;
}

}  // namespace detail

/// One-covariate-at-a-time (weighted) Cox fits. Wald p-values, or score-test p-values
/// for covariates whose single-covariate likelihood is monotone.
inline ScreenResult univariate_screen(const CompetingRisksDataset& data, ModelKind model, int cause,
                                      const ScreenOptions& opt = {}) {
    if (!(opt.alpha > 0.0 && opt.alpha <= 1.0)) throw Error("alpha must lie in (0, 1]");
    CoxProblem base = model == ModelKind::pcsh ? cause_specific_problem(data, cause)
                                               : finegray_expand(data, cause).problem();
    if (base.event_count() == 0) throw Error("no events of the modeled cause");
    const Matrix& z = data.covariates();
    CoxProblem single = base;
    ScreenResult res;
    res.options = opt;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        ScreenEntry e;
        e.index = static_cast<std::size_t>(j);
        if (detail::is_binary_column(z, j) && static_cast<std::size_t>(z.col(j).sum()) < opt.min_ones) {
            e.method = "excluded";
            res.entries.push_back(e);
            continue;
        }
        single.z = z.col(j);
        CoxFit fit = newton_fit(single, Vector::Zero(1));
        ScoreInformation si = score_information(single, fit.beta);
        if (fit.converged && !fit.monotone && si.information(0, 0) > 0.0) {
            e.method = "wald";
            e.beta = fit.beta[0];
            e.statistic = e.beta * std::sqrt(si.information(0, 0));
            e.p_value = std::erfc(std::abs(e.statistic) / std::sqrt(2.0));
        } else {
            ScoreInformation s0 = score_information(single, Vector::Zero(1));
            e.method = "score";
            e.beta = fit.beta[0];
            const double info = s0.information(0, 0);
            e.statistic = info > 0.0 ? s0.gradient[0] / std::sqrt(info) : 0.0;
            e.p_value = info > 0.0 ? std::erfc(std::abs(e.statistic) / std::sqrt(2.0)) : 1.0;
        }
        res.entries.push_back(e);
        if (e.p_value < opt.alpha) res.retained.push_back(e.index);
    }
    std::stable_sort(res.retained.begin(), res.retained.end(), [&](std::size_t a, std::size_t b) {
        return res.entries[a].p_value < res.entries[b].p_value;
    });
    if (opt.top_m && res.retained.size() > *opt.top_m) res.retained.resize(*opt.top_m);
    return res;
}

/// `covariate,beta,statistic,p_value,method,retained`.
inline void write_screen(const ScreenResult& r, const std::vector<std::string>& names, std::ostream& os) {
    std::vector<char> kept(r.entries.size(), 0);
    for (auto j : r.retained) kept[j] = 1;
    csv::Writer w(os);
    w.row({"covariate", "beta", "statistic", "p_value", "method", "retained"});
    for (const auto& e : r.entries)
        w.row({names[e.index], csv::num(e.beta), csv::num(e.statistic), csv::num(e.p_value), e.method,
               kept[e.index] ? "1" : "0"});
}

}  // namespace crisk
