#pragma once

#include "crisk/dataset.hpp"
#include "crisk/parallel.hpp"
#include "crisk/rng.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace crisk {

/// Cumulative incidence step curve for one cause. Bounds are empty until a band is attached.
struct CifCurve {
    int cause = 1;
    std::vector<double> times;
    std::vector<double> estimate;
    std::vector<double> lower;
    std::vector<double> upper;
    double alpha = 0.05;

    bool has_bounds() const { return !lower.empty(); }

    /// Right-continuous evaluation; zero before the first knot.
    double operator()(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 0.0;
        return estimate[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

/// Aalen-Johansen estimates for all causes at every distinct event time.
struct AalenJohansen {
    std::vector<double> times;
    std::vector<double> survival;            // S(t) after the jump at t
    std::vector<std::vector<double>> cif;    // cif[j-1][k]
};

inline AalenJohansen aalen_johansen(const CompetingRisksDataset& data) {
    const int J = data.cause_count();
    const auto& t = data.time();
    const auto& s = data.status();
    const std::size_t n = data.n();
    AalenJohansen out;
    out.cif.assign(static_cast<std::size_t>(J), {});
    std::vector<double> F(static_cast<std::size_t>(J), 0.0);
    std::vector<std::size_t> d(static_cast<std::size_t>(J));
    double surv = 1.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::fill(d.begin(), d.end(), 0);
        std::size_t total = 0;
        while (j < n && t[j] == t[i]) {
            if (s[j] > 0) {
                ++d[static_cast<std::size_t>(s[j] - 1)];
                ++total;
            }
            ++j;
        }
        if (total > 0) {
            const double at_risk = static_cast<double>(n - i);
            double hazard_sum = 0.0;
            for (int c = 0; c < J; ++c) {
                double h = static_cast<double>(d[static_cast<std::size_t>(c)]) / at_risk;
                F[static_cast<std::size_t>(c)] += surv * h;
                hazard_sum += h;
            }
            surv = hazard_sum >= 1.0 ? 0.0 : surv * (1.0 - hazard_sum);
            out.times.push_back(t[i]);
            out.survival.push_back(surv);
            for (int c = 0; c < J; ++c) out.cif[static_cast<std::size_t>(c)].push_back(F[static_cast<std::size_t>(c)]);
        }
        i = j;
    }
    return out;
}

/// Nonparametric CIF of `cause`, with knots at that cause's event times.
inline CifCurve nonparametric_cif(const CompetingRisksDataset& data, int cause) {
    data.require_competing();
    if (cause < 1 || cause > data.cause_count()) throw Error("cause out of range");
    AalenJohansen aj = aalen_johansen(data);
    CifCurve curve;
    curve.cause = cause;
    const auto& F = aj.cif[static_cast<std::size_t>(cause - 1)];
    double prev = 0.0;
    for (std::size_t k = 0; k < aj.times.size(); ++k) {
        if (F[k] != prev) {
            curve.times.push_back(aj.times[k]);
            curve.estimate.push_back(F[k]);
            prev = F[k];
        }
    }
    return curve;
}

namespace detail {

inline double cloglog(double f) {
    if (f <= 0.0) return -kInf;
    if (f >= 1.0) return kInf;
    return std::log(-std::log1p(-f));
}

inline double inv_cloglog(double x) {
    if (x == -kInf) return 0.0;
    if (x == kInf) return 1.0;
    return -std::expm1(-std::exp(x));
}

/// Type-7 percentile of ascending CIF values, interpolated on the cloglog scale.
/// Order statistics are returned untransformed, so a single replicate gives exact bounds.
inline double cloglog_quantile(const std::vector<double>& sorted, double prob) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
    const double a = cloglog(sorted[lo]), b = cloglog(sorted[hi]);
    if (!std::isfinite(a) || !std::isfinite(b)) return frac < 0.5 ? sorted[lo] : sorted[hi];
    return inv_cloglog(a + frac * (b - a));
}

/// Percentile band from per-replicate curves (rows = replicates).
/// Bounds are widened where needed so that lower <= estimate <= upper.
inline void attach_percentile_band(CifCurve& curve, const std::vector<std::vector<double>>& reps, double alpha) {
    const std::size_t K = curve.times.size();
    curve.lower.assign(K, 0.0);
    curve.upper.assign(K, 0.0);
    curve.alpha = alpha;
    std::vector<double> col;
    for (std::size_t k = 0; k < K; ++k) {
        col.clear();
        for (const auto& r : reps) col.push_back(r[k]);
        std::sort(col.begin(), col.end());
        curve.lower[k] = std::min(cloglog_quantile(col, alpha / 2), curve.estimate[k]);
        curve.upper[k] = std::max(cloglog_quantile(col, 1 - alpha / 2), curve.estimate[k]);
    }
}

/// Bootstrap resample of subjects; replicate 0 is the observed sample itself.
inline std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed, std::size_t replicate) {
    std::vector<std::size_t> rows(n);
    if (replicate == 0) {
        std::iota(rows.begin(), rows.end(), 0);
        return rows;
    }
    Rng rng({seed, 0xB007ULL, replicate});
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
    return rows;
}

}  // namespace detail

/// Pointwise (1 - alpha) bootstrap band for a nonparametric CIF curve.
///
/// B counts the observed sample as replicate 0 plus B - 1 subject resamples, so
/// B = 1 gives a zero-width band at the estimate. Percentiles are taken on the
/// complementary log-log scale. Deterministic in `seed` for any thread count.
inline CifCurve cif_pointwise_band(CifCurve curve, const CompetingRisksDataset& data, double alpha, std::size_t B,
                                   std::uint64_t seed, unsigned threads = 1) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    if (B < 1) throw Error("B must be at least 1");
    std::vector<std::vector<double>> reps(B);
    parallel_for(B, threads, [&](std::size_t b) {
        auto rows = detail::bootstrap_rows(data.n(), seed, b);
        CompetingRisksDataset boot = b == 0 ? data : data.subset(rows);
        AalenJohansen aj = aalen_johansen(boot);
        const auto& F = aj.cif[static_cast<std::size_t>(curve.cause - 1)];
        std::vector<double> vals(curve.times.size());
        for (std::size_t k = 0; k < curve.times.size(); ++k) {
            auto it = std::upper_bound(aj.times.begin(), aj.times.end(), curve.times[k]);
            vals[k] = it == aj.times.begin() ? 0.0 : F[static_cast<std::size_t>(it - aj.times.begin()) - 1];
        }
        reps[b] = std::move(vals);
    });
    detail::attach_percentile_band(curve, reps, alpha);
    return curve;
}

/// Curve export: `time,estimate,lower,upper,cause[,model]`. Missing bounds are written empty.
inline void write_curves(const std::vector<CifCurve>& curves, std::ostream& os, const std::string& model = "") {
    csv::Writer w(os);
    std::vector<std::string> header{"time", "estimate", "lower", "upper", "cause"};
    if (!model.empty()) header.push_back("model");
    w.row(header);
    for (const auto& c : curves) {
        for (std::size_t k = 0; k < c.times.size(); ++k) {
            std::vector<std::string> row{csv::num(c.times[k]), csv::num(c.estimate[k]),
                                         c.has_bounds() ? csv::num(c.lower[k]) : "",
                                         c.has_bounds() ? csv::num(c.upper[k]) : "", csv::num(c.cause)};
            if (!model.empty()) row.push_back(model);
            w.row(row);
        }
    }
}

}  // namespace crisk
