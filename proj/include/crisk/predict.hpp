#pragma once

#include "crisk/cox.hpp"
#include "crisk/finegray.hpp"
#include "crisk/lasso.hpp"
#include "crisk/npcif.hpp"
#include "crisk/parallel.hpp"

#include <memory>
#include <string>
#include <vector>

namespace crisk {

/// Cause-specific hazards model: one coefficient vector and Breslow baseline per cause.
struct PcshModel {
    std::vector<Vector> betas;
    std::vector<StepFunction> baselines;

    int cause_count() const { return static_cast<int>(betas.size()); }
};

/// Subdistribution hazards model for one cause with its weighted Breslow baseline.
struct PsdhModel {
    int cause = 1;
    Vector beta;
    StepFunction baseline;
};

/// Attaches Breslow baselines for the given per-cause coefficients (one per cause, all J required).
inline PcshModel make_pcsh_model(const CompetingRisksDataset& data, std::vector<Vector> betas) {
    if (static_cast<int>(betas.size()) != data.cause_count()) throw Error("PCSH model needs coefficients for every cause");
    PcshModel m;
    for (int j = 1; j <= data.cause_count(); ++j) {
        CoxProblem P = cause_specific_problem(data, j);
        m.baselines.push_back(breslow_baseline(P, betas[static_cast<std::size_t>(j - 1)]));
    }
    m.betas = std::move(betas);
    return m;
}

inline PsdhModel make_psdh_model(const WeightedRiskData& w, Vector beta) {
    PsdhModel m;
    m.cause = w.cause;
    m.baseline = breslow_baseline(w.problem(), beta);
    m.beta = std::move(beta);
    return m;
}

namespace detail {

inline void check_z0(const Vector& beta, const Vector& z0) {
    if (beta.size() != z0.size()) throw Error("z0 length differs from covariate count");
}

inline CifCurve restrict_to(const CifCurve& full, const std::vector<double>& times) {
    if (times.empty()) return full;
    CifCurve c;
    c.cause = full.cause;
    c.times = times;
    for (double t : times) c.estimate.push_back(full(t));
    return c;
}

}  // namespace detail

/// F_j(t | z0) = sum over cause-j event times X <= t of S(X- | z0) dLambda_0j(X) exp(beta_j'z0),
/// with S(u | z0) = exp(-sum_c Lambda_c(u | z0)). Knots default to the cause-j event times.
inline CifCurve pcsh_cif(const PcshModel& m, const Vector& z0, int cause, const std::vector<double>& times = {}) {
    if (cause < 1 || cause > m.cause_count()) throw Error("cause " + std::to_string(cause) + " is not fitted");
    std::vector<double> risk(m.betas.size());
    for (std::size_t c = 0; c < m.betas.size(); ++c) {
        detail::check_z0(m.betas[c], z0);
        risk[c] = std::exp(m.betas[c].dot(z0));
    }
    const StepFunction& H = m.baselines[static_cast<std::size_t>(cause - 1)];
    CifCurve curve;
    curve.cause = cause;
    double F = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < H.size(); ++k) {
        const double t = H.knots[k];
        double cum = 0.0;
        for (std::size_t c = 0; c < m.betas.size(); ++c) cum += m.baselines[c].left_limit(t) * risk[c];
        F += std::exp(-cum) * (H.values[k] - prev) * risk[static_cast<std::size_t>(cause - 1)];
        prev = H.values[k];
        curve.times.push_back(t);
        curve.estimate.push_back(std::min(F, 1.0));
    }
    return detail::restrict_to(curve, times);
}

/// Overall event-free survival exp(-sum_c Lambda_c(t | z0)) evaluated at `times`.
inline std::vector<double> pcsh_survival(const PcshModel& m, const Vector& z0, const std::vector<double>& times) {
    std::vector<double> out;
    for (double t : times) {
        double cum = 0.0;
        for (std::size_t c = 0; c < m.betas.size(); ++c) cum += m.baselines[c](t) * std::exp(m.betas[c].dot(z0));
        out.push_back(std::exp(-cum));
    }
    return out;
}

/// F(t | z0) = 1 - exp(-Lambda~_0(t) exp(beta'z0)).
inline CifCurve psdh_cif(const PsdhModel& m, const Vector& z0, const std::vector<double>& times = {}) {
    detail::check_z0(m.beta, z0);
    const double risk = std::exp(m.beta.dot(z0));
    CifCurve curve;
    curve.cause = m.cause;
    for (std::size_t k = 0; k < m.baseline.size(); ++k) {
        curve.times.push_back(m.baseline.knots[k]);
        curve.estimate.push_back(-std::expm1(-m.baseline.values[k] * risk));
    }
    return detail::restrict_to(curve, times);
}

enum class ModelKind { pcsh, psdh };

/// Refit specification for bootstrap bands: the active covariate set is held fixed.
/// For PCSH `active` has one entry per cause; for PSDH only `active[0]` is used.
struct BandSpec {
    ModelKind kind = ModelKind::pcsh;
    int cause = 1;
    std::vector<std::vector<std::size_t>> active;
};

struct BandResult {
    CifCurve curve;
    std::size_t dropped = 0;      // replicates whose refit did not converge
    std::size_t used = 0;
};

namespace detail {

/// Unpenalized refit of the fixed active set; returns false when any fit fails to converge.
inline bool refit_curve(const CompetingRisksDataset& data, const BandSpec& spec, const Vector& z0, CifCurve& out) {
    if (spec.kind == ModelKind::pcsh) {
        if (static_cast<int>(spec.active.size()) != data.cause_count())
            throw Error("band specification needs an active set for every cause");
        std::vector<Vector> betas;
        for (int j = 1; j <= data.cause_count(); ++j) {
            if (data.event_count(j) == 0) return false;
            CoxFit f = refit_active(cause_specific_problem(data, j), spec.active[static_cast<std::size_t>(j - 1)]);
            if (!f.converged) return false;
            betas.push_back(std::move(f.beta));
        }
        out = pcsh_cif(make_pcsh_model(data, std::move(betas)), z0, spec.cause);
        return true;
    }
    if (spec.active.empty()) throw Error("band specification needs an active set");
    if (data.event_count(spec.cause) == 0) return false;
    WeightedRiskData w = finegray_expand(data, spec.cause);
    CoxFit f = refit_active(w.problem(), spec.active[0]);
    if (!f.converged) return false;
    out = psdh_cif(make_psdh_model(w, std::move(f.beta)), z0);
    return true;
}

}  // namespace detail

/// Pointwise (1 - alpha) band by subject bootstrap with refitting on the fixed active set.
///
/// The estimate is the full-data refit. Replicate 0 is the observed sample, so B = 1 gives a
/// zero-width band; replicates whose refit does not converge are dropped and counted.
inline BandResult cif_band(const CompetingRisksDataset& data, const BandSpec& spec, const Vector& z0, double alpha,
                           std::size_t B, std::uint64_t seed, unsigned threads = 1) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    if (B < 1) throw Error("B must be at least 1");
    BandResult res;
    if (!detail::refit_curve(data, spec, z0, res.curve)) throw Error("model refit on the observed data did not converge");
    std::vector<std::vector<double>> reps(B);
    std::vector<char> ok(B, 0);
    parallel_for(B, threads, [&](std::size_t b) {
        CifCurve c;
        if (b == 0) {
            c = res.curve;
        } else {
            auto rows = detail::bootstrap_rows(data.n(), seed, b);
            if (!detail::refit_curve(data.subset(rows), spec, z0, c)) return;
        }
        std::vector<double> vals;
        for (double t : res.curve.times) vals.push_back(c(t));
        reps[b] = std::move(vals);
        ok[b] = 1;
    });
    std::vector<std::vector<double>> kept;
    for (std::size_t b = 0; b < B; ++b) {
        if (ok[b])
            kept.push_back(std::move(reps[b]));
        else
            ++res.dropped;
    }
    res.used = kept.size();
    detail::attach_percentile_band(res.curve, kept, alpha);
    return res;
}

inline std::string to_string(ModelKind k) { return k == ModelKind::pcsh ? "pcsh" : "psdh"; }

}  // namespace crisk
