#pragma once

#include "crisk/cox.hpp"
#include "crisk/finegray.hpp"
#include "crisk/lasso.hpp"
#include "crisk/tuning.hpp"

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace crisk {

struct BoostOptions {
    std::size_t gamma_max = 100;
    std::optional<double> penalty;           // default: 9 x events of the modeled cause
    std::vector<std::size_t> mandatory;      // updated every step without penalty, never selected
};

/// Componentwise likelihood-boosting trajectory; betas[s] holds the coefficients after s steps.
struct BoostTrajectory {
    std::vector<Vector> betas;
    std::vector<int> selected;               // -1 at step 0
    std::vector<double> logliks;
    double penalty = 0.0;
    Vector scale;
    std::size_t events = 0;
    std::vector<std::string> warnings;

    std::size_t steps() const { return betas.size() - 1; }

    std::vector<std::size_t> df() const {
        std::vector<std::size_t> out;
        for (const auto& b : betas) out.push_back(static_cast<std::size_t>((b.array() != 0.0).count()));
        return out;
    }
};

/// Boosting on the (weighted) partial likelihood of P. Covariates are scaled to unit
/// standard deviation internally; each step first refreshes mandatory coefficients with
/// one unpenalized Newton step, then updates the single covariate with the largest
/// penalized score statistic U^2/(I + penalty) by U/(I + penalty). An update that would
/// lower the likelihood is skipped in favour of the next-best covariate.
inline BoostTrajectory boost(const CoxProblem& P, const BoostOptions& opt = {}) {
    BoostTrajectory tr;
    tr.events = P.event_count();
    if (tr.events == 0) throw Error("no events of the modeled cause");
    tr.penalty = opt.penalty ? *opt.penalty : 9.0 * static_cast<double>(tr.events);
    if (!(tr.penalty >= 0.0)) throw Error("boosting penalty must be non-negative");
    const std::size_t p = P.p();
    std::vector<char> is_mandatory(p, 0);
    for (auto m : opt.mandatory) {
        if (m >= p) throw Error("mandatory covariate index out of range");
        is_mandatory[m] = 1;
    }
    tr.scale = covariate_scale(P.z);
    CoxProblem Q = detail::scaled_problem(P, tr.scale);

    Vector b = Vector::Zero(static_cast<Eigen::Index>(p));
    RiskState S = risk_state(Q, Q.offset);
    Vector g = eta_gradient(Q, S);
    std::vector<double> buf;
    auto record = [&](int sel) {
        Vector beta = Vector::Zero(static_cast<Eigen::Index>(p));
        for (Eigen::Index j = 0; j < b.size(); ++j)
            if (b[j] != 0.0) beta[j] = b[j] / tr.scale[j];
        tr.betas.push_back(std::move(beta));
        tr.selected.push_back(sel);
        tr.logliks.push_back(S.loglik);
    };
    auto accept_if_not_worse = [&](Eigen::Index j, double delta) {
        RiskState T = risk_state(Q, S.eta + delta * Q.z.col(j));
        if (!std::isfinite(T.loglik) || T.loglik < S.loglik - 1e-12 * (1.0 + std::abs(S.loglik))) return false;
        b[j] += delta;
        S = std::move(T);
        g = eta_gradient(Q, S);
        return true;
    };
    record(-1);

    std::vector<std::pair<double, std::size_t>> ranked;
    std::vector<double> step(p);
    for (std::size_t s = 1; s <= opt.gamma_max; ++s) {
        for (auto m : opt.mandatory) {
            const auto mm = static_cast<Eigen::Index>(m);
            if (!(tr.scale[mm] > 0.0)) continue;
            CoordinateStats cs = coordinate_stats(Q, S, g, mm, buf);
            if (!(cs.information > 0.0) || cs.score == 0.0) continue;
            double delta = cs.score / cs.information;
            for (int h = 0; h < 30 && !accept_if_not_worse(mm, delta); ++h) delta *= 0.5;
        }
        ranked.clear();
        for (std::size_t j = 0; j < p; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (is_mandatory[j] || !(tr.scale[jj] > 0.0)) continue;
            CoordinateStats cs = coordinate_stats(Q, S, g, jj, buf);
            const double denom = cs.information + tr.penalty;
            if (!(denom > 0.0) || cs.score == 0.0) continue;
            step[j] = cs.score / denom;
            ranked.emplace_back(cs.score * cs.score / denom, j);
        }
        if (ranked.empty()) {
            tr.warnings.push_back("all score statistics are zero; trajectory stopped after " + std::to_string(s - 1) +
                                  " steps");
            break;
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& c) { return a.first > c.first; });
        int chosen = -1;
        for (const auto& [stat, j] : ranked) {
            if (accept_if_not_worse(static_cast<Eigen::Index>(j), step[j])) {
                chosen = static_cast<int>(j);
                break;
            }
        }
        if (chosen < 0) {
            tr.warnings.push_back("no covariate update increases the likelihood; trajectory stopped after " +
                                  std::to_string(s - 1) + " steps");
            break;
        }
        record(chosen);
    }
    return tr;
}

inline BoostTrajectory boost(const WeightedRiskData& w, const BoostOptions& opt = {}) { return boost(w.problem(), opt); }

struct BoostCriteria {
    CriterionSeries aic;
    CriterionSeries bic;
};

/// AIC and BIC per step with df = number of nonzero coefficients.
inline BoostCriteria boost_criteria(const BoostTrajectory& tr, std::size_t k) {
    if (tr.betas.empty()) throw Error("empty boosting trajectory");
    auto df = tr.df();
    InformationCriteria ic = information_criteria(tr.logliks, df, k);
    BoostCriteria out;
    for (auto* c : {&out.aic, &out.bic}) {
        c->df = df;
        c->events = k;
        for (std::size_t s = 0; s < df.size(); ++s) c->index.push_back(static_cast<double>(s));
    }
    out.aic.values = std::move(ic.aic);
    out.bic.values = std::move(ic.bic);
    return out;
}

/// Cross-validated subdistribution partial likelihood per boosting step. Each fold is
/// boosted on its training rows; both likelihood terms use weights built from the
/// training fold's censoring distribution.
inline CriterionSeries cv_boost(const CompetingRisksDataset& data, int cause, const BoostOptions& opt, int K = 10,
                                std::uint64_t seed = 1, unsigned threads = 1) {
    auto full = std::make_shared<const CompetingRisksDataset>(data);
    const std::size_t grid = opt.gamma_max + 1;
    auto series = cross_validate(data.status(), cause, grid, K, seed, threads, [&](const std::vector<std::size_t>& train) {
        auto tr = std::make_shared<const CompetingRisksDataset>(data.subset(train));
        StepFunction ghat = censoring_km(*tr);
        CoxProblem Ptr = finegray_expand(tr, cause, ghat).problem();
        CoxProblem Pfull = finegray_expand(full, cause, ghat).problem();
        BoostTrajectory traj = boost(Ptr, opt);
        std::vector<double> out(grid);
        for (std::size_t s = 0; s < grid; ++s) {
            const Vector& beta = traj.betas[std::min(s, traj.steps())];
            out[s] = log_partial_likelihood(Pfull, beta) - log_partial_likelihood(Ptr, beta);
        }
        return out;
    });
    for (std::size_t s = 0; s < grid; ++s) series.index.push_back(static_cast<double>(s));
    return series;
}

/// `step,selected,loglik,aic,bic,df`; `selected` is the covariate name, empty at step 0.
inline void write_trajectory(const BoostTrajectory& tr, const std::vector<std::string>& names, std::ostream& os) {
    BoostCriteria c = boost_criteria(tr, tr.events);
    auto df = tr.df();
    csv::Writer w(os);
    w.row({"step", "selected", "loglik", "aic", "bic", "df"});
    for (std::size_t s = 0; s < tr.betas.size(); ++s)
        w.row({csv::num(s), tr.selected[s] < 0 ? "" : names[static_cast<std::size_t>(tr.selected[s])],
               csv::num(tr.logliks[s]), csv::num(c.aic.values[s]), csv::num(c.bic.values[s]), csv::num(df[s])});
}

}  // namespace crisk
