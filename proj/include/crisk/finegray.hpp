#pragma once

#include "crisk/cox.hpp"
#include "crisk/dataset.hpp"

#include <memory>
#include <string>
#include <vector>

namespace crisk {

/// Subdistribution risk sets with inverse-probability-of-censoring weights for one cause.
///
/// A subject stays in the risk set with weight 1 up to and including its own
/// time. After that, subjects failing from a competing cause remain with weight
/// G(t-)/G(X_l-); modeled-cause events and censored subjects drop out (weight 0).
struct WeightedRiskData {
    std::shared_ptr<const CompetingRisksDataset> base;
    int cause = 1;
    StepFunction ghat;
    std::vector<std::string> warnings;

    bool is_competing(std::size_t l) const {
        int s = base->status()[l];
        return s != 0 && s != cause;
    }

    /// w_l(t) for canonical subject index l.
    double weight(std::size_t l, double t) const {
        const double x = base->time()[l];
        if (t <= x) return 1.0;
        if (!is_competing(l)) return 0.0;
        double gx = ghat.left_limit(x);
        return gx > 0.0 ? ghat.left_limit(t) / gx : 0.0;
    }

    /// Weighted Cox problem whose partial likelihood is the subdistribution likelihood.
    CoxProblem problem() const {
        const auto& d = *base;
        std::vector<std::uint8_t> ev(d.n());
        Vector tail = Vector::Zero(static_cast<Eigen::Index>(d.n()));
        for (std::size_t l = 0; l < d.n(); ++l) {
            ev[l] = d.status()[l] == cause;
            if (is_competing(l)) {
                double gx = ghat.left_limit(d.time()[l]);
                tail[static_cast<Eigen::Index>(l)] = gx > 0.0 ? 1.0 / gx : 0.0;
            }
        }
        const StepFunction& g = ghat;
        return make_cox_problem(d.time(), std::move(ev), d.covariates(), {}, std::move(tail),
                                [&g](double t) { return g.left_limit(t); });
    }
};

/// Fine-Gray expansion using a supplied censoring survival (e.g. from a training fold).
inline WeightedRiskData finegray_expand(std::shared_ptr<const CompetingRisksDataset> data, int cause,
                                        StepFunction ghat) {
    data->require_competing();
    if (cause < 1 || cause > data->cause_count()) throw Error("cause out of range");
    WeightedRiskData w;
    w.base = std::move(data);
    w.cause = cause;
    w.ghat = std::move(ghat);
    for (std::size_t l = 0; l < w.base->n(); ++l)
        if (w.is_competing(l) && !(w.ghat.left_limit(w.base->time()[l]) > 0.0)) {
            w.warnings.push_back("censoring information exhausted before subject " +
                                 std::to_string(w.base->original_index()[l]) + "; weight set to 0");
        }
    return w;
}

inline WeightedRiskData finegray_expand(std::shared_ptr<const CompetingRisksDataset> data, int cause) {
    StepFunction g = censoring_km(*data);
    return finegray_expand(std::move(data), cause, std::move(g));
}

inline WeightedRiskData finegray_expand(const CompetingRisksDataset& data, int cause) {
    return finegray_expand(std::make_shared<const CompetingRisksDataset>(data), cause);
}

/// Long-format debug export `event_time,subject,weight` (subject = input row index).
inline void write_finegray_weights(const WeightedRiskData& w, std::ostream& os) {
    csv::Writer out(os);
    out.row({"event_time", "subject", "weight"});
    const auto& d = *w.base;
    std::vector<double> times;
    for (std::size_t i = 0; i < d.n(); ++i)
        if (d.status()[i] == w.cause && (times.empty() || times.back() != d.time()[i])) times.push_back(d.time()[i]);
    for (double t : times)
        for (std::size_t l = 0; l < d.n(); ++l) {
            double wt = w.weight(l, t);
            if (wt > 0.0) out.row({csv::num(t), csv::num(d.original_index()[l]), csv::num(wt)});
        }
}

}  // namespace crisk
