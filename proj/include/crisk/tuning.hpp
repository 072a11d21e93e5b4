#pragma once

#include "crisk/common.hpp"
#include "crisk/parallel.hpp"
#include "crisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace crisk {

/// A criterion evaluated along a tuning grid ordered from sparsest (index 0) to densest.
/// For a LASSO path the grid is lambda descending; for boosting it is the step count.
struct CriterionSeries {
    std::vector<double> index;
    std::vector<double> values;
    std::vector<double> se;            // present only for cross-validated criteria
    std::vector<std::size_t> df;
    std::size_t events = 0;

    std::size_t size() const { return values.size(); }
    bool has_se() const { return !se.empty(); }
};

struct InformationCriteria {
    std::vector<double> aic;
    std::vector<double> bic;
};

/// AIC = -2 loglik + 2 s and BIC = -2 loglik + 2 s log(k), k = events of the modeled cause.
inline InformationCriteria information_criteria(const std::vector<double>& logliks, const std::vector<std::size_t>& df,
                                                std::size_t k) {
    if (k < 1) throw Error("information criteria need at least one event");
    if (logliks.size() != df.size()) throw Error("loglik and df lengths differ");
    InformationCriteria ic;
    const double logk = std::log(static_cast<double>(k));
    for (std::size_t i = 0; i < logliks.size(); ++i) {
        const double s = static_cast<double>(df[i]);
        ic.aic.push_back(-2.0 * logliks[i] + 2.0 * s);
        ic.bic.push_back(-2.0 * logliks[i] + 2.0 * s * logk);
    }
    return ic;
}

enum class Rule { cv_min, cv_plus_1se, min, elbow };

inline Rule parse_rule(const std::string& s) {
    if (s == "cv_min" || s == "cv10") return Rule::cv_min;
    if (s == "cv_plus_1se" || s == "cv1se") return Rule::cv_plus_1se;
    if (s == "min") return Rule::min;
    if (s == "elbow") return Rule::elbow;
    throw Error("unknown selection rule '" + s + "'");
}

inline std::string to_string(Rule r) {
    switch (r) {
        case Rule::cv_min: return "cv_min";
        case Rule::cv_plus_1se: return "cv_plus_1se";
        case Rule::min: return "min";
        case Rule::elbow: return "elbow";
    }
    return "?";
}

struct Selection {
    std::size_t index = 0;
    std::string warning;
};

/// Applies a tuning rule. Ties always resolve to the sparser model (lower index).
inline Selection select(const std::vector<double>& values, const std::vector<double>& se, Rule rule) {
    if (values.empty()) throw Error("cannot select from an empty series");
    Selection sel;
    auto argmin = [&] {
        std::size_t best = 0;
        for (std::size_t i = 1; i < values.size(); ++i)
            if (values[i] < values[best]) best = i;
        return best;
    };
    switch (rule) {
        case Rule::cv_min:
        case Rule::min:
            sel.index = argmin();
            break;
        case Rule::cv_plus_1se: {
            if (se.size() != values.size()) throw Error("cv_plus_1se requires standard errors");
            std::size_t best = argmin();
            const double threshold = values[best] + se[best];
            sel.index = best;
            for (std::size_t i = 0; i < best; ++i)
                if (values[i] <= threshold) {
                    sel.index = i;
                    break;
                }
            break;
        }
        case Rule::elbow: {
            double largest = 0.0;
            std::size_t at = 0;
            for (std::size_t i = 0; i + 1 < values.size(); ++i) {
                double drop = values[i] - values[i + 1];
                if (drop > largest) {
                    largest = drop;
                    at = i + 1;
                }
            }
            if (at == 0) sel.warning = "criterion never decreases; elbow rule selected the sparsest model";
            sel.index = at;
            break;
        }
    }
    return sel;
}

inline Selection select(const CriterionSeries& series, Rule rule) { return select(series.values, series.se, rule); }

/// Fold labels in [0, K) stratified by status value; a deterministic function of (seed, status).
inline std::vector<int> stratified_folds(const std::vector<int>& status, int K, std::uint64_t seed) {
    if (K < 2) throw Error("cross-validation needs K >= 2");
    std::vector<int> strata(status);
    std::sort(strata.begin(), strata.end());
    strata.erase(std::unique(strata.begin(), strata.end()), strata.end());
    std::vector<int> fold(status.size(), 0);
    std::size_t next = 0;
    Rng rng({seed, 0xF01DULL});
    for (int s : strata) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < status.size(); ++i)
            if (status[i] == s) members.push_back(i);
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
        for (auto m : members) fold[m] = static_cast<int>(next++ % static_cast<std::size_t>(K));
    }
    return fold;
}

/// Cross-validated partial likelihood (full-minus-training construction).
///
/// `fold_contribution(train_rows)` returns, per grid point, logL_full(b) - logL_train(b)
/// for the coefficients b fitted on the training rows. The series value is the
/// negated sum over folds; `se` is the standard error of that sum, sqrt(K) times the
/// across-fold standard deviation.
template <class FoldContribution>
CriterionSeries cross_validate(const std::vector<int>& status, int cause, std::size_t grid, int K, std::uint64_t seed,
                               unsigned threads, FoldContribution&& fold_contribution) {
    const auto events = static_cast<std::size_t>(std::count(status.begin(), status.end(), cause));
    if (events < static_cast<std::size_t>(K))
        throw Error("fewer events of the modeled cause than folds; cannot stratify");
    std::vector<int> fold = stratified_folds(status, K, seed);
    std::vector<std::vector<double>> contrib(static_cast<std::size_t>(K));
    parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t k) {
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < status.size(); ++i)
            if (fold[i] != static_cast<int>(k)) train.push_back(i);
        contrib[k] = fold_contribution(train);
        if (contrib[k].size() != grid) throw Error("fold contribution has wrong grid length");
    });
    CriterionSeries out;
    out.events = events;
    out.values.resize(grid);
    out.se.resize(grid);
    for (std::size_t g = 0; g < grid; ++g) {
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += contrib[static_cast<std::size_t>(k)][g];
        const double mean = sum / K;
        double ss = 0.0;
        for (int k = 0; k < K; ++k) {
            double d = contrib[static_cast<std::size_t>(k)][g] - mean;
            ss += d * d;
        }
        out.values[g] = -sum;
        out.se[g] = std::sqrt(static_cast<double>(K)) * std::sqrt(ss / (K - 1));
    }
    return out;
}

}  // namespace crisk
