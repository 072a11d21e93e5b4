#pragma once

#include "crisk/common.hpp"
#include "crisk/csv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace crisk {

/// Default stratum names: L, ML, MH, H for K = 4 and L, ML, M, MH, H for K = 5.
inline std::vector<std::string> stratum_labels(std::size_t K) {
    if (K == 4) return {"L", "ML", "MH", "H"};
    if (K == 5) return {"L", "ML", "M", "MH", "H"};
    std::vector<std::string> out;
    for (std::size_t k = 1; k <= K; ++k) out.push_back("S" + std::to_string(k));
    return out;
}

/// Stratum index in [0, K) from empirical quantile cuts of the scores themselves.
/// Cut i is the ceil(i n / K)-th smallest score; a score equal to a cut goes to the lower stratum.
inline std::vector<std::size_t> quantile_strata(const std::vector<double>& scores, std::size_t K) {
    if (K < 2) throw Error("need at least two strata");
    std::vector<double> sorted(scores);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t distinct =
        static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    if (distinct < K) throw Error("degenerate scores: fewer distinct values than strata");
    sorted.assign(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::vector<double> cuts;
    for (std::size_t i = 1; i < K; ++i) cuts.push_back(sorted[(i * n + K - 1) / K - 1]);
    std::vector<std::size_t> out;
    out.reserve(n);
    for (double s : scores)
        out.push_back(static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), s) - cuts.begin()));
    return out;
}

/// (cause-1 stratum, cause-2 stratum) -> group label.
using RecombinationMap = std::map<std::pair<std::string, std::string>, std::string>;

/// Four-by-four recombination into five groups focused on one cause: the focus cause's
/// L, ML and MH strata keep their own groups (as L, ML, M), its H stratum splits into
/// MH (other cause not H) and H (both H).
inline RecombinationMap table_recombination(int focus_cause) {
    const std::vector<std::string> lab = stratum_labels(4);
    const std::vector<std::string> group = {"L", "ML", "M"};
    RecombinationMap m;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            const std::string& focus = lab[a];
            const std::string& other = lab[b];
            std::string g = a < 3 ? group[a] : (other == "H" ? "H" : "MH");
            if (focus_cause == 1)
                m[{focus, other}] = g;
            else
                m[{other, focus}] = g;
        }
    return m;
}

/// Map file with header `stratum1,stratum2,group`.
inline RecombinationMap read_recombination(const std::filesystem::path& path) {
    csv::Table t = csv::read(path);
    const std::size_t a = t.column("stratum1"), b = t.column("stratum2"), g = t.column("group");
    RecombinationMap m;
    for (const auto& row : t.rows) m[{row[a], row[b]}] = row[g];
    return m;
}

struct StrataAssignment {
    std::vector<std::vector<double>> scores;        // per cause
    std::vector<std::vector<std::string>> strata;   // per cause, label per subject
    std::vector<std::string> group;                 // combined group per subject (empty without a map)
};

/// Quantile strata for each cause's risk scores and, given a map, the recombined group of the
/// cause-1 by cause-2 cross-classification.
inline StrataAssignment risk_stratify(const std::vector<std::vector<double>>& scores, std::size_t K,
                                      const RecombinationMap* map = nullptr) {
    if (scores.empty()) throw Error("no risk scores");
    StrataAssignment out;
    out.scores = scores;
    const auto labels = stratum_labels(K);
    for (const auto& s : scores) {
        if (s.size() != scores[0].size()) throw Error("score vectors differ in length");
        std::vector<std::string> lab;
        for (auto k : quantile_strata(s, K)) lab.push_back(labels[k]);
        out.strata.push_back(std::move(lab));
    }
    if (map) {
        if (scores.size() != 2) throw Error("recombination needs scores for exactly two causes");
        for (std::size_t i = 0; i < scores[0].size(); ++i) {
            auto it = map->find({out.strata[0][i], out.strata[1][i]});
            if (it == map->end())
                throw Error("recombination map has no group for (" + out.strata[0][i] + ", " + out.strata[1][i] + ")");
            out.group.push_back(it->second);
        }
    }
    return out;
}

}  // namespace crisk
