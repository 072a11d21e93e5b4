#pragma once

#include "crisk/common.hpp"
#include "crisk/csv.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace crisk {

/// Right-continuous step function: value of the latest knot <= t, else `value_before_first`.
struct StepFunction {
    std::vector<double> knots;
    std::vector<double> values;
    double value_before_first = 0.0;

    double operator()(double t) const {
        auto it = std::upper_bound(knots.begin(), knots.end(), t);
        if (it == knots.begin()) return value_before_first;
        return values[static_cast<std::size_t>(it - knots.begin()) - 1];
    }

    /// Left limit: value of the latest knot strictly below t.
    double left_limit(double t) const {
        auto it = std::lower_bound(knots.begin(), knots.end(), t);
        if (it == knots.begin()) return value_before_first;
        return values[static_cast<std::size_t>(it - knots.begin()) - 1];
    }

    std::size_t size() const { return knots.size(); }
};

/// Competing-risks data in canonical order.
///
/// Subjects are sorted by ascending time; at tied times failures come before
/// censorings and failures are ordered by cause. Remaining ties are broken by the
/// covariate row (lexicographically) so that any permutation of the input rows
/// yields the same internal layout. `original_index` maps back to input rows.
class CompetingRisksDataset {
public:
    CompetingRisksDataset() = default;

    /// Validates and canonicalizes. `cause_count` of 0 means "largest status present".
    CompetingRisksDataset(std::vector<double> time, std::vector<int> status, Matrix covariates,
                          std::vector<std::string> names = {}, int cause_count = 0) {
        const std::size_t n = time.size();
        if (status.size() != n || static_cast<std::size_t>(covariates.rows()) != n)
            throw Error("time, status and covariate rows differ in length");
        if (covariates.cols() == 0) throw Error("no covariates");
        if (names.empty())
            for (Eigen::Index j = 0; j < covariates.cols(); ++j) names.push_back("z" + std::to_string(j + 1));
        if (names.size() != static_cast<std::size_t>(covariates.cols()))
            throw Error("covariate name count does not match covariate columns");
        if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
            throw Error("duplicate column names");

        int max_status = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(time[i])) throw Error("missing or non-finite time");
            if (time[i] < 0) throw Error("negative time");
            if (status[i] < 0) throw Error("status outside {0..J}");
            max_status = std::max(max_status, status[i]);
        }
        if (!covariates.allFinite()) throw Error("missing covariate value");
        if (cause_count == 0) cause_count = std::max(1, max_status);
        if (max_status > cause_count) throw Error("status outside {0..J}");

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        auto rank = [&](std::size_t i) { return status[i] == 0 ? cause_count + 1 : status[i]; };
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (time[a] != time[b]) return time[a] < time[b];
            if (rank(a) != rank(b)) return rank(a) < rank(b);
            for (Eigen::Index j = 0; j < covariates.cols(); ++j)
                if (covariates(a, j) != covariates(b, j)) return covariates(a, j) < covariates(b, j);
            return a < b;
        });

        time_.resize(n);
        status_.resize(n);
        covariates_.resize(static_cast<Eigen::Index>(n), covariates.cols());
        original_index_ = order;
        for (std::size_t k = 0; k < n; ++k) {
            time_[k] = time[order[k]];
            status_[k] = status[order[k]];
            covariates_.row(static_cast<Eigen::Index>(k)) = covariates.row(static_cast<Eigen::Index>(order[k]));
        }
        names_ = std::move(names);
        cause_count_ = cause_count;
    }

    std::size_t n() const { return time_.size(); }
    std::size_t p() const { return static_cast<std::size_t>(covariates_.cols()); }
    int cause_count() const { return cause_count_; }

    const std::vector<double>& time() const { return time_; }
    const std::vector<int>& status() const { return status_; }
    const Matrix& covariates() const { return covariates_; }
    const std::vector<std::string>& covariate_names() const { return names_; }
    const std::vector<std::size_t>& original_index() const { return original_index_; }

    std::size_t event_count(int cause) const {
        return static_cast<std::size_t>(std::count(status_.begin(), status_.end(), cause));
    }

    /// Rows by canonical index (duplicates allowed, e.g. for bootstrap resamples).
    CompetingRisksDataset subset(const std::vector<std::size_t>& rows) const {
        std::vector<double> t;
        std::vector<int> s;
        Matrix z(static_cast<Eigen::Index>(rows.size()), covariates_.cols());
        t.reserve(rows.size());
        s.reserve(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            t.push_back(time_[rows[k]]);
            s.push_back(status_[rows[k]]);
            z.row(static_cast<Eigen::Index>(k)) = covariates_.row(static_cast<Eigen::Index>(rows[k]));
        }
        return CompetingRisksDataset(std::move(t), std::move(s), std::move(z), names_, cause_count_);
    }

    /// Same subjects restricted to the given covariate columns.
    CompetingRisksDataset select_columns(const std::vector<std::size_t>& cols) const {
        Matrix z(covariates_.rows(), static_cast<Eigen::Index>(cols.size()));
        std::vector<std::string> names;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            z.col(static_cast<Eigen::Index>(k)) = covariates_.col(static_cast<Eigen::Index>(cols[k]));
            names.push_back(names_[cols[k]]);
        }
        CompetingRisksDataset out = *this;
        out.covariates_ = std::move(z);
        out.names_ = std::move(names);
        return out;
    }

    void require_competing() const {
        if (cause_count_ < 2) throw Error("competing-risks operation requires J >= 2");
    }

private:
    std::vector<double> time_;
    std::vector<int> status_;
    Matrix covariates_;
    std::vector<std::string> names_;
    std::vector<std::size_t> original_index_;
    int cause_count_ = 0;
};

/// Column roles for CSV ingestion. Empty `covariates` means every other column.
struct Schema {
    std::string time = "time";
    std::string status = "status";
    std::vector<std::string> covariates;
    int cause_count = 0;
};

inline CompetingRisksDataset load_dataset(const std::filesystem::path& path, const Schema& schema = {}) {
    if (!std::filesystem::exists(path)) throw Error("missing file '" + path.string() + "'");
    csv::Table t = csv::read(path);
    if (std::set<std::string>(t.header.begin(), t.header.end()).size() != t.header.size())
        throw Error("duplicate column names");
    std::size_t tcol = t.column(schema.time);
    std::size_t scol = t.column(schema.status);
    std::vector<std::size_t> zcols;
    if (schema.covariates.empty()) {
        for (std::size_t j = 0; j < t.header.size(); ++j)
            if (j != tcol && j != scol) zcols.push_back(j);
    } else {
        for (const auto& name : schema.covariates) zcols.push_back(t.column(name));
    }
    if (zcols.empty()) throw Error("no covariates");

    const std::size_t n = t.rows.size();
    std::vector<double> time(n);
    std::vector<int> status(n);
    Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(zcols.size()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = t.rows[i];
        time[i] = csv::to_number(row[tcol], i, schema.time);
        double s = csv::to_number(row[scol], i, schema.status);
        if (s != std::floor(s)) throw Error("status outside {0..J}");
        status[i] = static_cast<int>(s);
        for (std::size_t k = 0; k < zcols.size(); ++k)
            z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                csv::to_number(row[zcols[k]], i, t.header[zcols[k]]);
    }
    std::vector<std::string> names;
    for (auto j : zcols) names.push_back(t.header[j]);
    return CompetingRisksDataset(std::move(time), std::move(status), std::move(z), std::move(names),
                                 schema.cause_count);
}

/// Writes `time,status,<covariates>` in canonical order.
inline void write_dataset(const CompetingRisksDataset& data, std::ostream& os) {
    csv::Writer w(os);
    std::vector<std::string> header{"time", "status"};
    header.insert(header.end(), data.covariate_names().begin(), data.covariate_names().end());
    w.row(header);
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::vector<std::string> row{csv::num(data.time()[i]), csv::num(data.status()[i])};
        for (std::size_t j = 0; j < data.p(); ++j)
            row.push_back(csv::num(data.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        w.row(row);
    }
}

inline void write_dataset(const CompetingRisksDataset& data, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write file '" + path.string() + "'");
    write_dataset(data, os);
}

/// Kaplan-Meier estimate of the censoring survival P(C > t).
///
/// Censorings are the events of C; failures of any cause censor C. Failures at a
/// tied time leave the risk set before the censorings at that time.
inline StepFunction censoring_km(const CompetingRisksDataset& data) {
    StepFunction g;
    g.value_before_first = 1.0;
    const auto& t = data.time();
    const auto& s = data.status();
    const std::size_t n = data.n();
    double surv = 1.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t failures = 0, censored = 0;
        while (j < n && t[j] == t[i]) {
            (s[j] == 0 ? censored : failures) += 1;
            ++j;
        }
        if (censored > 0) {
            double at_risk = static_cast<double>(n - i - failures);
            surv *= 1.0 - static_cast<double>(censored) / at_risk;
            g.knots.push_back(t[i]);
            g.values.push_back(surv);
        }
        i = j;
    }
    return g;
}

}  // namespace crisk
