#pragma once

#include "crisk/boost.hpp"
#include "crisk/lasso.hpp"
#include "crisk/parallel.hpp"
#include "crisk/predict.hpp"
#include "crisk/simgen.hpp"
#include "crisk/tuning.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace crisk {

/// A tuning rule applied to a criterion: cv10, cv1se, min_aic, min_bic, elbow_aic, elbow_bic.
struct TuningRule {
    enum class Source { cv, aic, bic };
    std::string name;
    Source source = Source::cv;
    Rule rule = Rule::cv_min;
};

inline TuningRule parse_tuning_rule(const std::string& name) {
    using S = TuningRule::Source;
    if (name == "cv10") return {name, S::cv, Rule::cv_min};
    if (name == "cv1se") return {name, S::cv, Rule::cv_plus_1se};
    if (name == "min_aic") return {name, S::aic, Rule::min};
    if (name == "min_bic") return {name, S::bic, Rule::min};
    if (name == "elbow_aic") return {name, S::aic, Rule::elbow};
    if (name == "elbow_bic") return {name, S::bic, Rule::elbow};
    throw Error("unknown tuning rule '" + name + "'");
}

/// Index chosen by `rule` given information criteria and an optional CV series.
inline std::size_t choose_index(const TuningRule& rule, const InformationCriteria& ic, const CriterionSeries* cv) {
    switch (rule.source) {
        case TuningRule::Source::cv:
            if (!cv) throw Error("rule " + rule.name + " needs cross-validation");
            return select(*cv, rule.rule).index;
        case TuningRule::Source::aic:
            return select(ic.aic, {}, rule.rule).index;
        case TuningRule::Source::bic:
            return select(ic.bic, {}, rule.rule).index;
    }
    return 0;
}

/// Simulation study definition. Parsed from `key = value` lines; `#` starts a comment and
/// list values are comma separated.
struct StudyConfig {
    SimModel model = SimModel::pcsh;
    std::vector<Design> designs{Design::continuous};
    std::vector<Structure> structures{Structure::independent};
    std::vector<std::size_t> ps{20};
    std::size_t n = 500;
    std::size_t replicates = 100;
    std::vector<std::string> rules{"cv10"};
    std::size_t gamma_max = 100;
    std::optional<double> penalty;
    std::size_t n_lambda = 100;
    double lambda_min_ratio = 0.01;
    int folds = 10;
    std::uint64_t z0_seed = kBinaryZ0Seed;
    double censor_max = 20.0;
    double eval_time = 2.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(trim(item));
    if (out.empty()) throw Error("empty list value");
    return out;
}

inline double parse_number(const std::string& key, const std::string& v) {
    double x;
    if (!parse_double(v, x)) throw Error("config key '" + key + "': not a number: '" + v + "'");
    return x;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    double x = parse_number(key, v);
    if (x < 0 || x != std::floor(x)) throw Error("config key '" + key + "': expected a non-negative integer");
    return static_cast<std::size_t>(x);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline StudyConfig parse_study_config(std::istream& in) {
    StudyConfig c;
    std::string line;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw Error("config key '" + key + "' given twice");
        if (key == "model") {
            c.model = parse_sim_model(val);
        } else if (key == "design") {
            c.designs.clear();
            for (auto& v : detail::split_list(val)) c.designs.push_back(parse_design(v));
        } else if (key == "structure") {
            c.structures.clear();
            for (auto& v : detail::split_list(val)) c.structures.push_back(parse_structure(v));
        } else if (key == "p") {
            c.ps.clear();
            for (auto& v : detail::split_list(val)) c.ps.push_back(detail::parse_count(key, v));
        } else if (key == "n") {
            c.n = detail::parse_count(key, val);
        } else if (key == "replicates") {
            c.replicates = detail::parse_count(key, val);
        } else if (key == "rules") {
            c.rules = detail::split_list(val);
            for (auto& r : c.rules) parse_tuning_rule(r);
        } else if (key == "gamma_max") {
            c.gamma_max = detail::parse_count(key, val);
        } else if (key == "penalty") {
            c.penalty = detail::parse_number(key, val);
        } else if (key == "n_lambda") {
            c.n_lambda = detail::parse_count(key, val);
        } else if (key == "lambda_min_ratio") {
            c.lambda_min_ratio = detail::parse_number(key, val);
        } else if (key == "folds") {
            c.folds = static_cast<int>(detail::parse_count(key, val));
        } else if (key == "z0_seed") {
            c.z0_seed = detail::parse_count(key, val);
        } else if (key == "censor_max") {
            c.censor_max = val == "inf" ? kInf : detail::parse_number(key, val);
        } else if (key == "eval_time") {
            c.eval_time = detail::parse_number(key, val);
        } else {
            throw Error("unknown config key '" + key + "'");
        }
    }
    for (auto p : c.ps)
        if (p < 5) throw Error("p must be at least 5 (the cause-1 support)");
    if (c.n < 2) throw Error("n must be at least 2");
    return c;
}

inline StudyConfig load_study_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing file '" + path.string() + "'");
    return parse_study_config(in);
}

/// Canonical text of a parsed configuration; hashing it identifies a study.
inline std::string canonical_config(const StudyConfig& c) {
    std::ostringstream os;
    auto list = [&](const auto& v, auto fmt) {
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt(v[i]);
        os << '\n';
    };
    os << "model=" << to_string(c.model) << '\n';
    os << "design=";
    list(c.designs, [](Design d) { return to_string(d); });
    os << "structure=";
    list(c.structures, [](Structure s) { return to_string(s); });
    os << "p=";
    list(c.ps, [](std::size_t p) { return std::to_string(p); });
    os << "n=" << c.n << "\nreplicates=" << c.replicates << "\nrules=";
    list(c.rules, [](const std::string& r) { return r; });
    os << "gamma_max=" << c.gamma_max << "\npenalty=" << (c.penalty ? format_double(*c.penalty) : "default")
       << "\nn_lambda=" << c.n_lambda << "\nlambda_min_ratio=" << format_double(c.lambda_min_ratio)
       << "\nfolds=" << c.folds << "\nz0_seed=" << c.z0_seed << "\ncensor_max=" << format_double(c.censor_max)
       << "\neval_time=" << format_double(c.eval_time) << '\n';
    return os.str();
}

inline std::string hex64(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 15];
    return s;
}

inline std::string config_hash(const StudyConfig& c, std::uint64_t seed) {
    return hex64(detail::fnv1a(canonical_config(c) + "seed=" + std::to_string(seed) + "\n"));
}

struct StudyCell {
    SimModel model;
    Design design;
    Structure structure;
    std::size_t p;

    std::string name() const {
        return to_string(model) + "_" + to_string(design) + "_" + to_string(structure) + "_p" + std::to_string(p);
    }
};

/// Selection and prediction for one tuning rule (or the oracle refit) in one replicate.
struct RuleOutcome {
    std::string rule;
    bool ok = false;
    std::size_t size = 0, tp = 0, fp = 0;
    double cif = 0.0;
    std::string error;
};

struct ReplicateOutcome {
    std::size_t replicate = 0;
    double event_rate1 = 0.0, event_rate2 = 0.0;
    std::vector<RuleOutcome> rules;   // configured rules in order, then "oracle"
};

struct CellReport {
    StudyCell cell;
    double true_cif = 0.0;
    std::vector<ReplicateOutcome> replicates;
};

namespace detail {

inline void count_support(const Vector& beta, const Vector& truth, RuleOutcome& out) {
    out.size = out.tp = out.fp = 0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (beta[j] == 0.0) continue;
        ++out.size;
        (truth[j] != 0.0 ? out.tp : out.fp) += 1;
    }
}

inline std::vector<std::size_t> support(const Vector& beta) {
    std::vector<std::size_t> s;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta[j] != 0.0) s.push_back(static_cast<std::size_t>(j));
    return s;
}

inline SimConfig cell_sim_config(const StudyConfig& cfg, const StudyCell& cell, std::uint64_t seed, std::size_t rep) {
    SimConfig s;
    s.model = cell.model;
    s.n = cfg.n;
    s.p = cell.p;
    s.structure = cell.structure;
    s.design = cell.design;
    s.censor_max = cfg.censor_max;
    s.seed = seed;
    s.stream = fnv1a(cell.name());
    s.replicate = rep;
    return s;
}

template <class Fn>
void guarded(RuleOutcome& out, Fn&& fn) {
    try {
        fn();
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
}

}  // namespace detail

/// Simulates one replicate of a cell and applies every rule plus the oracle refit.
/// Failures are recorded per rule; the replicate itself never throws.
inline ReplicateOutcome run_replicate(const StudyConfig& cfg, const StudyCell& cell, std::uint64_t seed,
                                      std::size_t rep) {
    ReplicateOutcome out;
    out.replicate = rep;
    std::vector<TuningRule> rules;
    for (auto& r : cfg.rules) rules.push_back(parse_tuning_rule(r));
    const bool need_cv = std::any_of(rules.begin(), rules.end(),
                                     [](const TuningRule& r) { return r.source == TuningRule::Source::cv; });
    for (auto& r : rules) out.rules.emplace_back().rule = r.name;
    out.rules.emplace_back().rule = "oracle";
    RuleOutcome& oracle = out.rules.back();

    SimConfig sc = detail::cell_sim_config(cfg, cell, seed, rep);
    SimData sim;
    try {
        sim = simulate(sc);
    } catch (const std::exception& e) {
        for (auto& r : out.rules) r.error = e.what();
        return out;
    }
    const auto& data = sim.data;
    out.event_rate1 = static_cast<double>(data.event_count(1)) / static_cast<double>(data.n());
    out.event_rate2 = static_cast<double>(data.event_count(2)) / static_cast<double>(data.n());
    const Vector z0 = design_z0(cell.design, cell.p, cfg.z0_seed);
    const double t = cfg.eval_time;
    const std::uint64_t stream = sc.stream;

    if (cell.model == SimModel::pcsh) {
        std::vector<RegularizationPath> paths(2);
        std::vector<InformationCriteria> ics(2);
        std::vector<std::optional<CriterionSeries>> cvs(2);
        std::string setup_error;
        try {
            LassoOptions lo;
            lo.n_lambda = cfg.n_lambda;
            lo.lambda_min_ratio = cfg.lambda_min_ratio;
            for (int j = 1; j <= 2; ++j) {
                auto& path = paths[static_cast<std::size_t>(j - 1)];
                path = fit_path(cause_specific_problem(data, j), lo);
                ics[static_cast<std::size_t>(j - 1)] = information_criteria(path.logliks, path.df, path.events);
                if (need_cv)
                    cvs[static_cast<std::size_t>(j - 1)] =
                        cv_lasso(data, j, path.lambdas, cfg.folds,
                                 stream_key({seed, stream, rep, static_cast<std::uint64_t>(j)}), 1, lo);
            }
        } catch (const std::exception& e) {
            setup_error = e.what();
        }
        for (std::size_t r = 0; r < rules.size(); ++r) {
            RuleOutcome& ro = out.rules[r];
            if (!setup_error.empty()) {
                ro.error = setup_error;
                continue;
            }
            detail::guarded(ro, [&] {
                std::vector<Vector> betas;
                for (std::size_t j = 0; j < 2; ++j) {
                    const CriterionSeries* cv = cvs[j] ? &*cvs[j] : nullptr;
                    betas.push_back(paths[j].betas[choose_index(rules[r], ics[j], cv)]);
                }
                detail::count_support(betas[0], sim.truth.beta1, ro);
                ro.cif = pcsh_cif(make_pcsh_model(data, std::move(betas)), z0, 1)(t);
            });
        }
        detail::guarded(oracle, [&] {
            std::vector<Vector> betas;
            for (int j = 1; j <= 2; ++j) {
                const Vector& truth = j == 1 ? sim.truth.beta1 : sim.truth.beta2;
                CoxFit f = refit_active(cause_specific_problem(data, j), detail::support(truth));
                if (!f.converged) throw Error("oracle refit did not converge");
                betas.push_back(f.beta);
            }
            detail::count_support(betas[0], sim.truth.beta1, oracle);
            oracle.cif = pcsh_cif(make_pcsh_model(data, std::move(betas)), z0, 1)(t);
        });
    } else {
        auto shared = std::make_shared<const CompetingRisksDataset>(data);
        WeightedRiskData w;
        BoostTrajectory traj;
        InformationCriteria ic;
        std::optional<CriterionSeries> cv;
        std::string setup_error;
        BoostOptions bo;
        bo.gamma_max = cfg.gamma_max;
        bo.penalty = cfg.penalty;
        try {
            w = finegray_expand(shared, 1);
            traj = boost(w, bo);
            ic = information_criteria(traj.logliks, traj.df(), traj.events);
            if (need_cv) cv = cv_boost(data, 1, bo, cfg.folds, stream_key({seed, stream, rep, 1}), 1);
        } catch (const std::exception& e) {
            setup_error = e.what();
        }
        for (std::size_t r = 0; r < rules.size(); ++r) {
            RuleOutcome& ro = out.rules[r];
            if (!setup_error.empty()) {
                ro.error = setup_error;
                continue;
            }
            detail::guarded(ro, [&] {
                std::size_t idx = choose_index(rules[r], ic, cv ? &*cv : nullptr);
                idx = std::min(idx, traj.steps());
                const Vector& beta = traj.betas[idx];
                detail::count_support(beta, sim.truth.beta1, ro);
                ro.cif = psdh_cif(make_psdh_model(w, beta), z0)(t);
            });
        }
        detail::guarded(oracle, [&] {
            if (!setup_error.empty()) w = finegray_expand(shared, 1);
            CoxFit f = refit_active(w.problem(), detail::support(sim.truth.beta1));
            if (!f.converged) throw Error("oracle refit did not converge");
            detail::count_support(f.beta, sim.truth.beta1, oracle);
            oracle.cif = psdh_cif(make_psdh_model(w, f.beta), z0)(t);
        });
    }
    return out;
}

namespace detail {

inline const std::vector<std::string>& checkpoint_header() {
    static const std::vector<std::string> h{"replicate", "event_rate1", "event_rate2", "rule", "ok",
                                            "size",      "tp",          "fp",          "cif",  "error"};
    return h;
}

inline void write_checkpoint(const CellReport& rep, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        csv::Writer w{std::filesystem::path(tmp)};
        w.row(checkpoint_header());
        for (const auto& r : rep.replicates)
            for (const auto& o : r.rules)
                w.row({csv::num(r.replicate), csv::num(r.event_rate1), csv::num(r.event_rate2), o.rule,
                       o.ok ? "1" : "0", csv::num(o.size), csv::num(o.tp), csv::num(o.fp), csv::num(o.cif), o.error});
    }
    std::filesystem::rename(tmp, path);
}

inline bool read_checkpoint(const std::filesystem::path& path, std::size_t replicates, std::size_t rules_per_rep,
                            CellReport& rep) {
    if (!std::filesystem::exists(path)) return false;
    csv::Table t = csv::read(path);
    if (t.header != checkpoint_header() || t.rows.size() != replicates * rules_per_rep) return false;
    rep.replicates.assign(replicates, {});
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        auto& r = rep.replicates[k / rules_per_rep];
        r.replicate = k / rules_per_rep;
        r.event_rate1 = csv::to_number(row[1], k, "event_rate1");
        r.event_rate2 = csv::to_number(row[2], k, "event_rate2");
        RuleOutcome o;
        o.rule = row[3];
        o.ok = row[4] == "1";
        o.size = static_cast<std::size_t>(csv::to_number(row[5], k, "size"));
        o.tp = static_cast<std::size_t>(csv::to_number(row[6], k, "tp"));
        o.fp = static_cast<std::size_t>(csv::to_number(row[7], k, "fp"));
        o.cif = csv::to_number(row[8], k, "cif");
        o.error = row[9];
        r.rules.push_back(std::move(o));
    }
    return true;
}

}  // namespace detail

struct StudyOptions {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string version = CRISK_VERSION;
    std::function<void(const std::string&)> progress;
};

/// Cells in execution order: design, structure, p.
inline std::vector<StudyCell> study_cells(const StudyConfig& cfg) {
    std::vector<StudyCell> cells;
    for (auto d : cfg.designs)
        for (auto s : cfg.structures)
            for (auto p : cfg.ps) cells.push_back({cfg.model, d, s, p});
    return cells;
}

/// Runs every cell (resuming from checkpoints under `out/checkpoints/<config hash>`) and writes
/// selection_summary.csv, cif_estimates.csv, oracle_estimates.csv, truth.csv and manifest.json.
/// Outputs are identical for any thread count.
inline std::vector<CellReport> run_sim_study(const StudyConfig& cfg, const std::filesystem::path& out,
                                             const StudyOptions& opt = {}) {
    namespace fs = std::filesystem;
    const std::string hash = config_hash(cfg, opt.seed);
    const fs::path ckdir = out / "checkpoints" / hash;
    fs::create_directories(ckdir);
    std::vector<CellReport> reports;
    for (const auto& cell : study_cells(cfg)) {
        CellReport rep;
        rep.cell = cell;
        SimTruth truth = make_truth(detail::cell_sim_config(cfg, cell, opt.seed, 0));
        rep.true_cif = truth.cif(1, cfg.eval_time, design_z0(cell.design, cell.p, cfg.z0_seed));
        const fs::path ck = ckdir / (cell.name() + ".csv");
        if (!detail::read_checkpoint(ck, cfg.replicates, cfg.rules.size() + 1, rep)) {
            rep.replicates.assign(cfg.replicates, {});
            parallel_for(cfg.replicates, opt.threads,
                         [&](std::size_t r) { rep.replicates[r] = run_replicate(cfg, cell, opt.seed, r); });
            detail::write_checkpoint(rep, ck);
            if (opt.progress) opt.progress(cell.name() + ": done");
        } else if (opt.progress) {
            opt.progress(cell.name() + ": restored from checkpoint");
        }
        reports.push_back(std::move(rep));
    }

    csv::Writer summary(out / "selection_summary.csv");
    summary.row({"model", "design", "structure", "p", "rule", "replicates", "failures", "median_size", "mad_size",
                 "median_tp", "mad_tp", "median_fp", "mad_fp", "median_cif", "mad_cif"});
    csv::Writer estimates(out / "cif_estimates.csv");
    estimates.row({"model", "design", "structure", "p", "rule", "replicate", "size", "tp", "fp", "cif"});
    csv::Writer oracle(out / "oracle_estimates.csv");
    oracle.row({"model", "design", "structure", "p", "replicate", "cif"});
    csv::Writer truth(out / "truth.csv");
    truth.row({"model", "design", "structure", "p", "time", "true_cif"});

    for (const auto& rep : reports) {
        const auto& c = rep.cell;
        const std::vector<std::string> key{to_string(c.model), to_string(c.design), to_string(c.structure),
                                           csv::num(c.p)};
        auto with_key = [&](std::vector<std::string> tail) {
            std::vector<std::string> row = key;
            row.insert(row.end(), tail.begin(), tail.end());
            return row;
        };
        truth.row(with_key({csv::num(cfg.eval_time), csv::num(rep.true_cif)}));
        const std::size_t nrules = cfg.rules.size() + 1;
        for (std::size_t k = 0; k < nrules; ++k) {
            std::vector<double> size, tp, fp, cif;
            std::size_t failures = 0;
            std::string name;
            for (const auto& r : rep.replicates) {
                const auto& o = r.rules[k];
                name = o.rule;
                if (!o.ok) {
                    ++failures;
                    continue;
                }
                size.push_back(static_cast<double>(o.size));
                tp.push_back(static_cast<double>(o.tp));
                fp.push_back(static_cast<double>(o.fp));
                cif.push_back(o.cif);
                if (o.rule == "oracle")
                    oracle.row(with_key({csv::num(r.replicate), csv::num(o.cif)}));
                else
                    estimates.row(with_key({o.rule, csv::num(r.replicate), csv::num(o.size), csv::num(o.tp),
                                            csv::num(o.fp), csv::num(o.cif)}));
            }
            auto stat = [](const std::vector<double>& v, bool spread) {
                if (v.empty()) return std::string();
                return csv::num(spread ? mad(v) : median(v));
            };
            summary.row(with_key({name, csv::num(rep.replicates.size()), csv::num(failures), stat(size, false),
                                  stat(size, true), stat(tp, false), stat(tp, true), stat(fp, false), stat(fp, true),
                                  stat(cif, false), stat(cif, true)}));
        }
    }

    nlohmann::ordered_json manifest;
    manifest["tool"] = "crisk";
    manifest["version"] = opt.version;
    manifest["seed"] = opt.seed;
    manifest["config_hash"] = hash;
    manifest["config"] = canonical_config(cfg);
    manifest["cells"] = nlohmann::json::array();
    for (const auto& rep : reports) manifest["cells"].push_back(rep.cell.name());
    std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
    return reports;
}

}  // namespace crisk
