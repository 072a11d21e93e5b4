#include "crisk/crisk.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace crisk;

namespace {

struct Global {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out = "out";
};

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::size_t column_of(const CompetingRisksDataset& d, const std::string& name) {
    const auto& names = d.covariate_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error("unknown covariate '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

// "--active 1:z1,z4 --active 2:z11"; "2:" means an empty set for cause 2.
std::vector<std::vector<std::size_t>> parse_active(const std::vector<std::string>& specs,
                                                   const CompetingRisksDataset& d, int causes) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(causes));
    for (const auto& s : specs) {
        auto colon = s.find(':');
        if (colon == std::string::npos) throw Error("active set '" + s + "' must look like CAUSE:name,name");
        double c;
        if (!parse_double(s.substr(0, colon), c) || c < 1 || c > causes || c != std::floor(c))
            throw Error("active set '" + s + "' names an invalid cause");
        auto& set = out[static_cast<std::size_t>(c) - 1];
        for (auto& name : split_commas(s.substr(colon + 1))) set.push_back(column_of(d, name));
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
    }
    return out;
}

// A single number is broadcast to every covariate.
Vector parse_z0(const std::string& s, std::size_t p) {
    auto items = split_commas(s);
    Vector z(static_cast<Eigen::Index>(p));
    if (items.size() == 1) {
        double v;
        if (!parse_double(items[0], v)) throw Error("z0 value '" + items[0] + "' is not a number");
        z.setConstant(v);
        return z;
    }
    if (items.size() != p) throw Error("z0 needs 1 or " + std::to_string(p) + " values");
    for (std::size_t j = 0; j < p; ++j)
        if (!parse_double(items[j], z[static_cast<Eigen::Index>(j)])) throw Error("z0 value '" + items[j] + "' is not a number");
    return z;
}

fs::path out_file(const Global& g, const std::string& name) {
    fs::create_directories(g.out);
    return fs::path(g.out) / name;
}

std::ofstream open_out(const Global& g, const std::string& name) {
    auto path = out_file(g, name);
    std::ofstream os(path);
    if (!os) throw Error("cannot write file '" + path.string() + "'");
    return os;
}

void note(const std::string& msg) { std::cerr << msg << '\n'; }

// ---- simulate

struct SimulateArgs {
    std::string model = "pcsh", structure = "independent", design = "continuous";
    std::size_t n = 500, p = 20, replicate = 0, grid = 101;
    double censor_max = 20.0, t_max = 10.0;
};

void run_simulate(const Global& g, const SimulateArgs& a) {
    SimConfig cfg;
    cfg.model = parse_sim_model(a.model);
    cfg.structure = parse_structure(a.structure);
    cfg.design = parse_design(a.design);
    cfg.n = a.n;
    cfg.p = a.p;
    cfg.censor_max = a.censor_max;
    cfg.seed = g.seed;
    cfg.replicate = a.replicate;
    SimData sim = simulate(cfg);
    write_dataset(sim.data, out_file(g, "dataset.csv"));
    auto os = open_out(g, "truth.csv");
    write_truth(sim.truth, design_z0(cfg.design, cfg.p), a.t_max, a.grid, os);
    note("wrote " + std::to_string(sim.data.n()) + " subjects; cause-1 events " +
         std::to_string(sim.data.event_count(1)) + ", cause-2 events " + std::to_string(sim.data.event_count(2)));
}

// ---- npcif

struct NpcifArgs {
    std::string data;
    double alpha = 0.05;
    std::size_t B = 500;
};

void run_npcif(const Global& g, const NpcifArgs& a) {
    CompetingRisksDataset d = load_dataset(a.data);
    d.require_competing();
    std::vector<CifCurve> curves;
    for (int j = 1; j <= d.cause_count(); ++j)
        curves.push_back(cif_pointwise_band(nonparametric_cif(d, j), d, a.alpha, a.B, g.seed, g.threads));
    auto os = open_out(g, "npcif.csv");
    write_curves(curves, os, "nonparametric");
}

// ---- fit pcsh-lasso

struct LassoArgs {
    std::string data;
    std::vector<int> causes;
    std::size_t n_lambda = 100;
    double ratio = 0.01;
    int folds = 10;
};

void run_lasso(const Global& g, const LassoArgs& a) {
    CompetingRisksDataset d = load_dataset(a.data);
    d.require_competing();
    std::vector<int> causes = a.causes;
    if (causes.empty())
        for (int j = 1; j <= d.cause_count(); ++j) causes.push_back(j);
    LassoOptions opt;
    opt.n_lambda = a.n_lambda;
    opt.lambda_min_ratio = a.ratio;
    for (int j : causes) {
        CoxProblem P = cause_specific_problem(d, j);
        RegularizationPath path = fit_path(P, opt);
        for (auto& w : path.warnings) note("cause " + std::to_string(j) + ": " + w);
        std::optional<CriterionSeries> cv;
        if (a.folds > 0) cv = cv_lasso(d, j, path.lambdas, a.folds, g.seed, g.threads, opt);
        const std::string tag = "_cause" + std::to_string(j) + ".csv";
        auto pos = open_out(g, "path" + tag);
        write_path(path, pos, cv ? &*cv : nullptr);
        auto cos = open_out(g, "coefficients" + tag);
        write_path_coefficients(path, d.covariate_names(), cos);
    }
}

// ---- fit psdh-boost

struct BoostArgs {
    std::string data;
    int cause = 1;
    std::size_t gamma_max = 100;
    double penalty = -1.0;
    std::string mandatory;
    int folds = 10;
};

void run_boost(const Global& g, const BoostArgs& a) {
    CompetingRisksDataset d = load_dataset(a.data);
    BoostOptions opt;
    opt.gamma_max = a.gamma_max;
    if (a.penalty >= 0) opt.penalty = a.penalty;
    for (auto& name : split_commas(a.mandatory)) opt.mandatory.push_back(column_of(d, name));
    WeightedRiskData w = finegray_expand(d, a.cause);
    for (auto& msg : w.warnings) note(msg);
    BoostTrajectory tr = boost(w, opt);
    for (auto& msg : tr.warnings) note(msg);
    auto os = open_out(g, "trajectory.csv");
    write_trajectory(tr, d.covariate_names(), os);

    csv::Writer coef(out_file(g, "boost_coefficients.csv"));
    coef.row({"step", "covariate", "beta"});
    for (std::size_t s = 0; s < tr.betas.size(); ++s)
        for (Eigen::Index j = 0; j < tr.betas[s].size(); ++j)
            if (tr.betas[s][j] != 0.0)
                coef.row({csv::num(s), d.covariate_names()[static_cast<std::size_t>(j)], csv::num(tr.betas[s][j])});

    if (a.folds > 0) {
        CriterionSeries cv = cv_boost(d, a.cause, opt, a.folds, g.seed, g.threads);
        csv::Writer w2(out_file(g, "boost_cv.csv"));
        w2.row({"step", "cv_error", "cv_se"});
        for (std::size_t s = 0; s < cv.size(); ++s) w2.row({csv::num(s), csv::num(cv.values[s]), csv::num(cv.se[s])});
    }
}

// ---- select

struct SelectArgs {
    std::string fit, cv, coefficients;
    std::string rule = "cv10";
};

std::vector<double> numeric_column(const csv::Table& t, const std::string& name) {
    const std::size_t c = t.column(name);
    std::vector<double> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) out.push_back(csv::to_number(t.rows[i][c], i, name));
    return out;
}

void run_select(const Global& g, const SelectArgs& a) {
    csv::Table fit = csv::read(a.fit);
    const bool lasso = fit.has_column("lambda");
    const std::string index_col = lasso ? "lambda" : "step";
    TuningRule rule = parse_tuning_rule(a.rule);

    InformationCriteria ic{numeric_column(fit, "aic"), numeric_column(fit, "bic")};
    std::optional<CriterionSeries> cv;
    if (rule.source == TuningRule::Source::cv) {
        csv::Table cvt = a.cv.empty() ? fit : csv::read(a.cv);
        if (!cvt.has_column("cv_error") || (!cvt.rows.empty() && cvt.rows[0][cvt.column("cv_error")].empty()))
            throw Error("rule " + a.rule + " needs cross-validation columns (fit with --folds > 0)");
        cv.emplace();
        cv->values = numeric_column(cvt, "cv_error");
        cv->se = numeric_column(cvt, "cv_se");
        if (cv->values.size() > ic.aic.size()) {
            cv->values.resize(ic.aic.size());
            cv->se.resize(ic.aic.size());
        }
    }
    Selection sel;
    switch (rule.source) {
        case TuningRule::Source::cv: sel = select(*cv, rule.rule); break;
        case TuningRule::Source::aic: sel = select(ic.aic, {}, rule.rule); break;
        case TuningRule::Source::bic: sel = select(ic.bic, {}, rule.rule); break;
    }
    if (!sel.warning.empty()) note(sel.warning);
    const auto& row = fit.rows[sel.index];
    const std::string value = row[fit.column(index_col)];

    csv::Writer w(out_file(g, "selection.csv"));
    w.row({"rule", "row", index_col, "df", "warning"});
    w.row({a.rule, csv::num(sel.index), value, row[fit.column("df")], sel.warning});

    if (!a.coefficients.empty()) {
        csv::Table coef = csv::read(a.coefficients);
        const std::size_t ic_col = coef.column(index_col), name = coef.column("covariate"), beta = coef.column("beta");
        csv::Writer c(out_file(g, "selected_coefficients.csv"));
        c.row({"covariate", "beta"});
        for (const auto& r : coef.rows)
            if (r[ic_col] == value) c.row({r[name], r[beta]});
    }
    std::cout << index_col << '=' << value << " df=" << row[fit.column("df")] << '\n';
}

// ---- predict-cif

struct PredictArgs {
    std::string data, model = "pcsh", z0 = "0.5";
    std::vector<std::string> active;
    int cause = 1;
    double alpha = 0.05;
    std::size_t B = 500;
};

void run_predict(const Global& g, const PredictArgs& a) {
    CompetingRisksDataset d = load_dataset(a.data);
    d.require_competing();
    BandSpec spec;
    spec.kind = a.model == "pcsh" ? ModelKind::pcsh : a.model == "psdh" ? ModelKind::psdh : throw Error("model must be pcsh or psdh");
    spec.cause = a.cause;
    auto active = parse_active(a.active, d, d.cause_count());
    if (spec.kind == ModelKind::pcsh)
        spec.active = active;
    else
        spec.active = {active[static_cast<std::size_t>(a.cause - 1)]};
    Vector z0 = parse_z0(a.z0, d.p());
    BandResult band = cif_band(d, spec, z0, a.alpha, a.B, g.seed, g.threads);
    if (band.dropped) note(std::to_string(band.dropped) + " bootstrap replicates dropped (refit did not converge)");
    auto os = open_out(g, "cif.csv");
    write_curves({band.curve}, os, to_string(spec.kind));
}

// ---- screen

struct ScreenArgs {
    std::string data, model = "pcsh";
    int cause = 1;
    double alpha = 0.05;
    std::size_t top_m = 0, min_ones = 10;
};

void run_screen(const Global& g, const ScreenArgs& a) {
    CompetingRisksDataset d = load_dataset(a.data);
    ScreenOptions opt;
    opt.alpha = a.alpha;
    opt.min_ones = a.min_ones;
    if (a.top_m) opt.top_m = a.top_m;
    ModelKind kind = a.model == "pcsh" ? ModelKind::pcsh : a.model == "psdh" ? ModelKind::psdh : throw Error("model must be pcsh or psdh");
    ScreenResult r = univariate_screen(d, kind, a.cause, opt);
    auto os = open_out(g, "screen.csv");
    write_screen(r, d.covariate_names(), os);
    std::cout << "retained " << r.retained.size() << " of " << d.p() << '\n';
}

// ---- stratify

struct StratifyArgs {
    std::string data, train, test, map;
    std::vector<std::string> active;
    std::string model = "pcsh";
    std::size_t strata = 4;
    int focus = 1;
};

void run_stratify(const Global& g, const StratifyArgs& a) {
    CompetingRisksDataset train, test;
    if (!a.train.empty() || !a.test.empty()) {
        if (a.train.empty() || a.test.empty()) throw Error("--train and --test go together");
        train = load_dataset(a.train);
        test = load_dataset(a.test);
    } else {
        if (a.data.empty()) throw Error("give --data, or --train and --test");
        CompetingRisksDataset full = load_dataset(a.data);
        std::vector<std::size_t> rows(full.n());
        std::iota(rows.begin(), rows.end(), 0);
        Rng rng({g.seed, 0x5B117ULL});
        for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
        const std::size_t half = (rows.size() + 1) / 2;
        std::vector<std::size_t> tr(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(half)),
            te(rows.begin() + static_cast<std::ptrdiff_t>(half), rows.end());
        std::sort(tr.begin(), tr.end());
        std::sort(te.begin(), te.end());
        train = full.subset(tr);
        test = full.subset(te);
    }
    train.require_competing();
    if (train.covariate_names() != test.covariate_names()) throw Error("training and test covariates differ");
    const int J = train.cause_count();
    auto active = parse_active(a.active, train, J);

    std::vector<std::vector<double>> scores;
    for (int j = 1; j <= J; ++j) {
        CoxProblem P = a.model == "pcsh" ? cause_specific_problem(train, j) : finegray_expand(train, j).problem();
        CoxFit f = refit_active(P, active[static_cast<std::size_t>(j - 1)]);
        if (f.monotone) note("cause " + std::to_string(j) + ": monotone likelihood in the refit");
        Vector s = test.covariates() * f.beta;
        scores.emplace_back(s.data(), s.data() + s.size());
    }
    RecombinationMap map;
    const RecombinationMap* mp = nullptr;
    if (a.map == "table") {
        if (a.strata != 4) throw Error("the built-in recombination map needs 4 strata");
        map = table_recombination(a.focus);
        mp = &map;
    } else if (!a.map.empty()) {
        map = read_recombination(a.map);
        mp = &map;
    }
    StrataAssignment sa = risk_stratify(scores, a.strata, mp);

    csv::Writer w(out_file(g, "strata.csv"));
    std::vector<std::string> header{"subject", "time", "status"};
    for (int j = 1; j <= J; ++j) header.push_back("score" + std::to_string(j));
    for (int j = 1; j <= J; ++j) header.push_back("stratum" + std::to_string(j));
    header.push_back("group");
    w.row(header);
    for (std::size_t i = 0; i < test.n(); ++i) {
        std::vector<std::string> row{csv::num(i), csv::num(test.time()[i]), csv::num(test.status()[i])};
        for (auto& s : sa.scores) row.push_back(csv::num(s[i]));
        for (auto& s : sa.strata) row.push_back(s[i]);
        row.push_back(sa.group.empty() ? "" : sa.group[i]);
        w.row(row);
    }

    // Nonparametric CIF per group (or per cause-1 stratum without a map), plot-ready.
    std::vector<std::string> labels = sa.group.empty() ? sa.strata[0] : sa.group;
    std::vector<std::string> groups(labels);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    csv::Writer cw(out_file(g, "strata_cif.csv"));
    cw.row({"group", "time", "estimate", "cause"});
    for (const auto& gr : groups) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == gr) rows.push_back(i);
        CompetingRisksDataset sub = test.subset(rows);
        for (int j = 1; j <= J; ++j) {
            CifCurve c = nonparametric_cif(sub, j);
            for (std::size_t k = 0; k < c.times.size(); ++k)
                cw.row({gr, csv::num(c.times[k]), csv::num(c.estimate[k]), csv::num(j)});
        }
    }
}

// ---- bench

void run_bench(const Global& g, const std::string& config) {
    StudyConfig cfg = load_study_config(config);
    StudyOptions opt;
    opt.seed = g.seed;
    opt.threads = g.threads;
    opt.progress = [](const std::string& m) { note(m); };
    run_sim_study(cfg, g.out, opt);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Competing-risks regression, prediction and simulation toolkit"};
    app.set_version_flag("--version", std::string(CRISK_VERSION));
    app.require_subcommand(1);
    Global g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a generator; writes dataset.csv and truth.csv");
    sim->add_option("--model", sa.model, "pcsh | psdh")->capture_default_str();
    sim->add_option("--n", sa.n)->capture_default_str();
    sim->add_option("--p", sa.p)->capture_default_str();
    sim->add_option("--structure", sa.structure, "independent | exchangeable | ar1")->capture_default_str();
    sim->add_option("--design", sa.design, "continuous | binary_balanced | binary_sparse")->capture_default_str();
    sim->add_option("--censor-max", sa.censor_max, "Censoring ~ U(0, censor-max)")->capture_default_str();
    sim->add_option("--replicate", sa.replicate)->capture_default_str();
    sim->add_option("--t-max", sa.t_max, "Upper end of the truth.csv grid")->capture_default_str();
    sim->add_option("--grid", sa.grid, "Points in the truth.csv grid")->capture_default_str();

    NpcifArgs na;
    auto* np = app.add_subcommand("npcif", "Nonparametric CIFs with bootstrap bands; writes npcif.csv");
    np->add_option("--data", na.data)->required();
    np->add_option("--alpha", na.alpha)->capture_default_str();
    np->add_option("--B", na.B, "Bootstrap replicates")->capture_default_str();

    auto* fit = app.add_subcommand("fit", "Fit a penalized model");
    fit->require_subcommand(1);
    LassoArgs la;
    auto* lasso = fit->add_subcommand("pcsh-lasso", "Cause-specific LASSO paths; writes path_causeJ.csv and coefficients_causeJ.csv");
    lasso->add_option("--data", la.data)->required();
    lasso->add_option("--cause", la.causes, "Causes to fit (default all)");
    lasso->add_option("--n-lambda", la.n_lambda)->capture_default_str();
    lasso->add_option("--lambda-min-ratio", la.ratio)->capture_default_str();
    lasso->add_option("--folds", la.folds, "CV folds, 0 to skip")->capture_default_str();
    BoostArgs ba;
    auto* bst = fit->add_subcommand("psdh-boost", "Fine-Gray likelihood boosting; writes trajectory.csv, boost_coefficients.csv, boost_cv.csv");
    bst->add_option("--data", ba.data)->required();
    bst->add_option("--cause", ba.cause)->capture_default_str();
    bst->add_option("--gamma-max", ba.gamma_max, "Boosting steps")->capture_default_str();
    bst->add_option("--penalty", ba.penalty, "Ridge penalty (default 9 x events)");
    bst->add_option("--mandatory", ba.mandatory, "Comma-separated unpenalized covariates");
    bst->add_option("--folds", ba.folds, "CV folds, 0 to skip")->capture_default_str();

    SelectArgs se;
    auto* sel = app.add_subcommand("select", "Apply a tuning rule to a path or trajectory; writes selection.csv");
    sel->add_option("--fit", se.fit, "path_causeJ.csv or trajectory.csv")->required();
    sel->add_option("--rule", se.rule, "cv10 | cv1se | min_aic | min_bic | elbow_aic | elbow_bic")->capture_default_str();
    sel->add_option("--cv", se.cv, "Separate CV file (boost_cv.csv)");
    sel->add_option("--coefficients", se.coefficients, "Coefficient file to filter at the selected point");

    PredictArgs pa;
    auto* pred = app.add_subcommand("predict-cif", "Refit a fixed active set and predict the CIF at z0 with a bootstrap band");
    pred->add_option("--data", pa.data)->required();
    pred->add_option("--model", pa.model, "pcsh | psdh")->capture_default_str();
    pred->add_option("--active", pa.active, "CAUSE:name,name (repeat per cause)");
    pred->add_option("--cause", pa.cause)->capture_default_str();
    pred->add_option("--z0", pa.z0, "One value for all covariates, or a comma list")->capture_default_str();
    pred->add_option("--alpha", pa.alpha)->capture_default_str();
    pred->add_option("--B", pa.B, "Bootstrap replicates")->capture_default_str();

    ScreenArgs sc;
    auto* scr = app.add_subcommand("screen", "Univariate screening; writes screen.csv");
    scr->add_option("--data", sc.data)->required();
    scr->add_option("--model", sc.model, "pcsh | psdh")->capture_default_str();
    scr->add_option("--cause", sc.cause)->capture_default_str();
    scr->add_option("--alpha", sc.alpha)->capture_default_str();
    scr->add_option("--top-m", sc.top_m, "Keep at most this many (0 = no limit)")->capture_default_str();
    scr->add_option("--min-ones", sc.min_ones)->capture_default_str();

    StratifyArgs st;
    auto* strat = app.add_subcommand("stratify", "Risk-score strata on a test set; writes strata.csv and strata_cif.csv");
    strat->add_option("--data", st.data, "Split 50/50 into training and test (seeded)");
    strat->add_option("--train", st.train);
    strat->add_option("--test", st.test);
    strat->add_option("--model", st.model, "pcsh | psdh")->capture_default_str();
    strat->add_option("--active", st.active, "CAUSE:name,name (repeat per cause)");
    strat->add_option("--strata", st.strata)->capture_default_str();
    strat->add_option("--map", st.map, "Recombination map CSV, or 'table' for the built-in 4x4 map");
    strat->add_option("--focus-cause", st.focus, "Focus cause of the built-in map")->capture_default_str();

    std::string bench_config;
    auto* bench = app.add_subcommand("bench", "Run a simulation study from a config file");
    bench->add_option("--config", bench_config)->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) run_simulate(g, sa);
        else if (*np) run_npcif(g, na);
        else if (*lasso) run_lasso(g, la);
        else if (*bst) run_boost(g, ba);
        else if (*sel) run_select(g, se);
        else if (*pred) run_predict(g, pa);
        else if (*scr) run_screen(g, sc);
        else if (*strat) run_stratify(g, st);
        else if (*bench) run_bench(g, bench_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
