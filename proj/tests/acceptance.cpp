// Acceptance checks. Each criterion prints one line "criterion N: PASS|FAIL ..." and the
// process exits nonzero if any requested criterion fails.
//   acceptance [--criterion N]

#include "crisk/crisk.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

using namespace crisk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream msg;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        msg << (msg.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [fail]");
    }
};

std::string fmt(double x, int digits = 3) {
    std::ostringstream os;
    os.precision(digits);
    os << std::fixed << x;
    return os.str();
}

SimTruth truth_for(SimModel model, std::size_t p, Design design = Design::continuous) {
    SimConfig cfg;
    cfg.model = model;
    cfg.p = p;
    cfg.design = design;
    return make_truth(cfg);
}

SimConfig cell_config(SimModel model, std::size_t p, std::uint64_t seed, std::size_t rep,
                      Design design = Design::continuous) {
    StudyConfig sc;
    return detail::cell_sim_config(sc, {model, design, Structure::independent, p}, seed, rep);
}

std::string sci(double x) {
    std::ostringstream os;
    os.precision(2);
    os << std::scientific << x;
    return os.str();
}

double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- 1: closed-form truths against quadrature and multiprecision

void oracle_values(Outcome& out) {
    using boost::math::quadrature::exp_sinh;
    using boost::math::quadrature::gauss_kronrod;
    using mp = boost::multiprecision::cpp_bin_float_50;
    const auto start = std::chrono::steady_clock::now();

    const SimTruth pc = truth_for(SimModel::pcsh, 20), sd = truth_for(SimModel::psdh, 20);
    const Vector z0 = continuous_z0(20);
    const double h1 = pc.lambda01 * std::exp(pc.beta1.dot(z0)), h2 = pc.lambda02 * std::exp(pc.beta2.dot(z0));
    auto integrand = [&](double u) { return std::exp(-(h1 + h2) * u) * h1; };
    const double quad = gauss_kronrod<double, 61>::integrate(integrand, 0.0, 2.0, 15, 1e-14);
    const double quad_inf = exp_sinh<double>().integrate(integrand);
    const double f1 = true_cif_pcsh(z0, 2.0, pc);
    out.check(std::abs(f1 - 0.32) <= 0.005, "pcsh F1(2)=" + fmt(f1, 4));
    out.check(std::abs(f1 - quad) < 1e-8, "quadrature diff=" + sci(std::abs(f1 - quad)));
    out.check(std::abs(pc.cause_probability(1, z0) - quad_inf) < 1e-8, "limit=" + fmt(quad_inf, 4));

    const mp e1 = boost::multiprecision::exp(mp(sd.beta1.dot(z0)));
    const mp exact = 1 - boost::multiprecision::pow(1 - mp("0.6") * (1 - boost::multiprecision::exp(mp(-2))), e1);
    const double g1 = true_cif_psdh(z0, 2.0, sd);
    out.check(std::abs(g1 - 0.63) <= 0.005, "psdh F1(2)=" + fmt(g1, 4));
    out.check(std::abs(g1 - exact.convert_to<double>()) < 1e-14, "multiprecision agrees");
    const double secs = elapsed(start);
    out.check(secs < 1.0, "time=" + fmt(secs, 4) + "s");
}

// ---- 2: generator event rates

void event_rates(Outcome& out) {
    const auto start = std::chrono::steady_clock::now();
    struct Target {
        SimModel model;
        double r1, r2;
    };
    for (Target t : {Target{SimModel::pcsh, 0.458, 0.336}, Target{SimModel::psdh, 0.535, 0.351}}) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t r = 0; r < 100; ++r) {
            CompetingRisksDataset d = simulate(cell_config(t.model, 20, 2024, r)).data;
            s1 += static_cast<double>(d.event_count(1)) / static_cast<double>(d.n());
            s2 += static_cast<double>(d.event_count(2)) / static_cast<double>(d.n());
        }
        s1 /= 100;
        s2 /= 100;
        out.check(std::abs(s1 - t.r1) <= 0.02 && std::abs(s2 - t.r2) <= 0.02,
                  to_string(t.model) + " rates " + fmt(100 * s1, 1) + "%/" + fmt(100 * s2, 1) + "% vs " +
                      fmt(100 * t.r1, 1) + "%/" + fmt(100 * t.r2, 1) + "%");
    }
    const double secs = elapsed(start);
    out.check(secs < 60.0, "time=" + fmt(secs, 1) + "s");
}

// ---- 3: selection at p = 20

struct Medians {
    double size, tp, fp;
    std::size_t failures;
};

Medians study_medians(SimModel model, std::size_t p, const std::string& rule, std::size_t reps, std::uint64_t seed) {
    StudyConfig cfg;
    cfg.model = model;
    cfg.ps = {p};
    cfg.rules = {rule};
    std::vector<double> size, tp, fp;
    std::size_t failures = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        ReplicateOutcome o = run_replicate(cfg, {model, Design::continuous, Structure::independent, p}, seed, r);
        const RuleOutcome& ro = o.rules[0];
        if (!ro.ok) {
            ++failures;
            continue;
        }
        size.push_back(static_cast<double>(ro.size));
        tp.push_back(static_cast<double>(ro.tp));
        fp.push_back(static_cast<double>(ro.fp));
    }
    if (size.empty()) return {kInf, kInf, kInf, failures};
    return {median(size), median(tp), median(fp), failures};
}

void selection_p20(Outcome& out) {
    struct Target {
        SimModel model;
        const char* rule;
        double size, tp, fp;
    };
    for (Target t : {Target{SimModel::pcsh, "cv10", 12, 5, 7}, Target{SimModel::psdh, "min_aic", 7, 5, 2}}) {
        Medians m = study_medians(t.model, 20, t.rule, 100, 7);
        const bool ok = std::abs(m.size - t.size) <= 2 && std::abs(m.tp - t.tp) <= 2 && std::abs(m.fp - t.fp) <= 2;
        out.check(ok, to_string(t.model) + " " + t.rule + " (" + fmt(m.size, 1) + "," + fmt(m.tp, 1) + "," +
                          fmt(m.fp, 1) + ") vs (" + fmt(t.size, 0) + "," + fmt(t.tp, 0) + "," + fmt(t.fp, 0) +
                          "), failures=" + std::to_string(m.failures));
    }
}

// ---- 4: full-scale cells on a reduced grid

// Cause-1 LASSO with CV10 only; the cause-2 path does not affect cause-1 selection.
Medians pcsh_cv10_cause1(std::size_t p, std::size_t reps, std::uint64_t seed) {
    std::vector<double> size, tp, fp;
    std::size_t failures = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        try {
            SimConfig sc = cell_config(SimModel::pcsh, p, seed, r);
            SimData sim = simulate(sc);
            RegularizationPath path = fit_path(cause_specific_problem(sim.data, 1));
            CriterionSeries cv = cv_lasso(sim.data, 1, path.lambdas, 10, stream_key({seed, sc.stream, r, 1}), 1);
            const Vector& b = path.betas[std::min(select(cv, Rule::cv_min).index, path.size() - 1)];
            double s = 0, t = 0;
            for (Eigen::Index j = 0; j < b.size(); ++j)
                if (b[j] != 0.0) {
                    ++s;
                    t += sim.truth.beta1[j] != 0.0;
                }
            size.push_back(s);
            tp.push_back(t);
            fp.push_back(s - t);
        } catch (const std::exception&) {
            ++failures;
        }
    }
    if (size.empty()) return {kInf, kInf, kInf, failures};
    return {median(size), median(tp), median(fp), failures};
}

void full_scale(Outcome& out) {
    const std::size_t reps = 25;
    auto report = [&](const std::string& label, const Medians& m, double target) {
        out.check(std::abs(m.size - target) <= 0.3 * target,
                  label + " median|S|=" + fmt(m.size, 1) + " vs " + fmt(target, 0) + " (TP " + fmt(m.tp, 1) + ", FP " +
                      fmt(m.fp, 1) + ", failures " + std::to_string(m.failures) + ")");
    };
    report("pcsh cv10 p=500", pcsh_cv10_cause1(500, reps, 11), 35);
    report("pcsh cv10 p=1000", pcsh_cv10_cause1(1000, reps, 11), 41);
    report("psdh cv10 p=500", study_medians(SimModel::psdh, 500, "cv10", reps, 11), 5);
    Medians m = study_medians(SimModel::psdh, 1000, "cv10", reps, 11);
    report("psdh cv10 p=1000", m, 5);
    out.check(m.fp == 0.0, "psdh cv10 p=1000 median FP=" + fmt(m.fp, 1));
}

// ---- 5: exactness properties

CompetingRisksDataset random_dataset(std::size_t n, std::size_t p, std::uint64_t seed, double censor) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    std::vector<double> t(n);
    std::vector<int> s(n);
    Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal(gen);
        t[i] = std::ceil(-std::log(unif(gen)) / std::exp(0.5 * z(static_cast<Eigen::Index>(i), 0)) * 4.0) / 4.0;
        const double u = unif(gen);
        s[i] = u < censor ? 0 : (u < censor + (1 - censor) * 0.6 ? 1 : 2);
    }
    return CompetingRisksDataset(std::move(t), std::move(s), std::move(z), {}, 2);
}

void exactness(Outcome& out) {
    // Aalen-Johansen identity
    double aj = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        AalenJohansen a = aalen_johansen(random_dataset(200, 1, seed, 0.3));
        for (std::size_t k = 0; k < a.times.size(); ++k)
            aj = std::max(aj, std::abs(a.survival[k] + a.cif[0][k] + a.cif[1][k] - 1.0));
    }
    out.check(aj < 1e-12, "npcif identity err=" + sci(aj));

    // KKT along the path
    double kkt = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SimConfig sc;
        sc.n = 300;
        sc.p = 50;
        sc.seed = seed;
        CoxProblem P = cause_specific_problem(simulate(sc).data, 1);
        RegularizationPath path = fit_path(P);
        for (std::size_t k = 0; k < path.size(); ++k)
            kkt = std::max(kkt, kkt_violation(P, path.betas[k], path.lambdas[k], path.scale));
    }
    out.check(kkt <= 1e-6, "max KKT violation=" + sci(kkt));

    // gradient against central differences
    double grad = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CompetingRisksDataset d = random_dataset(80, 4, seed, 0.3);
        for (const CoxProblem& P : {cause_specific_problem(d, 1), finegray_expand(d, 2).problem()}) {
            Vector beta = Vector::Constant(4, 0.1 * static_cast<double>(seed % 3));
            const Vector g = score_information(P, beta).gradient;
            for (Eigen::Index j = 0; j < 4; ++j) {
                Vector a = beta, b = beta;
                a[j] += 1e-5;
                b[j] -= 1e-5;
                const double fd = (log_partial_likelihood(P, a) - log_partial_likelihood(P, b)) / 2e-5;
                grad = std::max(grad, std::abs(fd - g[j]) / std::max(1.0, std::abs(g[j])));
            }
        }
    }
    out.check(grad < 1e-5, "gradient rel err=" + sci(grad));

    // Fine-Gray without censoring equals Cox with competing-event subjects kept at risk
    double fg = 0.0;
    bool fg_converged = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CompetingRisksDataset d = random_dataset(50, 2, seed, 0.0);
        const std::size_t n = d.n();
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = d.status()[i] == 2 ? 1e300 : d.time()[i];
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
        std::vector<double> ts;
        std::vector<std::uint8_t> ev;
        Matrix z(static_cast<Eigen::Index>(n), 2);
        for (std::size_t k = 0; k < n; ++k) {
            ts.push_back(t[order[k]]);
            ev.push_back(d.status()[order[k]] == 1);
            z.row(static_cast<Eigen::Index>(k)) = d.covariates().row(static_cast<Eigen::Index>(order[k]));
        }
        CoxFit a = newton_fit(finegray_expand(d, 1).problem(), Vector::Zero(2));
        CoxFit b = newton_fit(make_cox_problem(ts, ev, z), Vector::Zero(2));
        fg_converged = fg_converged && a.converged && b.converged;
        fg = std::max(fg, (a.beta - b.beta).cwiseAbs().maxCoeff());
    }
    out.check(fg_converged && fg < 1e-9, "Fine-Gray vs extended risk set diff=" + sci(fg));

    // boosting log likelihood never decreases
    bool monotone = true;
    for (std::uint64_t r = 0; r < 5; ++r) {
        BoostTrajectory tr = crisk::boost(finegray_expand(simulate(cell_config(SimModel::psdh, 20, 5, r)).data, 1));
        for (std::size_t s = 1; s < tr.logliks.size(); ++s) monotone = monotone && tr.logliks[s] >= tr.logliks[s - 1];
    }
    out.check(monotone, "boosting loglik non-decreasing");
}

// ---- 6: oracle refit and band coverage

double oracle_cif(const SimData& sim, const Vector& z0) {
    std::vector<Vector> betas;
    for (int j = 1; j <= 2; ++j) {
        const Vector& truth = j == 1 ? sim.truth.beta1 : sim.truth.beta2;
        CoxFit f = refit_active(cause_specific_problem(sim.data, j), detail::support(truth));
        if (!f.converged) throw Error("oracle refit did not converge");
        betas.push_back(f.beta);
    }
    return pcsh_cif(make_pcsh_model(sim.data, std::move(betas)), z0, 1)(2.0);
}

double oracle_cif_psdh(const SimData& sim, const Vector& z0) {
    WeightedRiskData w = finegray_expand(sim.data, 1);
    CoxFit f = refit_active(w.problem(), detail::support(sim.truth.beta1));
    if (!f.converged) throw Error("oracle refit did not converge");
    return psdh_cif(make_psdh_model(w, f.beta), z0)(2.0);
}

void oracle_sanity(Outcome& out) {
    std::vector<double> est;
    for (std::size_t r = 0; r < 100; ++r) est.push_back(oracle_cif(simulate(cell_config(SimModel::pcsh, 20, 6, r)), continuous_z0(20)));
    const double med = median(est);
    out.check(std::abs(med - 0.32) <= 0.02, "oracle median=" + fmt(med, 4));

    const std::size_t reps = 200, B = 200;
    const Vector z0 = continuous_z0(5);
    const double truth = truth_for(SimModel::pcsh, 5).cif(1, 2.0, z0);
    BandSpec spec{ModelKind::pcsh, 1, {{0, 1, 2, 3, 4}, {}}};
    std::size_t covered = 0, used = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        SimData sim = simulate(cell_config(SimModel::pcsh, 5, 66, r));
        BandResult band = cif_band(sim.data, spec, z0, 0.05, B, stream_key({66, r}));
        const auto& c = band.curve;
        auto it = std::upper_bound(c.times.begin(), c.times.end(), 2.0);
        if (it == c.times.begin()) continue;
        const std::size_t k = static_cast<std::size_t>(it - c.times.begin()) - 1;
        ++used;
        covered += c.lower[k] <= truth && truth <= c.upper[k];
    }
    const double cov = static_cast<double>(covered) / static_cast<double>(used);
    out.check(cov >= 0.88 && cov <= 0.99, "band coverage=" + fmt(cov, 3) + " over " + std::to_string(used) + " reps");
}

// ---- 7: binary design with the documented z0 seed

void binary_targets(Outcome& out) {
    const Vector z0 = binary_z0(20, kBinaryZ0Seed);
    std::vector<double> pc, sd;
    for (std::size_t r = 0; r < 100; ++r) {
        pc.push_back(oracle_cif(simulate(cell_config(SimModel::pcsh, 20, 7, r, Design::binary_balanced)), z0));
        sd.push_back(oracle_cif_psdh(simulate(cell_config(SimModel::psdh, 20, 7, r, Design::binary_balanced)), z0));
    }
    out.check(std::abs(median(pc) - 0.11) <= 0.05, "pcsh binary oracle median=" + fmt(median(pc), 4));
    out.check(std::abs(median(sd) - 0.27) <= 0.05, "psdh binary oracle median=" + fmt(median(sd), 4));
}

// ---- 8: bench output independent of thread count

void bench_determinism(Outcome& out) {
    const fs::path root = fs::temp_directory_path() / "crisk_acceptance_bench";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path config = root / "study.cfg";
    std::ofstream(config) << "model = pcsh\nn = 200\np = 20\nreplicates = 6\nrules = cv10, cv1se, min_aic, elbow_bic\n"
                             "design = continuous, binary_sparse\nfolds = 5\nn_lambda = 40\n";
    const fs::path psdh = root / "psdh.cfg";
    std::ofstream(psdh) << "model = psdh\nn = 200\np = 20\nreplicates = 6\nrules = cv10, min_aic, min_bic\n"
                           "folds = 5\ngamma_max = 40\n";
    for (const auto& cfg : {config, psdh}) {
        std::vector<fs::path> dirs;
        for (int threads : {1, 4}) {
            const fs::path dir = root / (cfg.stem().string() + "_t" + std::to_string(threads));
            const std::string cmd = std::string(CRISK_CLI_PATH) + " --seed 17 --threads " + std::to_string(threads) +
                                    " --out " + dir.string() + " bench --config " + cfg.string() + " > " +
                                    (root / "log.txt").string() + " 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                out.check(false, "bench run failed for " + cfg.filename().string());
                return;
            }
            dirs.push_back(dir);
        }
        std::size_t files = 0;
        bool same = true;
        for (const auto& e : fs::directory_iterator(dirs[0])) {
            if (e.path().extension() != ".csv") continue;
            ++files;
            auto slurp = [](const fs::path& p) {
                std::ifstream in(p, std::ios::binary);
                return std::string(std::istreambuf_iterator<char>(in), {});
            };
            same = same && fs::exists(dirs[1] / e.path().filename()) &&
                   slurp(e.path()) == slurp(dirs[1] / e.path().filename());
        }
        out.check(same && files == 4, cfg.stem().string() + ": " + std::to_string(files) + " CSVs identical for 1 vs 4 threads");
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<void(Outcome&)>> criteria{oracle_values, event_rates,   selection_p20,    full_scale,
                                                              exactness,     oracle_sanity, binary_targets, bench_determinism};
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) {
            wanted.push_back(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--criterion N]\n";
            return 2;
        }
    }
    if (wanted.empty())
        for (int c = 1; c <= static_cast<int>(criteria.size()); ++c) wanted.push_back(c);
    bool all = true;
    for (int c : wanted) {
        if (c < 1 || c > static_cast<int>(criteria.size())) {
            std::cerr << "no criterion " << c << '\n';
            return 2;
        }
        Outcome o;
        try {
            criteria[static_cast<std::size_t>(c - 1)](o);
        } catch (const std::exception& e) {
            o.check(false, std::string("error: ") + e.what());
        }
        std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << " " << o.msg.str() << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
