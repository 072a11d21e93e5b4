#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace crisk;
using namespace crisk::testing;
namespace fs = std::filesystem;

namespace {

CompetingRisksDataset sim_data(std::size_t n, std::size_t p, std::uint64_t rep, bool null = false) {
    SimConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.seed = 77;
    cfg.replicate = rep;
    if (null) {
        cfg.beta1 = Vector::Zero(static_cast<Eigen::Index>(p));
        cfg.beta2 = Vector::Zero(static_cast<Eigen::Index>(p));
    }
    return simulate(cfg).data;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(CRISK_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    return std::system(cmd.c_str());
}

StudyConfig small_study(const std::string& extra = "") {
    std::istringstream in("model = pcsh\nn = 200\np = 10\nreplicates = 4\nrules = cv10, min_aic\nfolds = 5\n"
                          "n_lambda = 30\n" + extra);
    return parse_study_config(in);
}

}  // namespace

TEST(Screen, NoiseRetentionMatchesLevel) {
    std::size_t kept = 0, total = 0;
    for (std::uint64_t r = 0; r < 5; ++r) {
        CompetingRisksDataset d = sim_data(400, 200, r, true);
        kept += univariate_screen(d, ModelKind::pcsh, 1).retained.size();
        total += 200;
    }
    EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(total), 0.05, 0.02);
}

TEST(Screen, StrongSignalAlwaysRetained) {
    for (std::uint64_t r = 0; r < 100; ++r) {
        ScreenResult s = univariate_screen(sim_data(500, 20, r), ModelKind::pcsh, 1);
        EXPECT_NE(std::find(s.retained.begin(), s.retained.end(), 0u), s.retained.end()) << r;
    }
}

TEST(Screen, TopMKeepsSmallestPValues) {
    CompetingRisksDataset d = sim_data(500, 20, 1);
    ScreenResult all = univariate_screen(d, ModelKind::pcsh, 1);
    ScreenOptions opt;
    opt.top_m = 2;
    ScreenResult top = univariate_screen(d, ModelKind::pcsh, 1, opt);
    ASSERT_EQ(top.retained.size(), 2u);
    EXPECT_EQ(top.retained[0], all.retained[0]);
    EXPECT_EQ(top.retained[1], all.retained[1]);
    for (std::size_t k = 1; k < all.retained.size(); ++k)
        EXPECT_LE(all.entries[all.retained[k - 1]].p_value, all.entries[all.retained[k]].p_value);
}

TEST(Screen, RescalingLeavesPValuesUnchanged) {
    CompetingRisksDataset d = sim_data(300, 6, 2);
    Matrix z = d.covariates();
    z.col(0) *= 3.0;
    z.col(4) *= 0.1;
    CompetingRisksDataset s(d.time(), d.status(), z, {}, 2);
    for (ModelKind m : {ModelKind::pcsh, ModelKind::psdh}) {
        ScreenResult a = univariate_screen(d, m, 1), b = univariate_screen(s, m, 1);
        for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a.entries[j].p_value, b.entries[j].p_value, 1e-8);
        EXPECT_NEAR(b.entries[0].beta * 3.0, a.entries[0].beta, 1e-6);
    }
}

TEST(Screen, SparseBinaryColumnsExcluded) {
    CompetingRisksDataset d = sim_data(200, 3, 3);
    Matrix z = d.covariates();
    z.col(1).setZero();
    for (Eigen::Index i = 0; i < 4; ++i) z(i, 1) = 1.0;
    CompetingRisksDataset b(d.time(), d.status(), z, {}, 2);
    ScreenResult s = univariate_screen(b, ModelKind::pcsh, 1);
    EXPECT_EQ(s.entries[1].method, "excluded");
    ScreenOptions opt;
    opt.min_ones = 3;
    EXPECT_NE(univariate_screen(b, ModelKind::pcsh, 1, opt).entries[1].method, "excluded");
}

TEST(Screen, SeparatingCovariateUsesScoreTest) {
    Matrix z(10, 1);
    z << 1, 1, 1, 0, 1, 0, 0, 0, 0, 0;
    CompetingRisksDataset d({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {1, 1, 1, 0, 1, 2, 0, 2, 0, 0}, z);
    ScreenOptions opt;
    opt.min_ones = 1;
    ScreenResult s = univariate_screen(d, ModelKind::pcsh, 1, opt);
    EXPECT_EQ(s.entries[0].method, "score");
    EXPECT_LT(s.entries[0].p_value, 1.0);
}

TEST(Strata, EqualSizedQuartiles) {
    std::vector<double> s(100);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(static_cast<double>(i) * 1.7);
    auto k = quantile_strata(s, 4);
    for (std::size_t g = 0; g < 4; ++g) EXPECT_EQ(std::count(k.begin(), k.end(), g), 25);
}

TEST(Strata, MonotoneTransformInvariance) {
    std::vector<double> s(57), t(57);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = std::cos(static_cast<double>(i) * 2.3) * 3.0;
        t[i] = std::exp(s[i]) + 5.0;
    }
    EXPECT_EQ(quantile_strata(s, 5), quantile_strata(t, 5));
}

TEST(Strata, DegenerateScores) {
    try {
        quantile_strata({1.0, 1.0, 2.0, 2.0, 2.0}, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate scores"), std::string::npos);
    }
}

TEST(Strata, TableMapGroups) {
    for (int focus : {1, 2}) {
        RecombinationMap m = table_recombination(focus);
        EXPECT_EQ(m.size(), 16u);
        auto at = [&](const std::string& f, const std::string& o) {
            return focus == 1 ? m.at({f, o}) : m.at({o, f});
        };
        EXPECT_EQ(at("H", "H"), "H");
        EXPECT_EQ(at("H", "L"), "MH");
        EXPECT_EQ(at("MH", "H"), "M");
        EXPECT_EQ(at("L", "H"), "L");
    }
}

TEST(Strata, RecombinationNeedsTwoCauses) {
    std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8};
    RecombinationMap m = table_recombination(1);
    EXPECT_THROW(risk_stratify({s}, 4, &m), Error);
    StrataAssignment a = risk_stratify({s, s}, 4, &m);
    EXPECT_EQ(a.group.front(), "L");
    EXPECT_EQ(a.group.back(), "H");
}

TEST(StudyConfig, ParseErrors) {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_study_config(in);
    };
    EXPECT_THROW(parse("model = weibull\n"), Error);
    EXPECT_THROW(parse("p = 20\np = 30\n"), Error);
    EXPECT_THROW(parse("colour = red\n"), Error);
    EXPECT_THROW(parse("n 500\n"), Error);
    EXPECT_THROW(parse("rules = cv10, best\n"), Error);
    EXPECT_THROW(parse("p = 3\n"), Error);
    EXPECT_THROW(parse("replicates = 2.5\n"), Error);
    StudyConfig c = parse("# comment\n design = continuous, binary_sparse # trailing\ncensor_max = inf\n");
    EXPECT_EQ(c.designs.size(), 2u);
    EXPECT_TRUE(std::isinf(c.censor_max));
}

TEST(StudyConfig, HashTracksContentNotLayout) {
    std::istringstream a("n = 200\nrules = cv10,min_aic\n"), b("rules = cv10, min_aic   \n\n n=200\n");
    StudyConfig ca = parse_study_config(a), cb = parse_study_config(b);
    EXPECT_EQ(config_hash(ca, 1), config_hash(cb, 1));
    EXPECT_NE(config_hash(ca, 1), config_hash(ca, 2));
    cb.n = 201;
    EXPECT_NE(config_hash(ca, 1), config_hash(cb, 1));
}

TEST(SimStudy, DeterministicAcrossThreadsAndResumable) {
    StudyConfig cfg = small_study();
    fs::path a = temp_dir("study_a"), b = temp_dir("study_b");
    StudyOptions o1;
    o1.seed = 9;
    StudyOptions o3 = o1;
    o3.threads = 3;
    run_sim_study(cfg, a, o1);
    run_sim_study(cfg, b, o3);
    for (const char* f : {"selection_summary.csv", "cif_estimates.csv", "oracle_estimates.csv", "truth.csv", "manifest.json"})
        EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;

    std::vector<std::string> log;
    o1.progress = [&](const std::string& m) { log.push_back(m); };
    const std::string before = read_text(a / "cif_estimates.csv");
    run_sim_study(cfg, a, o1);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_NE(log[0].find("restored"), std::string::npos);
    EXPECT_EQ(read_text(a / "cif_estimates.csv"), before);
}

TEST(SimStudy, OracleUsesTrueSupport) {
    StudyConfig cfg = small_study();
    for (std::size_t r = 0; r < 3; ++r) {
        ReplicateOutcome o = run_replicate(cfg, {SimModel::pcsh, Design::continuous, Structure::independent, 10}, 3, r);
        ASSERT_EQ(o.rules.size(), 3u);
        const RuleOutcome& oracle = o.rules.back();
        EXPECT_EQ(oracle.rule, "oracle");
        ASSERT_TRUE(oracle.ok) << oracle.error;
        EXPECT_EQ(oracle.tp, 5u);
        EXPECT_EQ(oracle.fp, 0u);
        EXPECT_GT(oracle.cif, 0.0);
        EXPECT_LT(oracle.cif, 1.0);
    }
}

TEST(SimStudy, PsdhReplicate) {
    std::istringstream in("model = psdh\nn = 200\np = 10\nrules = min_aic, elbow_bic\ngamma_max = 20\n");
    StudyConfig cfg = parse_study_config(in);
    ReplicateOutcome o = run_replicate(cfg, {SimModel::psdh, Design::continuous, Structure::independent, 10}, 4, 0);
    for (const auto& r : o.rules) EXPECT_TRUE(r.ok) << r.rule << ": " << r.error;
    EXPECT_LE(o.rules[0].size, 20u);
}

TEST(SimStudy, RuleFailuresAreRecordedPerRule) {
    StudyConfig cfg = small_study("");
    cfg.folds = 1000;
    ReplicateOutcome o = run_replicate(cfg, {SimModel::pcsh, Design::continuous, Structure::independent, 10}, 5, 0);
    EXPECT_FALSE(o.rules[0].ok);
    EXPECT_FALSE(o.rules[0].error.empty());
    EXPECT_TRUE(o.rules[2].ok);
}

TEST(Cli, EndToEnd) {
    const fs::path dir = temp_dir("cli");
    const std::string out = " --out " + dir.string();
    const fs::path log = dir / "log.txt";
    ASSERT_EQ(run_cli("--seed 3" + out + " simulate --n 150 --p 8", log), 0) << read_text(log);
    const std::string data = (dir / "dataset.csv").string();
    ASSERT_TRUE(fs::exists(dir / "truth.csv"));
    EXPECT_EQ(run_cli(out + " npcif --data " + data + " --B 20", log), 0) << read_text(log);
    EXPECT_TRUE(fs::exists(dir / "npcif.csv"));
    ASSERT_EQ(run_cli(out + " fit pcsh-lasso --data " + data + " --n-lambda 20 --folds 5", log), 0) << read_text(log);
    EXPECT_TRUE(fs::exists(dir / "coefficients_cause2.csv"));
    ASSERT_EQ(run_cli(out + " select --fit " + (dir / "path_cause1.csv").string() + " --rule min_bic --coefficients " +
                          (dir / "coefficients_cause1.csv").string(),
                      log),
              0)
        << read_text(log);
    EXPECT_NE(read_text(log).find("lambda="), std::string::npos);
    EXPECT_EQ(run_cli(out + " fit psdh-boost --data " + data + " --gamma-max 10 --folds 3", log), 0) << read_text(log);
    EXPECT_TRUE(fs::exists(dir / "boost_cv.csv"));
    EXPECT_EQ(run_cli(out + " predict-cif --data " + data + " --active 1:z1,z2 --active 2:z3 --z0 0.5 --B 20", log), 0)
        << read_text(log);
    EXPECT_TRUE(fs::exists(dir / "cif.csv"));
    EXPECT_EQ(run_cli(out + " screen --data " + data, log), 0) << read_text(log);
    EXPECT_EQ(run_cli(out + " stratify --data " + data + " --active 1:z1 --active 2:z3 --map table", log), 0)
        << read_text(log);
    EXPECT_TRUE(fs::exists(dir / "strata_cif.csv"));
}

TEST(Cli, ErrorsAreReported) {
    const fs::path dir = temp_dir("cli_err");
    const fs::path log = dir / "log.txt";
    EXPECT_NE(run_cli("--out " + dir.string() + " npcif --data " + (dir / "missing.csv").string(), log), 0);
    EXPECT_NE(read_text(log).find("error:"), std::string::npos);
    EXPECT_NE(run_cli("simulate --model weibull --out " + dir.string(), log), 0);
}
