#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "htgd/config.hpp"
#include "htgd/experiments.hpp"
#include "htgd/io.hpp"
#include "htgd/validation.hpp"

namespace {

namespace fs = std::filesystem;

const std::string toy_ini = R"(
[experiment]
kind = quadratic_toy
N = 60
true_theta = 1, -2
curvature = 1, 2
replications = 6
master_seed = 3
write_traces = true

[method.htgd]
optimizer = htgd
link = gradient_norm
gamma0 = 0.5
alpha = 0.8
iterations = 50
expected_size = 6

[method.sgd]
optimizer = sgd
gamma0 = 0.5
alpha = 0.8
iterations = 50
expected_size = 6
)";

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("htgd_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// The toy config with an SGD budget 100 times the HTGD budget.
std::string unfair_ini()
{
    std::string text = toy_ini;
    const auto pos = text.rfind("iterations = 50");
    return text.replace(pos, 15, "iterations = 5000");
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(HTGD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Experiments, SummaryOfUnmovedRunsIsTheStartingPoint)
{
    auto cfg = htgd::parse_config(toy_ini, false);
    cfg.replications = 1;
    for (auto& m : cfg.methods)
        m.optimizer.iterations = 0;
    const auto res = htgd::run_experiment(cfg);
    for (const auto& row : res.summary) {
        EXPECT_EQ(row.min, 0.0);
        EXPECT_EQ(row.max, 0.0);
        EXPECT_EQ(row.sd, 0.0);
    }
}

TEST(Experiments, ResultsDoNotDependOnThreadCount)
{
    const auto cfg = htgd::parse_config(toy_ini, false);
    const fs::path a = scratch_dir("jobs1");
    const fs::path b = scratch_dir("jobs4");
    htgd::RunOptions opt;
    opt.output_dir = a;
    opt.jobs = 1;
    htgd::run_experiment(cfg, opt);
    opt.output_dir = b;
    opt.jobs = 4;
    htgd::run_experiment(cfg, opt);
    for (const char* file : {"summary.csv", "final_estimates.csv", "budget.csv", "traces/htgd_rep5.csv"})
        EXPECT_EQ(slurp(a / file), slurp(b / file)) << file;
    EXPECT_EQ(slurp(a / "summary.csv").rfind("method,coordinate,min,median,max,mean,sd\nhtgd,0,", 0), 0U);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiments, SummaryStatistics)
{
    const auto row = htgd::summarize("m", 0, {4.0, 1.0, 3.0, 2.0});
    EXPECT_EQ(row.min, 1.0);
    EXPECT_EQ(row.max, 4.0);
    EXPECT_EQ(row.median, 2.5);
    EXPECT_EQ(row.mean, 2.5);
    EXPECT_NEAR(row.sd, std::sqrt(5.0 / 3.0), 1e-15);
}

TEST(Experiments, UnfairBudgetIsRefusedUnlessAllowed)
{
    auto cfg = htgd::parse_config(unfair_ini(), false);
    try {
        htgd::run_experiment(cfg);
        FAIL() << "expected a budget error";
    } catch (const htgd::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("--allow-unfair-budget"), std::string::npos);
    }
    cfg.replications = 1;
    htgd::RunOptions opt;
    opt.allow_unfair_budget = true;
    EXPECT_NO_THROW(htgd::run_experiment(cfg, opt));
}

TEST(Experiments, DataGenerationIsDeterministic)
{
    auto cfg = htgd::parse_config(toy_ini, false);
    EXPECT_EQ(htgd::generate_data(cfg, 2).records, htgd::generate_data(cfg, 2).records);
    EXPECT_NE(htgd::generate_data(cfg, 2).records, htgd::generate_data(cfg, 3).records);
    cfg.fresh_data = false;
    EXPECT_EQ(htgd::generate_data(cfg, 2).records, htgd::generate_data(cfg, 3).records);
}

TEST(Experiments, LogisticLabelsAtZeroParameterAreBalanced)
{
    htgd::ExperimentConfig cfg;
    cfg.kind = htgd::ExperimentKind::logistic;
    cfg.population_size = 20000;
    cfg.feature_dim = 3;
    cfg.true_theta = htgd::Vector::Zero(4);
    cfg.master_seed = 5;
    const auto data = htgd::generate_data(cfg, 0);
    const double positive = (data.records.row(0).array() > 0.0).cast<double>().mean();
    EXPECT_NEAR(positive, 0.5, 4.0 * std::sqrt(0.25 / 20000.0));
    EXPECT_GE(data.records.bottomRows(3).minCoeff(), 0.0);
    EXPECT_LT(data.records.bottomRows(3).maxCoeff(), 1.0);
    EXPECT_EQ(data.columns.front(), "y");
    EXPECT_EQ(data.columns.back(), "x3");
}

TEST(Experiments, SymmetricMixtureIsBalanced)
{
    htgd::ExperimentConfig cfg;
    cfg.kind = htgd::ExperimentKind::symmetric;
    cfg.population_size = 1000;
    cfg.mixture_sd = 0.0;
    const auto data = htgd::generate_data(cfg, 0);
    EXPECT_EQ((data.records.array() > 0.0).count(), 500);
    std::vector<double> xs(data.records.data(), data.records.data() + 1000);
    std::nth_element(xs.begin(), xs.begin() + 500, xs.end());
    EXPECT_EQ(xs[500], 4.0);
}

TEST(Experiments, DatasetCsvRoundTrip)
{
    htgd::ExperimentConfig cfg;
    cfg.kind = htgd::ExperimentKind::logistic;
    cfg.population_size = 30;
    cfg.feature_dim = 2;
    cfg.true_theta = htgd::Vector::Ones(3);
    const auto data = htgd::generate_data(cfg, 0);
    std::stringstream buffer;
    htgd::io::write_dataset_csv(buffer, data);
    const auto back = htgd::io::read_dataset_csv(buffer);
    EXPECT_EQ(back.columns, data.columns);
    EXPECT_EQ(back.records, data.records);
}

TEST(Experiments, DiagnosticsSatisfyTheGainIdentities)
{
    const auto cfg = htgd::parse_config(toy_ini, false);
    const fs::path dir = scratch_dir("diag");
    const auto rep = htgd::run_diagnostics(cfg, "htgd", dir);
    EXPECT_EQ(rep.value("theta_star_converged"), 1.0);
    EXPECT_LT(rep.value("identity_equal_link_residual"), 1e-8);
    EXPECT_LT(rep.value("identity_link_optimal_residual"), 1e-8);
    EXPECT_NEAR(rep.value("smallest_eigenvalue_H"), 1.0, 1e-12);
    EXPECT_TRUE(fs::exists(dir / "diagnostics.csv"));
    EXPECT_TRUE(fs::exists(dir / "sigma_link.txt"));
    EXPECT_THROW(htgd::run_diagnostics(cfg, "sgd"), htgd::ConfigError);
    fs::remove_all(dir);
}

TEST(Validation, SuitePassesAndDetectsInjectedFault)
{
    htgd::ValidationOptions opt;
    for (const auto& r : htgd::run_validation(opt))
        EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
    opt.corrupt_ht_weight = true;
    int failed = 0;
    for (const auto& r : htgd::run_validation(opt))
        failed += r.passed ? 0 : 1;
    EXPECT_GT(failed, 0);
}

TEST(Cli, ExitCodes)
{
    const fs::path dir = scratch_dir("cli");
    fs::create_directories(dir);
    const fs::path cfg = dir / "toy.ini";
    std::ofstream(cfg) << toy_ini;
    const std::string base = " --config " + cfg.string() + " --out " + (dir / "out").string();

    EXPECT_EQ(run_cli("validate"), 0);
    EXPECT_EQ(run_cli("validate --inject-fault"), 1);
    EXPECT_EQ(run_cli("run" + base + " --jobs 2"), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "summary.csv"));
    EXPECT_EQ(run_cli("generate" + base), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "data" / "population_rep0.csv"));
    EXPECT_EQ(run_cli("run" + base + " --data " + (dir / "out" / "data" / "population_rep0.csv").string()), 0);
    EXPECT_EQ(run_cli("compare" + base), 0);
    EXPECT_EQ(run_cli("diagnostics" + base), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "diagnostics" / "diagnostics.csv"));

    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("run --config /nonexistent.ini"), 2);
    EXPECT_EQ(run_cli("run" + base + " --seed notanumber"), 2);
    std::ofstream(dir / "bad.ini") << "[experiment]\nkind = logistic\n";
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.ini").string()), 2);
    std::ofstream(dir / "unfair.ini") << unfair_ini();
    EXPECT_EQ(run_cli("run --config " + (dir / "unfair.ini").string() + " --out " + (dir / "u").string()), 2);
    EXPECT_EQ(run_cli("run --allow-unfair-budget --config " + (dir / "unfair.ini").string() + " --out "
                      + (dir / "u").string()),
              0);
    fs::remove_all(dir);
}

} // namespace
