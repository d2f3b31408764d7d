// Command-line front end: data generation, replicated runs, method
// comparison, covariance diagnostics and the self-check suite.
//
// Exit codes: 0 success, 1 validation failure or runtime error, 2 invalid
// command line or configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "htgd/config.hpp"
#include "htgd/experiments.hpp"
#include "htgd/io.hpp"
#include "htgd/validation.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_config = 2;

struct CommonArgs
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> jobs;
    bool allow_unfair = false;
    std::string data;
    std::string method;
    bool inject_fault = false;
};

htgd::ExperimentConfig load(const CommonArgs& args)
{
    htgd::ExperimentConfig cfg = htgd::load_config(args.config);
    if (args.seed)
        cfg.master_seed = *args.seed;
    if (args.out)
        cfg.output_dir = *args.out;
    if (args.jobs)
        cfg.jobs = *args.jobs;
    return cfg;
}

std::optional<htgd::Dataset> load_data(const CommonArgs& args)
{
    if (args.data.empty())
        return std::nullopt;
    return htgd::io::read_dataset_csv(args.data);
}

void print_summary(const htgd::ExperimentResult& res)
{
    std::printf("%-16s %5s %12s %12s %12s %12s %12s\n", "method", "coord", "min", "median", "max", "mean", "sd");
    for (const auto& r : res.summary)
        std::printf("%-16s %5zu %12.5g %12.5g %12.5g %12.5g %12.5g\n", r.method.c_str(), r.coordinate, r.min,
                    r.median, r.max, r.mean, r.sd);
    std::printf("\n%-16s %22s %22s\n", "method", "expected grad evals", "mean grad evals");
    for (const auto& b : res.budgets)
        std::printf("%-16s %22.6g %22.6g\n", b.method.c_str(), b.expected, b.mean_realized);
}

int cmd_generate(const CommonArgs& args)
{
    const htgd::ExperimentConfig cfg = load(args);
    const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "data";
    std::filesystem::create_directories(dir);
    const std::size_t count = cfg.fresh_data ? cfg.replications : 1;
    for (std::size_t r = 0; r < count; ++r) {
        const auto path = dir / ("population_rep" + std::to_string(r) + ".csv");
        htgd::io::write_dataset_csv(path.string(), htgd::generate_data(cfg, r));
    }
    std::printf("wrote %zu population file(s) to %s\n", count, dir.string().c_str());
    return exit_ok;
}

int cmd_run(const CommonArgs& args)
{
    const htgd::ExperimentConfig cfg = load(args);
    htgd::RunOptions opt;
    opt.output_dir = cfg.output_dir;
    opt.jobs = cfg.jobs;
    opt.allow_unfair_budget = args.allow_unfair;
    opt.data = load_data(args);
    const htgd::ExperimentResult res = htgd::run_experiment(cfg, opt);
    print_summary(res);
    std::printf("\nresults written to %s\n", cfg.output_dir.c_str());
    return exit_ok;
}

/// Compares HTGD with mini-batch SGD and full GD. Methods missing from the
/// config are derived from its HTGD method: SGD with the same schedule and
/// sample size, GD with the iteration count that matches the HTGD budget.
int cmd_compare(const CommonArgs& args)
{
    htgd::ExperimentConfig cfg = load(args);
    const htgd::MethodConfig* base = nullptr;
    bool has_sgd = false;
    bool has_gd = false;
    for (const auto& m : cfg.methods) {
        if (m.optimizer.optimizer == htgd::OptimizerKind::htgd && !base)
            base = &m;
        has_sgd = has_sgd || m.optimizer.optimizer == htgd::OptimizerKind::minibatch_sgd;
        has_gd = has_gd || m.optimizer.optimizer == htgd::OptimizerKind::full_gd;
    }
    if (!base)
        throw htgd::ConfigError("compare needs an htgd method in the config");
    const htgd::MethodConfig htgd_method = *base;
    if (!has_sgd) {
        htgd::MethodConfig sgd = htgd_method;
        sgd.name = "sgd";
        sgd.optimizer.optimizer = htgd::OptimizerKind::minibatch_sgd;
        cfg.methods.push_back(sgd);
    }
    if (!has_gd) {
        htgd::MethodConfig gd = htgd_method;
        gd.name = "gd";
        gd.optimizer.optimizer = htgd::OptimizerKind::full_gd;
        const double budget = htgd::expected_gradient_budget(htgd_method.optimizer, cfg.population_size);
        gd.optimizer.iterations = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(budget / static_cast<double>(cfg.population_size))));
        cfg.methods.push_back(gd);
    }
    cfg.validate();
    htgd::RunOptions opt;
    opt.output_dir = cfg.output_dir;
    opt.jobs = cfg.jobs;
    opt.allow_unfair_budget = args.allow_unfair;
    opt.data = load_data(args);
    const htgd::ExperimentResult res = htgd::run_experiment(cfg, opt);
    print_summary(res);

    std::printf("\nsd ratio relative to %s:\n", htgd_method.name.c_str());
    const std::size_t q = cfg.param_dim();
    for (const auto& m : res.methods) {
        if (m == htgd_method.name)
            continue;
        std::printf("  %s/%s:", htgd_method.name.c_str(), m.c_str());
        for (std::size_t k = 0; k < q; ++k) {
            const double other = res.row(m, k).sd;
            const double ratio = other > 0.0 ? res.row(htgd_method.name, k).sd / other : 0.0;
            std::printf(" %.3g", ratio);
        }
        std::printf("\n");
    }
    std::printf("\nresults written to %s\n", cfg.output_dir.c_str());
    return exit_ok;
}

int cmd_diagnostics(const CommonArgs& args)
{
    const htgd::ExperimentConfig cfg = load(args);
    const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "diagnostics";
    const htgd::DiagnosticsReport rep = htgd::run_diagnostics(cfg, args.method, dir, load_data(args));
    std::printf("diagnostics for method '%s'\n", rep.method.c_str());
    for (const auto& [k, v] : rep.quantities)
        std::printf("  %-34s %.10g\n", k.c_str(), v);
    std::printf("written to %s\n", dir.string().c_str());
    return exit_ok;
}

int cmd_validate(const CommonArgs& args)
{
    htgd::ValidationOptions opt;
    if (args.seed)
        opt.seed = *args.seed;
    opt.corrupt_ht_weight = args.inject_fault;
    const auto results = htgd::run_validation(opt);
    std::size_t failed = 0;
    for (const auto& r : results) {
        std::printf("[%s] %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        failed += r.passed ? 0 : 1;
    }
    std::printf("%zu of %zu checks passed\n", results.size() - failed, results.size());
    return failed ? exit_failure : exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Horvitz-Thompson gradient descent: experiments and checks"};
    app.require_subcommand(1);
    CommonArgs args;

    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", args.config, "Experiment config (.ini-style or .json)")
            ->required()
            ->check(CLI::ExistingFile);
    };
    const auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--seed", args.seed, "Override the master seed");
        sub->add_option("--out", args.out, "Override the output directory");
        sub->add_option("--jobs", args.jobs, "Worker threads (0: all cores)");
    };

    auto* generate = app.add_subcommand("generate", "Write the populations of an experiment as CSV");
    add_config(generate);
    add_run_flags(generate);

    auto* run = app.add_subcommand("run", "Run every method of a config over all replications");
    add_config(run);
    add_run_flags(run);
    run->add_flag("--allow-unfair-budget", args.allow_unfair, "Run even if gradient budgets differ by >10x");
    run->add_option("--data", args.data, "Use this population CSV for every replication")->check(CLI::ExistingFile);

    auto* compare = app.add_subcommand("compare", "Run HTGD, mini-batch SGD and full GD from one config");
    add_config(compare);
    add_run_flags(compare);
    compare->add_flag("--allow-unfair-budget", args.allow_unfair, "Run even if gradient budgets differ by >10x");
    compare->add_option("--data", args.data, "Use this population CSV for every replication")
        ->check(CLI::ExistingFile);

    auto* diagnostics = app.add_subcommand("diagnostics", "Asymptotic covariance diagnostics at theta*");
    add_config(diagnostics);
    add_run_flags(diagnostics);
    diagnostics->add_option("--method", args.method, "HTGD method to analyse (default: the first)");
    diagnostics->add_option("--data", args.data, "Population CSV (default: generated replication 0)")
        ->check(CLI::ExistingFile);

    auto* validate = app.add_subcommand("validate", "Run the oracle self-check suite");
    validate->add_option("--seed", args.seed, "Seed of the random instances");
    validate->add_flag("--inject-fault", args.inject_fault, "Corrupt one HT weight by 1% (the suite must fail)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*generate)
            return cmd_generate(args);
        if (*run)
            return cmd_run(args);
        if (*compare)
            return cmd_compare(args);
        if (*diagnostics)
            return cmd_diagnostics(args);
        if (*validate)
            return cmd_validate(args);
    } catch (const htgd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_config;
}
