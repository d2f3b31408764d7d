#ifndef HTGD_EXPERIMENTS_HPP
#define HTGD_EXPERIMENTS_HPP

// Replicated experiments: data generation, model and link selection by
// name, parallel replications, summary statistics and diagnostics export.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "htgd/asymptotics.hpp"
#include "htgd/config.hpp"
#include "htgd/designs.hpp"
#include "htgd/engine.hpp"
#include "htgd/error.hpp"
#include "htgd/io.hpp"
#include "htgd/links.hpp"
#include "htgd/models.hpp"
#include "htgd/rng.hpp"

namespace htgd {

/// Seed of the population drawn for a replication. Without fresh data every
/// replication shares the population of replication 0.
inline std::uint64_t data_seed(const ExperimentConfig& cfg, std::size_t replication)
{
    return derive_seed(cfg.master_seed, {cfg.fresh_data ? replication : 0, detail::fnv1a("data")});
}

/// Draws a population according to the experiment's generative model.
///   logistic:      x ~ U(0,1)^d, P{y = +1 | x} = sigma(alpha + beta^T x)
///   symmetric:     N/2 draws from N(+m, s^2) and N/2 from N(-m, s^2)
///                  (an odd N gets one extra unit of random sign)
///   quadratic_toy: z ~ N(center, noise_sd^2 I)
inline Dataset generate_data(const ExperimentConfig& cfg, Rng& rng)
{
    const std::size_t n_units = cfg.population_size;
    const auto cols = static_cast<Eigen::Index>(n_units);
    switch (cfg.kind) {
    case ExperimentKind::logistic: {
        const std::size_t d = cfg.feature_dim;
        Matrix records(static_cast<Eigen::Index>(d + 1), cols);
        for (Eigen::Index i = 0; i < cols; ++i) {
            double h = cfg.true_theta[0];
            for (std::size_t k = 0; k < d; ++k) {
                const double x = uniform01(rng);
                records(static_cast<Eigen::Index>(k + 1), i) = x;
                h += cfg.true_theta[static_cast<Eigen::Index>(k + 1)] * x;
            }
            records(0, i) = uniform01(rng) < detail::logistic(h) ? 1.0 : -1.0;
        }
        std::vector<std::string> names{"y"};
        for (std::size_t k = 1; k <= d; ++k)
            names.push_back("x" + std::to_string(k));
        return Dataset(std::move(records), std::move(names));
    }
    case ExperimentKind::symmetric: {
        Matrix records(1, cols);
        const std::size_t half = n_units / 2;
        for (std::size_t i = 0; i < n_units; ++i) {
            double sign = i < half ? 1.0 : -1.0;
            if (i >= 2 * half)
                sign = uniform01(rng) < 0.5 ? 1.0 : -1.0;
            records(0, static_cast<Eigen::Index>(i)) = sign * cfg.mixture_mean + cfg.mixture_sd * standard_normal(rng);
        }
        return Dataset(std::move(records), {"x"});
    }
    case ExperimentKind::quadratic_toy: {
        const auto q = cfg.true_theta.size();
        Matrix records(q, cols);
        for (Eigen::Index i = 0; i < cols; ++i)
            for (Eigen::Index k = 0; k < q; ++k)
                records(k, i) = cfg.true_theta[k] + cfg.noise_sd * standard_normal(rng);
        std::vector<std::string> names;
        for (Eigen::Index k = 1; k <= q; ++k)
            names.push_back("z" + std::to_string(k));
        return Dataset(std::move(records), std::move(names));
    }
    }
    throw ConfigError("unknown experiment kind");
}

inline Dataset generate_data(const ExperimentConfig& cfg, std::size_t replication)
{
    Rng rng = make_rng(data_seed(cfg, replication));
    return generate_data(cfg, rng);
}

/// Checks that a loaded dataset fits the experiment.
inline void check_dataset(const ExperimentConfig& cfg, const Dataset& data)
{
    std::size_t expected = 0;
    switch (cfg.kind) {
    case ExperimentKind::logistic: expected = cfg.feature_dim + 1; break;
    case ExperimentKind::symmetric: expected = 1; break;
    case ExperimentKind::quadratic_toy: expected = static_cast<std::size_t>(cfg.true_theta.size()); break;
    }
    if (data.record_dim() != expected)
        throw ConfigError("dataset has " + std::to_string(data.record_dim()) + " columns, the experiment expects "
                          + std::to_string(expected));
    if (data.size() < 2)
        throw ConfigError("dataset must contain at least two records");
}

/// Builds the experiment's loss model over `data` and calls f(model).
template <class F>
decltype(auto) with_model(const ExperimentConfig& cfg, const Dataset& data, F&& f)
{
    switch (cfg.kind) {
    case ExperimentKind::logistic: {
        const LogisticLoss model(cfg.feature_dim);
        return f(model);
    }
    case ExperimentKind::symmetric: {
        const SymmetricLocationModel model(data, cfg.bandwidth);
        return f(model);
    }
    case ExperimentKind::quadratic_toy: {
        const auto q = cfg.true_theta.size();
        Vector diag = Vector::Ones(q);
        for (std::size_t k = 0; k < cfg.curvature.size(); ++k)
            diag[static_cast<Eigen::Index>(k)] = cfg.curvature[k];
        const QuadraticLoss model(Matrix(diag.asDiagonal()));
        return f(model);
    }
    }
    throw ConfigError("unknown experiment kind");
}

/// Builds the link named in `opt` for `model` and calls f(link).
template <LossModel M, class F>
decltype(auto) with_link(const ExperimentConfig& cfg, const OptimizerConfig& opt, const M& model, const Dataset& data,
                         F&& f)
{
    if (opt.link == "constant")
        return f(ConstantLink{});
    if (opt.link == "gradient_norm")
        return f(GradientNormLink<M>(model, data));
    if constexpr (std::is_same_v<M, LogisticLoss>) {
        if (opt.link == "subfeature")
            return f(SubfeatureLogisticLink(cfg.feature_dim, cfg.subfeatures));
    }
    if constexpr (std::is_same_v<M, SymmetricLocationModel>) {
        if (opt.link == "abs_deviation")
            return f(AbsDeviationLink{});
    }
    throw ConfigError("link '" + opt.link + "' is not available for " + std::string(to_string(cfg.kind))
                      + " experiments");
}

/// Runs task(i) for i in [0, count) on a bounded pool of worker threads.
/// The first exception thrown by a task is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t count, std::size_t jobs, F&& task)
{
    if (jobs == 0)
        jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min(jobs, count);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load())
                    return;
                try {
                    task(i);
                } catch (...) {
                    const std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    failed.store(true);
                }
            }
        });
    for (auto& t : workers)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

/// Statistics of one coordinate of the final estimates across replications.
struct SummaryRow
{
    std::string method;
    std::size_t coordinate = 0;
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double sd = 0.0; ///< sample standard deviation (n - 1); 0 for one replication
};

inline SummaryRow summarize(std::string method, std::size_t coordinate, std::vector<double> values)
{
    detail::require(!values.empty(), "summarize: no values");
    SummaryRow row;
    row.method = std::move(method);
    row.coordinate = coordinate;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    row.min = values.front();
    row.max = values.back();
    row.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    double sum = 0.0;
    for (double v : values)
        sum += v;
    row.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values)
        ss += (v - row.mean) * (v - row.mean);
    row.sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return row;
}

struct MethodBudget
{
    std::string method;
    double expected = 0.0;      ///< expected gradient evaluations per run
    double mean_realized = 0.0; ///< average over replications (0 before running)
};

/// Expected gradient budgets of all methods. Budgets that differ by more
/// than a factor of 10 are refused unless `allow_unfair` is set.
inline std::vector<MethodBudget> check_budget_fairness(const ExperimentConfig& cfg, bool allow_unfair)
{
    std::vector<MethodBudget> budgets;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& m : cfg.methods) {
        const double b = expected_gradient_budget(m.optimizer, cfg.population_size);
        budgets.push_back({m.name, b, 0.0});
        lo = std::min(lo, b);
        hi = std::max(hi, b);
    }
    if (!allow_unfair && budgets.size() > 1 && hi > 10.0 * lo) {
        std::string detail;
        for (const auto& b : budgets)
            detail += " " + b.method + "=" + io::format_double(b.expected);
        throw ConfigError("gradient budgets differ by more than 10x (" + detail.substr(1)
                          + "); pass --allow-unfair-budget to run anyway");
    }
    return budgets;
}

struct RunOptions
{
    std::optional<std::filesystem::path> output_dir; ///< no files are written when empty
    std::size_t jobs = 0;                            ///< 0: use the config value
    bool allow_unfair_budget = false;
    std::optional<Dataset> data; ///< shared population instead of generated ones
};

struct ExperimentResult
{
    std::vector<std::string> methods;
    std::vector<std::vector<Vector>> finals;               ///< [method][replication]
    std::vector<std::vector<std::size_t>> gradient_evals;  ///< [method][replication]
    std::vector<SummaryRow> summary;
    std::vector<MethodBudget> budgets;

    std::size_t method_index(std::string_view name) const
    {
        for (std::size_t m = 0; m < methods.size(); ++m)
            if (methods[m] == name)
                return m;
        throw InvalidArgument("no method named '" + std::string(name) + "'");
    }

    const SummaryRow& row(std::string_view method, std::size_t coordinate) const
    {
        for (const auto& r : summary)
            if (r.method == method && r.coordinate == coordinate)
                return r;
        throw InvalidArgument("no summary row for " + std::string(method));
    }
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    return out;
}

inline void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows)
{
    auto out = open_output(path);
    out << "method,coordinate,min,median,max,mean,sd\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.coordinate << ',' << io::format_double(r.min) << ',' << io::format_double(r.median)
            << ',' << io::format_double(r.max) << ',' << io::format_double(r.mean) << ',' << io::format_double(r.sd)
            << '\n';
}

inline void write_finals(const std::filesystem::path& path, const ExperimentResult& res)
{
    auto out = open_output(path);
    out << "method,replication";
    const auto q = res.finals.empty() || res.finals[0].empty() ? 0 : res.finals[0][0].size();
    for (Eigen::Index k = 0; k < q; ++k)
        out << ",theta_" << k;
    out << ",gradient_evals\n";
    for (std::size_t m = 0; m < res.methods.size(); ++m)
        for (std::size_t r = 0; r < res.finals[m].size(); ++r) {
            out << res.methods[m] << ',' << r;
            for (Eigen::Index k = 0; k < q; ++k)
                out << ',' << io::format_double(res.finals[m][r][k]);
            out << ',' << res.gradient_evals[m][r] << '\n';
        }
}

inline void write_budgets(const std::filesystem::path& path, const std::vector<MethodBudget>& budgets)
{
    auto out = open_output(path);
    out << "method,expected_gradient_evals,mean_gradient_evals\n";
    for (const auto& b : budgets)
        out << b.method << ',' << io::format_double(b.expected) << ',' << io::format_double(b.mean_realized) << '\n';
}

} // namespace detail

/// Runs every method on every replication. Replication r uses population
/// data_seed(cfg, r) (or the shared dataset) and method seed
/// replication_seed(master_seed, r, method). Output files:
///   summary.csv, final_estimates.csv, budget.csv and, when enabled,
///   traces/<method>_rep<r>.csv.
/// Results do not depend on the number of worker threads.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {})
{
    cfg.validate();
    if (options.data)
        check_dataset(cfg, *options.data);
    ExperimentResult res;
    res.budgets = check_budget_fairness(cfg, options.allow_unfair_budget);
    const std::size_t n_methods = cfg.methods.size();
    const std::size_t reps = cfg.replications;
    for (const auto& m : cfg.methods)
        res.methods.push_back(m.name);
    res.finals.assign(n_methods, std::vector<Vector>(reps));
    res.gradient_evals.assign(n_methods, std::vector<std::size_t>(reps, 0));

    std::optional<std::filesystem::path> trace_dir;
    if (options.output_dir) {
        std::filesystem::create_directories(*options.output_dir);
        if (cfg.write_traces) {
            trace_dir = *options.output_dir / "traces";
            std::filesystem::create_directories(*trace_dir);
        }
    }

    // A shared population is built once; fresh populations inside each task.
    std::optional<Dataset> shared = options.data;
    if (!shared && !cfg.fresh_data)
        shared = generate_data(cfg, 0);

    auto replicate = [&](std::size_t r) {
        const Dataset data = shared ? *shared : generate_data(cfg, r);
        with_model(cfg, data, [&](const auto& model) {
            for (std::size_t m = 0; m < n_methods; ++m) {
                OptimizerConfig opt = cfg.methods[m].optimizer;
                opt.seed = replication_seed(cfg.master_seed, r, cfg.methods[m].name);
                opt.run_id = r;
                std::ofstream trace_file;
                std::optional<io::TraceCsvWriter> writer;
                IterationObserver observer;
                if (trace_dir) {
                    trace_file = detail::open_output(*trace_dir
                                                     / (cfg.methods[m].name + "_rep" + std::to_string(r) + ".csv"));
                    writer.emplace(trace_file, r, model.param_dim());
                    observer = writer->observer();
                }
                const RunTrace trace = with_link(cfg, opt, model, data, [&](const auto& link) {
                    return run_optimizer(model, data, link, opt, observer);
                });
                res.finals[m][r] = trace.final_theta();
                res.gradient_evals[m][r] = trace.gradient_evals;
            }
            return 0;
        });
    };
    parallel_for(reps, options.jobs ? options.jobs : cfg.jobs, replicate);

    const auto q = static_cast<std::size_t>(res.finals[0][0].size());
    for (std::size_t m = 0; m < n_methods; ++m) {
        for (std::size_t k = 0; k < q; ++k) {
            std::vector<double> values(reps);
            for (std::size_t r = 0; r < reps; ++r)
                values[r] = res.finals[m][r][static_cast<Eigen::Index>(k)];
            res.summary.push_back(summarize(res.methods[m], k, std::move(values)));
        }
        double total = 0.0;
        for (std::size_t e : res.gradient_evals[m])
            total += static_cast<double>(e);
        res.budgets[m].mean_realized = total / static_cast<double>(reps);
    }

    if (options.output_dir) {
        detail::write_summary(*options.output_dir / "summary.csv", res.summary);
        detail::write_finals(*options.output_dir / "final_estimates.csv", res);
        detail::write_budgets(*options.output_dir / "budget.csv", res.budgets);
    }
    return res;
}

/// Covariance diagnostics of one HTGD method at the reference point theta*
/// of the replication-0 population.
struct DiagnosticsReport
{
    std::string method;
    std::vector<std::pair<std::string, double>> quantities;
    Vector theta_star;
    Matrix hessian;
    Matrix gamma_link;
    Matrix sigma_link;
    Matrix sigma_equal;
    Matrix sigma_optimal;
    GainReport gains;

    double value(std::string_view name) const
    {
        for (const auto& [k, v] : quantities)
            if (k == name)
                return v;
        throw InvalidArgument("no diagnostics quantity '" + std::string(name) + "'");
    }
};

/// Computes theta* (damped Newton from the method's starting point),
/// H, Gamma and Sigma for the link, equal and optimal Poisson designs of the
/// same expected size, c_N, sigma2_N and the residuals of the two gain
/// identities. Sigma is computed with eta = 0 for the comparison; the
/// method's own eta is reported separately when its exponent lies in
/// (1/2, 1]. Writes diagnostics.csv and matrix dumps when an output
/// directory is given.
inline DiagnosticsReport run_diagnostics(const ExperimentConfig& cfg, std::string_view method_name = {},
                                         const std::optional<std::filesystem::path>& output_dir = {},
                                         const std::optional<Dataset>& dataset = {})
{
    cfg.validate();
    const MethodConfig* chosen = nullptr;
    for (const auto& m : cfg.methods)
        if (method_name.empty() ? m.optimizer.optimizer == OptimizerKind::htgd : m.name == method_name) {
            chosen = &m;
            break;
        }
    if (!chosen)
        throw ConfigError(method_name.empty() ? "diagnostics need an htgd method in the config"
                                              : "no method named '" + std::string(method_name) + "'");
    if (chosen->optimizer.optimizer != OptimizerKind::htgd || chosen->optimizer.design != DesignKind::poisson)
        throw ConfigError("diagnostics are defined for htgd methods with the Poisson design");

    const Dataset data = dataset ? *dataset : generate_data(cfg, 0);
    check_dataset(cfg, data);
    DiagnosticsReport rep;
    rep.method = chosen->name;
    const OptimizerConfig& opt = chosen->optimizer;

    with_model(cfg, data, [&](const auto& model) {
        const StationaryPoint sp = find_stationary_point(model, data, initial_theta(model, data));
        rep.theta_star = sp.theta;
        rep.hessian = hessian_estimate(model, data, sp.theta);
        const Matrix grads = gradient_matrix(model, data, sp.theta);
        const std::vector<double> weights = with_link(cfg, opt, model, data, [&](const auto& link) {
            return link_weights(link, data, sp.theta);
        });
        const InclusionProbabilities link_probs = normalize_weights(weights, opt.expected_size, opt.prob_floor);
        const CovarianceDiagnostics diag = covariance_diagnostics(grads, rep.hessian, link_probs, 0.0);
        rep.gains = gain_comparison(grads, rep.hessian, link_probs);
        rep.gamma_link = diag.gamma;
        rep.sigma_link = diag.sigma;
        rep.sigma_equal = poisson_limit_covariance(
            grads, InclusionProbabilities::uniform(data.size(), link_probs.expected_size()), rep.hessian, 0.0);
        const auto optimal = normalize_weights(whitened_norms(grads, rep.hessian), link_probs.expected_size(),
                                               std::min(InclusionProbabilities::default_floor,
                                                        0.5 * link_probs.expected_size()
                                                            / static_cast<double>(data.size())));
        rep.sigma_optimal = poisson_limit_covariance(grads, optimal, rep.hessian, 0.0);

        auto& qs = rep.quantities;
        qs.emplace_back("N", static_cast<double>(data.size()));
        qs.emplace_back("param_dim", static_cast<double>(model.param_dim()));
        qs.emplace_back("expected_size", link_probs.expected_size());
        for (Eigen::Index k = 0; k < sp.theta.size(); ++k)
            qs.emplace_back("theta_star_" + std::to_string(k), sp.theta[k]);
        qs.emplace_back("gradient_norm_at_theta_star", sp.gradient_norm);
        qs.emplace_back("theta_star_converged", sp.converged ? 1.0 : 0.0);
        qs.emplace_back("smallest_eigenvalue_H", diag.smallest_eig_l);
        qs.emplace_back("trace_sigma_link", rep.gains.trace_link);
        qs.emplace_back("trace_sigma_equal", rep.gains.trace_equal);
        qs.emplace_back("trace_sigma_optimal", rep.gains.trace_optimal);
        qs.emplace_back("c_N", rep.gains.c_n);
        qs.emplace_back("sigma2_N", rep.gains.sigma2_n);
        qs.emplace_back("identity_equal_link_residual", rep.gains.equal_link_residual);
        qs.emplace_back("identity_link_optimal_residual", rep.gains.link_optimal_residual);
        qs.emplace_back("optimal_probs_clipped", rep.gains.optimal_clipped ? 1.0 : 0.0);
        qs.emplace_back("lyapunov_residual_link", diag.lyapunov_residual);
        if (opt.alpha > 0.5 && opt.alpha <= 1.0) {
            const double eta = lyapunov_eta(opt.alpha, opt.gamma0);
            const Matrix sigma_eta = solve_lyapunov(rep.hessian, rep.gamma_link, eta);
            qs.emplace_back("eta", eta);
            qs.emplace_back("trace_sigma_link_at_eta", hs_squared(sigma_eta));
        }
        return 0;
    });

    if (output_dir) {
        std::filesystem::create_directories(*output_dir);
        auto out = detail::open_output(*output_dir / "diagnostics.csv");
        out << "quantity,value\n";
        for (const auto& [k, v] : rep.quantities)
            out << k << ',' << io::format_double(v) << '\n';
        io::write_matrix((*output_dir / "hessian.txt").string(), rep.hessian);
        io::write_matrix((*output_dir / "gamma_link.txt").string(), rep.gamma_link);
        io::write_matrix((*output_dir / "sigma_link.txt").string(), rep.sigma_link);
        io::write_matrix((*output_dir / "sigma_equal.txt").string(), rep.sigma_equal);
        io::write_matrix((*output_dir / "sigma_optimal.txt").string(), rep.sigma_optimal);
    }
    return rep;
}

} // namespace htgd

#endif // HTGD_EXPERIMENTS_HPP
