#ifndef HTGD_ENGINE_HPP
#define HTGD_ENGINE_HPP

// Optimizer loops: HT gradient descent over survey samples drawn at every
// iteration, and the two baselines (uniform mini-batch SGD, full-gradient
// descent). Every run records its full parameter trajectory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "htgd/designs.hpp"
#include "htgd/error.hpp"
#include "htgd/ht.hpp"
#include "htgd/links.hpp"
#include "htgd/models.hpp"
#include "htgd/rng.hpp"

namespace htgd {

enum class OptimizerKind { htgd, minibatch_sgd, full_gd };
enum class DesignKind { poisson, rejective, uniform };

constexpr std::string_view to_string(OptimizerKind k) noexcept
{
    switch (k) {
    case OptimizerKind::htgd: return "htgd";
    case OptimizerKind::minibatch_sgd: return "minibatch_sgd";
    case OptimizerKind::full_gd: return "full_gd";
    }
    return "?";
}

constexpr std::string_view to_string(DesignKind k) noexcept
{
    switch (k) {
    case DesignKind::poisson: return "poisson";
    case DesignKind::rejective: return "rejective";
    case DesignKind::uniform: return "uniform";
    }
    return "?";
}

inline OptimizerKind parse_optimizer_kind(std::string_view s)
{
    if (s == "htgd") return OptimizerKind::htgd;
    if (s == "minibatch_sgd" || s == "sgd") return OptimizerKind::minibatch_sgd;
    if (s == "full_gd" || s == "gd") return OptimizerKind::full_gd;
    throw ConfigError("unknown optimizer kind '" + std::string(s) + "'");
}

inline DesignKind parse_design_kind(std::string_view s)
{
    if (s == "poisson") return DesignKind::poisson;
    if (s == "rejective") return DesignKind::rejective;
    if (s == "uniform") return DesignKind::uniform;
    throw ConfigError("unknown design kind '" + std::string(s) + "'");
}

/// Settings of one optimizer run. The learning rate is
/// gamma(t) = gamma0 * t^{-alpha}; the update producing theta(t+1) uses
/// gamma(t+1).
struct OptimizerConfig
{
    double gamma0 = 1.0;
    double alpha = 1.0;
    std::size_t iterations = 100;
    double expected_size = 1.0;
    double projection_radius = 1e3;
    std::uint64_t seed = 0;
    std::uint64_t run_id = 0;
    OptimizerKind optimizer = OptimizerKind::htgd;
    DesignKind design = DesignKind::poisson;
    std::string link = "constant";
    double prob_floor = InclusionProbabilities::default_floor;
    std::optional<Vector> theta0;

    double learning_rate(std::size_t t) const { return gamma0 * std::pow(static_cast<double>(t), -alpha); }

    /// Fixed sample size used by the uniform and rejective designs.
    std::size_t fixed_size() const { return static_cast<std::size_t>(std::llround(expected_size)); }

    void validate(std::size_t population_size) const
    {
        if (!(gamma0 > 0.0) || !std::isfinite(gamma0))
            throw ConfigError("gamma0 must be positive");
        // alpha = 0 (constant step) is allowed for the full-gradient baseline
        // and alpha = 1/2 for reproduction runs; the covariance analysis
        // enforces (1/2, 1] on its own.
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw ConfigError("alpha must lie in [0, 1]");
        if (!(projection_radius > 0.0))
            throw ConfigError("projection radius must be positive (use inf to disable)");
        if (optimizer != OptimizerKind::full_gd) {
            if (!(expected_size > 0.0 && expected_size <= static_cast<double>(population_size)))
                throw ConfigError("expected sample size must lie in (0, N]");
            if ((optimizer == OptimizerKind::minibatch_sgd || design != DesignKind::poisson) && fixed_size() < 1)
                throw ConfigError("fixed-size designs need a sample size of at least 1");
        }
    }
};

/// Trajectory and cost accounting of one run.
struct RunTrace
{
    std::vector<Vector> thetas;              ///< theta(0..T)
    std::vector<std::size_t> realized_sizes; ///< sample size used at each update
    std::size_t gradient_evals = 0;          ///< total per-record gradient evaluations
    double wall_time = 0.0;                  ///< seconds

    const Vector& final_theta() const { return thetas.back(); }
    std::size_t iterations() const noexcept { return realized_sizes.size(); }
};

/// Called with (t, theta(t), size of the sample that produced theta(t)); the
/// size is 0 for t = 0.
using IterationObserver = std::function<void(std::size_t, const Vector&, std::size_t)>;

/// Euclidean projection onto the ball of radius `radius`.
inline void project_to_ball(Vector& theta, double radius)
{
    if (!std::isfinite(radius))
        return;
    const double norm = theta.norm();
    if (norm > radius)
        theta *= radius / norm;
}

/// Default starting point: the origin.
template <LossModel M>
Vector initial_theta(const M& model, const Dataset&)
{
    return Vector::Zero(static_cast<Eigen::Index>(model.param_dim()));
}

/// The symmetric model starts at the sample median.
inline Vector initial_theta(const SymmetricLocationModel& model, const Dataset&)
{
    std::vector<double> xs(model.sample().begin(), model.sample().end());
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    double median = xs[mid];
    if (xs.size() % 2 == 0) {
        const double lower = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    Vector theta(1);
    theta[0] = median;
    return theta;
}

namespace detail {

template <LossModel M>
class RunRecorder
{
public:
    RunRecorder(const M& model, const Dataset& data, const OptimizerConfig& config, const IterationObserver& observer)
        : observer_(observer), start_(std::chrono::steady_clock::now())
    {
        config.validate(data.size());
        theta_ = config.theta0 ? *config.theta0 : initial_theta(model, data);
        require(static_cast<std::size_t>(theta_.size()) == model.param_dim(),
                "initial parameter has the wrong dimension");
        project_to_ball(theta_, config.projection_radius);
        trace_.thetas.reserve(config.iterations + 1);
        trace_.realized_sizes.reserve(config.iterations);
        trace_.thetas.push_back(theta_);
        if (observer_)
            observer_(0, theta_, 0);
    }

    Vector& theta() noexcept { return theta_; }

    void step(std::size_t t, const Vector& direction, double rate, double radius, std::size_t sample_size)
    {
        theta_ -= rate * direction;
        project_to_ball(theta_, radius);
        if (!theta_.allFinite())
            throw NumericalError("non-finite parameter at iteration " + std::to_string(t + 1)
                                 + " (learning rate too large?)");
        trace_.thetas.push_back(theta_);
        trace_.realized_sizes.push_back(sample_size);
        trace_.gradient_evals += sample_size;
        if (observer_)
            observer_(t + 1, theta_, sample_size);
    }

    RunTrace finish()
    {
        trace_.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return std::move(trace_);
    }

private:
    const IterationObserver& observer_;
    std::chrono::steady_clock::time_point start_;
    Vector theta_;
    RunTrace trace_;
};

} // namespace detail

/// HT gradient descent. At every iteration the link weights are recomputed
/// at the current parameter, normalized into inclusion probabilities of
/// expected size N0, a sample is drawn from the configured design and the
/// parameter moves along the HT estimate of the gradient.
template <LossModel M, Link L>
RunTrace run_htgd(const M& model, const Dataset& data, const L& link, const OptimizerConfig& config,
                  const IterationObserver& observer = {})
{
    detail::RunRecorder<M> rec(model, data, config, observer);
    Rng rng = make_rng(derive_seed(config.seed, {config.run_id}));
    const std::size_t n_units = data.size();
    std::vector<double> weights(n_units);

    for (std::size_t t = 0; t < config.iterations; ++t) {
        const Vector& theta = rec.theta();
        SurveySample sample;
        HTGradientEstimate estimate;
        switch (config.design) {
        case DesignKind::poisson: {
            for (std::size_t i = 0; i < n_units; ++i)
                weights[i] = link_weight(link, data, i, theta);
            const auto probs = normalize_weights(weights, config.expected_size, config.prob_floor);
            sample = draw_poisson(probs, rng);
            estimate = ht_gradient(model, theta, data, sample, probs);
            break;
        }
        case DesignKind::rejective: {
            for (std::size_t i = 0; i < n_units; ++i)
                weights[i] = link_weight(link, data, i, theta);
            const std::size_t n = config.fixed_size();
            const auto working = normalize_weights(weights, static_cast<double>(n), config.prob_floor);
            sample = draw_rejective(working, n, rng);
            estimate = ht_gradient(model, theta, data, sample, rejective_inclusion_probabilities(working, n));
            break;
        }
        case DesignKind::uniform: {
            const std::size_t n = config.fixed_size();
            sample = draw_uniform_without_replacement(n, n_units, rng);
            estimate = ht_gradient(model, theta, data, sample,
                                   InclusionProbabilities::uniform(n_units, static_cast<double>(n)));
            break;
        }
        }
        rec.step(t, estimate.vector, config.learning_rate(t + 1), config.projection_radius, sample.realized_size());
    }
    return rec.finish();
}

/// Mini-batch SGD: uniform samples of fixed size n without replacement and
/// the plain sample mean of the gradients.
template <LossModel M>
RunTrace run_minibatch_sgd(const M& model, const Dataset& data, const OptimizerConfig& config,
                           const IterationObserver& observer = {})
{
    detail::RunRecorder<M> rec(model, data, config, observer);
    Rng rng = make_rng(derive_seed(config.seed, {config.run_id}));
    const std::size_t n = config.fixed_size();

    for (std::size_t t = 0; t < config.iterations; ++t) {
        const Vector& theta = rec.theta();
        const SurveySample sample = draw_uniform_without_replacement(n, data.size(), rng);
        Vector direction = Vector::Zero(static_cast<Eigen::Index>(model.param_dim()));
        for (std::size_t i : sample.indices)
            direction += record_gradient(model, data, i, theta);
        direction /= static_cast<double>(n);
        rec.step(t, direction, config.learning_rate(t + 1), config.projection_radius, n);
    }
    return rec.finish();
}

/// Deterministic gradient descent on the full empirical risk.
template <LossModel M>
RunTrace run_full_gd(const M& model, const Dataset& data, const OptimizerConfig& config,
                     const IterationObserver& observer = {})
{
    detail::RunRecorder<M> rec(model, data, config, observer);
    for (std::size_t t = 0; t < config.iterations; ++t) {
        const Vector direction = empirical_gradient(model, data, rec.theta());
        rec.step(t, direction, config.learning_rate(t + 1), config.projection_radius, data.size());
    }
    return rec.finish();
}

/// Dispatches on config.optimizer.
template <LossModel M, Link L>
RunTrace run_optimizer(const M& model, const Dataset& data, const L& link, const OptimizerConfig& config,
                       const IterationObserver& observer = {})
{
    switch (config.optimizer) {
    case OptimizerKind::htgd: return run_htgd(model, data, link, config, observer);
    case OptimizerKind::minibatch_sgd: return run_minibatch_sgd(model, data, config, observer);
    case OptimizerKind::full_gd: return run_full_gd(model, data, config, observer);
    }
    throw ConfigError("unknown optimizer kind");
}

/// Expected number of per-record gradient evaluations of a run.
inline double expected_gradient_budget(const OptimizerConfig& config, std::size_t population_size)
{
    const auto iters = static_cast<double>(config.iterations);
    switch (config.optimizer) {
    case OptimizerKind::full_gd: return iters * static_cast<double>(population_size);
    case OptimizerKind::minibatch_sgd: return iters * static_cast<double>(config.fixed_size());
    case OptimizerKind::htgd:
        return iters * (config.design == DesignKind::poisson ? config.expected_size
                                                             : static_cast<double>(config.fixed_size()));
    }
    return 0.0;
}

} // namespace htgd

#endif // HTGD_ENGINE_HPP
