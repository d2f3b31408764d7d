#ifndef HTGD_DESIGNS_HPP
#define HTGD_DESIGNS_HPP

// Survey designs without replacement: Poisson, rejective (Poisson conditioned
// on the realized size) and simple random sampling. A design is described by
// its first-order inclusion probabilities; draws return the indicator vector
// of the selected units together with the sorted list of their indices.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htgd/error.hpp"
#include "htgd/rng.hpp"

namespace htgd {

/// First-order inclusion probabilities of a population of N units.
/// Immutable once built; entries are in (0, 1] and not below the floor.
class InclusionProbabilities
{
public:
    static constexpr double default_floor = 1e-6;

    explicit InclusionProbabilities(std::vector<double> probs, double floor = 0.0)
        : probs_(std::move(probs)), floor_(floor)
    {
        detail::require(!probs_.empty(), "inclusion probabilities: empty population");
        detail::require(floor_ >= 0.0 && floor_ < 1.0, "inclusion probabilities: floor must lie in [0, 1)");
        for (std::size_t i = 0; i < probs_.size(); ++i) {
            const double p = probs_[i];
            if (!(p > 0.0 && p <= 1.0 && p >= floor_))
                throw InvalidArgument("inclusion probabilities: entry " + std::to_string(i) + " = " + std::to_string(p)
                                      + " outside [floor, 1] or not positive");
        }
        expected_size_ = std::accumulate(probs_.begin(), probs_.end(), 0.0);
    }

    /// Equal probabilities n/N for every unit.
    static InclusionProbabilities uniform(std::size_t population_size, double expected_size)
    {
        detail::require(population_size > 0, "inclusion probabilities: empty population");
        return InclusionProbabilities(
            std::vector<double>(population_size, expected_size / static_cast<double>(population_size)));
    }

    std::span<const double> values() const noexcept { return probs_; }
    double operator[](std::size_t i) const noexcept { return probs_[i]; }
    std::size_t population_size() const noexcept { return probs_.size(); }
    double expected_size() const noexcept { return expected_size_; }
    double floor() const noexcept { return floor_; }

    Eigen::Map<const Eigen::VectorXd> as_vector() const noexcept
    {
        return {probs_.data(), static_cast<Eigen::Index>(probs_.size())};
    }

private:
    std::vector<double> probs_;
    double floor_;
    double expected_size_ = 0.0;
};

/// One realization of a design: indicator vector and selected indices.
struct SurveySample
{
    std::vector<std::uint8_t> indicators;
    std::vector<std::size_t> indices;

    SurveySample() = default;

    explicit SurveySample(std::vector<std::uint8_t> eps) : indicators(std::move(eps))
    {
        for (std::size_t i = 0; i < indicators.size(); ++i)
            if (indicators[i] != 0)
                indices.push_back(i);
    }

    static SurveySample from_indices(std::size_t population_size, std::vector<std::size_t> selected)
    {
        std::vector<std::uint8_t> eps(population_size, 0);
        for (std::size_t i : selected) {
            detail::require(i < population_size, "survey sample: index out of range");
            eps[i] = 1;
        }
        return SurveySample(std::move(eps));
    }

    static SurveySample census(std::size_t population_size)
    {
        return SurveySample(std::vector<std::uint8_t>(population_size, 1));
    }

    std::size_t population_size() const noexcept { return indicators.size(); }
    std::size_t realized_size() const noexcept { return indices.size(); }
    bool contains(std::size_t i) const noexcept { return indicators[i] != 0; }
};

/// Symmetric matrix of joint inclusion probabilities pi_{ij}; the diagonal
/// holds the first-order probabilities.
class SecondOrderProbs
{
public:
    explicit SecondOrderProbs(Eigen::MatrixXd pairwise) : pairwise_(std::move(pairwise))
    {
        detail::require(pairwise_.rows() == pairwise_.cols() && pairwise_.rows() > 0,
                        "second-order probabilities: matrix must be square and non-empty");
        constexpr double tol = 1e-12;
        for (Eigen::Index i = 0; i < pairwise_.rows(); ++i)
            for (Eigen::Index j = 0; j < pairwise_.cols(); ++j) {
                const double v = pairwise_(i, j);
                detail::require(v >= -tol && v <= 1.0 + tol, "second-order probabilities: entry outside [0, 1]");
                detail::require(std::abs(v - pairwise_(j, i)) <= tol, "second-order probabilities: not symmetric");
            }
    }

    const Eigen::MatrixXd& matrix() const noexcept { return pairwise_; }
    double operator()(std::size_t i, std::size_t j) const noexcept
    {
        return pairwise_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    std::size_t population_size() const noexcept { return static_cast<std::size_t>(pairwise_.rows()); }
    Eigen::VectorXd first_order() const { return pairwise_.diagonal(); }

private:
    Eigen::MatrixXd pairwise_;
};

/// Outcome of normalize_weights together with what the clipping did.
struct NormalizedWeights
{
    InclusionProbabilities probs;
    std::size_t capped = 0;  ///< units set to probability 1
    std::size_t floored = 0; ///< units raised to the floor
    bool clipped() const noexcept { return capped != 0 || floored != 0; }
};

/// Turns nonnegative weights into inclusion probabilities proportional to the
/// weights with expected size `target_size`. Probabilities above one are
/// capped and the freed budget is spread over the remaining units until a
/// fixed point is reached; entries below `floor` are then raised to it.
inline NormalizedWeights normalize_weights_detailed(std::span<const double> raw_weights, double target_size,
                                                    double floor = InclusionProbabilities::default_floor)
{
    const std::size_t n_units = raw_weights.size();
    detail::require(n_units > 0, "normalize_weights: empty weight vector");
    const auto population = static_cast<double>(n_units);
    detail::require(target_size > 0.0, "normalize_weights: target size must be positive");
    detail::require(target_size <= population, "normalize_weights: target size exceeds population size");
    detail::require(floor > 0.0 && floor < target_size / population,
                    "normalize_weights: floor must lie in (0, target_size / N)");

    bool any_positive = false;
    for (double w : raw_weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw InvalidArgument("normalize_weights: weights must be finite and nonnegative");
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive)
        throw InvalidArgument("normalize_weights: degenerate weights (all zero)");

    std::vector<std::uint8_t> capped(n_units, 0);
    std::size_t n_capped = 0;
    std::vector<double> probs(n_units, 0.0);

    for (;;) {
        const double budget = target_size - static_cast<double>(n_capped);
        double mass = 0.0;
        for (std::size_t i = 0; i < n_units; ++i)
            if (!capped[i])
                mass += raw_weights[i];

        if (n_capped == n_units) {
            std::fill(probs.begin(), probs.end(), 1.0);
            break;
        }
        if (mass == 0.0) {
            // Every positive-weight unit is capped; the rest of the budget is
            // shared equally by the zero-weight units.
            const double share = budget / static_cast<double>(n_units - n_capped);
            for (std::size_t i = 0; i < n_units; ++i)
                probs[i] = capped[i] ? 1.0 : share;
            break;
        }

        bool changed = false;
        for (std::size_t i = 0; i < n_units; ++i) {
            if (capped[i])
                continue;
            const double p = budget * (raw_weights[i] / mass);
            if (p >= 1.0) {
                capped[i] = 1;
                ++n_capped;
                changed = true;
            }
            probs[i] = p;
        }
        if (!changed) {
            for (std::size_t i = 0; i < n_units; ++i)
                if (capped[i])
                    probs[i] = 1.0;
            break;
        }
    }

    std::size_t n_floored = 0;
    for (double& p : probs)
        if (p < floor) {
            p = floor;
            ++n_floored;
        }
    return {InclusionProbabilities(std::move(probs), floor), n_capped, n_floored};
}

inline InclusionProbabilities normalize_weights(std::span<const double> raw_weights, double target_size,
                                                double floor = InclusionProbabilities::default_floor)
{
    return normalize_weights_detailed(raw_weights, target_size, floor).probs;
}

/// Poisson design: independent Bernoulli(p_i) indicators.
inline SurveySample draw_poisson(const InclusionProbabilities& probs, Rng& rng)
{
    std::vector<std::uint8_t> eps(probs.population_size());
    for (std::size_t i = 0; i < eps.size(); ++i)
        eps[i] = uniform01(rng) < probs[i] ? 1 : 0;
    return SurveySample(std::move(eps));
}

inline constexpr std::size_t default_rejective_retries = 1'000'000;

/// Rejective design: Poisson(p) conditioned on a realized size of exactly n,
/// drawn by rejection.
inline SurveySample draw_rejective(const InclusionProbabilities& probs, std::size_t n, Rng& rng,
                                   std::size_t max_retries = default_rejective_retries)
{
    const std::size_t n_units = probs.population_size();
    detail::require(n >= 1 && n <= n_units, "draw_rejective: sample size must lie in [1, N]");
    const auto certain = static_cast<std::size_t>(
        std::count_if(probs.values().begin(), probs.values().end(), [](double p) { return p >= 1.0; }));
    if (certain > n)
        throw NumericalError("rejective draw failed: more certainty units than the requested size");

    std::vector<std::uint8_t> eps(n_units);
    for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
        std::size_t size = 0;
        for (std::size_t i = 0; i < n_units; ++i) {
            eps[i] = uniform01(rng) < probs[i] ? 1 : 0;
            size += eps[i];
        }
        if (size == n)
            return SurveySample(eps);
    }
    throw NumericalError("rejective draw failed: retry cap of " + std::to_string(max_retries)
                         + " exceeded (probabilities incompatible with the size)");
}

/// Simple random sampling of n out of N units without replacement.
inline SurveySample draw_uniform_without_replacement(std::size_t n, std::size_t population_size, Rng& rng)
{
    detail::require(n >= 1 && n <= population_size, "draw_uniform_without_replacement: need 1 <= n <= N");
    std::vector<std::size_t> units(population_size);
    std::iota(units.begin(), units.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    std::sample(units.begin(), units.end(), std::back_inserter(chosen), n, rng);
    return SurveySample::from_indices(population_size, std::move(chosen));
}

/// Joint inclusion probabilities of a Poisson design (independence).
inline SecondOrderProbs poisson_second_order(const InclusionProbabilities& probs)
{
    const Eigen::VectorXd p = probs.as_vector();
    Eigen::MatrixXd joint = p * p.transpose();
    joint.diagonal() = p;
    return SecondOrderProbs(std::move(joint));
}

/// Exact first-order inclusion probabilities of the rejective design built
/// from working probabilities p and size n. Conditional Poisson sampling
/// weights a sample S proportionally to prod_{i in S} w_i, w_i = p_i / (1 - p_i),
/// so pi_i = w_i e_{n-1}(w_{-i}) / e_n(w) with e_k the elementary symmetric
/// polynomials. Cost O(N n). Units with p_i = 1 are always selected and
/// removed beforehand.
inline InclusionProbabilities rejective_inclusion_probabilities(const InclusionProbabilities& probs, std::size_t n)
{
    const std::size_t n_units = probs.population_size();
    detail::require(n >= 1 && n <= n_units, "rejective_inclusion_probabilities: need 1 <= n <= N");

    std::vector<double> pi(n_units, 0.0);
    std::vector<std::size_t> free_units;
    std::size_t certain = 0;
    for (std::size_t i = 0; i < n_units; ++i) {
        if (probs[i] >= 1.0) {
            pi[i] = 1.0;
            ++certain;
        } else {
            free_units.push_back(i);
        }
    }
    if (certain > n)
        throw InvalidArgument("rejective_inclusion_probabilities: more certainty units than the requested size");
    const std::size_t remaining = n - certain;
    if (remaining == free_units.size()) {
        for (std::size_t i : free_units)
            pi[i] = 1.0;
        return InclusionProbabilities(std::move(pi));
    }

    // pi_i = w_i e_{n-1}(w without i) / e_n(w), with w the odds and e_k the
    // elementary symmetric polynomials. The leave-one-out polynomials are
    // convolutions of prefix and suffix tables, so every term is positive and
    // nothing cancels. pi is invariant under scaling of w; scaling to sum n
    // keeps e_k <= n^k / k! away from overflow.
    const std::size_t m = free_units.size();
    std::vector<double> odds(m);
    double odds_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double p = probs[free_units[k]];
        odds[k] = p / (1.0 - p);
        odds_sum += odds[k];
    }
    for (double& w : odds)
        w *= static_cast<double>(remaining) / odds_sum;
    const std::size_t width = remaining + 1;
    // prefix[u * width + k] = e_k(w_0..w_{u-1}); suffix[u * width + k] = e_k(w_u..w_{m-1}).
    std::vector<double> prefix((m + 1) * width, 0.0);
    std::vector<double> suffix((m + 1) * width, 0.0);
    prefix[0] = 1.0;
    suffix[m * width] = 1.0;
    for (std::size_t u = 0; u < m; ++u) {
        const double* prev = &prefix[u * width];
        double* next = &prefix[(u + 1) * width];
        next[0] = 1.0;
        for (std::size_t k = 1; k < width; ++k)
            next[k] = prev[k] + odds[u] * prev[k - 1];
    }
    for (std::size_t u = m; u-- > 0;) {
        const double* prev = &suffix[(u + 1) * width];
        double* next = &suffix[u * width];
        next[0] = 1.0;
        for (std::size_t k = 1; k < width; ++k)
            next[k] = prev[k] + odds[u] * prev[k - 1];
    }
    const double total = prefix[m * width + remaining];
    std::vector<double> current(m, 0.0);
    for (std::size_t u = 0; u < m; ++u) {
        double leave_out = 0.0;
        for (std::size_t j = 0; j < remaining; ++j)
            leave_out += prefix[u * width + j] * suffix[(u + 1) * width + remaining - 1 - j];
        current[u] = odds[u] * leave_out / total;
    }
    for (std::size_t u = 0; u < free_units.size(); ++u)
        pi[free_units[u]] = std::clamp(current[u], 0.0, 1.0);
    // Tiny positive values may round to zero for extreme odds.
    for (double& v : pi)
        v = std::max(v, 1e-300);
    return InclusionProbabilities(std::move(pi));
}

inline constexpr std::size_t max_enumerated_population = 12;

/// Joint inclusion probabilities of the rejective design by exhaustive
/// enumeration of the 2^N Poisson outcomes; limited to small populations.
inline SecondOrderProbs rejective_second_order(const InclusionProbabilities& probs, std::size_t n)
{
    const std::size_t n_units = probs.population_size();
    detail::require(n_units <= max_enumerated_population,
                    "rejective_second_order: population too large for enumeration");
    detail::require(n >= 1 && n <= n_units, "rejective_second_order: need 1 <= n <= N");

    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(n_units));
    double total = 0.0;
    std::vector<std::size_t> members;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n_units); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != n)
            continue;
        double weight = 1.0;
        members.clear();
        for (std::size_t i = 0; i < n_units; ++i) {
            if (mask & (std::uint64_t{1} << i)) {
                weight *= probs[i];
                members.push_back(i);
            } else {
                weight *= 1.0 - probs[i];
            }
        }
        if (weight == 0.0)
            continue;
        total += weight;
        for (std::size_t a : members)
            for (std::size_t b : members)
                joint(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += weight;
    }
    if (!(total > 0.0))
        throw NumericalError("rejective_second_order: size n has zero probability under the design");
    joint /= total;
    joint = 0.5 * (joint + joint.transpose()).eval();
    return SecondOrderProbs(std::move(joint));
}

} // namespace htgd

#endif // HTGD_DESIGNS_HPP
