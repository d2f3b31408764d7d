#ifndef HTGD_HT_HPP
#define HTGD_HT_HPP

// Horvitz-Thompson estimation of totals and gradients, and the exact
// design variances of the total estimator.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "htgd/designs.hpp"
#include "htgd/error.hpp"
#include "htgd/models.hpp"

namespace htgd {

/// HT estimate of the gradient together with the number of units it used.
struct HTGradientEstimate
{
    Vector vector;
    std::size_t contributing_units = 0;
};

/// sum_{i in S} Q_i / pi_i where Q_i is column i of `values`. Units outside
/// the sample contribute nothing; an empty sample gives the zero vector.
inline Vector ht_total(const Matrix& values, const SurveySample& sample, std::span<const double> pi)
{
    detail::require(static_cast<std::size_t>(values.cols()) == pi.size()
                        && sample.population_size() == pi.size(),
                    "ht_total: values, sample and probabilities must cover the same population");
    Vector total = Vector::Zero(values.rows());
    for (std::size_t i : sample.indices) {
        if (!(pi[i] > 0.0))
            throw InvalidArgument("ht_total: selected unit " + std::to_string(i) + " has non-positive inclusion probability");
        total += values.col(static_cast<Eigen::Index>(i)) / pi[i];
    }
    return total;
}

inline Vector ht_total(const Matrix& values, const SurveySample& sample, const InclusionProbabilities& probs)
{
    return ht_total(values, sample, probs.values());
}

/// (1/N) sum_{i in S} grad psi(Z_i, theta) / pi_i. The gradient is only
/// evaluated at selected units.
template <LossModel M>
HTGradientEstimate ht_gradient(const M& model, const Vector& theta, const Dataset& data, const SurveySample& sample,
                               std::span<const double> pi)
{
    detail::require(sample.population_size() == data.size() && pi.size() == data.size(),
                    "ht_gradient: sample, probabilities and data must cover the same population");
    Vector total = Vector::Zero(static_cast<Eigen::Index>(model.param_dim()));
    for (std::size_t i : sample.indices) {
        if (!(pi[i] > 0.0))
            throw InvalidArgument("ht_gradient: selected unit " + std::to_string(i) + " has non-positive inclusion probability");
        total += record_gradient(model, data, i, theta) / pi[i];
    }
    return {total / static_cast<double>(data.size()), sample.realized_size()};
}

template <LossModel M>
HTGradientEstimate ht_gradient(const M& model, const Vector& theta, const Dataset& data, const SurveySample& sample,
                               const InclusionProbabilities& probs)
{
    return ht_gradient(model, theta, data, sample, probs.values());
}

/// The fixed-size-design expression
///   sum_{i<j} ||Q_i/pi_i - Q_j/pi_j||^2 (pi_ij - pi_i pi_j)
/// evaluated as written. For fixed-size designs pi_ij - pi_i pi_j is
/// typically nonpositive, so this equals minus the variance of the HT total;
/// see sen_yates_grundy_variance for the variance itself.
inline double conditional_variance_fixed_size(const Matrix& values, const SecondOrderProbs& second_order)
{
    const std::size_t n_units = second_order.population_size();
    detail::require(static_cast<std::size_t>(values.cols()) == n_units,
                    "conditional_variance_fixed_size: values and probabilities differ in size");
    const Eigen::VectorXd pi = second_order.first_order();
    double total = 0.0;
    for (std::size_t i = 0; i < n_units; ++i)
        for (std::size_t j = i + 1; j < n_units; ++j) {
            const auto a = static_cast<Eigen::Index>(i);
            const auto b = static_cast<Eigen::Index>(j);
            const double diff = (values.col(a) / pi[a] - values.col(b) / pi[b]).squaredNorm();
            total += diff * (second_order(i, j) - pi[a] * pi[b]);
        }
    return total;
}

/// Sen-Yates-Grundy form of the HT total variance for fixed-size designs:
///   sum_{i<j} (pi_i pi_j - pi_ij) ||Q_i/pi_i - Q_j/pi_j||^2.
/// For vector-valued Q this is E||T_HT - T||^2.
inline double sen_yates_grundy_variance(const Matrix& values, const SecondOrderProbs& second_order)
{
    return -conditional_variance_fixed_size(values, second_order);
}

/// Exact variance E||T_HT - T||^2 of the HT total under a Poisson design:
///   sum_i (1 - p_i)/p_i ||Q_i||^2.
inline double poisson_variance(const Matrix& values, const InclusionProbabilities& probs)
{
    detail::require(static_cast<std::size_t>(values.cols()) == probs.population_size(),
                    "poisson_variance: values and probabilities differ in size");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.population_size(); ++i) {
        const double p = probs[i];
        total += (1.0 - p) / p * values.col(static_cast<Eigen::Index>(i)).squaredNorm();
    }
    return total;
}

} // namespace htgd

#endif // HTGD_HT_HPP
