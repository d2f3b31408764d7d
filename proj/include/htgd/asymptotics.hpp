#ifndef HTGD_ASYMPTOTICS_HPP
#define HTGD_ASYMPTOTICS_HPP

// Limit covariance of HT gradient descent and the quantities that compare
// sampling designs through it:
//   * Gamma(theta), the second moment of the HT gradient estimate,
//   * Sigma solving H Sigma + Sigma H + 2 eta Sigma = Gamma,
//   * optimal Poisson probabilities and the link-function gain statistics,
//   * Monte Carlo draws of the limiting scaled loss error,
//   * an empirical log-log fit of the mean squared error decay.
//
// Gradients are passed as a q x N matrix whose column i is grad psi(Z_i, theta).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htgd/designs.hpp"
#include "htgd/engine.hpp"
#include "htgd/error.hpp"
#include "htgd/models.hpp"
#include "htgd/rng.hpp"

namespace htgd {

inline Matrix symmetrize(const Matrix& a)
{
    return 0.5 * (a + a.transpose());
}

/// Trace of a square matrix; for PSD Sigma this is ||Sigma^{1/2}||_HS^2.
inline double hs_squared(const Matrix& sigma)
{
    return sigma.trace();
}

/// Damping term of the Lyapunov equation: 1/(2 gamma0) when alpha = 1, zero
/// for alpha in (1/2, 1). Other exponents are outside the CLT regime.
inline double lyapunov_eta(double alpha, double gamma0)
{
    if (!(alpha > 0.5 && alpha <= 1.0))
        throw InvalidArgument("learning-rate exponent must lie in (1/2, 1] for the covariance analysis");
    detail::require(gamma0 > 0.0, "gamma0 must be positive");
    return alpha == 1.0 ? 1.0 / (2.0 * gamma0) : 0.0;
}

/// Gamma = E[l_HT l_HT^T] for a general design with joint probabilities
/// pi_ij:
///   (1/N^2) [ sum_i g_i g_i^T / pi_i + sum_{i != j} pi_ij/(pi_i pi_j) g_i g_j^T ].
inline Matrix gamma_matrix(const Matrix& grads, const SecondOrderProbs& second_order)
{
    const auto n_units = static_cast<Eigen::Index>(second_order.population_size());
    detail::require(grads.cols() == n_units, "gamma_matrix: gradients and design differ in size");
    const Eigen::VectorXd pi = second_order.first_order();
    // Weight matrix W_ij = pi_ij / (pi_i pi_j); its diagonal is 1 / pi_i.
    Matrix w(n_units, n_units);
    for (Eigen::Index i = 0; i < n_units; ++i)
        for (Eigen::Index j = 0; j < n_units; ++j)
            w(i, j) = second_order.matrix()(i, j) / (pi[i] * pi[j]);
    const double n2 = static_cast<double>(n_units) * static_cast<double>(n_units);
    return symmetrize(grads * w * grads.transpose() / n2);
}

/// Poisson specialization, O(N q^2):
///   (1/N^2) [ sum_i (1/p_i - 1) g_i g_i^T + (sum_i g_i)(sum_i g_i)^T ].
inline Matrix gamma_matrix_poisson(const Matrix& grads, const InclusionProbabilities& probs)
{
    detail::require(static_cast<std::size_t>(grads.cols()) == probs.population_size(),
                    "gamma_matrix_poisson: gradients and probabilities differ in size");
    const auto q = grads.rows();
    Matrix gamma = Matrix::Zero(q, q);
    for (Eigen::Index i = 0; i < grads.cols(); ++i) {
        const double p = probs[static_cast<std::size_t>(i)];
        gamma.noalias() += ((1.0 - p) / p) * grads.col(i) * grads.col(i).transpose();
    }
    const Vector sum = grads.rowwise().sum();
    gamma += sum * sum.transpose();
    const double n = static_cast<double>(grads.cols());
    return symmetrize(gamma / (n * n));
}

/// Conditional covariance of the gradient noise, Gamma - l_N l_N^T. It
/// coincides with Gamma at a stationary point.
inline Matrix noise_covariance(const Matrix& gamma, const Matrix& grads)
{
    const Vector mean = grads.rowwise().mean();
    return symmetrize(gamma - mean * mean.transpose());
}

template <LossModel M>
Matrix gamma_matrix(const M& model, const Dataset& data, const Vector& theta, const SecondOrderProbs& second_order)
{
    return gamma_matrix(gradient_matrix(model, data, theta), second_order);
}

/// Solves H Sigma + Sigma H + 2 eta Sigma = Gamma for symmetric H through the
/// eigendecomposition H = U diag(lambda) U^T:
///   Sigma = U [ (U^T Gamma U)_ij / (lambda_i + lambda_j + 2 eta) ] U^T.
inline Matrix solve_lyapunov(const Matrix& h, const Matrix& gamma, double eta)
{
    detail::require(h.rows() == h.cols() && gamma.rows() == h.rows() && gamma.cols() == h.cols(),
                    "solve_lyapunov: dimension mismatch");
    detail::require(eta >= 0.0, "solve_lyapunov: eta must be nonnegative");
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(h));
    if (eig.info() != Eigen::Success)
        throw NumericalError("solve_lyapunov: eigendecomposition failed");
    const Matrix& u = eig.eigenvectors();
    const Vector& lambda = eig.eigenvalues();
    Matrix rotated = u.transpose() * symmetrize(gamma) * u;
    for (Eigen::Index i = 0; i < rotated.rows(); ++i)
        for (Eigen::Index j = 0; j < rotated.cols(); ++j) {
            const double denom = lambda[i] + lambda[j] + 2.0 * eta;
            if (!(denom > 0.0))
                throw NumericalError("unstable Lyapunov pair: lambda_i + lambda_j + 2 eta <= 0");
            rotated(i, j) /= denom;
        }
    return symmetrize(u * rotated * u.transpose());
}

/// ||H Sigma + Sigma H + 2 eta Sigma - Gamma||_HS.
inline double lyapunov_residual(const Matrix& h, const Matrix& sigma, const Matrix& gamma, double eta)
{
    return (h * sigma + sigma * h + 2.0 * eta * sigma - gamma).norm();
}

/// H^{-1/2} for symmetric positive definite H.
inline Matrix inverse_sqrt(const Matrix& h)
{
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(h));
    if (eig.info() != Eigen::Success)
        throw NumericalError("inverse_sqrt: eigendecomposition failed");
    const Vector& lambda = eig.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (!(lambda.minCoeff() > 1e-14 * scale))
        throw InvalidArgument("matrix is singular or not positive definite");
    return symmetrize(eig.eigenvectors() * lambda.cwiseInverse().cwiseSqrt().asDiagonal()
                      * eig.eigenvectors().transpose());
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues from
/// rounding are clamped to zero.
inline Matrix psd_sqrt(const Matrix& a)
{
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(a));
    if (eig.info() != Eigen::Success)
        throw NumericalError("psd_sqrt: eigendecomposition failed");
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return symmetrize(eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose());
}

inline double smallest_eigenvalue(const Matrix& h)
{
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(h), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

/// Norms ||Q g_i|| for Q = H^{-1/2}.
inline std::vector<double> whitened_norms(const Matrix& grads, const Matrix& h)
{
    const Matrix q = inverse_sqrt(h);
    const Matrix white = q * grads;
    std::vector<double> norms(static_cast<std::size_t>(grads.cols()));
    for (Eigen::Index i = 0; i < grads.cols(); ++i)
        norms[static_cast<std::size_t>(i)] = white.col(i).norm();
    return norms;
}

/// Poisson probabilities minimizing ||Sigma^{1/2}||_HS at fixed expected size:
/// p*_i proportional to ||H^{-1/2} g_i||.
inline InclusionProbabilities optimal_poisson_probs(const Matrix& grads, const Matrix& h, double expected_size,
                                                    double floor = InclusionProbabilities::default_floor)
{
    return normalize_weights(whitened_norms(grads, h), expected_size, floor);
}

/// Poisson probabilities minimizing the L2 error of the HT gradient at fixed
/// expected size: p_i proportional to ||g_i||.
inline InclusionProbabilities variance_optimal_probs(const Matrix& grads, double expected_size,
                                                     double floor = InclusionProbabilities::default_floor)
{
    std::vector<double> norms(static_cast<std::size_t>(grads.cols()));
    for (Eigen::Index i = 0; i < grads.cols(); ++i)
        norms[static_cast<std::size_t>(i)] = grads.col(i).norm();
    if (std::all_of(norms.begin(), norms.end(), [](double v) { return v == 0.0; }))
        throw InvalidArgument("variance_optimal_probs: all gradients are zero");
    return normalize_weights(norms, expected_size, floor);
}

template <LossModel M>
InclusionProbabilities optimal_poisson_probs(const M& model, const Dataset& data, const Vector& theta, const Matrix& h,
                                             double expected_size)
{
    return optimal_poisson_probs(gradient_matrix(model, data, theta), h, expected_size);
}

template <LossModel M>
InclusionProbabilities variance_optimal_probs(const M& model, const Dataset& data, const Vector& theta,
                                              double expected_size)
{
    return variance_optimal_probs(gradient_matrix(model, data, theta), expected_size);
}

/// c_N: empirical covariance between ||Q g||^2 / p and p;
/// sigma2_N: empirical variance of ||Q g||. Both with Q = H^{-1/2}.
struct GainStats
{
    double c_n = 0.0;
    double sigma2_n = 0.0;
};

inline GainStats empirical_gain_stats(const Matrix& grads, const Matrix& h, std::span<const double> link_weights)
{
    detail::require(static_cast<std::size_t>(grads.cols()) == link_weights.size(),
                    "empirical_gain_stats: gradients and weights differ in size");
    for (double w : link_weights)
        detail::require(w > 0.0 && std::isfinite(w), "empirical_gain_stats: link weights must be positive");
    const std::vector<double> norms = whitened_norms(grads, h);
    const double n = static_cast<double>(norms.size());
    double sum_sq = 0.0;
    double sum_sq_over_p = 0.0;
    double sum_p = 0.0;
    double sum_norm = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i) {
        const double a = norms[i] * norms[i];
        sum_sq += a;
        sum_sq_over_p += a / link_weights[i];
        sum_p += link_weights[i];
        sum_norm += norms[i];
    }
    GainStats out;
    out.c_n = (sum_sq - sum_sq_over_p * (sum_p / n)) / n;
    out.sigma2_n = sum_sq / n - (sum_norm / n) * (sum_norm / n);
    return out;
}

/// Limit covariance Sigma for Poisson probabilities p.
inline Matrix poisson_limit_covariance(const Matrix& grads, const InclusionProbabilities& probs, const Matrix& h,
                                       double eta)
{
    return solve_lyapunov(h, gamma_matrix_poisson(grads, probs), eta);
}

/// Traces of Sigma for the link-based, equal and optimal Poisson designs,
/// all with the expected size of the link design, and the two gain
/// identities (at eta = 0):
///   2 (Tr Sigma_equal - Tr Sigma_link) = c_N / N0
///   2 N0 (Tr Sigma_link - Tr Sigma_opt) = sigma2_N - c_N.
struct GainReport
{
    double expected_size = 0.0;
    double trace_link = 0.0;
    double trace_equal = 0.0;
    double trace_optimal = 0.0;
    double c_n = 0.0;
    double sigma2_n = 0.0;
    double equal_link_residual = 0.0;   ///< relative residual of the first identity
    double link_optimal_residual = 0.0; ///< relative residual of the second identity
    bool optimal_clipped = false;       ///< p* hit the cap or floor; second identity need not hold
};

inline double relative_gap(double lhs, double rhs, double scale)
{
    return std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), scale});
}

inline GainReport gain_comparison(const Matrix& grads, const Matrix& h, const InclusionProbabilities& link_probs)
{
    GainReport r;
    const double n0 = link_probs.expected_size();
    const std::size_t n_units = link_probs.population_size();
    r.expected_size = n0;

    const auto optimal = normalize_weights_detailed(whitened_norms(grads, h), n0,
                                                    std::min(InclusionProbabilities::default_floor,
                                                             0.5 * n0 / static_cast<double>(n_units)));
    r.optimal_clipped = optimal.clipped();
    const auto equal = InclusionProbabilities::uniform(n_units, n0);

    r.trace_link = hs_squared(poisson_limit_covariance(grads, link_probs, h, 0.0));
    r.trace_equal = hs_squared(poisson_limit_covariance(grads, equal, h, 0.0));
    r.trace_optimal = hs_squared(poisson_limit_covariance(grads, optimal.probs, h, 0.0));

    const GainStats stats = empirical_gain_stats(grads, h, link_probs.values());
    r.c_n = stats.c_n;
    r.sigma2_n = stats.sigma2_n;

    // Scale of the quantities being differenced, so that residuals of
    // near-zero gaps are measured against what cancels.
    const double scale = 1e-300 + std::abs(r.trace_equal) * 2.0 * n0;
    r.equal_link_residual = relative_gap(2.0 * (r.trace_equal - r.trace_link) * n0, r.c_n,
                                         std::max(std::abs(r.c_n), 1e-16 * scale));
    r.link_optimal_residual = relative_gap(2.0 * n0 * (r.trace_link - r.trace_optimal), r.sigma2_n - r.c_n,
                                           std::max(std::abs(r.sigma2_n - r.c_n), 1e-16 * scale));
    return r;
}

/// Bundle of covariance quantities at theta for one Poisson design.
struct CovarianceDiagnostics
{
    Matrix gamma;
    Matrix sigma;
    double hs_sq = 0.0;
    double c_n = 0.0;
    double sigma2_n = 0.0;
    double eta = 0.0;
    Matrix h;
    double smallest_eig_l = 0.0;
    double lyapunov_residual = 0.0;
};

inline CovarianceDiagnostics covariance_diagnostics(const Matrix& grads, const Matrix& h,
                                                    const InclusionProbabilities& probs, double eta)
{
    CovarianceDiagnostics d;
    d.h = symmetrize(h);
    d.smallest_eig_l = smallest_eigenvalue(d.h);
    if (!(d.smallest_eig_l > 0.0))
        throw NumericalError("Hessian is not positive definite at the reference point");
    d.eta = eta;
    d.gamma = gamma_matrix_poisson(grads, probs);
    d.sigma = solve_lyapunov(d.h, d.gamma, eta);
    d.hs_sq = hs_squared(d.sigma);
    d.lyapunov_residual = lyapunov_residual(d.h, d.sigma, d.gamma, eta);
    const GainStats s = empirical_gain_stats(grads, d.h, probs.values());
    d.c_n = s.c_n;
    d.sigma2_n = s.sigma2_n;
    return d;
}

/// Draws of (1/2) U^T Sigma^{1/2} H Sigma^{1/2} U with U standard normal,
/// the limit law of (L_N(theta(t)) - L_N(theta*)) / gamma(t).
inline std::vector<double> limit_loss_error_sample(const Matrix& sigma, const Matrix& h, Rng& rng, std::size_t draws)
{
    detail::require(sigma.rows() == sigma.cols() && h.rows() == sigma.rows() && h.cols() == sigma.cols(),
                    "limit_loss_error_sample: dimension mismatch");
    const Matrix root = psd_sqrt(sigma);
    const Matrix form = symmetrize(root * symmetrize(h) * root);
    std::vector<double> out(draws);
    Vector u(sigma.rows());
    for (double& v : out) {
        for (Eigen::Index k = 0; k < u.size(); ++k)
            u[k] = standard_normal(rng);
        v = 0.5 * u.dot(form * u);
    }
    return out;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_distance(std::vector<double> a, std::vector<double> b)
{
    detail::require(!a.empty() && !b.empty(), "ks_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double best = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return best;
}

/// Hessian of the empirical risk: the average analytic Hessian when the model
/// has one, otherwise central differences of the empirical gradient.
template <LossModel M>
Matrix hessian_estimate(const M& model, const Dataset& data, const Vector& theta)
{
    const auto q = static_cast<Eigen::Index>(model.param_dim());
    if constexpr (HasHessian<M>) {
        Matrix h = Matrix::Zero(q, q);
        for (std::size_t i = 0; i < data.size(); ++i)
            h += model.hessian(data.record(i), theta);
        return symmetrize(h / static_cast<double>(data.size()));
    } else {
        Matrix h(q, q);
        for (Eigen::Index k = 0; k < q; ++k) {
            const double step = 1e-5 * (1.0 + std::abs(theta[k]));
            Vector up = theta;
            Vector down = theta;
            up[k] += step;
            down[k] -= step;
            h.col(k) = (empirical_gradient(model, data, up) - empirical_gradient(model, data, down)) / (2.0 * step);
        }
        return symmetrize(h);
    }
}

struct StationaryPoint
{
    Vector theta;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Damped Newton iteration on the empirical gradient, used to locate the
/// reference point theta* for diagnostics. Steps are halved until the
/// gradient norm decreases.
template <LossModel M>
StationaryPoint find_stationary_point(const M& model, const Dataset& data, const Vector& start,
                                      double tolerance = 1e-10, std::size_t max_iterations = 500)
{
    StationaryPoint out;
    out.theta = start;
    Vector grad = empirical_gradient(model, data, out.theta);
    out.gradient_norm = grad.norm();
    for (; out.iterations < max_iterations && out.gradient_norm > tolerance; ++out.iterations) {
        const Matrix h = hessian_estimate(model, data, out.theta);
        Vector step = h.ldlt().solve(grad);
        if (!step.allFinite())
            step = grad;
        double scale = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, scale *= 0.5) {
            const Vector candidate = out.theta - scale * step;
            const Vector cand_grad = empirical_gradient(model, data, candidate);
            if (cand_grad.allFinite() && cand_grad.norm() < out.gradient_norm) {
                out.theta = candidate;
                grad = cand_grad;
                out.gradient_norm = cand_grad.norm();
                accepted = true;
                break;
            }
        }
        if (!accepted)
            break;
    }
    out.converged = out.gradient_norm <= tolerance;
    return out;
}

/// Least-squares fit of log MSE(t) = intercept + slope * log t, where MSE(t)
/// is the mean over traces of ||theta(t) - theta*||^2.
struct RateFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    /// Decay faster than any power of t: the error reached zero, or the
    /// local slope keeps steepening across the fitted range.
    bool super_polynomial = false;
    std::size_t points = 0;
};

inline constexpr std::size_t min_rate_traces = 30;

namespace detail {

struct LineFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LineFit fit_line(std::span<const double> xs, std::span<const double> ys)
{
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    f.r_squared = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

} // namespace detail

inline RateFit rate_bound_fit(std::span<const RunTrace> traces, const Vector& theta_star, std::size_t t_min)
{
    if (traces.size() < min_rate_traces)
        throw InvalidArgument("rate_bound_fit: need at least " + std::to_string(min_rate_traces) + " traces");
    std::size_t horizon = std::numeric_limits<std::size_t>::max();
    for (const RunTrace& tr : traces)
        horizon = std::min(horizon, tr.thetas.size() - 1);
    const std::size_t first = std::max<std::size_t>(t_min, 1);
    detail::require(horizon > first, "rate_bound_fit: traces are shorter than t_min");

    // Geometric grid so every decade of t carries similar weight.
    std::vector<std::size_t> grid;
    for (double t = static_cast<double>(first); t <= static_cast<double>(horizon); t *= 1.02) {
        const auto ti = static_cast<std::size_t>(std::llround(t));
        if (grid.empty() || ti != grid.back())
            grid.push_back(ti);
    }
    if (grid.back() != horizon)
        grid.push_back(horizon);

    RateFit fit;
    std::vector<double> xs, ys;
    for (std::size_t t : grid) {
        double mse = 0.0;
        for (const RunTrace& tr : traces)
            mse += (tr.thetas[t] - theta_star).squaredNorm();
        mse /= static_cast<double>(traces.size());
        if (!(mse > 0.0) || !std::isfinite(std::log(mse))) {
            fit.super_polynomial = true;
            break;
        }
        xs.push_back(std::log(static_cast<double>(t)));
        ys.push_back(std::log(mse));
    }
    fit.points = xs.size();
    if (xs.size() < 4) {
        fit.super_polynomial = true;
        return fit;
    }
    const detail::LineFit all = detail::fit_line(xs, ys);
    fit.slope = all.slope;
    fit.intercept = all.intercept;
    fit.r_squared = all.r_squared;

    const std::size_t half = xs.size() / 2;
    const auto early = detail::fit_line(std::span(xs).first(half), std::span(ys).first(half));
    const auto late = detail::fit_line(std::span(xs).subspan(half), std::span(ys).subspan(half));
    if (late.slope < -2.0 && late.slope < 2.0 * early.slope)
        fit.super_polynomial = true;
    return fit;
}

} // namespace htgd

#endif // HTGD_ASYMPTOTICS_HPP
