#ifndef HTGD_MODELS_HPP
#define HTGD_MODELS_HPP

// Loss families psi(z, theta) with analytic gradients. A dataset stores one
// record per column; models only see a record view and the parameter.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "htgd/error.hpp"

namespace htgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RecordView = Eigen::Ref<const Eigen::VectorXd>;

/// Population of N records, stored column-wise (one column per record).
struct Dataset
{
    Matrix records;
    std::vector<std::string> columns;

    Dataset() = default;
    Dataset(Matrix r, std::vector<std::string> names) : records(std::move(r)), columns(std::move(names))
    {
        detail::require(columns.empty() || columns.size() == static_cast<std::size_t>(records.rows()),
                        "dataset: column names do not match record dimension");
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(records.cols()); }
    std::size_t record_dim() const noexcept { return static_cast<std::size_t>(records.rows()); }
    auto record(std::size_t i) const { return records.col(static_cast<Eigen::Index>(i)); }
};

template <class M>
concept LossModel = requires(const M& m, const Vector& z, const Vector& theta) {
    { m.param_dim() } -> std::convertible_to<std::size_t>;
    { m.value(z, theta) } -> std::convertible_to<double>;
    { m.gradient(z, theta) } -> std::convertible_to<Vector>;
};

template <class M>
concept HasHessian = LossModel<M> && requires(const M& m, const Vector& z, const Vector& theta) {
    { m.hessian(z, theta) } -> std::convertible_to<Matrix>;
};

/// Models whose per-record term is cheaper when addressed by record index
/// (they hold precomputed per-record quantities).
template <class M>
concept IndexedGradient = LossModel<M> && requires(const M& m, std::size_t i, const Vector& theta) {
    { m.gradient_at(i, theta) } -> std::convertible_to<Vector>;
};

/// Gradient of psi at record i of `data`.
template <LossModel M>
Vector record_gradient(const M& model, const Dataset& data, std::size_t i, const Vector& theta)
{
    if constexpr (IndexedGradient<M>)
        return model.gradient_at(i, theta);
    else
        return model.gradient(data.record(i), theta);
}

/// Matrix whose column i is the gradient of psi at record i.
template <LossModel M>
Matrix gradient_matrix(const M& model, const Dataset& data, const Vector& theta)
{
    Matrix grads(static_cast<Eigen::Index>(model.param_dim()), static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
        grads.col(static_cast<Eigen::Index>(i)) = record_gradient(model, data, i, theta);
    return grads;
}

/// Empirical risk (1/N) sum_i psi(Z_i, theta).
template <LossModel M>
double empirical_risk(const M& model, const Dataset& data, const Vector& theta)
{
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        total += model.value(data.record(i), theta);
    return total / static_cast<double>(data.size());
}

/// Full empirical gradient (1/N) sum_i grad psi(Z_i, theta).
template <LossModel M>
Vector empirical_gradient(const M& model, const Dataset& data, const Vector& theta)
{
    Vector total = Vector::Zero(static_cast<Eigen::Index>(model.param_dim()));
    for (std::size_t i = 0; i < data.size(); ++i)
        total += record_gradient(model, data, i, theta);
    return total / static_cast<double>(data.size());
}

namespace detail {

inline double logistic(double h) noexcept
{
    if (h >= 0.0)
        return 1.0 / (1.0 + std::exp(-h));
    const double e = std::exp(h);
    return e / (1.0 + e);
}

/// log(1 + e^h) without overflow.
inline double softplus(double h) noexcept
{
    return h > 0.0 ? h + std::log1p(std::exp(-h)) : std::log1p(std::exp(h));
}

/// Maps a label in {-1, +1} to {0, 1}.
inline double label01(double y)
{
    if (y == 1.0)
        return 1.0;
    if (y == -1.0)
        return 0.0;
    throw InvalidArgument("label must be -1 or +1, got " + std::to_string(y));
}

} // namespace detail

/// Conditional negative log-likelihood of the linear logistic model.
/// Record layout z = (y, x_1..x_d); parameter theta = (alpha, beta_1..beta_d).
class LogisticLoss
{
public:
    explicit LogisticLoss(std::size_t feature_dim) : d_(feature_dim)
    {
        detail::require(feature_dim >= 1, "logistic loss: need at least one feature");
    }

    std::size_t param_dim() const noexcept { return d_ + 1; }
    std::size_t data_dim() const noexcept { return d_ + 1; }

    double linear_predictor(const RecordView& z, const Vector& theta) const
    {
        check(z, theta);
        return theta[0] + theta.tail(static_cast<Eigen::Index>(d_)).dot(z.tail(static_cast<Eigen::Index>(d_)));
    }

    double value(const RecordView& z, const Vector& theta) const
    {
        const double y01 = detail::label01(z[0]);
        const double h = linear_predictor(z, theta);
        return detail::softplus(h) - y01 * h;
    }

    Vector gradient(const RecordView& z, const Vector& theta) const
    {
        const double y01 = detail::label01(z[0]);
        const double residual = detail::logistic(linear_predictor(z, theta)) - y01;
        Vector g(static_cast<Eigen::Index>(d_ + 1));
        g[0] = residual;
        g.tail(static_cast<Eigen::Index>(d_)) = residual * z.tail(static_cast<Eigen::Index>(d_));
        return g;
    }

    Matrix hessian(const RecordView& z, const Vector& theta) const
    {
        detail::label01(z[0]);
        const double s = detail::logistic(linear_predictor(z, theta));
        Vector x1(static_cast<Eigen::Index>(d_ + 1));
        x1[0] = 1.0;
        x1.tail(static_cast<Eigen::Index>(d_)) = z.tail(static_cast<Eigen::Index>(d_));
        return s * (1.0 - s) * x1 * x1.transpose();
    }

private:
    void check(const RecordView& z, const Vector& theta) const
    {
        detail::require(static_cast<std::size_t>(z.size()) == d_ + 1, "logistic loss: record has wrong dimension");
        detail::require(static_cast<std::size_t>(theta.size()) == d_ + 1, "logistic loss: parameter has wrong dimension");
    }

    std::size_t d_;
};

/// Quadratic surrogate phi(-y h) with phi(u) = (u + 1)^2 / 2 and a linear
/// decision function h = alpha + beta^T x. Same record layout as LogisticLoss.
class QuadraticCostLoss
{
public:
    explicit QuadraticCostLoss(std::size_t feature_dim) : d_(feature_dim)
    {
        detail::require(feature_dim >= 1, "quadratic cost loss: need at least one feature");
    }

    std::size_t param_dim() const noexcept { return d_ + 1; }
    std::size_t data_dim() const noexcept { return d_ + 1; }

    double value(const RecordView& z, const Vector& theta) const
    {
        const double y = label(z);
        const double margin = 1.0 - y * decision(z, theta);
        return 0.5 * margin * margin;
    }

    Vector gradient(const RecordView& z, const Vector& theta) const
    {
        const double y = label(z);
        const double margin = 1.0 - y * decision(z, theta);
        Vector g(static_cast<Eigen::Index>(d_ + 1));
        g[0] = 1.0;
        g.tail(static_cast<Eigen::Index>(d_)) = z.tail(static_cast<Eigen::Index>(d_));
        return -y * margin * g;
    }

    Matrix hessian(const RecordView& z, const Vector& theta) const
    {
        label(z);
        detail::require(static_cast<std::size_t>(theta.size()) == d_ + 1, "quadratic cost loss: parameter has wrong dimension");
        Vector x1(static_cast<Eigen::Index>(d_ + 1));
        x1[0] = 1.0;
        x1.tail(static_cast<Eigen::Index>(d_)) = z.tail(static_cast<Eigen::Index>(d_));
        return x1 * x1.transpose();
    }

private:
    static double label(const RecordView& z)
    {
        detail::label01(z[0]);
        return z[0];
    }

    double decision(const RecordView& z, const Vector& theta) const
    {
        detail::require(static_cast<std::size_t>(z.size()) == d_ + 1, "quadratic cost loss: record has wrong dimension");
        detail::require(static_cast<std::size_t>(theta.size()) == d_ + 1, "quadratic cost loss: parameter has wrong dimension");
        return theta[0] + theta.tail(static_cast<Eigen::Index>(d_)).dot(z.tail(static_cast<Eigen::Index>(d_)));
    }

    std::size_t d_;
};

/// psi(z, theta) = (theta - z)^T A (theta - z) / 2 with A symmetric positive
/// definite; the empirical minimizer is the sample mean and the Hessian is A.
class QuadraticLoss
{
public:
    explicit QuadraticLoss(Matrix curvature) : a_(std::move(curvature))
    {
        detail::require(a_.rows() == a_.cols() && a_.rows() > 0, "quadratic loss: curvature must be square");
        detail::require((a_ - a_.transpose()).norm() <= 1e-12 * (1.0 + a_.norm()), "quadratic loss: curvature must be symmetric");
    }

    static QuadraticLoss isotropic(std::size_t dim, double scale = 1.0)
    {
        return QuadraticLoss(scale * Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
    }

    std::size_t param_dim() const noexcept { return static_cast<std::size_t>(a_.rows()); }
    std::size_t data_dim() const noexcept { return param_dim(); }
    const Matrix& curvature() const noexcept { return a_; }

    double value(const RecordView& z, const Vector& theta) const
    {
        const Vector diff = theta - z;
        return 0.5 * diff.dot(a_ * diff);
    }

    Vector gradient(const RecordView& z, const Vector& theta) const { return a_ * (theta - z); }

    Matrix hessian(const RecordView&, const Vector&) const { return a_; }

private:
    Matrix a_;
};

/// Standard Gaussian kernel and its derivative.
namespace kernel {

inline double gaussian(double u) noexcept
{
    return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

inline double gaussian_derivative(double u) noexcept { return -u * gaussian(u); }

} // namespace kernel

/// Rule-of-thumb bandwidth 1.06 * sd * N^{-1/5}.
inline double silverman_bandwidth(std::span<const double> xs)
{
    detail::require(xs.size() >= 2, "bandwidth: need at least two observations");
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs)
        mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    detail::require(sd > 0.0, "bandwidth: observations are all equal");
    return 1.06 * sd * std::pow(n, -0.2);
}

/// Semiparametric symmetric location model f(x - theta), f even and unknown.
/// The density is estimated by a symmetrized Gaussian-kernel estimate built
/// from the whole sample, and each record contributes the score term
/// s_N(X_j - theta, theta). The per-record "gradient" is the negated score, so
/// plain descent on it reproduces the ascent iteration on the score.
///
/// Records are scalars (z = (x)); the parameter is one-dimensional.
class SymmetricLocationModel
{
public:
    static constexpr double default_density_floor = 1e-12;

    SymmetricLocationModel(const Dataset& data, double bandwidth = 0.0, double density_floor = default_density_floor)
        : density_floor_(density_floor)
    {
        detail::require(data.record_dim() == 1, "symmetric model: records must be scalar");
        detail::require(data.size() >= 2, "symmetric model: need at least two observations");
        xs_.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            xs_[i] = data.records(0, static_cast<Eigen::Index>(i));
        h_ = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(xs_);

        // Sums over the sample that do not depend on theta when the score is
        // evaluated at x = X_j - theta.
        direct_density_.resize(xs_.size());
        direct_slope_.resize(xs_.size());
        for (std::size_t j = 0; j < xs_.size(); ++j) {
            double k = 0.0;
            double dk = 0.0;
            for (double xi : xs_) {
                const double u = (xs_[j] - xi) / h_;
                const double kv = kernel::gaussian(u);
                k += kv;
                dk -= u * kv;
            }
            direct_density_[j] = k;
            direct_slope_[j] = dk;
        }
    }

    std::size_t param_dim() const noexcept { return 1; }
    std::size_t data_dim() const noexcept { return 1; }
    double bandwidth() const noexcept { return h_; }
    double density_floor() const noexcept { return density_floor_; }
    std::span<const double> sample() const noexcept { return xs_; }

    /// Unsymmetrized estimate (1/(N h)) sum_i K((x - (X_i - theta)) / h).
    double shifted_density(double x, double theta) const
    {
        double k = 0.0;
        for (double xi : xs_)
            k += kernel::gaussian((x - xi + theta) / h_);
        return k / (static_cast<double>(xs_.size()) * h_);
    }

    /// Symmetrized estimate, an even function of x.
    double density(double x, double theta) const
    {
        return 0.5 * (shifted_density(x, theta) + shifted_density(-x, theta));
    }

    /// Partial derivative of the symmetrized estimate in theta at fixed x.
    double density_theta_derivative(double x, double theta) const
    {
        double dk = 0.0;
        for (double xi : xs_) {
            dk += kernel::gaussian_derivative((x - xi + theta) / h_);
            dk += kernel::gaussian_derivative((-x - xi + theta) / h_);
        }
        return 0.5 * dk / (static_cast<double>(xs_.size()) * h_ * h_);
    }

    /// Score s_N(x, theta) = (d/dtheta f_hat) / f_hat, density floored.
    double score(double x, double theta) const
    {
        return density_theta_derivative(x, theta) / std::max(density(x, theta), density_floor_);
    }

    /// Score term of observation j evaluated at x = X_j - theta.
    double record_score(std::size_t j, double theta) const
    {
        const double xj = xs_[j];
        double k = 0.0;
        double dk = 0.0;
        for (double xi : xs_) {
            const double u = (2.0 * theta - xj - xi) / h_;
            const double kv = kernel::gaussian(u);
            k += kv;
            dk -= u * kv;
        }
        const double scale = static_cast<double>(xs_.size()) * h_;
        const double dens = 0.5 * (direct_density_[j] + k) / scale;
        const double slope = 0.5 * (direct_slope_[j] + dk) / (scale * h_);
        return slope / std::max(dens, density_floor_);
    }

    /// Mean field (1/N) sum_j s_N(X_j - theta, theta); ascent direction.
    double mean_field(double theta) const
    {
        double total = 0.0;
        for (std::size_t j = 0; j < xs_.size(); ++j)
            total += record_score(j, theta);
        return total / static_cast<double>(xs_.size());
    }

    /// Kernel log-likelihood term -log f_hat_theta(x - theta).
    double value(const RecordView& z, const Vector& theta) const
    {
        const double x = z[0] - theta[0];
        return -std::log(std::max(density(x, theta[0]), density_floor_));
    }

    Vector gradient(const RecordView& z, const Vector& theta) const
    {
        Vector g(1);
        g[0] = -score(z[0] - theta[0], theta[0]);
        return g;
    }

    Vector gradient_at(std::size_t j, const Vector& theta) const
    {
        Vector g(1);
        g[0] = -record_score(j, theta[0]);
        return g;
    }

private:
    std::vector<double> xs_;
    std::vector<double> direct_density_;
    std::vector<double> direct_slope_;
    double h_ = 0.0;
    double density_floor_;
};

/// Free-function form of the kernel score.
inline double symmetric_score(double x, double theta, const SymmetricLocationModel& model)
{
    return model.score(x, theta);
}

inline double symmetric_mean_field(double theta, const SymmetricLocationModel& model)
{
    return model.mean_field(theta);
}

} // namespace htgd

#endif // HTGD_MODELS_HPP
