#ifndef HTGD_TEST_SUPPORT_HPP
#define HTGD_TEST_SUPPORT_HPP

// Oracles shared by the unit and acceptance tests. They are written
// independently of the library's own self-check code: exhaustive
// enumeration by recursion over units, plain central differences and
// direct (non-Lyapunov) formulas.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "htgd/designs.hpp"
#include "htgd/models.hpp"
#include "htgd/rng.hpp"

namespace htgd::testing {

/// Every outcome of independent Bernoulli(p_i) indicators with its
/// probability, built by recursion over units.
struct Outcome
{
    std::vector<std::uint8_t> eps;
    double prob = 1.0;
};

inline void enumerate_outcomes(const std::vector<double>& p, std::size_t i, Outcome& cur,
                               const std::function<void(const Outcome&)>& visit)
{
    if (i == p.size()) {
        visit(cur);
        return;
    }
    const double keep = cur.prob;
    cur.eps[i] = 1;
    cur.prob = keep * p[i];
    enumerate_outcomes(p, i + 1, cur, visit);
    cur.eps[i] = 0;
    cur.prob = keep * (1.0 - p[i]);
    enumerate_outcomes(p, i + 1, cur, visit);
    cur.prob = keep;
}

inline void for_each_outcome(const std::vector<double>& p, const std::function<void(const Outcome&)>& visit)
{
    Outcome cur{std::vector<std::uint8_t>(p.size(), 0), 1.0};
    enumerate_outcomes(p, 0, cur, visit);
}

/// Outcomes of the size-n conditional design, renormalized.
inline std::vector<Outcome> conditional_outcomes(const std::vector<double>& p, std::size_t n)
{
    std::vector<Outcome> out;
    double total = 0.0;
    for_each_outcome(p, [&](const Outcome& o) {
        std::size_t size = 0;
        for (auto e : o.eps)
            size += e;
        if (size == n && o.prob > 0.0) {
            out.push_back(o);
            total += o.prob;
        }
    });
    for (auto& o : out)
        o.prob /= total;
    return out;
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

inline std::vector<double> random_probs(std::size_t n, Rng& rng, double lo = 0.05, double hi = 0.95)
{
    std::vector<double> p(n);
    for (double& v : p)
        v = uniform(rng, lo, hi);
    return p;
}

inline Matrix random_gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = standard_normal(rng);
    return m;
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Eigen::Index q, Rng& rng, double lo = 0.2, double hi = 5.0)
{
    const Eigen::HouseholderQR<Matrix> qr(random_gaussian(q, q, rng));
    const Matrix u = qr.householderQ();
    Vector lambda(q);
    for (Eigen::Index k = 0; k < q; ++k)
        lambda[k] = uniform(rng, lo, hi);
    return u * lambda.asDiagonal() * u.transpose();
}

inline Matrix random_psd(Eigen::Index q, Rng& rng)
{
    const Matrix a = random_gaussian(q, q + 2, rng);
    return a * a.transpose();
}

/// Central difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6)
{
    Vector g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double step = h * std::max(1.0, std::abs(x[k]));
        Vector up = x;
        Vector down = x;
        up[k] += step;
        down[k] -= step;
        g[k] = (f(up) - f(down)) / (2.0 * step);
    }
    return g;
}

/// Central difference Jacobian of a vector function (column k = d/dx_k).
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-5)
{
    Matrix j(f(x).size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double step = h * std::max(1.0, std::abs(x[k]));
        Vector up = x;
        Vector down = x;
        up[k] += step;
        down[k] -= step;
        j.col(k) = (f(up) - f(down)) / (2.0 * step);
    }
    return j;
}

inline double rel_error(const Matrix& a, const Matrix& b, double floor = 1e-12)
{
    return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline double rel_error(double a, double b, double floor = 1e-12)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Logistic record (y, x) with features drawn uniformly on [-2, 2].
inline Vector random_logistic_record(std::size_t d, Rng& rng)
{
    Vector z(static_cast<Eigen::Index>(d + 1));
    z[0] = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    for (std::size_t k = 1; k <= d; ++k)
        z[static_cast<Eigen::Index>(k)] = uniform(rng, -2.0, 2.0);
    return z;
}

/// Dataset with one scalar record per value.
inline Dataset scalar_dataset(const std::vector<double>& xs)
{
    Matrix m(1, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
        m(0, static_cast<Eigen::Index>(i)) = xs[i];
    return Dataset(m, {"x"});
}

/// Direct evaluation of Tr Sigma at eta = 0 for a Poisson design, via
/// 2 Tr Sigma = Tr(H^{-1} Gamma) with Gamma assembled from its definition as
/// the second moment of the HT gradient.
inline double poisson_trace_sigma(const Matrix& grads, const std::vector<double>& p, const Matrix& h)
{
    const auto n = grads.cols();
    Matrix gamma = Matrix::Zero(grads.rows(), grads.rows());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double pij = i == j ? p[static_cast<std::size_t>(i)]
                                      : p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(j)];
            gamma += pij / (p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(j)]) * grads.col(i)
                     * grads.col(j).transpose();
        }
    gamma /= static_cast<double>(n) * static_cast<double>(n);
    return 0.5 * h.ldlt().solve(gamma).trace();
}

} // namespace htgd::testing

#endif // HTGD_TEST_SUPPORT_HPP
