#ifndef HTGD_VALIDATION_HPP
#define HTGD_VALIDATION_HPP

// Self-check suite: exact enumeration oracles for the designs and HT
// estimators, algebraic checks of the covariance machinery and
// finite-difference checks of every analytic derivative. Each check runs on
// random instances drawn from a fixed seed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "htgd/asymptotics.hpp"
#include "htgd/designs.hpp"
#include "htgd/ht.hpp"
#include "htgd/io.hpp"
#include "htgd/links.hpp"
#include "htgd/models.hpp"
#include "htgd/rng.hpp"

namespace htgd {

struct CheckResult
{
    std::string name;
    bool passed = false;
    std::string detail; ///< worst error and tolerance
};

struct ValidationOptions
{
    std::uint64_t seed = 20240601;
    /// Fault injection: scale the HT weight 1/pi of unit 0 by 1.01 inside
    /// the estimator checks. The unbiasedness checks must then fail.
    bool corrupt_ht_weight = false;
};

/// Calls visit(sample, probability) for every outcome of a Poisson design
/// over N <= 20 units.
inline void enumerate_poisson(const InclusionProbabilities& probs,
                              const std::function<void(const SurveySample&, double)>& visit)
{
    const std::size_t n_units = probs.population_size();
    detail::require(n_units <= 20, "enumerate_poisson: population too large");
    std::vector<std::uint8_t> eps(n_units);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n_units); ++mask) {
        double weight = 1.0;
        for (std::size_t i = 0; i < n_units; ++i) {
            eps[i] = (mask >> i) & 1U;
            weight *= eps[i] ? probs[i] : 1.0 - probs[i];
        }
        if (weight > 0.0)
            visit(SurveySample(eps), weight);
    }
}

/// Same for the rejective design of size n (Poisson conditioned on size n).
inline void enumerate_rejective(const InclusionProbabilities& probs, std::size_t n,
                                const std::function<void(const SurveySample&, double)>& visit)
{
    double total = 0.0;
    std::vector<std::pair<SurveySample, double>> outcomes;
    enumerate_poisson(probs, [&](const SurveySample& s, double w) {
        if (s.realized_size() == n) {
            outcomes.emplace_back(s, w);
            total += w;
        }
    });
    detail::require(total > 0.0, "enumerate_rejective: size has zero probability");
    for (const auto& [s, w] : outcomes)
        visit(s, w / total);
}

namespace detail {

inline double rel_err(double a, double b, double floor = 1e-300)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-300)
{
    return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline std::vector<double> random_probs(std::size_t n, Rng& rng, double lo = 0.05, double hi = 0.95)
{
    std::vector<double> p(n);
    for (double& v : p)
        v = lo + (hi - lo) * uniform01(rng);
    return p;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = standard_normal(rng);
    return m;
}

inline Matrix random_spd(Eigen::Index q, Rng& rng)
{
    const Matrix a = random_matrix(q, q, rng);
    return symmetrize(a * a.transpose() + 0.5 * Matrix::Identity(q, q));
}

inline std::size_t random_int(std::size_t lo, std::size_t hi, Rng& rng)
{
    return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

inline CheckResult make_check(std::string name, double worst, double tol)
{
    const bool ok = worst <= tol;
    return {std::move(name), ok, "worst error " + io::format_double(worst) + " (tolerance " + io::format_double(tol) + ")"};
}

/// Central-difference gradient of a scalar function.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double rel_step = 1e-6)
{
    Vector g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = rel_step * (1.0 + std::abs(x[k]));
        Vector up = x;
        Vector down = x;
        up[k] += h;
        down[k] -= h;
        g[k] = (f(up) - f(down)) / (2.0 * h);
    }
    return g;
}

/// Central-difference Jacobian of a vector function (columns = inputs).
inline Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double rel_step = 1e-5)
{
    const Vector f0 = f(x);
    Matrix j(f0.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = rel_step * (1.0 + std::abs(x[k]));
        Vector up = x;
        Vector down = x;
        up[k] += h;
        down[k] -= h;
        j.col(k) = (f(up) - f(down)) / (2.0 * h);
    }
    return j;
}

inline Vector random_logistic_record(std::size_t d, Rng& rng)
{
    Vector z(static_cast<Eigen::Index>(d + 1));
    z[0] = uniform01(rng) < 0.5 ? 1.0 : -1.0;
    for (std::size_t k = 1; k <= d; ++k)
        z[static_cast<Eigen::Index>(k)] = uniform01(rng);
    return z;
}

} // namespace detail

/// HT total under Poisson designs: exact mean equals the total and exact
/// variance equals sum (1-p)/p ||Q||^2, by enumeration over N <= 8.
inline std::vector<CheckResult> check_ht_poisson(const ValidationOptions& opt, std::size_t instances = 50)
{
    Rng rng = make_rng(derive_seed(opt.seed, {1}));
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n_units = detail::random_int(1, 8, rng);
        const auto q = static_cast<Eigen::Index>(detail::random_int(1, 3, rng));
        const InclusionProbabilities probs(detail::random_probs(n_units, rng));
        const Matrix values = detail::random_matrix(q, static_cast<Eigen::Index>(n_units), rng);
        std::vector<double> used(probs.values().begin(), probs.values().end());
        if (opt.corrupt_ht_weight)
            used[0] /= 1.01;
        const Vector total = values.rowwise().sum();
        Vector mean = Vector::Zero(q);
        double var = 0.0;
        enumerate_poisson(probs, [&](const SurveySample& s, double w) {
            const Vector est = ht_total(values, s, used);
            mean += w * est;
            var += w * (est - total).squaredNorm();
        });
        worst_mean = std::max(worst_mean, detail::rel_err(mean, total));
        worst_var = std::max(worst_var, detail::rel_err(var, poisson_variance(values, probs)));
    }
    return {detail::make_check("designs/ht_total: Poisson unbiasedness by enumeration", worst_mean, 1e-12),
            detail::make_check("designs/poisson_variance: exact variance by enumeration", worst_var, 1e-12)};
}

/// Rejective designs: first-order closed form, second-order probabilities,
/// unbiasedness of HT with the exact first-order probabilities and the
/// Sen-Yates-Grundy variance, all against enumeration.
inline std::vector<CheckResult> check_rejective(const ValidationOptions& opt, std::size_t instances = 30)
{
    Rng rng = make_rng(derive_seed(opt.seed, {2}));
    double worst_pi = 0.0;
    double worst_joint = 0.0;
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n_units = detail::random_int(2, 9, rng);
        const std::size_t n = detail::random_int(1, n_units - 1, rng);
        const InclusionProbabilities working(detail::random_probs(n_units, rng));
        const Matrix values = detail::random_matrix(2, static_cast<Eigen::Index>(n_units), rng);

        Eigen::VectorXd pi_enum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_units));
        Matrix joint_enum = Matrix::Zero(static_cast<Eigen::Index>(n_units), static_cast<Eigen::Index>(n_units));
        enumerate_rejective(working, n, [&](const SurveySample& s, double w) {
            for (std::size_t a : s.indices) {
                pi_enum[static_cast<Eigen::Index>(a)] += w;
                for (std::size_t b : s.indices)
                    joint_enum(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += w;
            }
        });
        const InclusionProbabilities pi = rejective_inclusion_probabilities(working, n);
        worst_pi = std::max(worst_pi, detail::rel_err(Matrix(pi.as_vector()), Matrix(pi_enum)));
        const SecondOrderProbs joint = rejective_second_order(working, n);
        worst_joint = std::max(worst_joint, detail::rel_err(joint.matrix(), joint_enum));

        std::vector<double> used(pi.values().begin(), pi.values().end());
        if (opt.corrupt_ht_weight)
            used[0] /= 1.01;
        const Vector total = values.rowwise().sum();
        Vector mean = Vector::Zero(values.rows());
        double var = 0.0;
        enumerate_rejective(working, n, [&](const SurveySample& s, double w) {
            const Vector est = ht_total(values, s, used);
            mean += w * est;
            var += w * (est - total).squaredNorm();
        });
        worst_mean = std::max(worst_mean, detail::rel_err(mean, total));
        worst_var = std::max(worst_var, detail::rel_err(var, sen_yates_grundy_variance(values, joint)));
    }
    return {detail::make_check("designs/rejective_inclusion_probabilities: closed form vs enumeration", worst_pi, 1e-10),
            detail::make_check("designs/rejective_second_order: vs enumeration", worst_joint, 1e-12),
            detail::make_check("designs/ht_total: rejective unbiasedness by enumeration", worst_mean, 1e-10),
            detail::make_check("ht/sen_yates_grundy_variance: vs enumeration", worst_var, 1e-10)};
}

/// Gamma = E[l_HT l_HT^T] for Poisson and rejective designs, and the Poisson
/// closed form, against enumeration.
inline CheckResult check_gamma(const ValidationOptions& opt, std::size_t instances = 30)
{
    Rng rng = make_rng(derive_seed(opt.seed, {3}));
    double worst = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n_units = detail::random_int(2, 8, rng);
        const InclusionProbabilities probs(detail::random_probs(n_units, rng));
        const Matrix grads = detail::random_matrix(2, static_cast<Eigen::Index>(n_units), rng);
        const double n_pop = static_cast<double>(n_units);

        Matrix second = Matrix::Zero(2, 2);
        enumerate_poisson(probs, [&](const SurveySample& s, double w) {
            const Vector l = ht_total(grads, s, probs) / n_pop;
            second += w * l * l.transpose();
        });
        worst = std::max(worst, detail::rel_err(gamma_matrix_poisson(grads, probs), second));
        worst = std::max(worst, detail::rel_err(gamma_matrix(grads, poisson_second_order(probs)), second));

        const std::size_t n = detail::random_int(1, n_units - 1, rng);
        const InclusionProbabilities pi = rejective_inclusion_probabilities(probs, n);
        Matrix second_rej = Matrix::Zero(2, 2);
        enumerate_rejective(probs, n, [&](const SurveySample& s, double w) {
            const Vector l = ht_total(grads, s, pi) / n_pop;
            second_rej += w * l * l.transpose();
        });
        worst = std::max(worst, detail::rel_err(gamma_matrix(grads, rejective_second_order(probs, n)), second_rej));
    }
    return detail::make_check("asymptotics/gamma_matrix: vs enumeration", worst, 1e-10);
}

/// Lyapunov residuals on random (H, Gamma, eta) and the eta = 0 trace identity
/// 2 Tr Sigma = Tr(H^{-1} Gamma).
inline std::vector<CheckResult> check_lyapunov(const ValidationOptions& opt, std::size_t instances = 100)
{
    Rng rng = make_rng(derive_seed(opt.seed, {4}));
    double worst_res = 0.0;
    double worst_trace = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const auto q = static_cast<Eigen::Index>(detail::random_int(1, 5, rng));
        const Matrix h = detail::random_spd(q, rng);
        const Matrix b = detail::random_matrix(q, q, rng);
        const Matrix gamma = symmetrize(b * b.transpose());
        const double eta = inst % 2 ? uniform01(rng) : 0.0;
        const Matrix sigma = solve_lyapunov(h, gamma, eta);
        worst_res = std::max(worst_res, lyapunov_residual(h, sigma, gamma, eta) / gamma.norm());
        if (eta == 0.0) {
            const double lhs = 2.0 * sigma.trace();
            const double rhs = h.ldlt().solve(gamma).trace();
            worst_trace = std::max(worst_trace, detail::rel_err(lhs, rhs));
        }
    }
    return {detail::make_check("asymptotics/solve_lyapunov: residual", worst_res, 1e-10),
            detail::make_check("asymptotics/solve_lyapunov: eta = 0 trace identity", worst_trace, 1e-10)};
}

/// The two gain identities on random instances with q <= 3, N <= 50.
inline CheckResult check_gain_identities(const ValidationOptions& opt, std::size_t instances = 50)
{
    Rng rng = make_rng(derive_seed(opt.seed, {5}));
    double worst = 0.0;
    std::size_t checked = 0;
    while (checked < instances) {
        const auto q = static_cast<Eigen::Index>(detail::random_int(1, 3, rng));
        const std::size_t n_units = detail::random_int(5, 50, rng);
        const Matrix grads = detail::random_matrix(q, static_cast<Eigen::Index>(n_units), rng);
        const Matrix h = detail::random_spd(q, rng);
        std::vector<double> w(n_units);
        for (double& v : w)
            v = 0.2 + uniform01(rng);
        const double n0 = 1.0 + 0.2 * uniform01(rng) * static_cast<double>(n_units);
        const NormalizedWeights link = normalize_weights_detailed(w, n0, 1e-9);
        if (link.clipped())
            continue;
        const GainReport r = gain_comparison(grads, h, link.probs);
        if (r.optimal_clipped)
            continue;
        worst = std::max({worst, r.equal_link_residual, r.link_optimal_residual});
        ++checked;
    }
    return detail::make_check("asymptotics/gain_comparison: gain identities", worst, 1e-10);
}

/// No random feasible Poisson design beats the optimal one in Tr Sigma.
inline CheckResult check_optimality(const ValidationOptions& opt, std::size_t instances = 20, std::size_t tries = 200)
{
    Rng rng = make_rng(derive_seed(opt.seed, {6}));
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const auto q = static_cast<Eigen::Index>(detail::random_int(1, 3, rng));
        const std::size_t n_units = detail::random_int(5, 30, rng);
        const Matrix grads = detail::random_matrix(q, static_cast<Eigen::Index>(n_units), rng);
        const Matrix h = detail::random_spd(q, rng);
        const double n0 = 1.0 + 0.3 * uniform01(rng) * static_cast<double>(n_units);
        const InclusionProbabilities best = optimal_poisson_probs(grads, h, n0, 1e-12);
        const double best_trace = hs_squared(poisson_limit_covariance(grads, best, h, 0.0));
        for (std::size_t t = 0; t < tries; ++t) {
            std::vector<double> w(n_units);
            for (double& v : w)
                v = 1e-3 + uniform01(rng);
            const InclusionProbabilities candidate = normalize_weights(w, n0, 1e-12);
            const double trace = hs_squared(poisson_limit_covariance(grads, candidate, h, 0.0));
            worst = std::max(worst, best_trace - trace);
        }
    }
    // worst = largest improvement over the optimum found by any candidate.
    return {"asymptotics/optimal_poisson_probs: random search finds no better design", worst <= 1e-10,
            "largest improvement over optimum " + io::format_double(worst) + " (tolerance 1e-10)"};
}

/// Finite-difference checks of every analytic derivative.
inline std::vector<CheckResult> check_derivatives(const ValidationOptions& opt, std::size_t instances = 20)
{
    Rng rng = make_rng(derive_seed(opt.seed, {7}));
    double logistic_grad = 0.0;
    double logistic_hess = 0.0;
    double cost_grad = 0.0;
    double cost_hess = 0.0;
    double quad_grad = 0.0;
    double quad_hess = 0.0;
    double link_err = 0.0;
    double kernel_err = 0.0;
    double score_err = 0.0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t d = detail::random_int(1, 5, rng);
        const Vector z = detail::random_logistic_record(d, rng);
        const Vector theta = detail::random_matrix(static_cast<Eigen::Index>(d + 1), 1, rng);

        const LogisticLoss logistic(d);
        const auto lv = [&](const Vector& t) { return logistic.value(z, t); };
        const auto lg = [&](const Vector& t) { return Vector(logistic.gradient(z, t)); };
        logistic_grad = std::max(logistic_grad, detail::rel_err(Matrix(logistic.gradient(z, theta)),
                                                                Matrix(detail::numeric_gradient(lv, theta)), 1e-2));
        logistic_hess = std::max(logistic_hess, detail::rel_err(logistic.hessian(z, theta),
                                                                detail::numeric_jacobian(lg, theta), 1e-2));

        const QuadraticCostLoss cost(d);
        const auto cv = [&](const Vector& t) { return cost.value(z, t); };
        const auto cg = [&](const Vector& t) { return Vector(cost.gradient(z, t)); };
        cost_grad = std::max(cost_grad, detail::rel_err(Matrix(cost.gradient(z, theta)),
                                                        Matrix(detail::numeric_gradient(cv, theta)), 1e-2));
        cost_hess = std::max(cost_hess,
                             detail::rel_err(cost.hessian(z, theta), detail::numeric_jacobian(cg, theta), 1e-2));

        const auto q = static_cast<Eigen::Index>(d);
        const QuadraticLoss quad(detail::random_spd(q, rng));
        const Vector zq = detail::random_matrix(q, 1, rng);
        const Vector tq = detail::random_matrix(q, 1, rng);
        const auto qv = [&](const Vector& t) { return quad.value(zq, t); };
        const auto qg = [&](const Vector& t) { return Vector(quad.gradient(zq, t)); };
        quad_grad = std::max(quad_grad, detail::rel_err(Matrix(quad.gradient(zq, tq)),
                                                        Matrix(detail::numeric_gradient(qv, tq)), 1e-2));
        quad_hess = std::max(quad_hess, detail::rel_err(quad.hessian(zq, tq), detail::numeric_jacobian(qg, tq), 1e-2));

        // Sub-feature link: norm of the gradient of the reduced model.
        std::vector<std::size_t> features;
        for (std::size_t f = 0; f < d; ++f)
            if (uniform01(rng) < 0.5)
                features.push_back(f);
        const SubfeatureLogisticLink link(d, features);
        const std::size_t dp = features.size();
        Vector sub_z(static_cast<Eigen::Index>(dp + 1));
        Vector sub_theta(static_cast<Eigen::Index>(dp + 1));
        sub_z[0] = z[0];
        sub_theta[0] = theta[0];
        for (std::size_t k = 0; k < dp; ++k) {
            sub_z[static_cast<Eigen::Index>(k + 1)] = z[static_cast<Eigen::Index>(features[k] + 1)];
            sub_theta[static_cast<Eigen::Index>(k + 1)] = theta[static_cast<Eigen::Index>(features[k] + 1)];
        }
        // The reduced model has dp features; with none left it is the
        // intercept-only loss, which LogisticLoss(dp) cannot express.
        const auto sub_value = [&](const Vector& t) {
            double h = t[0];
            for (std::size_t k = 0; k < dp; ++k)
                h += t[static_cast<Eigen::Index>(k + 1)] * sub_z[static_cast<Eigen::Index>(k + 1)];
            const double y01 = (sub_z[0] + 1.0) / 2.0;
            return detail::softplus(h) - y01 * h;
        };
        const double fd_norm = detail::numeric_gradient(sub_value, sub_theta).norm();
        link_err = std::max(link_err, detail::rel_err(link.weight(z, theta), fd_norm, 1e-2));
    }

    // Kernel estimate: theta-derivative of the symmetrized density and the
    // per-record score shortcut.
    Matrix xs(1, 40);
    for (Eigen::Index i = 0; i < xs.cols(); ++i)
        xs(0, i) = (i % 2 ? 4.0 : -4.0) + standard_normal(rng);
    const Dataset data(xs, {"x"});
    const SymmetricLocationModel sym(data);
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const double x = 6.0 * (uniform01(rng) - 0.5);
        const double theta = 2.0 * (uniform01(rng) - 0.5);
        const double step = 1e-5;
        const double fd = (sym.density(x, theta + step) - sym.density(x, theta - step)) / (2.0 * step);
        kernel_err = std::max(kernel_err, detail::rel_err(sym.density_theta_derivative(x, theta), fd, 1e-4));
        const std::size_t j = detail::random_int(0, data.size() - 1, rng);
        const double xj = data.records(0, static_cast<Eigen::Index>(j));
        score_err = std::max(score_err, detail::rel_err(sym.record_score(j, theta), sym.score(xj - theta, theta), 1e-8));
    }

    return {detail::make_check("models/logistic: gradient vs finite differences", logistic_grad, 1e-5),
            detail::make_check("models/logistic: Hessian vs finite differences", logistic_hess, 1e-4),
            detail::make_check("models/quadratic_cost: gradient vs finite differences", cost_grad, 1e-5),
            detail::make_check("models/quadratic_cost: Hessian vs finite differences", cost_hess, 1e-4),
            detail::make_check("models/quadratic: gradient vs finite differences", quad_grad, 1e-5),
            detail::make_check("models/quadratic: Hessian vs finite differences", quad_hess, 1e-4),
            detail::make_check("links/subfeature_logistic: weight vs finite-difference gradient norm", link_err, 1e-5),
            detail::make_check("models/symmetric: density theta-derivative vs finite differences", kernel_err, 1e-4),
            detail::make_check("models/symmetric: per-record score shortcut", score_err, 1e-10)};
}

/// Monte Carlo: the average of many HT gradients approaches the full
/// gradient within a 4.5-sigma band per coordinate.
inline CheckResult check_ht_gradient_unbiased(const ValidationOptions& opt, std::size_t draws = 10000)
{
    Rng rng = make_rng(derive_seed(opt.seed, {8}));
    const std::size_t d = 3;
    const std::size_t n_units = 40;
    Matrix records(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(n_units));
    for (std::size_t i = 0; i < n_units; ++i)
        records.col(static_cast<Eigen::Index>(i)) = detail::random_logistic_record(d, rng);
    const Dataset data(records, {});
    const LogisticLoss model(d);
    const Vector theta = detail::random_matrix(static_cast<Eigen::Index>(d + 1), 1, rng);
    const InclusionProbabilities probs(detail::random_probs(n_units, rng, 0.1, 0.6));
    std::vector<double> used(probs.values().begin(), probs.values().end());
    if (opt.corrupt_ht_weight)
        used[0] /= 1.01;

    Vector mean = Vector::Zero(static_cast<Eigen::Index>(d + 1));
    for (std::size_t k = 0; k < draws; ++k)
        mean += ht_gradient(model, theta, data, draw_poisson(probs, rng), used).vector;
    mean /= static_cast<double>(draws);

    const Matrix grads = gradient_matrix(model, data, theta);
    const Vector target = grads.rowwise().mean();
    double worst_z = 0.0;
    for (Eigen::Index c = 0; c < grads.rows(); ++c) {
        double var = 0.0;
        for (std::size_t i = 0; i < n_units; ++i)
            var += (1.0 - probs[i]) / probs[i] * grads(c, static_cast<Eigen::Index>(i)) * grads(c, static_cast<Eigen::Index>(i));
        var /= static_cast<double>(n_units * n_units) * static_cast<double>(draws);
        worst_z = std::max(worst_z, std::abs(mean[c] - target[c]) / std::sqrt(var));
    }
    return {"ht/ht_gradient: Monte Carlo conditional unbiasedness", worst_z <= 4.5,
            "largest z-score " + io::format_double(worst_z) + " (band 4.5)"};
}

/// Inclusion-probability normalization: sum, caps and floor.
inline CheckResult check_normalization(const ValidationOptions& opt, std::size_t instances = 100)
{
    Rng rng = make_rng(derive_seed(opt.seed, {9}));
    double worst = 0.0;
    bool bounds_ok = true;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n_units = detail::random_int(2, 60, rng);
        std::vector<double> w(n_units);
        for (double& v : w)
            v = std::pow(uniform01(rng), 4.0);
        const double n0 = 1.0 + uniform01(rng) * static_cast<double>(n_units - 1);
        const InclusionProbabilities p = normalize_weights(w, n0, 1e-12);
        double sum = 0.0;
        for (double v : p.values()) {
            sum += v;
            bounds_ok = bounds_ok && v > 0.0 && v <= 1.0;
        }
        // The floor may add at most N * floor to the target size.
        worst = std::max(worst, std::abs(sum - n0) / n0);
    }
    return {"designs/normalize_weights: sum and bounds", bounds_ok && worst <= 1e-9,
            "worst relative size error " + io::format_double(worst) + (bounds_ok ? "" : "; probability out of (0, 1]")};
}

/// Runs every check.
inline std::vector<CheckResult> run_validation(const ValidationOptions& opt = {})
{
    std::vector<CheckResult> out;
    const auto append = [&](auto&& r) {
        if constexpr (std::is_same_v<std::decay_t<decltype(r)>, CheckResult>)
            out.push_back(std::move(r));
        else
            out.insert(out.end(), r.begin(), r.end());
    };
    append(check_ht_poisson(opt));
    append(check_rejective(opt));
    append(check_gamma(opt));
    append(check_lyapunov(opt));
    append(check_gain_identities(opt));
    append(check_optimality(opt));
    append(check_derivatives(opt));
    append(check_ht_gradient_unbiased(opt));
    append(check_normalization(opt));
    return out;
}

} // namespace htgd

#endif // HTGD_VALIDATION_HPP
