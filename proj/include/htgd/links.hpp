#ifndef HTGD_LINKS_HPP
#define HTGD_LINKS_HPP

// Link functions map a record (through its auxiliary slice) and the current
// parameter to a nonnegative sampling weight. Weights are turned into
// inclusion probabilities by normalize_weights.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include "htgd/error.hpp"
#include "htgd/models.hpp"

namespace htgd {

/// Cheap links use only auxiliary information; oracle links need the full
/// per-record gradient and therefore defeat the purpose of sampling.
enum class CostClass { cheap, oracle };

constexpr std::string_view to_string(CostClass c) noexcept
{
    return c == CostClass::cheap ? "cheap" : "oracle";
}

template <class L>
concept Link = requires(const L& link, const Vector& z, const Vector& theta) {
    { link.weight(z, theta) } -> std::convertible_to<double>;
    { link.cost_class() } -> std::convertible_to<CostClass>;
};

template <class L>
concept IndexedLink = Link<L> && requires(const L& link, std::size_t i, const Vector& theta) {
    { link.weight_at(i, theta) } -> std::convertible_to<double>;
};

template <Link L>
double link_weight(const L& link, const Dataset& data, std::size_t i, const Vector& theta)
{
    if constexpr (IndexedLink<L>)
        return link.weight_at(i, theta);
    else
        return link.weight(data.record(i), theta);
}

/// Weights of every record at theta.
template <Link L>
std::vector<double> link_weights(const L& link, const Dataset& data, const Vector& theta)
{
    std::vector<double> w(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        w[i] = link_weight(link, data, i, theta);
    return w;
}

/// Same weight for every record: equal inclusion probabilities.
struct ConstantLink
{
    double weight(const RecordView&, const Vector&) const noexcept { return 1.0; }
    CostClass cost_class() const noexcept { return CostClass::cheap; }
};

/// Gradient norm of the logistic loss restricted to a few features: the
/// sub-model uses alpha and the coordinates of beta listed in `features`
/// (0-based feature indices), and only reads those columns of the record.
class SubfeatureLogisticLink
{
public:
    SubfeatureLogisticLink(std::size_t feature_dim, std::vector<std::size_t> features)
        : d_(feature_dim), features_(std::move(features))
    {
        for (std::size_t f : features_)
            detail::require(f < d_, "subfeature link: feature index out of range");
    }

    std::span<const std::size_t> features() const noexcept { return features_; }

    double weight(const RecordView& z, const Vector& theta) const
    {
        const double y01 = detail::label01(z[0]);
        double h = theta[0];
        double sq = 1.0;
        for (std::size_t f : features_) {
            const double x = z[static_cast<Eigen::Index>(f + 1)];
            h += theta[static_cast<Eigen::Index>(f + 1)] * x;
            sq += x * x;
        }
        return std::abs(detail::logistic(h) - y01) * std::sqrt(sq);
    }

    CostClass cost_class() const noexcept { return CostClass::cheap; }

private:
    std::size_t d_;
    std::vector<std::size_t> features_;
};

/// |x - theta| for scalar records.
struct AbsDeviationLink
{
    double weight(const RecordView& z, const Vector& theta) const { return std::abs(z[0] - theta[0]); }
    CostClass cost_class() const noexcept { return CostClass::cheap; }
};

/// Euclidean norm of the full per-record gradient.
template <LossModel M>
class GradientNormLink
{
public:
    explicit GradientNormLink(const M& model, const Dataset& data) : model_(&model), data_(&data) {}

    double weight(const RecordView& z, const Vector& theta) const { return model_->gradient(z, theta).norm(); }
    double weight_at(std::size_t i, const Vector& theta) const
    {
        return record_gradient(*model_, *data_, i, theta).norm();
    }
    CostClass cost_class() const noexcept { return CostClass::oracle; }

private:
    const M* model_;
    const Dataset* data_;
};

/// Weights fixed per record, independent of the parameter.
class StaticLink
{
public:
    explicit StaticLink(std::vector<double> weights) : weights_(std::move(weights))
    {
        for (double w : weights_)
            detail::require(w >= 0.0 && std::isfinite(w), "static link: weights must be finite and nonnegative");
    }

    double weight(const RecordView&, const Vector&) const
    {
        throw InvalidArgument("static link: weights are only defined by record index");
    }
    double weight_at(std::size_t i, const Vector&) const { return weights_.at(i); }
    CostClass cost_class() const noexcept { return CostClass::cheap; }

private:
    std::vector<double> weights_;
};

} // namespace htgd

#endif // HTGD_LINKS_HPP
