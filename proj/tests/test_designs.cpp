#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "htgd/designs.hpp"
#include "test_support.hpp"

namespace {

using htgd::InclusionProbabilities;
using htgd::Rng;
using htgd::SurveySample;

// Capped proportional allocation found by bisection on the scale c in
// sum_i min(1, c w_i) = n0; independent of the library's iteration.
std::vector<double> projection_oracle(const std::vector<double>& w, double n0)
{
    auto total = [&](double c) {
        double s = 0.0;
        for (double v : w)
            s += std::min(1.0, c * v);
        return s;
    };
    double lo = 0.0;
    double hi = 1.0;
    while (total(hi) < n0 && hi < 1e300)
        hi *= 2.0;
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < n0 ? lo : hi) = mid;
    }
    std::vector<double> p(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        p[i] = std::min(1.0, hi * w[i]);
    return p;
}

std::size_t mask_of(const SurveySample& s)
{
    std::size_t m = 0;
    for (std::size_t i : s.indices)
        m |= std::size_t{1} << i;
    return m;
}

TEST(NormalizeWeights, EqualWeightsGiveEqualProbabilities)
{
    const std::vector<double> w{1, 1, 1, 1};
    const auto p = htgd::normalize_weights(w, 2.0);
    for (double v : p.values())
        EXPECT_DOUBLE_EQ(v, 0.5);
    EXPECT_DOUBLE_EQ(p.expected_size(), 2.0);
}

TEST(NormalizeWeights, ProportionalWhenNothingCaps)
{
    const std::vector<double> w{0.3, 1.2, 0.5, 2.0, 0.9};
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    const auto p = htgd::normalize_weights(w, 2.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_NEAR(p[i], 2.0 * w[i] / sum, 1e-15);
    EXPECT_NEAR(p.expected_size(), 2.0, 1e-14);
}

TEST(NormalizeWeights, CappingFixedPointMatchesProjection)
{
    const std::vector<double> w{10, 1, 1};
    const auto res = htgd::normalize_weights_detailed(w, 2.0, 0.01);
    EXPECT_DOUBLE_EQ(res.probs[0], 1.0);
    EXPECT_DOUBLE_EQ(res.probs[1], 0.5);
    EXPECT_DOUBLE_EQ(res.probs[2], 0.5);
    EXPECT_EQ(res.capped, 1U);
    EXPECT_EQ(res.floored, 0U);

    const auto oracle = projection_oracle(w, 2.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_NEAR(res.probs[i], oracle[i], 1e-12);
}

TEST(NormalizeWeights, RandomCappedInstancesMatchProjection)
{
    Rng rng = htgd::make_rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 3 + htgd::make_rng(rep)() % 20;
        std::vector<double> w(n);
        for (double& v : w)
            v = std::exp(3.0 * htgd::standard_normal(rng));
        const double n0 = htgd::testing::uniform(rng, 0.5, 0.8 * static_cast<double>(n));
        const auto p = htgd::normalize_weights(w, n0, 1e-300);
        const auto oracle = projection_oracle(w, n0);
        for (std::size_t i = 0; i < n; ++i)
            EXPECT_NEAR(p[i], oracle[i], 1e-10) << "rep " << rep << " unit " << i;
        EXPECT_NEAR(p.expected_size(), n0, 1e-10);
    }
}

TEST(NormalizeWeights, FloorRaisesSmallEntriesAndBoundsDrift)
{
    const std::vector<double> w{0.0, 1e-9, 1.0, 1.0};
    const double floor = 0.05;
    const auto res = htgd::normalize_weights_detailed(w, 1.0, floor);
    EXPECT_EQ(res.floored, 2U);
    for (double v : res.probs.values())
        EXPECT_GE(v, floor);
    EXPECT_LE(res.probs.expected_size(), 1.0 + 4 * floor + 1e-12);
}

TEST(NormalizeWeights, ScaleInvariance)
{
    const std::vector<double> w{0.4, 3.0, 0.01, 7.5, 1.1, 0.0};
    const auto base = htgd::normalize_weights(w, 3.0);
    // Power-of-two scales are exact in floating point.
    for (double c : {0.25, 2.0, 1024.0}) {
        std::vector<double> scaled(w);
        for (double& v : scaled)
            v *= c;
        const auto p = htgd::normalize_weights(scaled, 3.0);
        for (std::size_t i = 0; i < w.size(); ++i)
            EXPECT_EQ(p[i], base[i]);
    }
    // Other scales agree up to rounding of the weight products.
    for (double c : {0.3, 7.0, 1e6}) {
        std::vector<double> scaled(w);
        for (double& v : scaled)
            v *= c;
        const auto p = htgd::normalize_weights(scaled, 3.0);
        for (std::size_t i = 0; i < w.size(); ++i)
            EXPECT_NEAR(p[i], base[i], 4e-16);
    }
}

TEST(NormalizeWeights, Errors)
{
    const std::vector<double> zeros{0, 0, 0};
    try {
        htgd::normalize_weights(zeros, 1.0);
        FAIL() << "expected an error";
    } catch (const htgd::InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate weights"), std::string::npos);
    }
    const std::vector<double> w{1, 2};
    EXPECT_THROW(htgd::normalize_weights(w, 3.0), htgd::InvalidArgument);
    EXPECT_THROW(htgd::normalize_weights(w, 1.0, 0.6), htgd::InvalidArgument);
    const std::vector<double> negative{1, -1};
    EXPECT_THROW(htgd::normalize_weights(negative, 1.0), htgd::InvalidArgument);
}

TEST(InclusionProbabilities, RejectsInvalidEntries)
{
    EXPECT_THROW(InclusionProbabilities({0.5, 0.0}), htgd::InvalidArgument);
    EXPECT_THROW(InclusionProbabilities({0.5, 1.5}), htgd::InvalidArgument);
    EXPECT_THROW(InclusionProbabilities({0.5, 0.01}, 0.05), htgd::InvalidArgument);
    EXPECT_THROW(InclusionProbabilities(std::vector<double>{}), htgd::InvalidArgument);
}

TEST(DrawPoisson, AllOnesSelectsEveryone)
{
    Rng rng = htgd::make_rng(1);
    const InclusionProbabilities p(std::vector<double>(7, 1.0));
    const auto s = htgd::draw_poisson(p, rng);
    EXPECT_EQ(s.realized_size(), 7U);
}

TEST(DrawPoisson, EightOutcomesPassChiSquare)
{
    Rng rng = htgd::make_rng(2);
    const InclusionProbabilities p(std::vector<double>(3, 0.5));
    constexpr std::size_t draws = 100000;
    std::array<double, 8> counts{};
    for (std::size_t k = 0; k < draws; ++k)
        counts[mask_of(htgd::draw_poisson(p, rng))] += 1.0;
    const double expected = draws / 8.0;
    double chi2 = 0.0;
    for (double c : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    // 99.9% quantile of chi-square with 7 degrees of freedom.
    EXPECT_LT(chi2, 24.32);
}

TEST(DrawPoisson, JointFrequencyMatchesProduct)
{
    Rng rng = htgd::make_rng(3);
    const InclusionProbabilities p({0.2, 0.8});
    constexpr double draws = 100000;
    double both = 0.0;
    for (int k = 0; k < draws; ++k)
        both += htgd::draw_poisson(p, rng).realized_size() == 2 ? 1.0 : 0.0;
    const double se = std::sqrt(0.16 * 0.84 / draws);
    EXPECT_NEAR(both / draws, 0.16, 3.0 * se);
}

TEST(DrawPoisson, MarginalFrequenciesWithinFourSigma)
{
    Rng rng = htgd::make_rng(4);
    const std::vector<double> probs{0.05, 0.3, 0.5, 0.77, 0.99, 1.0};
    const InclusionProbabilities p(probs);
    constexpr double draws = 100000;
    std::vector<double> freq(probs.size(), 0.0);
    double size_sum = 0.0;
    for (int k = 0; k < draws; ++k) {
        const auto s = htgd::draw_poisson(p, rng);
        for (std::size_t i : s.indices)
            freq[i] += 1.0;
        size_sum += static_cast<double>(s.realized_size());
    }
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double tol = 4.0 * std::sqrt(probs[i] * (1.0 - probs[i]) / draws);
        EXPECT_LE(std::abs(freq[i] / draws - probs[i]), tol) << "unit " << i;
    }
    EXPECT_NEAR(size_sum / draws, p.expected_size(), 0.01);
}

TEST(DrawRejective, EqualProbabilitiesGiveUniformSubsets)
{
    Rng rng = htgd::make_rng(5);
    const InclusionProbabilities p(std::vector<double>(4, 0.5));
    constexpr std::size_t draws = 100000;
    std::map<std::size_t, double> counts;
    for (std::size_t k = 0; k < draws; ++k) {
        const auto s = htgd::draw_rejective(p, 2, rng);
        ASSERT_EQ(s.realized_size(), 2U);
        counts[mask_of(s)] += 1.0;
    }
    ASSERT_EQ(counts.size(), 6U);
    const double expected = draws / 6.0;
    double chi2 = 0.0;
    for (const auto& [mask, c] : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    // 99.9% quantile of chi-square with 5 degrees of freedom.
    EXPECT_LT(chi2, 20.52);
}

TEST(DrawRejective, FullSizeSelectsEveryone)
{
    Rng rng = htgd::make_rng(6);
    const InclusionProbabilities p({0.1, 0.4, 0.9});
    EXPECT_EQ(htgd::draw_rejective(p, 3, rng).realized_size(), 3U);
}

TEST(DrawRejective, SizeOneMatchesEnumeration)
{
    const std::vector<double> probs{0.9, 0.1, 0.5};
    const auto outcomes = htgd::testing::conditional_outcomes(probs, 1);
    std::vector<double> exact(3, 0.0);
    for (const auto& o : outcomes)
        for (std::size_t i = 0; i < 3; ++i)
            if (o.eps[i])
                exact[i] += o.prob;
    const double z = 0.9 * 0.9 * 0.5 + 0.1 * 0.1 * 0.5 + 0.5 * 0.1 * 0.9;
    EXPECT_NEAR(exact[0], 0.9 * 0.9 * 0.5 / z, 1e-15);

    Rng rng = htgd::make_rng(7);
    const InclusionProbabilities p(probs);
    constexpr double draws = 100000;
    std::vector<double> freq(3, 0.0);
    for (int k = 0; k < draws; ++k) {
        const auto s = htgd::draw_rejective(p, 1, rng);
        ASSERT_EQ(s.realized_size(), 1U);
        freq[s.indices[0]] += 1.0;
    }
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(freq[i] / draws, exact[i], 4.0 * std::sqrt(exact[i] * (1 - exact[i]) / draws));
}

TEST(DrawRejective, RetryCapRaises)
{
    Rng rng = htgd::make_rng(8);
    const InclusionProbabilities p(std::vector<double>(30, 0.01));
    try {
        htgd::draw_rejective(p, 30, rng, 1000);
        FAIL() << "expected an error";
    } catch (const htgd::NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("rejective draw failed"), std::string::npos);
    }
    EXPECT_THROW(htgd::draw_rejective(p, 0, rng), htgd::InvalidArgument);
    EXPECT_THROW(htgd::draw_rejective(p, 31, rng), htgd::InvalidArgument);
}

TEST(RejectiveInclusion, MatchesEnumeration)
{
    Rng rng = htgd::make_rng(9);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n_units = 2 + rng() % 9;
        const std::size_t n = 1 + rng() % (n_units - 1);
        const auto probs = htgd::testing::random_probs(n_units, rng);
        std::vector<double> exact(n_units, 0.0);
        for (const auto& o : htgd::testing::conditional_outcomes(probs, n))
            for (std::size_t i = 0; i < n_units; ++i)
                if (o.eps[i])
                    exact[i] += o.prob;
        const auto pi = htgd::rejective_inclusion_probabilities(InclusionProbabilities(probs), n);
        const auto joint = htgd::rejective_second_order(InclusionProbabilities(probs), n);
        for (std::size_t i = 0; i < n_units; ++i) {
            EXPECT_NEAR(pi[i], exact[i], 1e-12);
            EXPECT_NEAR(joint(i, i), exact[i], 1e-12);
        }
        EXPECT_NEAR(pi.expected_size(), static_cast<double>(n), 1e-12);
    }
}

TEST(DrawUniform, SingleUnitFrequencies)
{
    Rng rng = htgd::make_rng(10);
    constexpr double draws = 100000;
    std::vector<double> freq(5, 0.0);
    for (int k = 0; k < draws; ++k) {
        const auto s = htgd::draw_uniform_without_replacement(1, 5, rng);
        ASSERT_EQ(s.realized_size(), 1U);
        freq[s.indices[0]] += 1.0;
    }
    for (double f : freq)
        EXPECT_NEAR(f / draws, 0.2, 4.0 * std::sqrt(0.16 / draws));
}

TEST(DrawUniform, PairFrequencies)
{
    Rng rng = htgd::make_rng(11);
    constexpr double draws = 100000;
    std::map<std::size_t, double> counts;
    for (int k = 0; k < draws; ++k) {
        const auto s = htgd::draw_uniform_without_replacement(2, 4, rng);
        ASSERT_EQ(s.realized_size(), 2U);
        counts[mask_of(s)] += 1.0;
    }
    ASSERT_EQ(counts.size(), 6U);
    for (const auto& [mask, c] : counts)
        EXPECT_NEAR(c / draws, 1.0 / 6.0, 4.0 * std::sqrt((1.0 / 6.0) * (5.0 / 6.0) / draws));
}

TEST(DrawUniform, FullPopulationAndErrors)
{
    Rng rng = htgd::make_rng(12);
    EXPECT_EQ(htgd::draw_uniform_without_replacement(6, 6, rng).realized_size(), 6U);
    EXPECT_THROW(htgd::draw_uniform_without_replacement(7, 6, rng), htgd::InvalidArgument);
    EXPECT_THROW(htgd::draw_uniform_without_replacement(0, 6, rng), htgd::InvalidArgument);
}

TEST(PoissonSecondOrder, ClosedForms)
{
    const auto a = htgd::poisson_second_order(InclusionProbabilities({0.5, 0.5}));
    EXPECT_DOUBLE_EQ(a(0, 1), 0.25);
    const auto b = htgd::poisson_second_order(InclusionProbabilities({1.0, 0.3}));
    EXPECT_DOUBLE_EQ(b(0, 1), 0.3);
}

TEST(PoissonSecondOrder, MatchesEnumeratedJointLaw)
{
    const std::vector<double> probs{0.2, 0.8, 0.4};
    Eigen::Matrix3d exact = Eigen::Matrix3d::Zero();
    htgd::testing::for_each_outcome(probs, [&](const htgd::testing::Outcome& o) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (o.eps[i] && o.eps[j])
                    exact(i, j) += o.prob;
    });
    const auto joint = htgd::poisson_second_order(InclusionProbabilities(probs));
    EXPECT_NEAR(joint(0, 1), 0.16, 1e-15);
    EXPECT_NEAR(joint(0, 2), 0.08, 1e-15);
    EXPECT_NEAR(joint(1, 2), 0.32, 1e-15);
    EXPECT_LT((joint.matrix() - exact).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(joint.matrix().isApprox(joint.matrix().transpose()));
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_DOUBLE_EQ(joint(i, i), probs[i]);
}

TEST(SurveySample, IndicesAndCensus)
{
    const auto s = SurveySample::from_indices(5, {3, 1});
    EXPECT_EQ(s.indices, (std::vector<std::size_t>{1, 3}));
    EXPECT_TRUE(s.contains(3));
    EXPECT_FALSE(s.contains(0));
    EXPECT_EQ(SurveySample::census(4).realized_size(), 4U);
    EXPECT_THROW(SurveySample::from_indices(2, {2}), htgd::InvalidArgument);
}

TEST(Rng, SeedDerivationIsDeterministicAndOrderSensitive)
{
    EXPECT_EQ(htgd::derive_seed(1, {2, 3}), htgd::derive_seed(1, {2, 3}));
    EXPECT_NE(htgd::derive_seed(1, {2, 3}), htgd::derive_seed(1, {3, 2}));
    EXPECT_NE(htgd::replication_seed(1, 0, "htgd"), htgd::replication_seed(1, 0, "sgd"));
    EXPECT_NE(htgd::replication_seed(1, 0, "htgd"), htgd::replication_seed(1, 1, "htgd"));
}

TEST(Rng, NormalDrawsHaveUnitMoments)
{
    Rng rng = htgd::make_rng(13);
    constexpr int draws = 200000;
    double s1 = 0.0;
    double s2 = 0.0;
    for (int k = 0; k < draws; ++k) {
        const double z = htgd::standard_normal(rng);
        s1 += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s1 / draws, 0.0, 4.0 / std::sqrt(draws));
    EXPECT_NEAR(s2 / draws, 1.0, 4.0 * std::sqrt(2.0 / draws));
}

} // namespace
