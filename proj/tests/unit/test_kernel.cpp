#include <cmath>

#include <gtest/gtest.h>

#include "fbsfde/kernel.hpp"
#include "fbsfde/parallel.hpp"
#include "test_support.hpp"

namespace fbsfde {
namespace {

TEST(TimeGrid, DegenerateHorizons)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.5);
    EXPECT_EQ(g.size(), 3u);
    EXPECT_EQ(g.idx0(), 0u);
    EXPECT_EQ(g.idxT(), 2u);
    EXPECT_EQ(g.nodes(), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(TimeGrid, AllThreeSegments)
{
    const TimeGrid g = build_time_grid(1.0, 1.0, 1.0, 0.5);
    EXPECT_EQ(g.size(), 7u);
    EXPECT_EQ(g.idx0(), 2u);
    EXPECT_EQ(g.idxT(), 4u);
    EXPECT_DOUBLE_EQ(g.time(0), -1.0);
    EXPECT_DOUBLE_EQ(g.time(g.last()), 2.0);
}

TEST(TimeGrid, RejectsNonDivisibleHorizon)
{
    EXPECT_FBSFDE_ERROR(build_time_grid(0.0, 1.0, 0.3, 0.2), ErrorCode::non_divisible_horizon);
    EXPECT_FBSFDE_ERROR(build_time_grid(0.0, 0.0, 0.0, 0.1), ErrorCode::invalid_argument);
}

TEST(TimeGrid, NodesAreEvenlySpacedAndHitZeroAndT)
{
    const TimeGrid g = build_time_grid(0.3, 1.7, 0.4, 0.1);
    EXPECT_EQ(g.size(), 25u);
    EXPECT_EQ(g.time(g.idx0()), 0.0);
    EXPECT_NEAR(g.time(g.idxT()), 1.7, 1e-15);
    const auto nodes = g.nodes();
    for (std::size_t i = 1; i < nodes.size(); ++i) EXPECT_NEAR(nodes[i] - nodes[i - 1], 0.1, 1e-15);
}

TEST(Brownian, VanishesOnMemorySegmentAndAtZero)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.25, 0.125);
    const BrownianEnsemble b = sample_brownian(g, 50, 2, 7);
    for (std::size_t i = 0; i <= g.idx0(); ++i) EXPECT_EQ(b.values().slice(i).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT(b.values().slice(g.idxT()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Brownian, SameSeedIsBitIdentical)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.0625);
    const BrownianEnsemble a = sample_brownian(g, 300, 1, 42);
    const BrownianEnsemble b = sample_brownian(g, 300, 1, 42);
    ASSERT_EQ(a.values().data().size(), b.values().data().size());
    EXPECT_TRUE(std::equal(a.values().data().begin(), a.values().data().end(), b.values().data().begin()));
}

TEST(Brownian, PathDependsOnlyOnSeedAndIndex)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.125);
    const BrownianEnsemble small = sample_brownian(g, 10, 2, 3);
    const BrownianEnsemble large = sample_brownian(g, 25, 2, 3);
    for (std::size_t i = 0; i <= g.last(); ++i) {
        for (std::size_t p = 0; p < 10; ++p) {
            for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(small.values()(i, p, c), large.values()(i, p, c));
        }
    }
}

TEST(Brownian, IndependentOfThreadCount)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.03125);
    const std::size_t before = thread_count();
    set_thread_count(1);
    const BrownianEnsemble a = sample_brownian(g, 4000, 1, 11);
    set_thread_count(4);
    const BrownianEnsemble b = sample_brownian(g, 4000, 1, 11);
    set_thread_count(before);
    EXPECT_TRUE(std::equal(a.values().data().begin(), a.values().data().end(), b.values().data().begin()));
}

TEST(Brownian, IncrementMomentsMatchStep)
{
    const std::size_t n = 100000;
    const double h = 0.1;
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, h);
    const BrownianEnsemble b = sample_brownian(g, n, 1, 2024);
    const double band = 5.0 * std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t i = g.idx0(); i < g.idxT(); ++i) {
        const auto inc = b.increment(i);
        const double mean = inc.mean();
        const double var = (inc.array() - mean).square().sum() / static_cast<double>(n - 1);
        EXPECT_LT(std::abs(mean), 5.0 * std::sqrt(h / static_cast<double>(n)));
        EXPECT_GT(var, h * (1.0 - band));
        EXPECT_LT(var, h * (1.0 + band));
    }
}

TEST(WeightedNorm, ConstantOneHasUnitNorm)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.01);
    const ProcessEnsemble ones(g, 0, g.idxT(), 3, 1, 1.0);
    EXPECT_NEAR(weighted_l2_norm(ones, {0.0, WeightSign::decay, g.idx0(), g.idxT()}), 1.0, 1e-12);
}

TEST(WeightedNorm, DecayWeightMatchesClosedForm)
{
    const double h = 0.001;
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, h);
    const ProcessEnsemble ones(g, 0, g.idxT(), 1, 1, 1.0);
    const double value = weighted_l2_norm(ones, {1.0, WeightSign::decay, g.idx0(), g.idxT()});
    EXPECT_NEAR(value, std::sqrt(1.0 - std::exp(-1.0)), h);
}

TEST(WeightedNorm, ZeroEnsembleAndRangeErrors)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const ProcessEnsemble zero(g, 0, g.idxT(), 2, 2);
    EXPECT_EQ(weighted_l2_norm(zero, {3.0, WeightSign::growth, 0, g.idxT()}), 0.0);
    const ProcessEnsemble part(g, 1, g.idxT(), 2, 2);
    EXPECT_FBSFDE_ERROR(weighted_l2_norm(part, {0.0, WeightSign::decay, 0, g.idxT()}), ErrorCode::range_mismatch);
}

TEST(WeightedNorm, DecayNormIsNonIncreasingInTheta)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.03125);
    const BrownianEnsemble b = sample_brownian(g, 200, 1, 5);
    double previous = std::numeric_limits<double>::infinity();
    for (double theta : {0.0, 0.5, 1.0, 2.0, 5.4641, 17.8}) {
        const double v = weighted_l2_norm(b.values(), {theta, WeightSign::decay, g.idx0(), g.idxT()});
        EXPECT_LE(v, previous);
        previous = v;
    }
}

TEST(ThetaStar, MatchesClosedForm)
{
    EXPECT_EQ(theta_star(0.0), 0.0);
    EXPECT_NEAR(theta_star(1.0), 2.0 + 2.0 * std::sqrt(3.0), 1e-14);
    EXPECT_NEAR(theta_star(2.0), 8.0 + 4.0 * std::sqrt(6.0), 1e-13);
    EXPECT_FBSFDE_ERROR(theta_star(-0.1), ErrorCode::negative_lipschitz);
}

TEST(PrefixIntegral, IsLeftRiemannSum)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    ProcessEnsemble x(g, 0, g.idxT(), 1, 1);
    for (std::size_t i = 0; i <= g.idxT(); ++i) x(i, 0, 0) = g.time(i);
    const ProcessEnsemble s = prefix_integral(x);
    EXPECT_DOUBLE_EQ(s(g.idxT(), 0, 0), 0.375);
    EXPECT_EQ(s(0, 0, 0), 0.0);
}

}  // namespace
}  // namespace fbsfde
