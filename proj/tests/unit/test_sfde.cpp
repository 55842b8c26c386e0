#include <cmath>

#include <gtest/gtest.h>

#include "fbsfde/presets.hpp"
#include "fbsfde/sfde.hpp"
#include "test_support.hpp"

namespace fbsfde {
namespace {

using testing::affine_term;
using testing::scalar_coefficients;

TEST(MemoryIntegral, LeftRiemannOverRange)
{
    const TimeGrid g = build_time_grid(1.0, 1.0, 0.0, 0.25);
    ProcessEnsemble x(g, 0, g.idxT(), 2, 1);
    for (std::size_t i = 0; i <= g.idxT(); ++i) {
        x(i, 0, 0) = 1.0;
        x(i, 1, 0) = static_cast<double>(i);
    }
    EXPECT_DOUBLE_EQ(memory_integral(x, 0, 0, 4)(0), 1.0);
    EXPECT_DOUBLE_EQ(memory_integral(x, 1, 0, 4)(0), 1.5);
    EXPECT_EQ(memory_integral(x, 1, 3, 3)(0), 0.0);
    EXPECT_FBSFDE_ERROR(memory_integral(x, 0, 4, 3), ErrorCode::index_order);
}

TEST(MemoryIntegral, RejectsUncoveredRange)
{
    const TimeGrid g = build_time_grid(1.0, 1.0, 0.0, 0.25);
    const ProcessEnsemble x(g, 4, g.idxT(), 1, 1, 1.0);
    EXPECT_FBSFDE_ERROR(memory_integral(x, 0, 2, 6), ErrorCode::range_mismatch);
}

TEST(SimulateSfde, ZeroCoefficientsKeepTheInitialValue)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 0.125);
    const SfdeCoefficients c = scalar_coefficients({}, {}, 0.0);
    const BrownianEnsemble b = sample_brownian(g, 20, 1, 1);
    const ProcessEnsemble x = simulate_sfde(c, InitialSegment::constant(g, Eigen::VectorXd::Constant(1, 2.0)), b);
    EXPECT_EQ(x.first(), 0u);
    EXPECT_EQ(x.last(), g.idxT());
    for (double v : x.data()) EXPECT_EQ(v, 2.0);
}

TEST(SimulateSfde, UnitDiffusionReproducesTheBrownianPath)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.0625);
    const SfdeCoefficients c = scalar_coefficients({}, {affine_term(MemoryKind::instantaneous, 0.0, 1.0)}, 0.0);
    const BrownianEnsemble b = sample_brownian(g, 50, 1, 9);
    const ProcessEnsemble x = simulate_sfde(c, InitialSegment::constant(g, Eigen::VectorXd::Zero(1)), b);
    EXPECT_LT(testing::max_abs_difference(x, b.values(), g.idx0(), g.idxT()), 1e-14);
}

TEST(SimulateSfde, MemorySegmentIsCopiedExactly)
{
    const TimeGrid g = build_time_grid(1.0, 1.0, 0.0, 0.125);
    const presets::SfdeModel m = presets::make_sfde("delay_noise", g);
    const InitialSegment rho =
        InitialSegment::from_function(g, 1, [](double t) { return Eigen::VectorXd::Constant(1, std::sin(3.0 * t) + 0.1); });
    const ProcessEnsemble x = simulate_sfde(m.coeffs, rho, sample_brownian(g, 10, 1, 3));
    for (std::size_t i = 0; i <= g.idx0(); ++i) {
        for (std::size_t p = 0; p < x.n_paths(); ++p) EXPECT_EQ(x(i, p, 0), rho.values()(static_cast<Eigen::Index>(i), 0));
    }
}

TEST(SimulateSfde, IsAdapted)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 0.0625);
    const presets::SfdeModel m = presets::make_sfde("delay_noise", g);
    const BrownianEnsemble base = sample_brownian(g, 30, 1, 17);
    const std::size_t cut = g.idx0() + 7;
    ProcessEnsemble inc = base.increments();
    for (std::size_t i = cut; i <= inc.last(); ++i) {
        for (std::size_t p = 0; p < inc.n_paths(); ++p) inc(i, p, 0) = -3.0 * inc(i, p, 0) + 0.01;
    }
    const BrownianEnsemble altered = BrownianEnsemble::from_increments(g, std::move(inc));
    const ProcessEnsemble x = simulate_sfde(m.coeffs, m.rho, base);
    const ProcessEnsemble y = simulate_sfde(m.coeffs, m.rho, altered);
    EXPECT_EQ(testing::max_abs_difference(x, y, 0, cut), 0.0);
    EXPECT_GT(testing::max_abs_difference(x, y, cut + 1, cut + 1), 0.0);
}

double cosh_error(double h)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, h);
    const presets::SfdeModel m = presets::make_sfde("cosh", g);
    const ProcessEnsemble x = simulate_sfde(m.coeffs, m.rho, sample_brownian(g, 1, 1, 0));
    double worst = 0.0;
    for (std::size_t i = g.idx0(); i <= g.idxT(); ++i) worst = std::max(worst, std::abs(x(i, 0, 0) - std::cosh(g.time(i))));
    return worst;
}

TEST(SimulateSfde, EulerIsFirstOrderOnTheCoshProblem)
{
    const double e1 = cosh_error(1.0 / 16.0);
    const double e2 = cosh_error(1.0 / 32.0);
    const double e3 = cosh_error(1.0 / 64.0);
    EXPECT_NEAR(e1 / e2, 2.0, 0.1);
    EXPECT_NEAR(e2 / e3, 2.0, 0.1);
}

TEST(PicardMapDiagnostic, StateFreeCoefficientsGiveZeroRatio)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.125);
    const SfdeCoefficients c = scalar_coefficients({}, {affine_term(MemoryKind::instantaneous, 0.0, 0.4)}, 0.0);
    const InitialSegment rho = InitialSegment::constant(g, Eigen::VectorXd::Zero(1));
    const BrownianEnsemble b = sample_brownian(g, 10, 1, 2);
    const ProcessEnsemble x(g, 0, g.idxT(), 10, 1);
    ProcessEnsemble x_prime = x;
    for (std::size_t i = 1; i <= g.idxT(); ++i) x_prime(i, 3, 0) = 1.0;
    EXPECT_EQ(picard_map_diagnostic(c, rho, b, x, x_prime, 0.0).ratio, 0.0);
    EXPECT_FBSFDE_ERROR(picard_map_diagnostic(c, rho, b, x, x, 0.0), ErrorCode::zero_denominator);
}

TEST(PicardMapDiagnostic, ContractsAtThetaStar)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 0.03125);
    const presets::SfdeModel m = presets::make_sfde("delay_noise", g);
    const BrownianEnsemble b = sample_brownian(g, 200, 1, 21);
    const ProcessEnsemble x = simulate_sfde(m.coeffs, m.rho, b);
    ProcessEnsemble x_prime = x;
    for (std::size_t i = g.idx0() + 1; i <= g.idxT(); ++i) {
        for (std::size_t p = 0; p < x.n_paths(); ++p) x_prime(i, p, 0) += std::sin(static_cast<double>(i * 7 + p));
    }
    const ContractData d = picard_map_diagnostic(m.coeffs, m.rho, b, x, x_prime, theta_star(m.coeffs.lipschitz));
    EXPECT_GT(d.ratio, 0.0);
    EXPECT_LE(d.ratio, 0.75);
}

TEST(PicardMapDiagnostic, RejectsInputsThatLeaveRho)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 0.125);
    const presets::SfdeModel m = presets::make_sfde("delay_noise", g);
    const BrownianEnsemble b = sample_brownian(g, 4, 1, 2);
    const ProcessEnsemble x = simulate_sfde(m.coeffs, m.rho, b);
    ProcessEnsemble bad = x;
    bad(1, 0, 0) += 1.0;
    EXPECT_FBSFDE_ERROR(picard_map_diagnostic(m.coeffs, m.rho, b, x, bad, 1.0), ErrorCode::invalid_argument);
}

TEST(MemoryFunctionalSpec, DeclaredLipschitzMustDominateSlope)
{
    EXPECT_FBSFDE_ERROR(MemoryFunctionalSpec(MemoryKind::instantaneous, AffineMap::linear(testing::one(2.0)), 1.0),
                        ErrorCode::invalid_argument);
    EXPECT_FBSFDE_ERROR(MemoryFunctionalSpec(MemoryKind::instantaneous, AffineMap::linear(testing::one(0.0)), -1.0),
                        ErrorCode::negative_lipschitz);
}

}  // namespace
}  // namespace fbsfde
