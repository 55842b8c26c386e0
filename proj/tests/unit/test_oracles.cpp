#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fbsfde/oracles.hpp"
#include "fbsfde/presets.hpp"
#include "test_support.hpp"

namespace fbsfde {
namespace {

using testing::affine_term;
using testing::scalar_coefficients;

TEST(Fixtures, MatchTheFrozenFile)
{
    std::ifstream in(FBSFDE_FIXTURE_FILE);
    ASSERT_TRUE(in.good()) << FBSFDE_FIXTURE_FILE;
    std::stringstream frozen;
    frozen << in.rdbuf();
    EXPECT_EQ(format_fixtures(reference_fixtures()), frozen.str());
}

TEST(Fixtures, AgreeWithClosedForms)
{
    const std::vector<FixtureRecord> records = reference_fixtures();
    auto value = [&](const std::string& name) {
        for (const auto& r : records) {
            if (r.name == name) return r.value;
        }
        ADD_FAILURE() << "missing " << name;
        return 0.0;
    };
    EXPECT_NEAR(value("sfde.cosh.x1"), std::cosh(1.0), 1e-12);
    EXPECT_NEAR(value("sfde.decay.x1"), std::exp(-1.0), 1e-12);
    EXPECT_NEAR(value("gabsde.anticipated.y0"), std::cosh(1.0) + 0.5 * std::sinh(1.0), 1e-12);
    EXPECT_EQ(value("gabsde.martingale_tree.y0"), 0.0);
    EXPECT_EQ(value("gabsde.martingale_tree.z0"), 1.0);
    EXPECT_NEAR(value("lq.memoryless.P0"), std::tanh(1.0), 1e-10);
    EXPECT_NEAR(value("lq.memoryless.cost"), 0.5 * std::tanh(1.0), 1e-10);
}

TEST(Fnv1a, KnownVectors)
{
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

double rk4_error(double step)
{
    const SfdeCoefficients c = scalar_coefficients({affine_term(MemoryKind::integral_of_state, 1.0, 0.0)}, {}, 1.0);
    const DeterministicPath path = integro_ode_rk4(c, [](double) { return Eigen::VectorXd::Ones(1); }, 0.0, 1.0, step);
    return std::abs(path.values.back()(0) - std::cosh(1.0));
}

TEST(IntegroOdeRk4, IsFourthOrder)
{
    const double ratio = rk4_error(0.1) / rk4_error(0.05);
    EXPECT_GT(ratio, 14.0);
    EXPECT_LT(ratio, 18.0);
}

TEST(IntegroOdeRk4, HandlesAMemorySegment)
{
    // x' = int_{-1}^t x with x = 1 on [-1, 0]: x'' = x, x(0) = 1, x'(0) = 1.
    const SfdeCoefficients c = scalar_coefficients({affine_term(MemoryKind::integral_of_state, 1.0, 0.0)}, {}, 1.0);
    const DeterministicPath path = integro_ode_rk4(c, [](double) { return Eigen::VectorXd::Ones(1); }, 1.0, 1.0, 1e-3);
    EXPECT_NEAR(path.at(1.0)(0), std::exp(1.0), 1e-10);
    EXPECT_NEAR(path.at(0.5)(0), std::exp(0.5), 1e-10);
}

TEST(IntegroOdeRk4, RejectsUnsupportedKernels)
{
    const auto rho = [](double) { return Eigen::VectorXd::Ones(1); };
    const SfdeCoefficients windowed =
        scalar_coefficients({affine_term(MemoryKind::windowed_integral, 1.0, 0.0)}, {}, 1.0);
    EXPECT_FBSFDE_ERROR(integro_ode_rk4(windowed, rho, 0.5, 1.0, 1e-2), ErrorCode::unsupported_kernel);
    const SfdeCoefficients noisy = scalar_coefficients({}, {affine_term(MemoryKind::instantaneous, 0.0, 1.0)}, 0.0);
    EXPECT_FBSFDE_ERROR(integro_ode_rk4(noisy, rho, 0.0, 1.0, 1e-2), ErrorCode::unsupported_kernel);
}

TEST(OdeAnticipatedBackward, MatchesTheClosedForm)
{
    const DeterministicPath path = ode_anticipated_backward(1.0, 0.5, 1e-3);
    for (double t : {0.0, 0.25, 0.7, 1.0}) EXPECT_NEAR(path.at(t)(0), std::cosh(1.0 - t) + 0.5 * std::sinh(1.0 - t), 1e-9);
}

TEST(BinomialDriver, EnumeratesEveryPath)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.5, 0.25);
    const BinomialDriver driver(g);
    EXPECT_EQ(driver.depth(), 4u);
    EXPECT_EQ(driver.n_paths(), 16u);
    const BrownianEnsemble b = driver.ensemble();
    EXPECT_DOUBLE_EQ(b.values()(g.idxT(), 15, 0), 2.0);
    EXPECT_DOUBLE_EQ(b.values()(g.idxT(), 0, 0), -2.0);
    EXPECT_EQ(b.values()(g.last(), 6, 0), b.values()(g.idxT(), 6, 0));
    EXPECT_EQ(driver.node_of(13, 2), 3u);
    EXPECT_FBSFDE_ERROR(BinomialDriver(build_time_grid(0.0, 1.0, 0.0, 1.0 / 32.0)), ErrorCode::depth_exceeded);
}

TEST(BinomialExactBackward, RejectsStateCoupledGenerators)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    GeneratorSpec gen = GeneratorSpec::zero(1, 1);
    gen.n = 1;
    gen.gx = testing::one(1.0);
    gen.lipschitz = 1.0;
    EXPECT_FBSFDE_ERROR(
        binomial_exact_backward(BinomialDriver(g), gen,
                                TerminalExtension::constant(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1))),
        ErrorCode::oracle_inapplicable);
}

}  // namespace
}  // namespace fbsfde
