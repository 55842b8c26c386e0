#include <cmath>

#include <gtest/gtest.h>

#include "fbsfde/gabsde.hpp"
#include "fbsfde/oracles.hpp"
#include "fbsfde/presets.hpp"
#include "test_support.hpp"

namespace fbsfde {
namespace {

using testing::one;

GeneratorSpec scalar_generator(GeneratorKind kind, double gy, double gz, double g0)
{
    GeneratorSpec g = GeneratorSpec::zero(1, 1);
    g.kind = kind;
    g.gy = one(gy);
    g.gz = one(gz);
    g.g0 = one(g0);
    g.lipschitz = std::abs(gy) + std::abs(gz);
    return g;
}

TerminalExtension terminal_of(std::function<double(double)> xi)
{
    return TerminalExtension::path_map(
        1, 1, [xi](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, xi(b(0))); },
        [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); });
}

TEST(BackwardStep, ConstantBasisAveragesAcrossPaths)
{
    const double h = 0.25;
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, h);
    const BrownianEnsemble b = sample_brownian(g, 10, 1, 1);
    const auto projector = PolynomialEngine(BasisConfig{}).prepare(FeatureSource::for_brownian(b), g.idx0());
    RowMatrix y_next(10, 1);
    RowMatrix increment(10, 1);
    for (Eigen::Index p = 0; p < 10; ++p) {
        y_next(p, 0) = p % 2 == 0 ? 1.0 : -1.0;
        increment(p, 0) = p % 2 == 0 ? 0.5 : -0.5;
    }
    const RowMatrix f = RowMatrix::Constant(10, 1, 2.0);
    const BackwardStep s = backward_step(y_next, f, ConstSliceMap(increment.data(), 10, 1), h, *projector);
    EXPECT_NEAR(s.y(3, 0), 0.5, 1e-8);
    EXPECT_NEAR(s.z(3, 0), 2.0, 1e-8);
    EXPECT_NEAR(s.ahead(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(s.coefficients(0, 0) - s.ahead(0, 0), 0.5, 1e-8);
    EXPECT_NEAR(s.coefficients(0, 1), s.ahead(0, 1), 0.0);
    EXPECT_NEAR(s.residual, 1.0, 1e-8);
}

TEST(BackwardStep, RejectsMisalignedInputs)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const BrownianEnsemble b = sample_brownian(g, 10, 1, 1);
    const auto projector = PolynomialEngine(BasisConfig{}).prepare(FeatureSource::for_brownian(b), g.idx0());
    const RowMatrix increment = RowMatrix::Zero(10, 1);
    EXPECT_FBSFDE_ERROR(backward_step(RowMatrix::Zero(10, 1), RowMatrix::Zero(9, 1), ConstSliceMap(increment.data(), 10, 1),
                                      0.25, *projector),
                        ErrorCode::dimension_mismatch);
}

TEST(SolveGabsde, TerminalExtensionIsPinned)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.5, 0.125);
    const presets::GabsdeModel model = presets::make_gabsde("martingale", g);
    const BrownianEnsemble b = sample_brownian(g, 200, 1, 4);
    const BackwardSolution s = solve_gabsde(model.generator, model.terminal, b, PolynomialEngine(BasisConfig{}));
    for (std::size_t i = g.idxT(); i <= g.last(); ++i) {
        for (std::size_t p = 0; p < 200; ++p) {
            EXPECT_EQ(s.y(i, p, 0), b.values()(g.idxT(), p, 0));
            EXPECT_EQ(s.z(i, p, 0), 1.0);
        }
    }
    EXPECT_EQ(s.residuals.size(), g.horizon_steps());
}

TEST(SolveGabsde, MartingaleIsExactOnTheTree)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.25, 0.125);
    const BinomialDriver driver(g);
    const presets::GabsdeModel model = presets::make_gabsde("martingale", g);
    const BrownianEnsemble b = driver.ensemble();
    const BackwardSolution s = solve_gabsde(model.generator, model.terminal, b, PartitionEngine{});
    EXPECT_LT(testing::max_abs_difference(s.y, b.values(), g.idx0(), g.idxT()), 1e-13);
    for (std::size_t i = g.idx0(); i < g.idxT(); ++i) EXPECT_NEAR(s.z.slice(i).maxCoeff(), 1.0, 1e-12);
}

class TreeAgreement : public ::testing::TestWithParam<GeneratorKind> {};

TEST_P(TreeAgreement, PartitionEngineMatchesBackwardInduction)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.375, 0.125);
    const BinomialDriver driver(g);
    const GeneratorSpec gen = scalar_generator(GetParam(), 0.5, 0.25, 0.1);
    const TerminalExtension terminal = terminal_of([](double x) { return std::sin(x); });
    const BackwardSolution s = solve_gabsde(gen, terminal, driver.ensemble(), PartitionEngine{});
    const TreeSolution tree = binomial_exact_backward(driver, gen, terminal);
    EXPECT_LT(testing::max_abs_difference(s.y, tree.expand_y(driver), g.idx0(), g.idxT() - 1), 1e-12);
    EXPECT_LT(testing::max_abs_difference(s.z, tree.expand_z(driver), g.idx0(), g.idxT() - 1), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, TreeAgreement,
                         ::testing::Values(GeneratorKind::instantaneous, GeneratorKind::f1, GeneratorKind::f2,
                                           GeneratorKind::affine_adjoint));

TEST(SolveGabsde, IsLinearInTheTerminalCondition)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.25, 0.0625);
    const BrownianEnsemble b = sample_brownian(g, 500, 1, 12);
    const GeneratorSpec gen = scalar_generator(GeneratorKind::f2, 0.5, 0.25, 0.0);
    const PolynomialEngine engine(BasisConfig{});
    const auto first = solve_gabsde(gen, terminal_of([](double x) { return std::sin(x); }), b, engine);
    const auto second = solve_gabsde(gen, terminal_of([](double x) { return x * x; }), b, engine);
    const auto sum = solve_gabsde(gen, terminal_of([](double x) { return std::sin(x) + x * x; }), b, engine);
    double worst = 0.0;
    for (std::size_t i = g.idx0(); i <= g.idxT(); ++i) {
        worst = std::max(worst, (sum.y.slice(i) - first.y.slice(i) - second.y.slice(i)).cwiseAbs().maxCoeff());
        worst = std::max(worst, (sum.z.slice(i) - first.z.slice(i) - second.z.slice(i)).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(SolveGabsde, AdjointTailsFollowTheShiftedRiemannSum)
{
    // Deterministic: Y = 1 on [T, T+K] and the tail of gy y skips the next node.
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const BinomialDriver driver(g);
    const GeneratorSpec gen = scalar_generator(GeneratorKind::affine_adjoint, 1.0, 0.0, 0.0);
    const TerminalExtension terminal = TerminalExtension::constant(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1));
    const BackwardSolution s = solve_gabsde(gen, terminal, driver.ensemble(), PartitionEngine{});
    EXPECT_NEAR(s.y(g.idx0() + 3, 0, 0), 1.0, 1e-15);
    EXPECT_NEAR(s.y(g.idx0() + 2, 0, 0), 1.0, 1e-15);
    EXPECT_NEAR(s.y(g.idx0() + 1, 0, 0), 1.0625, 1e-15);
    EXPECT_NEAR(s.y(g.idx0(), 0, 0), 1.1875, 1e-15);
    EXPECT_NEAR(binomial_exact_backward(driver, gen, terminal).y[0](0, 0), 1.1875, 1e-15);
}

TEST(SolveGabsde, AnticipatedF1ConvergesToTheOde)
{
    const double reference = ode_anticipated_backward(1.0, 0.5, 1e-3).at(0.0)(0);
    auto y0 = [](double h) {
        const TimeGrid g = build_time_grid(0.0, 1.0, 0.5, h);
        const presets::GabsdeModel m = presets::make_gabsde("anticipated_f1", g);
        BasisConfig basis;
        basis.degree = 1;
        return solve_gabsde(m.generator, m.terminal, sample_brownian(g, 40, 1, 3), PolynomialEngine(basis)).y(g.idx0(), 0, 0);
    };
    const double e1 = std::abs(y0(1.0 / 32.0) - reference);
    const double e2 = std::abs(y0(1.0 / 64.0) - reference);
    EXPECT_LT(e2, 0.02);
    EXPECT_NEAR(e1 / e2, 2.0, 0.1);
}

TEST(SolveGabsde, ExplicitStepNeedsSmallHL)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const GeneratorSpec gen = scalar_generator(GeneratorKind::instantaneous, 5.0, 0.0, 0.0);
    const TerminalExtension terminal = TerminalExtension::constant(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1));
    EXPECT_FBSFDE_ERROR(solve_gabsde(gen, terminal, sample_brownian(g, 40, 1, 0), PartitionEngine{}),
                        ErrorCode::stability_violation);
}

TEST(EvalAnticipatedGenerator, NeedsTheFuture)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.25, 0.25);
    const BrownianEnsemble b = sample_brownian(g, 40, 1, 0);
    const auto projector = PolynomialEngine(BasisConfig{}).prepare(FeatureSource::for_brownian(b), g.idx0() + 1);
    const GeneratorSpec gen = scalar_generator(GeneratorKind::f1, 1.0, 0.0, 0.0);
    const ProcessEnsemble partial(g, g.idx0() + 2, g.last() - 1, 40, 1);
    EXPECT_FBSFDE_ERROR(eval_anticipated_generator(gen, g.idx0() + 1, partial, partial, *projector),
                        ErrorCode::missing_future);
    const ProcessEnsemble ones(g, g.idx0() + 2, g.last(), 40, 1, 1.0);
    const RowMatrix f = eval_anticipated_generator(gen, g.idx0() + 1, ones, ones, *projector);
    EXPECT_NEAR(f(0, 0), 1.0, 1e-8);
}

}  // namespace
}  // namespace fbsfde
