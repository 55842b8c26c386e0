#include <cmath>

#include <gtest/gtest.h>

#include "fbsfde/coupled.hpp"
#include "fbsfde/presets.hpp"
#include "test_support.hpp"

namespace fbsfde {
namespace {

using testing::one;

PointArguments point(const TimeGrid& g, std::size_t i, double x, double y, double z)
{
    PointArguments u;
    u.i = i;
    u.x = Eigen::VectorXd::Constant(1, x);
    u.y = Eigen::VectorXd::Constant(1, y);
    u.z = Eigen::VectorXd::Constant(1, z);
    u.past = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(i + 1), 1, x);
    const auto rows = static_cast<Eigen::Index>(g.last() - i + 1);
    u.future_y = Eigen::MatrixXd::Constant(rows, 1, y);
    u.future_z = Eigen::MatrixXd::Constant(rows, 1, z);
    return u;
}

TEST(AssembleA, CanonicalExample)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g);
    const Eigen::VectorXd a = assemble_A(sys, g, point(g, g.idx0(), 2.0, 1.0, 3.0));
    ASSERT_EQ(a.size(), 3);
    EXPECT_NEAR(a(0), -1.0, 1e-15);
    EXPECT_NEAR(a(1), -0.5, 1e-15);
    EXPECT_NEAR(a(2), -1.3, 1e-15);
}

TEST(AssembleA, RejectsPointsOutsideTheHorizon)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g);
    EXPECT_FBSFDE_ERROR(assemble_A(sys, g, point(g, g.idxT(), 0.0, 0.0, 0.0)), ErrorCode::range_mismatch);
    PointArguments u = point(g, 1, 0.0, 0.0, 0.0);
    u.past.resize(1, 1);
    EXPECT_FBSFDE_ERROR(assemble_A(sys, g, u), ErrorCode::dimension_mismatch);
}

TEST(EpsilonFamily, EndpointsAndBounds)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g, {{"c", {0.7}}, {"s0", {0.1}}});
    const PointArguments u = point(g, 2, 1.5, -0.5, 0.25);
    EXPECT_LT((assemble_A(system_at_epsilon(sys, 1.0), g, u) - assemble_A(sys, g, u)).cwiseAbs().maxCoeff(), 1e-15);
    // At epsilon 0 the map is -(l1 x, l2 y, l2 z) with G = 1.
    const Eigen::VectorXd zero = assemble_A(system_at_epsilon(sys, 0.0), g, u);
    EXPECT_NEAR(zero(0), -0.7 * 1.5, 1e-15);
    EXPECT_NEAR(zero(1), 0.7 * 0.5, 1e-15);
    EXPECT_NEAR(zero(2), -0.7 * 0.25, 1e-15);
    EXPECT_FBSFDE_ERROR(system_at_epsilon(sys, 1.5), ErrorCode::invalid_argument);
}

TEST(MonotoneStructure, RejectsDegenerateConstants)
{
    EXPECT_FBSFDE_ERROR(MonotoneStructure(one(0.0), 1.0, 1.0, 1.0), ErrorCode::invalid_structure);
    EXPECT_FBSFDE_ERROR(MonotoneStructure(one(1.0), 0.0, 0.0, 1.0), ErrorCode::invalid_structure);
    EXPECT_FBSFDE_ERROR(MonotoneStructure(one(1.0), 1.0, 0.0, 0.0), ErrorCode::invalid_structure);
    EXPECT_FBSFDE_ERROR(MonotoneStructure(one(1.0), -1.0, 1.0, 1.0), ErrorCode::invalid_structure);
    EXPECT_FBSFDE_ERROR(MonotoneStructure(Eigen::MatrixXd::Ones(2, 1), 0.0, 1.0, 1.0), ErrorCode::invalid_structure);
}

TEST(CheckMonotonicity, CanonicalPresetHoldsWithEquality)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 0.125);
    const MonotonicityReport r =
        check_monotonicity(presets::make_fbsfde("canonical_monotone", g), g, SamplerConfig{}, 200);
    EXPECT_EQ(r.status, MonotonicityStatus::pointwise_satisfied);
    EXPECT_LE(std::abs(r.worst_margin), 1e-12);
    EXPECT_FALSE(r.witness.has_value());
}

TEST(CheckMonotonicity, FlippedSignIsViolatedWithAWitness)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.125);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g, {{"s", {-0.5}}});
    const MonotonicityReport r = check_monotonicity(sys, g, SamplerConfig{}, 50);
    ASSERT_EQ(r.status, MonotonicityStatus::violated);
    EXPECT_LT(r.worst_margin, 0.0);
    ASSERT_TRUE(r.witness.has_value());
    const auto& [a, b] = *r.witness;
    const Eigen::VectorXd dA = assemble_A(sys, g, a) - assemble_A(sys, g, b);
    Eigen::VectorXd du(3);
    du << a.x - b.x, a.y - b.y, a.z - b.z;
    const double bound = -0.5 * (a.x - b.x).squaredNorm() - 0.5 * ((a.y - b.y).squaredNorm() + (a.z - b.z).squaredNorm());
    EXPECT_GT(dA.dot(du), bound);
}

TEST(CheckMonotonicity, IsDeterministicInTheSeed)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.125);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g, {{"s", {-0.5}}});
    EXPECT_EQ(check_monotonicity(sys, g, {3, 1.0}, 40).worst_margin, check_monotonicity(sys, g, {3, 1.0}, 40).worst_margin);
}

TEST(SolvePicard, DecoupledSystemConvergesInTwoIterations)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.0625);
    const FbsfdeSystem sys = presets::make_fbsfde("decoupled", g);
    BasisConfig basis;
    basis.degree = 2;
    basis.features = {FeatureKind::state, FeatureKind::memory};
    const FbsfdeSolution s = solve_picard(sys, sample_brownian(g, 500, 1, 5), PolynomialEngine(basis));
    EXPECT_TRUE(s.converged);
    EXPECT_EQ(s.iterations, 2u);
    EXPECT_EQ(s.history.back(), 0.0);
}

TEST(SolvePicard, BrownianIdentityRecoversTheDriver)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.0625);
    const FbsfdeSystem sys = presets::make_fbsfde("brownian_identity", g);
    const BrownianEnsemble b = sample_brownian(g, 2000, 1, 6);
    BasisConfig basis;
    basis.features = {FeatureKind::state};
    const FbsfdeSolution s = solve_picard(sys, b, PolynomialEngine(basis));
    EXPECT_TRUE(s.converged);
    EXPECT_LT(testing::max_abs_difference(s.x, b.values(), g.idx0(), g.idxT()), 1e-12);
    const ProcessEnsemble gap = difference(s.y(), b.values());
    EXPECT_LT(weighted_l2_norm(gap, {0.0, WeightSign::decay, g.idx0(), g.idxT()}), 0.04);
}

TEST(SolvePicard, RejectsBadOptions)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const FbsfdeSystem sys = presets::make_fbsfde("decoupled", g);
    const BrownianEnsemble b = sample_brownian(g, 100, 1, 5);
    PicardOptions options;
    options.relaxation = 0.0;
    EXPECT_FBSFDE_ERROR(solve_picard(sys, b, PartitionEngine{}, options), ErrorCode::invalid_argument);
    options.relaxation = 1.0;
    options.max_iter = 0;
    EXPECT_FBSFDE_ERROR(solve_picard(sys, b, PartitionEngine{}, options), ErrorCode::invalid_argument);
}

TEST(SolvePicard, ExhaustedBudgetCarriesTheHistory)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.0625);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g);
    PicardOptions options;
    options.tol = 1e-12;
    options.max_iter = 3;
    try {
        solve_picard(sys, sample_brownian(g, 300, 1, 5), PolynomialEngine(BasisConfig{}), options);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_EQ(e.code(), ErrorCode::non_convergence);
        EXPECT_EQ(e.history().size(), 3u);
    }
    options.on_nonconvergence = OnNonConvergence::report;
    const FbsfdeSolution s = solve_picard(sys, sample_brownian(g, 300, 1, 5), PolynomialEngine(BasisConfig{}), options);
    EXPECT_FALSE(s.converged);
    EXPECT_EQ(s.iterations, 3u);
}

TEST(SolveContinuation, AgreesWithDirectPicard)
{
    // Two different routes to the fixed point land on the same solution.
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 0.0625);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g);
    const BrownianEnsemble b = sample_brownian(g, 1000, 1, 9);
    BasisConfig basis;
    basis.degree = 2;
    basis.features = {FeatureKind::state, FeatureKind::memory};
    const PolynomialEngine engine(basis);
    PicardOptions picard;
    picard.tol = 1e-6;
    picard.max_iter = 100;
    const FbsfdeSolution direct = solve_picard(sys, b, engine, picard);
    ContinuationOptions options;
    options.schedule = {0.0, 0.5, 1.0};
    options.picard = picard;
    const FbsfdeSolution continued = solve_continuation(sys, b, engine, options);
    EXPECT_EQ(continued.schedule, (std::vector<double>{0.0, 0.5, 1.0}));
    EXPECT_LT(composite_distance(direct, continued), 1e-5);
}

TEST(SolveContinuation, ScheduleMustRunFromZeroToOne)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const FbsfdeSystem sys = presets::make_fbsfde("decoupled", g);
    const BrownianEnsemble b = sample_brownian(g, 100, 1, 5);
    ContinuationOptions options;
    options.schedule = {0.25, 1.0};
    EXPECT_FBSFDE_ERROR(solve_continuation(sys, b, PartitionEngine{}, options), ErrorCode::invalid_argument);
    options.schedule = {0.0, 0.5, 0.5, 1.0};
    EXPECT_FBSFDE_ERROR(solve_continuation(sys, b, PartitionEngine{}, options), ErrorCode::invalid_argument);
}

TEST(ContinuationProblem, ZeroEpsilonWithZeroDataHasTheZeroSolution)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.0625);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g, {{"x0", {0.0}}});
    ContinuationProblem problem;
    problem.base = &sys;
    problem.epsilon = 0.0;
    const FbsfdeSolution s = solve_picard(problem, sample_brownian(g, 200, 1, 5), PolynomialEngine(BasisConfig{}));
    EXPECT_TRUE(s.converged);
    EXPECT_EQ(s.x.slice(g.idxT()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(s.y().slice(g.idx0()).cwiseAbs().maxCoeff(), 0.0);
}

}  // namespace
}  // namespace fbsfde
