#include <cmath>

#include <gtest/gtest.h>

#include "fbsfde/oracles.hpp"
#include "fbsfde/regression.hpp"
#include "test_support.hpp"

namespace fbsfde {
namespace {

RowMatrix column(std::initializer_list<double> values)
{
    RowMatrix out(static_cast<Eigen::Index>(values.size()), 1);
    Eigen::Index r = 0;
    for (double v : values) out(r++, 0) = v;
    return out;
}

TEST(RegressCondexp, ConstantDesignGivesTheMean)
{
    const RowMatrix design = RowMatrix::Ones(4, 1);
    RegressionOptions options;
    options.ridge = 0.0;
    options.min_paths_per_function = 2;
    const RegressionResult r = regress_condexp(column({1.0, 2.0, 3.0, 6.0}), design, options);
    EXPECT_NEAR(r.coefficients(0, 0), 3.0, 1e-14);
    EXPECT_NEAR(r.residual, 3.5, 1e-13);
    EXPECT_FALSE(r.ill_conditioned);
}

TEST(RegressCondexp, RecoversAnAffineRelation)
{
    RowMatrix design(20, 2);
    RowMatrix targets(20, 1);
    for (Eigen::Index p = 0; p < 20; ++p) {
        const double x = 0.1 * static_cast<double>(p) - 1.0;
        design.row(p) << 1.0, x;
        targets(p, 0) = 2.0 - 3.0 * x;
    }
    RegressionOptions options;
    options.min_paths_per_function = 10;
    const RegressionResult r = regress_condexp(targets, design, options);
    EXPECT_NEAR(r.coefficients(0, 0), 2.0, 1e-7);
    EXPECT_NEAR(r.coefficients(1, 0), -3.0, 1e-7);
    EXPECT_LT(r.residual, 1e-14);
}

TEST(RegressCondexp, FlagsCollinearDesigns)
{
    RowMatrix design(20, 2);
    design.col(0).setOnes();
    design.col(1).setConstant(2.0);
    const RegressionResult r = regress_condexp(RowMatrix::Constant(20, 1, 4.0), design);
    EXPECT_TRUE(r.ill_conditioned);
    EXPECT_TRUE(r.coefficients.allFinite());
    EXPECT_NEAR(r.fitted(0, 0), 4.0, 1e-6);
}

TEST(RegressCondexp, RejectsBadInputs)
{
    EXPECT_FBSFDE_ERROR(regress_condexp(RowMatrix::Ones(5, 1), RowMatrix::Ones(5, 1)), ErrorCode::too_few_paths);
    EXPECT_FBSFDE_ERROR(regress_condexp(RowMatrix::Ones(5, 1), RowMatrix::Ones(6, 1)), ErrorCode::dimension_mismatch);
}

TEST(PolynomialBasis, SizeIsTheNumberOfMonomials)
{
    RowMatrix raw(50, 2);
    for (Eigen::Index p = 0; p < 50; ++p) raw.row(p) << std::sin(static_cast<double>(p)), std::cos(3.0 * static_cast<double>(p));
    EXPECT_EQ(PolynomialBasis(raw.leftCols(1), {FeatureKind::brownian}, 3).size(), 4u);
    EXPECT_EQ(PolynomialBasis(raw, {FeatureKind::state, FeatureKind::memory}, 2).size(), 6u);
}

TEST(PolynomialBasis, DropsConstantFeatures)
{
    RowMatrix raw(50, 2);
    raw.col(0).setConstant(0.3);
    for (Eigen::Index p = 0; p < 50; ++p) raw(p, 1) = static_cast<double>(p);
    EXPECT_EQ(PolynomialBasis(raw.leftCols(1), {FeatureKind::brownian}, 3).size(), 1u);
    EXPECT_EQ(PolynomialBasis(raw, {FeatureKind::state, FeatureKind::memory}, 2).size(), 3u);
}

TEST(PolynomialEngine, ProjectsTerminalBrownianOntoItsCurrentValue)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const BrownianEnsemble b = sample_brownian(g, 20000, 1, 8);
    const FeatureSource source = FeatureSource::for_brownian(b);
    const PolynomialEngine engine(BasisConfig{});
    const std::size_t i = g.idx0() + 2;
    const auto projector = engine.prepare(source, i);
    const Projection fit = projector->fit(RowMatrix(b.values().slice(g.idxT())));
    const RowMatrix current = b.values().slice(i);
    const double rmse = std::sqrt((fit.fitted - current).squaredNorm() / 20000.0);
    EXPECT_LT(rmse, 0.02);
    EXPECT_NEAR(fit.residual, 0.5, 0.03);
}

TEST(PartitionEngine, GroupsFollowTheTreeLevels)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.0, 0.25);
    const BinomialDriver driver(g);
    const BrownianEnsemble b = driver.ensemble();
    for (std::size_t level = 0; level <= driver.depth(); ++level) {
        EXPECT_EQ(PartitionBasis(b, g.idx0() + level).size(), std::size_t{1} << level);
    }
}

}  // namespace
}  // namespace fbsfde
