#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "fbsfde/kernel.hpp"

namespace fbsfde {

enum class FeatureKind { state, memory, brownian };

/// Path history visible at a node: Brownian values, and optionally the state
/// X and its running integral from -M. Missing state falls back to B.
class FeatureSource {
public:
    FeatureSource(const BrownianEnsemble& brownian, const ProcessEnsemble* state = nullptr,
                  const ProcessEnsemble* memory = nullptr);

    /// Brownian-only source whose memory feature is the running integral of B.
    static FeatureSource for_brownian(const BrownianEnsemble& brownian);
    /// Owns the running integral of `state`.
    static FeatureSource for_state(const BrownianEnsemble& brownian, const ProcessEnsemble& state);

    const BrownianEnsemble& brownian() const noexcept { return *brownian_; }
    const ProcessEnsemble* state() const noexcept { return state_; }
    std::size_t n_paths() const noexcept { return brownian_->n_paths(); }

    /// (paths x q) raw feature matrix at node i, columns in `kinds` order.
    RowMatrix raw(std::size_t i, const std::vector<FeatureKind>& kinds) const;
    std::size_t width(const std::vector<FeatureKind>& kinds) const;

private:
    const BrownianEnsemble* brownian_;
    const ProcessEnsemble* state_;
    const ProcessEnsemble* memory_;
    std::shared_ptr<const ProcessEnsemble> owned_memory_;
};

struct BasisConfig {
    int degree = 3;
    std::vector<FeatureKind> features{FeatureKind::brownian};
    double ridge = 1e-8;
    double singular_cutoff = 1e-10;
    std::size_t min_paths_per_function = 10;
};

/// Evaluable representation of E[. | F_{t_i}] at one node: maps a path's
/// features to basis values and contracts them with a coefficient matrix.
class BasisMap {
public:
    virtual ~BasisMap() = default;
    virtual std::size_t size() const = 0;
    virtual RowMatrix apply(const FeatureSource& source, std::size_t i,
                            const RowMatrix& coefficients) const = 0;
};

/// Total-degree monomials in standardized active features. Features with zero
/// sample variance at the fitting node are dropped, so at t = 0 the basis
/// collapses to the constant.
class PolynomialBasis final : public BasisMap {
public:
    PolynomialBasis(const RowMatrix& raw, const std::vector<FeatureKind>& kinds, int degree);

    std::size_t size() const override { return exponents_.size(); }
    RowMatrix design(const RowMatrix& raw) const;
    RowMatrix apply(const FeatureSource& source, std::size_t i,
                    const RowMatrix& coefficients) const override;

private:
    std::vector<FeatureKind> kinds_;
    std::vector<Eigen::Index> active_;
    Eigen::RowVectorXd mean_;
    Eigen::RowVectorXd scale_;
    std::vector<std::vector<int>> exponents_;
};

/// One indicator per distinct Brownian increment prefix. On a binomial tree
/// this is the exact conditional expectation.
class PartitionBasis final : public BasisMap {
public:
    PartitionBasis(const BrownianEnsemble& brownian, std::size_t i);

    std::size_t size() const override { return n_groups_; }
    const std::vector<std::size_t>& group_of_path() const noexcept { return group_of_path_; }
    RowMatrix apply(const FeatureSource& source, std::size_t i,
                    const RowMatrix& coefficients) const override;

    static std::uint64_t key(const BrownianEnsemble& brownian, std::size_t i, std::size_t path);

private:
    std::vector<std::uint64_t> keys_;
    std::vector<std::size_t> group_of_path_;
    std::size_t n_groups_ = 0;
};

struct StepMap {
    std::shared_ptr<const BasisMap> basis;
    RowMatrix coefficients;

    bool empty() const noexcept { return !basis; }
    RowMatrix evaluate(const FeatureSource& source, std::size_t i) const
    {
        return basis->apply(source, i, coefficients);
    }
};

struct RegressionOptions {
    double ridge = 1e-8;
    double ridge_floor = 1e-8;
    double singular_cutoff = 1e-10;
    std::size_t min_paths_per_function = 10;
};

struct RegressionResult {
    RowMatrix coefficients;
    RowMatrix fitted;
    double residual = 0.0;  ///< mean squared residual per path
    bool ill_conditioned = false;
};

/// Least squares of targets on the columns of `design`, minimizing
/// |target - design c|^2 + ridge |c|^2. Near-singular designs are flagged
/// and solved with ridge >= ridge_floor plus a singular-value cutoff.
RegressionResult regress_condexp(const RowMatrix& targets, const RowMatrix& design,
                                 const RegressionOptions& options = {});

struct Projection {
    RowMatrix coefficients;
    RowMatrix fitted;
    double residual = 0.0;
};

/// A factorized projection onto the span of one node's basis; reused for every
/// target fitted at that node.
class StepProjector {
public:
    virtual ~StepProjector() = default;
    virtual Projection fit(const RowMatrix& targets) const = 0;
    virtual std::shared_ptr<const BasisMap> basis() const = 0;
    virtual bool ill_conditioned() const { return false; }
};

class ConditionalExpectationEngine {
public:
    virtual ~ConditionalExpectationEngine() = default;
    virtual std::unique_ptr<StepProjector> prepare(const FeatureSource& source, std::size_t i) const = 0;
};

class PolynomialEngine final : public ConditionalExpectationEngine {
public:
    explicit PolynomialEngine(BasisConfig config) : config_(std::move(config)) {}
    const BasisConfig& config() const noexcept { return config_; }
    std::unique_ptr<StepProjector> prepare(const FeatureSource& source, std::size_t i) const override;

private:
    BasisConfig config_;
};

class PartitionEngine final : public ConditionalExpectationEngine {
public:
    std::unique_ptr<StepProjector> prepare(const FeatureSource& source, std::size_t i) const override;
};

/// Supplies (Y_{t_i}, Z_{t_i}) to a forward simulation from path features.
/// Z is returned as vec(Z), column-major over the d Brownian columns.
class CouplingSource {
public:
    virtual ~CouplingSource() = default;
    virtual std::size_t y_dim() const = 0;
    virtual std::size_t z_dim() const = 0;
    virtual void evaluate(std::size_t i, const FeatureSource& source, RowMatrix& y, RowMatrix& z) const = 0;
};

/// Per-node least-squares maps for [Y | vec Z] on nodes [idx0, idxT).
class RegressionPolicy final : public CouplingSource {
public:
    RegressionPolicy() = default;
    RegressionPolicy(const TimeGrid& grid, std::size_t m, std::size_t d);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t y_dim() const override { return m_; }
    std::size_t z_dim() const override { return m_ * d_; }
    bool empty() const noexcept { return steps_.empty(); }

    void set_step(std::size_t i, StepMap map);
    const StepMap& step(std::size_t i) const;
    bool has_step(std::size_t i) const;

    void evaluate(std::size_t i, const FeatureSource& source, RowMatrix& y, RowMatrix& z) const override;

private:
    TimeGrid grid_;
    std::size_t m_ = 0;
    std::size_t d_ = 0;
    std::vector<StepMap> steps_;
};

/// Constant (Y, Z); the zero policy starts a Picard iteration.
class ConstantCoupling final : public CouplingSource {
public:
    ConstantCoupling(Eigen::VectorXd y, Eigen::VectorXd z) : y_(std::move(y)), z_(std::move(z)) {}
    static ConstantCoupling zero(std::size_t m, std::size_t d)
    {
        return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)),
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m * d))};
    }
    std::size_t y_dim() const override { return static_cast<std::size_t>(y_.size()); }
    std::size_t z_dim() const override { return static_cast<std::size_t>(z_.size()); }
    void evaluate(std::size_t i, const FeatureSource& source, RowMatrix& y, RowMatrix& z) const override;

private:
    Eigen::VectorXd y_;
    Eigen::VectorXd z_;
};

}  // namespace fbsfde
