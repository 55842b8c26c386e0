#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "fbsfde/coupled.hpp"

namespace fbsfde {

/// Quadratic control of dX = (A int_{-M}^t X + C v) dt + (D int_{-M}^t X + F v) dB
/// with cost 1/2 E[int (X'RX + v'Nv) dt + X_T' Q X_T]. One Brownian column.
struct LqProblem {
    TimeGrid grid;
    TimeMatrix A;  ///< n x n
    TimeMatrix C;  ///< n x k
    TimeMatrix D;  ///< n x n
    TimeMatrix F;  ///< n x k
    TimeMatrix R;  ///< n x n, PSD
    TimeMatrix N;  ///< k x k, PD
    Eigen::MatrixXd Q;
    InitialSegment rho;
    double nu = 0.0;  ///< lower bound on the eigenvalues of N, set by validate()

    std::size_t n() const noexcept { return static_cast<std::size_t>(A.rows()); }
    std::size_t k() const noexcept { return static_cast<std::size_t>(C.cols()); }

    /// Checks shapes, symmetry (1e-12) and definiteness at every node of [0, T];
    /// stores nu = min eigenvalue of N.
    void validate();
};

FbsfdeSystem build_adjoint_fbsfde(const LqProblem& problem);

/// -N^{-1}(C^T y + F^T z) for every path row. Throws NotPositiveDefinite when
/// N has an eigenvalue below nu / 2.
RowMatrix optimal_control(const LqProblem& problem, double t, const RowMatrix& y, const RowMatrix& z);

class ControlPolicy {
public:
    virtual ~ControlPolicy() = default;
    virtual std::size_t k() const = 0;
    /// (paths x k) control at node i from the path features.
    virtual RowMatrix control(std::size_t i, const FeatureSource& source) const = 0;
};

/// Values per path and node, valid on nodes [idx0, idxT).
class OpenLoopControl final : public ControlPolicy {
public:
    explicit OpenLoopControl(ProcessEnsemble values) : values_(std::move(values)) {}
    std::size_t k() const override { return values_.dim(); }
    RowMatrix control(std::size_t i, const FeatureSource& source) const override;
    const ProcessEnsemble& values() const noexcept { return values_; }

private:
    ProcessEnsemble values_;
};

/// u = -N^{-1}(C^T Y + F^T Z) with (Y, Z) read from an adjoint regression policy;
/// verify_optimality feeds it the one-step predictor E[Y_{i+1}|F_i].
class FeedbackControl final : public ControlPolicy {
public:
    FeedbackControl(const LqProblem& problem, const RegressionPolicy& policy) : problem_(&problem), policy_(&policy) {}
    std::size_t k() const override { return problem_->k(); }
    RowMatrix control(std::size_t i, const FeatureSource& source) const override;

private:
    const LqProblem* problem_;
    const RegressionPolicy* policy_;
};

/// zeta = c0 + c1 t + c2 X_t + c3 int_{-M}^t X, coefficients stacked as rows
/// (2 + 2n) x k. Adapted by construction.
class PolynomialDirection final : public ControlPolicy {
public:
    explicit PolynomialDirection(Eigen::MatrixXd coefficients) : coefficients_(std::move(coefficients)) {}
    static PolynomialDirection random(std::size_t n, std::size_t k, std::uint64_t seed, std::uint64_t stream);
    std::size_t k() const override { return static_cast<std::size_t>(coefficients_.cols()); }
    RowMatrix control(std::size_t i, const FeatureSource& source) const override;

private:
    Eigen::MatrixXd coefficients_;
};

/// base + epsilon * direction.
class PerturbedControl final : public ControlPolicy {
public:
    PerturbedControl(const ControlPolicy& base, const ControlPolicy& direction, double epsilon)
        : base_(&base), direction_(&direction), epsilon_(epsilon)
    {
    }
    std::size_t k() const override { return base_->k(); }
    RowMatrix control(std::size_t i, const FeatureSource& source) const override;

private:
    const ControlPolicy* base_;
    const ControlPolicy* direction_;
    double epsilon_;
};

ProcessEnsemble simulate_controlled(const LqProblem& problem, const ControlPolicy& policy,
                                    const BrownianEnsemble& brownian);

/// Controls the policy applies along X, on nodes [idx0, idxT - 1].
ProcessEnsemble record_controls(const LqProblem& problem, const ControlPolicy& policy, const ProcessEnsemble& x,
                                const BrownianEnsemble& brownian);

struct CostEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::vector<double> per_path;
};

CostEstimate cost_J(const LqProblem& problem, const ControlPolicy& policy, const ProcessEnsemble& x,
                    const BrownianEnsemble& brownian);

struct PerturbationCheck {
    double epsilon = 0.0;
    double cost = 0.0;
    double difference = 0.0;  ///< J(u + eps zeta) - J(u), common random numbers
    double standard_error = 0.0;
    bool passed = true;
};

struct ConvexityCheck {
    double midpoint = 0.0;
    double average = 0.0;
    double standard_error = 0.0;
    bool passed = true;
};

struct OptimalityOptions {
    std::size_t n_perturbations = 100;
    std::vector<double> scales{0.1, 0.5};
    std::size_t n_pairs = 50;
    std::uint64_t seed = 2024;
    bool raise_on_violation = true;
};

struct OptimalityReport {
    CostEstimate optimal;
    std::vector<PerturbationCheck> perturbations;
    std::vector<ConvexityCheck> convexity;
    double duality_residual = 0.0;
    bool all_passed = true;
};

/// Evaluates the adjoint feedback against perturbed and convex-combined
/// controls on `brownian`. Raises OptimalityViolated on the first failed
/// inequality when options.raise_on_violation is set.
OptimalityReport verify_optimality(const LqProblem& problem, const FbsfdeSolution& adjoint,
                                   const BrownianEnsemble& brownian, const OptimalityOptions& options = {});

/// |E<X^v_T - X_T, Y_T> + E int <R X, X^v - X> - E int (<C(v-u), Y> + <F(v-u), Z>)|.
double duality_residual(const LqProblem& problem, const FbsfdeSolution& adjoint, const ControlPolicy& v,
                        const BrownianEnsemble& brownian);

struct RiccatiSolution {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> P;
    double cost = 0.0;
};

/// P' = P C (N + F^T P F)^{-1} C^T P - R backward from P(T) = Q by RK4 with
/// step h/10. Throws OracleInapplicable unless A and D vanish.
RiccatiSolution riccati_reference(const LqProblem& problem);

}  // namespace fbsfde
