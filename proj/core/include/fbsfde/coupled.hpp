#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fbsfde/gabsde.hpp"
#include "fbsfde/sfde.hpp"

namespace fbsfde {

/// G with the constants of the monotonicity condition. Construction rejects
/// rank-deficient G and constant patterns the condition does not allow.
class MonotoneStructure {
public:
    MonotoneStructure(Eigen::MatrixXd G, double lambda1, double lambda2, double mu);

    const Eigen::MatrixXd& G() const noexcept { return G_; }
    double lambda1() const noexcept { return lambda1_; }
    double lambda2() const noexcept { return lambda2_; }
    double mu() const noexcept { return mu_; }

private:
    Eigen::MatrixXd G_;
    double lambda1_;
    double lambda2_;
    double mu_;
};

/// x -> slope x + intercept for the terminal condition Y_T = Phi(X_T).
struct TerminalMap {
    Eigen::MatrixXd slope;  ///< m x n
    Eigen::VectorXd intercept;
    double lipschitz = 0.0;

    RowMatrix apply(const Eigen::Ref<const RowMatrix>& x) const;
};

struct FbsfdeSystem {
    SfdeCoefficients forward;  ///< coupling dims (m, m d)
    GeneratorSpec backward;    ///< x-coupling dim n
    TerminalMap phi;
    MonotoneStructure structure;
    InitialSegment rho;
    TerminalExtension extension;
    /// The forward pass reads E[Y_{i+1}|F_i] in place of Y_i. With an Euler
    /// forward step this makes the backward sweep the exact discrete adjoint.
    bool predictive_coupling = false;

    std::size_t n() const noexcept { return forward.n; }
    std::size_t m() const noexcept { return backward.m; }
    std::size_t d() const noexcept { return forward.d; }
    void validate() const;
};

/// The epsilon-family: drift (1-e) l2 (-G^T y) + e b + phi, diffusion
/// (1-e) l2 (-G^T z) + e sigma + varphi, generator (1-e) l1 G x + e f + psi,
/// terminal e Phi(x) + (1-e) G x + zeta. Empty forcings mean zero.
struct ContinuationProblem {
    const FbsfdeSystem* base = nullptr;
    double epsilon = 1.0;
    ProcessEnsemble phi;     ///< dim n
    ProcessEnsemble varphi;  ///< dim n d, vec column-major
    ProcessEnsemble psi;     ///< dim m
    RowMatrix zeta;          ///< paths x m
};

/// The coefficients of the epsilon-family member (forcings excluded).
FbsfdeSystem system_at_epsilon(const FbsfdeSystem& base, double epsilon);

/// A point of the monotonicity map: node index, current (x, y, vec z) and the
/// past/future segments the functionals read. Segment rows are grid nodes:
/// past covers [0, i], futures cover [i, last].
struct PointArguments {
    std::size_t i = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd z;
    Eigen::MatrixXd past;
    Eigen::MatrixXd future_y;
    Eigen::MatrixXd future_z;
};

/// (-G^T f, G b, vec(G sigma)) stacked, length n + m + m d.
Eigen::VectorXd assemble_A(const FbsfdeSystem& system, const TimeGrid& grid, const PointArguments& u);

struct SamplerConfig {
    std::uint64_t seed = 7;
    double scale = 1.0;
};

enum class MonotonicityStatus { pointwise_satisfied, violated };

struct MonotonicityReport {
    MonotonicityStatus status = MonotonicityStatus::pointwise_satisfied;
    double worst_margin = 0.0;  ///< min over trials of (bound - <dA, du>) and the Phi margin
    std::optional<std::pair<PointArguments, PointArguments>> witness;
    std::string note;
};

MonotonicityReport check_monotonicity(const FbsfdeSystem& system, const TimeGrid& grid, const SamplerConfig& sampler,
                                      std::size_t n_trials);

enum class OnNonConvergence { raise, report };

struct FbsfdeSolution;

struct PicardOptions {
    double tol = 1e-3;
    std::size_t max_iter = 50;
    double relaxation = 1.0;  ///< X <- w X_new + (1 - w) X_old
    std::optional<double> theta;  ///< weight for the weighted history; default theta_star(L)
    OnNonConvergence on_nonconvergence = OnNonConvergence::raise;
    const FbsfdeSolution* warm_start = nullptr;
};

struct FbsfdeSolution {
    ProcessEnsemble x;  ///< nodes [0, idxT]
    BackwardSolution backward;
    std::size_t iterations = 0;
    std::vector<double> history;           ///< composite successive differences
    std::vector<double> weighted_history;  ///< same with theta-decay weights
    bool converged = false;
    double epsilon = 1.0;
    std::vector<double> schedule;  ///< epsilons actually solved (continuation)
    double terminal_residual = 0.0;

    const ProcessEnsemble& y() const noexcept { return backward.y; }
    const ProcessEnsemble& z() const noexcept { return backward.z; }
};

/// (E int_{-M}^T |dX|^2 + E int_0^{T+K} (|dY|^2 + |dZ|^2) + E|dX_T|^2)^{1/2},
/// every term weighted by e^{-theta t}.
double composite_distance(const FbsfdeSolution& a, const FbsfdeSolution& b, double theta = 0.0);

FbsfdeSolution solve_picard(const ContinuationProblem& problem, const BrownianEnsemble& brownian,
                            const ConditionalExpectationEngine& engine, const PicardOptions& options = {});
FbsfdeSolution solve_picard(const FbsfdeSystem& system, const BrownianEnsemble& brownian,
                            const ConditionalExpectationEngine& engine, const PicardOptions& options = {});

struct ContinuationOptions {
    std::vector<double> schedule;  ///< increasing from 0 to 1; empty means 8 equal steps
    double min_step = 1.0 / 256.0;
    PicardOptions picard;
};

FbsfdeSolution solve_continuation(const FbsfdeSystem& system, const BrownianEnsemble& brownian,
                                  const ConditionalExpectationEngine& engine, const ContinuationOptions& options = {});

}  // namespace fbsfde
