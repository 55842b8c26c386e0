#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "fbsfde/affine.hpp"
#include "fbsfde/kernel.hpp"
#include "fbsfde/regression.hpp"

namespace fbsfde {

/// Prescribed (xi, eta) on [T, T+K]. Each factory fixes how a node's values
/// are produced: constants, deterministic functions of time, or maps of the
/// path at T (B_T and, when available, X_T).
class TerminalExtension {
public:
    using PathMap = std::function<Eigen::VectorXd(const Eigen::VectorXd& b_T, const Eigen::VectorXd& x_T)>;

    static TerminalExtension constant(Eigen::VectorXd xi, Eigen::VectorXd eta);
    static TerminalExtension time_function(std::size_t m, std::size_t z_dim,
                                           std::function<Eigen::VectorXd(double)> xi,
                                           std::function<Eigen::VectorXd(double)> eta);
    /// xi, eta depend on the path at T only, identically on every node of [T, T+K].
    static TerminalExtension path_map(std::size_t m, std::size_t z_dim, PathMap xi, PathMap eta);

    std::size_t y_dim() const noexcept { return m_; }
    std::size_t z_dim() const noexcept { return z_dim_; }

    RowMatrix xi(std::size_t node, const BrownianEnsemble& brownian, const ProcessEnsemble* x) const;
    RowMatrix eta(std::size_t node, const BrownianEnsemble& brownian, const ProcessEnsemble* x) const;

private:
    using Fill = std::function<RowMatrix(std::size_t, const BrownianEnsemble&, const ProcessEnsemble*)>;
    std::size_t m_ = 0;
    std::size_t z_dim_ = 0;
    Fill xi_;
    Fill eta_;
};

enum class GeneratorKind {
    instantaneous,   ///< g(t, y_t, z_t)
    f1,              ///< g(t, E[int_t^{T+K} y], E[int_t^{T+K} z])
    f2,              ///< E[g(t, int_t^{T+K} y, int_t^{T+K} z)]
    affine_adjoint,  ///< E[int_t^{T+K} gy(s) y_s ds] + E[int_t^{T+K} gz(s) z_s ds], discretized as the exact
                     ///< adjoint of a left-Riemann memory integral (y from node i+2, z from i+1)
};

/// Affine generator g(t, u, v) = gy u + gz v + g0, plus gx x_t. For the
/// adjoint kind gy and gz are integrands evaluated at the integration time.
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::instantaneous;
    std::size_t m = 1;
    std::size_t d = 1;
    std::size_t n = 0;  ///< x-coupling dimension, 0 for none
    TimeMatrix gy;      ///< m x m
    TimeMatrix gz;      ///< m x (m d), acting on vec(z)
    TimeMatrix g0;      ///< m x 1
    TimeMatrix gx;      ///< m x n
    double lipschitz = 0.0;

    static GeneratorSpec zero(std::size_t m, std::size_t d);
    void validate() const;
};

/// Per-path tail sums sum_{j>=i} h W(t_j) v_j with the unknown node-i value
/// replaced by its successor; the adjoint kind drops it instead and starts y
/// one node later.
struct TailIntegrals {
    RowMatrix y;
    RowMatrix z;
};

TailIntegrals tail_integrals(const GeneratorSpec& spec, std::size_t i, const ProcessEnsemble& y,
                             const ProcessEnsemble& z);

/// F_{t_i}-measurable generator values at node i, explicit in the future:
/// only nodes > i of (y, z) are read. Throws MissingFuture if any is absent.
RowMatrix eval_anticipated_generator(const GeneratorSpec& spec, std::size_t i, const ProcessEnsemble& y,
                                     const ProcessEnsemble& z, const StepProjector& projector,
                                     const ProcessEnsemble* x = nullptr, const ProcessEnsemble* forcing = nullptr);

struct BackwardStep {
    RowMatrix y;
    RowMatrix z;             ///< vec(Z), column-major over Brownian columns
    RowMatrix coefficients;  ///< basis x (m + m d)
    RowMatrix ahead;         ///< same layout for [E(Y_{i+1}|F_i) | vec Z]
    double residual = 0.0;
};

/// Y_i = E[Y_{i+1} + h f_i | F_i], Z_i = E[(Y_{i+1} - E[Y_{i+1}|F_i]) dB_i^T | F_i] / h.
BackwardStep backward_step(const RowMatrix& y_next, const RowMatrix& f_value, const ConstSliceMap& increment,
                           double h, const StepProjector& projector);

struct GabsdeOptions {
    const ProcessEnsemble* x = nullptr;               ///< features and x-coupling
    const ProcessEnsemble* generator_forcing = nullptr;  ///< psi, dim m
    const RowMatrix* terminal_value = nullptr;       ///< overrides xi at node T
};

struct BackwardSolution {
    ProcessEnsemble y;  ///< nodes [idx0, last]
    ProcessEnsemble z;  ///< nodes [idx0, last], vec(Z)
    RegressionPolicy policy;
    RegressionPolicy ahead;  ///< E[Y_{i+1}|F_i] with Z_i, the one-step predictor
    std::vector<double> residuals;  ///< per node in [idx0, idxT)
    std::size_t ill_conditioned_steps = 0;
};

BackwardSolution solve_gabsde(const GeneratorSpec& generator, const TerminalExtension& terminal,
                              const BrownianEnsemble& brownian, const ConditionalExpectationEngine& engine,
                              const GabsdeOptions& options = {});

}  // namespace fbsfde
