#include "fbsfde/lq.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "fbsfde/error.hpp"
#include "fbsfde/parallel.hpp"

namespace fbsfde {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kEigenTol = 1e-12;

void require_shape(const TimeMatrix& m, std::size_t rows, std::size_t cols, const char* what)
{
    if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
        raise(ErrorCode::dimension_mismatch, std::string(what) + " must be " + std::to_string(rows) + "x" +
                                                 std::to_string(cols));
    }
}

double min_eigenvalue(const Eigen::MatrixXd& s)
{
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

double spectral_norm(const Eigen::MatrixXd& m)
{
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

TimeMatrix transposed(const TimeMatrix& m)
{
    if (m.is_constant()) return TimeMatrix(Eigen::MatrixXd(m.constant().transpose()));
    return TimeMatrix(m.cols(), m.rows(), [m](double t) { return Eigen::MatrixXd(m.at(t).transpose()); },
                      m.norm_bound());
}

bool vanishes(const TimeMatrix& m, const TimeGrid& grid)
{
    if (m.is_constant()) return m.is_zero();
    for (std::size_t i = grid.idx0(); i <= grid.idxT(); ++i) {
        if (!m.at(grid.time(i)).isZero(0.0)) return false;
    }
    return true;
}

// A time-dependent product of problem matrices. Constant inputs give a
// constant; otherwise the declared bound is the maximum over grid nodes,
// which is exact for piecewise-constant data.
TimeMatrix derived(const std::vector<const TimeMatrix*>& inputs, const TimeGrid& grid, Eigen::Index rows,
                   Eigen::Index cols, std::function<Eigen::MatrixXd(double)> fn)
{
    const bool constant = std::all_of(inputs.begin(), inputs.end(), [](const TimeMatrix* m) { return m->is_constant(); });
    if (constant) return TimeMatrix(fn(0.0));
    double bound = 0.0;
    for (std::size_t i = grid.idx0(); i <= grid.idxT(); ++i) bound = std::max(bound, spectral_norm(fn(grid.time(i))));
    return TimeMatrix(rows, cols, std::move(fn), bound);
}

// Control as the coupling "y" of an SFDE with drift_y = C, diffusion_y = F.
class ControlCoupling final : public CouplingSource {
public:
    explicit ControlCoupling(const ControlPolicy& policy) : policy_(policy) {}
    std::size_t y_dim() const override { return policy_.k(); }
    std::size_t z_dim() const override { return 0; }
    void evaluate(std::size_t i, const FeatureSource& source, RowMatrix& y, RowMatrix& z) const override
    {
        y = policy_.control(i, source);
        z.resize(y.rows(), 0);
    }

private:
    const ControlPolicy& policy_;
};

SfdeCoefficients controlled_coefficients(const LqProblem& p)
{
    const std::size_t n = p.n();
    const auto rows = static_cast<Eigen::Index>(n);
    SfdeCoefficients c;
    c.n = n;
    c.d = 1;
    c.drift.emplace_back(MemoryKind::integral_of_state, AffineMap{p.A, TimeMatrix::zero(rows, 1)}, p.A.norm_bound());
    c.diffusion.resize(1);
    c.diffusion[0].emplace_back(MemoryKind::integral_of_state, AffineMap{p.D, TimeMatrix::zero(rows, 1)},
                                p.D.norm_bound());
    c.coupling = YzCoupling::none(n, 1, p.k(), 0);
    c.coupling.drift_y = p.C;
    c.coupling.diffusion_y[0] = p.F;
    c.lipschitz = p.A.norm_bound() + p.D.norm_bound();
    return c;
}

void check_state(const LqProblem& p, const ProcessEnsemble& x, const BrownianEnsemble& brownian)
{
    if (!(x.grid() == p.grid) || !x.covers(0) || !x.covers(p.grid.idxT()) || x.dim() != p.n() ||
        x.n_paths() != brownian.n_paths()) {
        raise(ErrorCode::mismatched_ensemble, "state ensemble does not match the problem grid, dimension or paths");
    }
}

CostEstimate summarize(std::vector<double> per_path)
{
    CostEstimate out;
    const auto n = static_cast<double>(per_path.size());
    double sum = 0.0;
    for (double v : per_path) sum += v;
    out.value = sum / n;
    double ss = 0.0;
    for (double v : per_path) ss += (v - out.value) * (v - out.value);
    out.standard_error = per_path.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    out.per_path = std::move(per_path);
    return out;
}

CostEstimate paired_difference(const CostEstimate& a, const CostEstimate& b)
{
    std::vector<double> diff(a.per_path.size());
    for (std::size_t p = 0; p < diff.size(); ++p) diff[p] = a.per_path[p] - b.per_path[p];
    return summarize(std::move(diff));
}

}  // namespace

void LqProblem::validate()
{
    const std::size_t nn = n();
    const std::size_t kk = k();
    if (nn == 0 || kk == 0) raise(ErrorCode::dimension_mismatch, "state and control dimensions must be positive");
    require_shape(A, nn, nn, "A");
    require_shape(C, nn, kk, "C");
    require_shape(D, nn, nn, "D");
    require_shape(F, nn, kk, "F");
    require_shape(R, nn, nn, "R");
    require_shape(N, kk, kk, "N");
    if (static_cast<std::size_t>(Q.rows()) != nn || static_cast<std::size_t>(Q.cols()) != nn) {
        raise(ErrorCode::dimension_mismatch, "Q must be n x n");
    }
    if (static_cast<std::size_t>(rho.dim()) != nn || !(rho.grid() == grid)) {
        raise(ErrorCode::dimension_mismatch, "initial segment must match the problem grid and state dimension");
    }
    if ((Q - Q.transpose()).norm() > kSymmetryTol) raise(ErrorCode::invalid_argument, "Q is not symmetric");
    if (min_eigenvalue(Q) < -kEigenTol) raise(ErrorCode::not_positive_definite, "Q is not positive semidefinite");
    double nu_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = grid.idx0(); i <= grid.idxT(); ++i) {
        const double t = grid.time(i);
        const Eigen::MatrixXd r = R.at(t);
        const Eigen::MatrixXd nmat = N.at(t);
        if ((r - r.transpose()).norm() > kSymmetryTol) raise(ErrorCode::invalid_argument, "R is not symmetric");
        if ((nmat - nmat.transpose()).norm() > kSymmetryTol) raise(ErrorCode::invalid_argument, "N is not symmetric");
        if (min_eigenvalue(r) < -kEigenTol) raise(ErrorCode::not_positive_definite, "R is not positive semidefinite");
        nu_min = std::min(nu_min, min_eigenvalue(nmat));
    }
    if (!(nu_min > 0.0)) raise(ErrorCode::not_positive_definite, "N is not positive definite");
    nu = nu_min;
}

FbsfdeSystem build_adjoint_fbsfde(const LqProblem& problem)
{
    const std::size_t n = problem.n();
    const auto rows = static_cast<Eigen::Index>(n);
    const TimeGrid& grid = problem.grid;
    const TimeMatrix C = problem.C;
    const TimeMatrix F = problem.F;
    const TimeMatrix N = problem.N;

    // -X N^{-1} W^T for X, W in {C, F}.
    auto gain = [&](const TimeMatrix& X, const TimeMatrix& W) {
        return derived({&X, &W, &N}, grid, rows, rows, [X, W, N](double t) {
            const Eigen::MatrixXd ninv_wt = N.at(t).llt().solve(W.at(t).transpose());
            return Eigen::MatrixXd(-(X.at(t) * ninv_wt));
        });
    };

    SfdeCoefficients forward;
    forward.n = n;
    forward.d = 1;
    forward.drift.emplace_back(MemoryKind::integral_of_state, AffineMap{problem.A, TimeMatrix::zero(rows, 1)},
                               problem.A.norm_bound());
    forward.diffusion.resize(1);
    forward.diffusion[0].emplace_back(MemoryKind::integral_of_state, AffineMap{problem.D, TimeMatrix::zero(rows, 1)},
                                      problem.D.norm_bound());
    forward.coupling = YzCoupling::none(n, 1, n, n);
    forward.coupling.drift_y = gain(C, C);
    forward.coupling.drift_z = gain(C, F);
    forward.coupling.diffusion_y[0] = gain(F, C);
    forward.coupling.diffusion_z[0] = gain(F, F);
    forward.lipschitz = problem.A.norm_bound() + problem.D.norm_bound() + forward.coupling.drift_y.norm_bound() +
                        forward.coupling.drift_z.norm_bound() + forward.coupling.diffusion_y[0].norm_bound() +
                        forward.coupling.diffusion_z[0].norm_bound();

    GeneratorSpec backward;
    backward.kind = GeneratorKind::affine_adjoint;
    backward.m = n;
    backward.d = 1;
    backward.n = n;
    backward.gy = transposed(problem.A);
    backward.gz = transposed(problem.D);
    backward.g0 = TimeMatrix::zero(rows, 1);
    backward.gx = problem.R;
    const double la = problem.A.norm_bound();
    const double ld = problem.D.norm_bound();
    const double lr = problem.R.norm_bound();
    backward.lipschitz = std::sqrt(la * la + ld * ld + lr * lr);

    TerminalMap phi{problem.Q, Eigen::VectorXd::Zero(rows), spectral_norm(problem.Q)};
    MonotoneStructure structure(Eigen::MatrixXd::Identity(rows, rows), 1.0, 1.0, 1.0);
    TerminalExtension extension = TerminalExtension::constant(Eigen::VectorXd::Zero(rows), Eigen::VectorXd::Zero(rows));
    FbsfdeSystem system{std::move(forward), std::move(backward), std::move(phi), std::move(structure), problem.rho,
                        std::move(extension)};
    system.predictive_coupling = true;
    system.validate();
    return system;
}

RowMatrix optimal_control(const LqProblem& problem, double t, const RowMatrix& y, const RowMatrix& z)
{
    const Eigen::MatrixXd N = problem.N.at(t);
    const double guard = problem.nu > 0.0 ? 0.5 * problem.nu : 0.0;
    if (!(min_eigenvalue(N) > guard)) {
        raise(ErrorCode::not_positive_definite, "N has an eigenvalue below nu/2 at t = " + std::to_string(t));
    }
    const Eigen::MatrixXd C = problem.C.at(t);
    const Eigen::MatrixXd F = problem.F.at(t);
    if (y.cols() != C.rows() || z.cols() != F.rows()) raise(ErrorCode::dimension_mismatch, "adjoint values do not match C, F");
    const Eigen::MatrixXd s = y * C + z * F;  // rows are (C^T y + F^T z)^T
    return -RowMatrix(N.llt().solve(s.transpose()).transpose());
}

RowMatrix OpenLoopControl::control(std::size_t i, const FeatureSource& source) const
{
    if (values_.n_paths() != source.n_paths() || !values_.covers(i)) {
        raise(ErrorCode::mismatched_ensemble, "open-loop control does not cover node " + std::to_string(i));
    }
    return values_.slice(i);
}

RowMatrix FeedbackControl::control(std::size_t i, const FeatureSource& source) const
{
    RowMatrix y;
    RowMatrix z;
    policy_->evaluate(i, source, y, z);
    return optimal_control(*problem_, problem_->grid.time(i), y, z);
}

PolynomialDirection PolynomialDirection::random(std::size_t n, std::size_t k, std::uint64_t seed, std::uint64_t stream)
{
    Eigen::MatrixXd coefficients(static_cast<Eigen::Index>(2 + 2 * n), static_cast<Eigen::Index>(k));
    std::uint64_t counter = 0;
    for (Eigen::Index r = 0; r < coefficients.rows(); ++r) {
        for (Eigen::Index c = 0; c < coefficients.cols(); ++c) coefficients(r, c) = counter_normal(seed, stream, counter++);
    }
    return PolynomialDirection(std::move(coefficients));
}

RowMatrix PolynomialDirection::control(std::size_t i, const FeatureSource& source) const
{
    const RowMatrix raw = source.raw(i, {FeatureKind::state, FeatureKind::memory});
    if (raw.cols() + 2 != coefficients_.rows()) {
        raise(ErrorCode::dimension_mismatch, "direction needs state and memory features matching its coefficients");
    }
    const double t = source.brownian().grid().time(i);
    RowMatrix design(raw.rows(), raw.cols() + 2);
    design.col(0).setOnes();
    design.col(1).setConstant(t);
    design.rightCols(raw.cols()) = raw;
    return design * coefficients_;
}

RowMatrix PerturbedControl::control(std::size_t i, const FeatureSource& source) const
{
    return base_->control(i, source) + epsilon_ * direction_->control(i, source);
}

ProcessEnsemble simulate_controlled(const LqProblem& problem, const ControlPolicy& policy,
                                    const BrownianEnsemble& brownian)
{
    if (!(brownian.grid() == problem.grid)) raise(ErrorCode::dimension_mismatch, "Brownian grid differs from the problem grid");
    if (policy.k() != problem.k()) raise(ErrorCode::dimension_mismatch, "policy control dimension differs from k");
    const ControlCoupling coupling(policy);
    SimulationOptions options;
    options.coupling = &coupling;
    return simulate_sfde(controlled_coefficients(problem), problem.rho, brownian, options);
}

ProcessEnsemble record_controls(const LqProblem& problem, const ControlPolicy& policy, const ProcessEnsemble& x,
                                const BrownianEnsemble& brownian)
{
    check_state(problem, x, brownian);
    if (policy.k() != problem.k()) raise(ErrorCode::mismatched_ensemble, "policy control dimension differs from k");
    const TimeGrid& grid = problem.grid;
    const FeatureSource source = FeatureSource::for_state(brownian, x);
    ProcessEnsemble out(grid, grid.idx0(), grid.idxT() - 1, x.n_paths(), problem.k());
    for (std::size_t i = grid.idx0(); i < grid.idxT(); ++i) out.slice(i) = policy.control(i, source);
    return out;
}

CostEstimate cost_J(const LqProblem& problem, const ControlPolicy& policy, const ProcessEnsemble& x,
                    const BrownianEnsemble& brownian)
{
    const ProcessEnsemble u = record_controls(problem, policy, x, brownian);
    const TimeGrid& grid = problem.grid;
    const double h = grid.step();
    std::vector<Eigen::MatrixXd> R;
    std::vector<Eigen::MatrixXd> N;
    for (std::size_t i = grid.idx0(); i < grid.idxT(); ++i) {
        R.push_back(problem.R.at(grid.time(i)));
        N.push_back(problem.N.at(grid.time(i)));
    }
    const auto nn = static_cast<Eigen::Index>(problem.n());
    const auto kk = static_cast<Eigen::Index>(problem.k());
    std::vector<double> per_path(x.n_paths());
    parallel_for(x.n_paths(), [&](std::size_t p) {
        double running = 0.0;
        for (std::size_t i = grid.idx0(); i < grid.idxT(); ++i) {
            const Eigen::Map<const Eigen::VectorXd> xi(x.at(i, p).data(), nn);
            const Eigen::Map<const Eigen::VectorXd> ui(u.at(i, p).data(), kk);
            const std::size_t j = i - grid.idx0();
            running += h * (xi.dot(R[j] * xi) + ui.dot(N[j] * ui));
        }
        const Eigen::Map<const Eigen::VectorXd> xT(x.at(grid.idxT(), p).data(), nn);
        per_path[p] = 0.5 * (running + xT.dot(problem.Q * xT));
    });
    return summarize(std::move(per_path));
}

double duality_residual(const LqProblem& problem, const FbsfdeSolution& adjoint, const ControlPolicy& v,
                        const BrownianEnsemble& brownian)
{
    const TimeGrid& grid = problem.grid;
    const double h = grid.step();
    const FeedbackControl u(problem, adjoint.backward.ahead);
    const ProcessEnsemble x = simulate_controlled(problem, u, brownian);
    const ProcessEnsemble xv = simulate_controlled(problem, v, brownian);
    const ProcessEnsemble uu = record_controls(problem, u, x, brownian);
    const ProcessEnsemble vv = record_controls(problem, v, xv, brownian);
    const FeatureSource source = FeatureSource::for_state(brownian, x);
    Eigen::VectorXd per_path = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(brownian.n_paths()));
    RowMatrix y;
    RowMatrix z;
    for (std::size_t i = grid.idx0(); i < grid.idxT(); ++i) {
        const double t = grid.time(i);
        adjoint.backward.policy.evaluate(i, source, y, z);
        const RowMatrix dx = RowMatrix(xv.slice(i)) - RowMatrix(x.slice(i));
        const RowMatrix dv = RowMatrix(vv.slice(i)) - RowMatrix(uu.slice(i));
        const RowMatrix rx = x.slice(i) * problem.R.at(t).transpose();
        const RowMatrix cdv = dv * problem.C.at(t).transpose();
        const RowMatrix fdv = dv * problem.F.at(t).transpose();
        per_path += h * ((rx.array() * dx.array()).rowwise().sum() - (cdv.array() * y.array()).rowwise().sum() -
                         (fdv.array() * z.array()).rowwise().sum())
                            .matrix();
    }
    const RowMatrix xT = x.slice(grid.idxT());
    const RowMatrix dxT = RowMatrix(xv.slice(grid.idxT())) - xT;
    const RowMatrix yT = xT * problem.Q.transpose();
    per_path += (dxT.array() * yT.array()).rowwise().sum().matrix();
    return std::abs(per_path.mean());
}

OptimalityReport verify_optimality(const LqProblem& problem, const FbsfdeSolution& adjoint,
                                   const BrownianEnsemble& brownian, const OptimalityOptions& options)
{
    const std::size_t n = problem.n();
    const std::size_t k = problem.k();
    const FeedbackControl u(problem, adjoint.backward.ahead);
    OptimalityReport report;
    const ProcessEnsemble xu = simulate_controlled(problem, u, brownian);
    report.optimal = cost_J(problem, u, xu, brownian);

    auto fail = [&](const std::string& what) {
        report.all_passed = false;
        if (options.raise_on_violation) raise(ErrorCode::optimality_violated, what);
    };

    for (double eps : options.scales) {
        for (std::size_t p = 0; p < options.n_perturbations; ++p) {
            const PolynomialDirection zeta = PolynomialDirection::random(n, k, options.seed, p);
            const PerturbedControl v(u, zeta, eps);
            const ProcessEnsemble xv = simulate_controlled(problem, v, brownian);
            const CostEstimate jv = cost_J(problem, v, xv, brownian);
            const CostEstimate diff = paired_difference(jv, report.optimal);
            PerturbationCheck check;
            check.epsilon = eps;
            check.cost = jv.value;
            check.difference = diff.value;
            check.standard_error = diff.standard_error;
            check.passed = report.optimal.value <= jv.value + 3.0 * diff.standard_error;
            report.perturbations.push_back(check);
            if (!check.passed) {
                fail("perturbation " + std::to_string(p) + " at epsilon " + std::to_string(eps) + " lowers the cost by " +
                     std::to_string(-diff.value) + " (SE " + std::to_string(diff.standard_error) + ")");
            }
        }
    }

    const std::uint64_t pair_stream = 1u << 20;
    for (std::size_t q = 0; q < options.n_pairs; ++q) {
        const PolynomialDirection za = PolynomialDirection::random(n, k, options.seed, pair_stream + 2 * q);
        const PolynomialDirection zb = PolynomialDirection::random(n, k, options.seed, pair_stream + 2 * q + 1);
        const PerturbedControl va(u, za, 0.5);
        const PerturbedControl vb(u, zb, 0.5);
        const ProcessEnsemble xa = simulate_controlled(problem, va, brownian);
        const ProcessEnsemble xb = simulate_controlled(problem, vb, brownian);
        const OpenLoopControl wa(record_controls(problem, va, xa, brownian));
        const OpenLoopControl wb(record_controls(problem, vb, xb, brownian));
        ProcessEnsemble mid_values = wa.values();
        auto mid_data = mid_values.data();
        const auto b_data = wb.values().data();
        for (std::size_t j = 0; j < mid_data.size(); ++j) mid_data[j] = 0.5 * (mid_data[j] + b_data[j]);
        const OpenLoopControl wm(std::move(mid_values));
        const ProcessEnsemble xm = simulate_controlled(problem, wm, brownian);
        const CostEstimate ja = cost_J(problem, wa, xa, brownian);
        const CostEstimate jb = cost_J(problem, wb, xb, brownian);
        const CostEstimate jm = cost_J(problem, wm, xm, brownian);
        std::vector<double> gap(jm.per_path.size());
        for (std::size_t p = 0; p < gap.size(); ++p) gap[p] = jm.per_path[p] - 0.5 * (ja.per_path[p] + jb.per_path[p]);
        const CostEstimate g = summarize(std::move(gap));
        ConvexityCheck check;
        check.midpoint = jm.value;
        check.average = 0.5 * (ja.value + jb.value);
        check.standard_error = g.standard_error;
        check.passed = check.midpoint <= check.average + 3.0 * g.standard_error;
        report.convexity.push_back(check);
        if (!check.passed) fail("midpoint convexity fails for pair " + std::to_string(q));
    }

    const PolynomialDirection zeta0 = PolynomialDirection::random(n, k, options.seed, 0);
    const PerturbedControl v0(u, zeta0, 0.5);
    report.duality_residual = duality_residual(problem, adjoint, v0, brownian);
    return report;
}

RiccatiSolution riccati_reference(const LqProblem& problem)
{
    const TimeGrid& grid = problem.grid;
    if (!vanishes(problem.A, grid) || !vanishes(problem.D, grid)) {
        raise(ErrorCode::oracle_inapplicable, "Riccati reference needs A = 0 and D = 0");
    }
    const std::size_t sub = 10;
    const double dt = grid.step() / static_cast<double>(sub);
    auto rhs = [&](double t, const Eigen::MatrixXd& P) {
        const Eigen::MatrixXd C = problem.C.at(t);
        const Eigen::MatrixXd F = problem.F.at(t);
        const Eigen::MatrixXd S = problem.N.at(t) + F.transpose() * P * F;
        const Eigen::MatrixXd PC = P * C;
        return Eigen::MatrixXd(PC * S.llt().solve(PC.transpose()) - problem.R.at(t));
    };

    RiccatiSolution out;
    const std::size_t steps = grid.horizon_steps();
    out.times.resize(steps + 1);
    out.P.resize(steps + 1);
    Eigen::MatrixXd P = problem.Q;
    out.times[steps] = grid.time(grid.idxT());
    out.P[steps] = P;
    for (std::size_t s = steps; s-- > 0;) {
        const double t_hi = grid.time(grid.idx0() + s + 1);
        for (std::size_t j = 0; j < sub; ++j) {
            // Backward in time: dP/d(-t) = -rhs.
            const double t = t_hi - static_cast<double>(j) * dt;
            const Eigen::MatrixXd k1 = rhs(t, P);
            const Eigen::MatrixXd k2 = rhs(t - 0.5 * dt, P - 0.5 * dt * k1);
            const Eigen::MatrixXd k3 = rhs(t - 0.5 * dt, P - 0.5 * dt * k2);
            const Eigen::MatrixXd k4 = rhs(t - dt, P - dt * k3);
            P -= dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.times[s] = grid.time(grid.idx0() + s);
        out.P[s] = P;
    }
    const Eigen::VectorXd x0 = problem.rho.at(grid.idx0());
    out.cost = 0.5 * x0.dot(out.P[0] * x0);
    return out;
}

}  // namespace fbsfde
