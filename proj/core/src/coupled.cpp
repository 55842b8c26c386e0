#include "fbsfde/coupled.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fbsfde/error.hpp"

namespace fbsfde {

namespace {

double spectral_norm(const Eigen::MatrixXd& a)
{
    if (a.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
}

MemoryFunctionalSpec scaled(const MemoryFunctionalSpec& s, double e)
{
    return {s.kind(), AffineMap{s.inner().slope.scaled(e), s.inner().intercept.scaled(e)}, e * s.lipschitz()};
}

// Placement of an (n x m) block acting on column c of vec(z).
TimeMatrix column_block(const Eigen::MatrixXd& block, std::size_t c, std::size_t d)
{
    const Eigen::Index m = block.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(block.rows(), m * static_cast<Eigen::Index>(d));
    out.middleCols(static_cast<Eigen::Index>(c) * m, m) = block;
    return TimeMatrix(std::move(out));
}

double squared_parts(const ProcessEnsemble* x, const ProcessEnsemble* y, const ProcessEnsemble* z,
                     const TimeGrid& grid, double theta)
{
    double total = 0.0;
    if (x) {
        total += weighted_l2_norm_squared(*x, {theta, WeightSign::decay, 0, grid.idxT()});
        total += std::exp(-theta * grid.horizon()) * x->slice(grid.idxT()).squaredNorm() /
                 static_cast<double>(x->n_paths());
    }
    if (y) total += weighted_l2_norm_squared(*y, {theta, WeightSign::decay, grid.idx0(), grid.last()});
    if (z) total += weighted_l2_norm_squared(*z, {theta, WeightSign::decay, grid.idx0(), grid.last()});
    return total;
}

double solution_norm(const FbsfdeSolution& s, double theta)
{
    return std::sqrt(squared_parts(&s.x, &s.backward.y, &s.backward.z, s.x.grid(), theta));
}

// Functional term of the forward coefficients at node i on a deterministic past segment.
Eigen::VectorXd functional_value(const MemoryFunctionalSpec& s, const TimeGrid& grid, std::size_t i,
                                 const Eigen::MatrixXd& past, const Eigen::VectorXd& x)
{
    const double h = grid.step();
    const double t = grid.time(i);
    auto inner = [&](double time, const Eigen::VectorXd& arg) -> Eigen::VectorXd {
        return s.inner().slope.at(time) * arg + s.inner().intercept.at(time).col(0);
    };
    switch (s.kind()) {
    case MemoryKind::integral_of_state: {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(past.cols());
        for (std::size_t j = 0; j < i; ++j) acc += h * past.row(static_cast<Eigen::Index>(j)).transpose();
        return inner(t, acc);
    }
    case MemoryKind::integral_of_p: {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.dim());
        for (std::size_t j = 0; j < i; ++j) acc += h * inner(grid.time(j), past.row(static_cast<Eigen::Index>(j)).transpose());
        return acc;
    }
    case MemoryKind::windowed_integral: {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(past.cols());
        for (std::size_t j = i - grid.memory_steps(); j < i; ++j) acc += h * past.row(static_cast<Eigen::Index>(j)).transpose();
        return inner(t, acc);
    }
    case MemoryKind::instantaneous:
        return inner(t, x);
    }
    return {};
}

}  // namespace

MonotoneStructure::MonotoneStructure(Eigen::MatrixXd G, double lambda1, double lambda2, double mu)
    : G_(std::move(G)), lambda1_(lambda1), lambda2_(lambda2), mu_(mu)
{
    if (G_.size() == 0) raise(ErrorCode::invalid_structure, "G must be non-empty");
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(G_).singularValues();
    const auto rank = (s.array() > 1e-10 * s(0)).count();
    if (s(0) == 0.0 || rank != std::min(G_.rows(), G_.cols())) raise(ErrorCode::invalid_structure, "G is not full rank");
    if (lambda1 < 0.0 || lambda2 < 0.0 || mu < 0.0) {
        raise(ErrorCode::invalid_structure, "lambda1, lambda2 and mu must be nonnegative");
    }
    if (!(lambda1 + lambda2 > 0.0)) raise(ErrorCode::invalid_structure, "need lambda1 + lambda2 > 0");
    if (!(lambda2 + mu > 0.0)) raise(ErrorCode::invalid_structure, "need lambda2 + mu > 0");
    const Eigen::Index m = G_.rows();
    const Eigen::Index n = G_.cols();
    if (m > n && !(lambda1 > 0.0 && mu > 0.0)) raise(ErrorCode::invalid_structure, "m > n needs lambda1 > 0 and mu > 0");
    if (n > m && !(lambda2 > 0.0)) raise(ErrorCode::invalid_structure, "n > m needs lambda2 > 0");
}

RowMatrix TerminalMap::apply(const Eigen::Ref<const RowMatrix>& x) const
{
    RowMatrix out = x * slope.transpose();
    out.rowwise() += intercept.transpose();
    return out;
}

void FbsfdeSystem::validate() const
{
    forward.validate();
    backward.validate();
    const std::size_t n = forward.n;
    const std::size_t m = backward.m;
    const std::size_t d = forward.d;
    if (backward.d != d) raise(ErrorCode::dimension_mismatch, "forward and backward disagree on d");
    if (forward.coupling.active() && (forward.coupling.y_dim != m || forward.coupling.z_dim != m * d)) {
        raise(ErrorCode::dimension_mismatch, "forward coupling must read (y, vec z) of dims (m, m*d)");
    }
    if (backward.n != 0 && backward.n != n) raise(ErrorCode::dimension_mismatch, "generator x-coupling must have dim n");
    if (static_cast<std::size_t>(phi.slope.rows()) != m || static_cast<std::size_t>(phi.slope.cols()) != n ||
        static_cast<std::size_t>(phi.intercept.size()) != m) {
        raise(ErrorCode::dimension_mismatch, "terminal map must be m x n with an m-vector intercept");
    }
    if (phi.lipschitz + 1e-12 < spectral_norm(phi.slope)) {
        raise(ErrorCode::invalid_argument, "terminal map Lipschitz constant is below its slope norm");
    }
    if (static_cast<std::size_t>(structure.G().rows()) != m || static_cast<std::size_t>(structure.G().cols()) != n) {
        raise(ErrorCode::dimension_mismatch, "G must be m x n");
    }
    if (static_cast<std::size_t>(rho.dim()) != n) raise(ErrorCode::dimension_mismatch, "initial segment must have dim n");
    if (extension.y_dim() != m || extension.z_dim() != m * d) {
        raise(ErrorCode::dimension_mismatch, "terminal extension must have dims (m, m*d)");
    }
}

FbsfdeSystem system_at_epsilon(const FbsfdeSystem& base, double epsilon)
{
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) raise(ErrorCode::invalid_argument, "epsilon must lie in [0, 1]");
    base.validate();
    const double e = epsilon;
    const double w = 1.0 - epsilon;
    const std::size_t n = base.n();
    const std::size_t m = base.m();
    const std::size_t d = base.d();
    const Eigen::MatrixXd& G = base.structure.G();
    const double g_norm = spectral_norm(G);
    const double l1 = base.structure.lambda1();
    const double l2 = base.structure.lambda2();

    FbsfdeSystem out = base;
    SfdeCoefficients& fwd = out.forward;
    fwd.drift.clear();
    for (const auto& s : base.forward.drift) fwd.drift.push_back(scaled(s, e));
    for (std::size_t c = 0; c < d; ++c) {
        fwd.diffusion[c].clear();
        for (const auto& s : base.forward.diffusion[c]) fwd.diffusion[c].push_back(scaled(s, e));
    }
    const YzCoupling& bc = base.forward.coupling;
    YzCoupling c = bc.active() ? bc : YzCoupling::none(n, d, m, m * d);
    c.drift_y = c.drift_y.scaled(e) + TimeMatrix(Eigen::MatrixXd(-w * l2 * G.transpose()));
    c.drift_z = c.drift_z.scaled(e);
    for (std::size_t col = 0; col < d; ++col) {
        c.diffusion_y[col] = c.diffusion_y[col].scaled(e);
        c.diffusion_z[col] = c.diffusion_z[col].scaled(e) + column_block(-w * l2 * G.transpose(), col, d);
    }
    fwd.coupling = std::move(c);
    fwd.lipschitz = e * base.forward.lipschitz + w * l2 * g_norm;

    GeneratorSpec& gen = out.backward;
    gen.gy = base.backward.gy.scaled(e);
    gen.gz = base.backward.gz.scaled(e);
    gen.g0 = base.backward.g0.scaled(e);
    const TimeMatrix gx = base.backward.n == 0 ? TimeMatrix::zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n))
                                               : base.backward.gx;
    gen.gx = gx.scaled(e) + TimeMatrix(Eigen::MatrixXd(w * l1 * G));
    gen.n = n;
    gen.lipschitz = e * base.backward.lipschitz + w * l1 * g_norm;

    out.phi.slope = e * base.phi.slope + w * G;
    out.phi.intercept = e * base.phi.intercept;
    out.phi.lipschitz = e * base.phi.lipschitz + w * g_norm;
    return out;
}

Eigen::VectorXd assemble_A(const FbsfdeSystem& system, const TimeGrid& grid, const PointArguments& u)
{
    const std::size_t n = system.n();
    const std::size_t m = system.m();
    const std::size_t d = system.d();
    const auto ni = static_cast<Eigen::Index>(n);
    const auto mi = static_cast<Eigen::Index>(m);
    const auto di = static_cast<Eigen::Index>(d);
    if (u.x.size() != ni || u.y.size() != mi || u.z.size() != mi * di) {
        raise(ErrorCode::dimension_mismatch, "point (x, y, z) must have dims (n, m, m*d)");
    }
    if (u.i < grid.idx0() || u.i >= grid.idxT()) raise(ErrorCode::range_mismatch, "point must lie in [0, T)");
    if (u.past.rows() != static_cast<Eigen::Index>(u.i + 1) || u.past.cols() != ni) {
        raise(ErrorCode::dimension_mismatch, "past segment must cover nodes [0, i] with n columns");
    }
    const auto future_rows = static_cast<Eigen::Index>(grid.last() - u.i + 1);
    const GeneratorSpec& gen = system.backward;
    const bool anticipated = gen.kind != GeneratorKind::instantaneous;
    if (anticipated && (u.future_y.rows() != future_rows || u.future_y.cols() != mi ||
                        u.future_z.rows() != future_rows || u.future_z.cols() != mi * di)) {
        raise(ErrorCode::dimension_mismatch, "future segments must cover nodes [i, last]");
    }

    const double t = grid.time(u.i);
    const double h = grid.step();
    Eigen::VectorXd f;
    if (!anticipated) {
        f = gen.gy.at(t) * u.y + gen.gz.at(t) * u.z + gen.g0.at(t).col(0);
    } else {
        Eigen::VectorXd ty = Eigen::VectorXd::Zero(mi);
        Eigen::VectorXd tz = Eigen::VectorXd::Zero(gen.kind == GeneratorKind::affine_adjoint ? mi : mi * di);
        for (Eigen::Index r = 0; r + 1 < future_rows; ++r) {
            const double s = grid.time(u.i + static_cast<std::size_t>(r));
            if (gen.kind == GeneratorKind::affine_adjoint) {
                ty += h * gen.gy.at(s) * u.future_y.row(r).transpose();
                tz += h * gen.gz.at(s) * u.future_z.row(r).transpose();
            } else {
                ty += h * u.future_y.row(r).transpose();
                tz += h * u.future_z.row(r).transpose();
            }
        }
        if (gen.kind == GeneratorKind::affine_adjoint) {
            f = ty + tz + gen.g0.at(t).col(0);
        } else {
            f = gen.gy.at(t) * ty + gen.gz.at(t) * tz + gen.g0.at(t).col(0);
        }
    }
    if (gen.n > 0) f += gen.gx.at(t) * u.x;

    const SfdeCoefficients& fwd = system.forward;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(ni);
    for (const auto& s : fwd.drift) b += functional_value(s, grid, u.i, u.past, u.x);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(ni, di);
    for (std::size_t c = 0; c < d; ++c) {
        for (const auto& s : fwd.diffusion[c]) sigma.col(static_cast<Eigen::Index>(c)) += functional_value(s, grid, u.i, u.past, u.x);
    }
    if (fwd.coupling.active()) {
        b += fwd.coupling.drift_y.at(t) * u.y + fwd.coupling.drift_z.at(t) * u.z;
        for (std::size_t c = 0; c < d; ++c) {
            sigma.col(static_cast<Eigen::Index>(c)) +=
                fwd.coupling.diffusion_y[c].at(t) * u.y + fwd.coupling.diffusion_z[c].at(t) * u.z;
        }
    }

    const Eigen::MatrixXd& G = system.structure.G();
    Eigen::VectorXd out(ni + mi + mi * di);
    out.head(ni) = -G.transpose() * f;
    out.segment(ni, mi) = G * b;
    const Eigen::MatrixXd g_sigma = G * sigma;
    out.tail(mi * di) = Eigen::Map<const Eigen::VectorXd>(g_sigma.data(), mi * di);
    return out;
}

MonotonicityReport check_monotonicity(const FbsfdeSystem& system, const TimeGrid& grid, const SamplerConfig& sampler,
                                      std::size_t n_trials)
{
    system.validate();
    const auto ni = static_cast<Eigen::Index>(system.n());
    const auto mi = static_cast<Eigen::Index>(system.m());
    const auto di = static_cast<Eigen::Index>(system.d());
    const Eigen::MatrixXd& G = system.structure.G();
    const double l1 = system.structure.lambda1();
    const double l2 = system.structure.lambda2();
    const double mu = system.structure.mu();

    MonotonicityReport report;
    report.worst_margin = std::numeric_limits<double>::infinity();
    report.note =
        "pointwise sufficient form only: pairs share their past and future segments except at the current node; "
        "satisfying it does not establish the integral condition";

    for (std::size_t trial = 0; trial < std::max<std::size_t>(n_trials, 1); ++trial) {
        std::uint64_t counter = 0;
        auto draw = [&] { return sampler.scale * counter_normal(sampler.seed, trial, counter++); };
        auto vec = [&](Eigen::Index len) {
            Eigen::VectorXd v(len);
            for (Eigen::Index k = 0; k < len; ++k) v(k) = draw();
            return v;
        };
        auto mat = [&](Eigen::Index rows, Eigen::Index cols) {
            Eigen::MatrixXd a(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = draw();
            }
            return a;
        };
        const std::size_t span = grid.idxT() - grid.idx0();
        const std::size_t i = grid.idx0() + trial % span;
        const auto future_rows = static_cast<Eigen::Index>(grid.last() - i + 1);

        PointArguments a;
        a.i = i;
        a.x = vec(ni);
        a.y = vec(mi);
        a.z = vec(mi * di);
        a.past = mat(static_cast<Eigen::Index>(i + 1), ni);
        a.future_y = mat(future_rows, mi);
        a.future_z = mat(future_rows, mi * di);
        PointArguments b = a;
        b.x = vec(ni);
        b.y = vec(mi);
        b.z = vec(mi * di);
        a.past.row(static_cast<Eigen::Index>(i)) = a.x.transpose();
        b.past.row(static_cast<Eigen::Index>(i)) = b.x.transpose();
        a.future_y.row(0) = a.y.transpose();
        b.future_y.row(0) = b.y.transpose();
        a.future_z.row(0) = a.z.transpose();
        b.future_z.row(0) = b.z.transpose();

        const Eigen::VectorXd dA = assemble_A(system, grid, a) - assemble_A(system, grid, b);
        Eigen::VectorXd du(ni + mi + mi * di);
        du << a.x - b.x, a.y - b.y, a.z - b.z;
        const double lhs = dA.dot(du);
        const Eigen::VectorXd gx = G * (a.x - b.x);
        double gz2 = 0.0;
        const Eigen::VectorXd dz = a.z - b.z;
        for (Eigen::Index c = 0; c < di; ++c) gz2 += (G.transpose() * dz.segment(c * mi, mi)).squaredNorm();
        const double bound = -l1 * gx.squaredNorm() - l2 * ((G.transpose() * (a.y - b.y)).squaredNorm() + gz2);
        const double margin_a = bound - lhs;

        const Eigen::VectorXd dphi = system.phi.slope * (a.x - b.x);
        const double margin_phi = dphi.dot(gx) - mu * gx.squaredNorm();

        const double margin = std::min(margin_a, margin_phi);
        const double scale = 1.0 + std::abs(lhs) + std::abs(bound) + std::abs(dphi.dot(gx));
        if (margin < report.worst_margin) {
            report.worst_margin = margin;
            if (margin < -1e-10 * scale) {
                report.status = MonotonicityStatus::violated;
                report.witness = std::make_pair(a, b);
            }
        }
    }
    return report;
}

double composite_distance(const FbsfdeSolution& a, const FbsfdeSolution& b, double theta)
{
    const ProcessEnsemble dx = difference(a.x, b.x);
    const ProcessEnsemble dy = difference(a.backward.y, b.backward.y);
    const ProcessEnsemble dz = difference(a.backward.z, b.backward.z);
    return std::sqrt(squared_parts(&dx, &dy, &dz, a.x.grid(), theta));
}

FbsfdeSolution solve_picard(const ContinuationProblem& problem, const BrownianEnsemble& brownian,
                            const ConditionalExpectationEngine& engine, const PicardOptions& options)
{
    if (!problem.base) raise(ErrorCode::invalid_argument, "continuation problem has no base system");
    if (options.max_iter == 0) raise(ErrorCode::invalid_argument, "max_iter must be positive");
    if (!(options.relaxation > 0.0 && options.relaxation <= 1.0)) {
        raise(ErrorCode::invalid_argument, "relaxation must lie in (0, 1]");
    }
    const FbsfdeSystem sys = system_at_epsilon(*problem.base, problem.epsilon);
    const TimeGrid& grid = brownian.grid();
    if (!(sys.rho.grid() == grid)) raise(ErrorCode::dimension_mismatch, "initial segment grid differs from Brownian grid");
    const std::size_t n_paths = brownian.n_paths();
    if (problem.zeta.size() != 0 && (static_cast<std::size_t>(problem.zeta.rows()) != n_paths ||
                                      static_cast<std::size_t>(problem.zeta.cols()) != sys.m())) {
        raise(ErrorCode::dimension_mismatch, "zeta must be paths x m");
    }
    const double theta = options.theta.value_or(theta_star(std::max(sys.forward.lipschitz, sys.backward.lipschitz)));
    const double w = options.relaxation;

    SimulationOptions sim;
    sim.drift_forcing = problem.phi.empty() ? nullptr : &problem.phi;
    sim.diffusion_forcing = problem.varphi.empty() ? nullptr : &problem.varphi;
    const ConstantCoupling zero = ConstantCoupling::zero(sys.m(), sys.d());

    FbsfdeSolution prev;
    bool have_prev = false;
    if (options.warm_start) {
        prev = *options.warm_start;
        have_prev = true;
    }
    std::vector<double> history;
    std::vector<double> weighted;
    bool converged = false;
    std::size_t k = 0;
    for (k = 1; k <= options.max_iter; ++k) {
        const RegressionPolicy& feed = sys.predictive_coupling ? prev.backward.ahead : prev.backward.policy;
        sim.coupling = have_prev ? static_cast<const CouplingSource*>(&feed) : &zero;
        ProcessEnsemble x = simulate_sfde(sys.forward, sys.rho, brownian, sim);
        if (w < 1.0 && have_prev) {
            for (std::size_t i = grid.idx0() + 1; i <= grid.idxT(); ++i) {
                x.slice(i) = w * x.slice(i) + (1.0 - w) * prev.x.slice(i);
            }
        }
        RowMatrix terminal = sys.phi.apply(x.slice(grid.idxT()));
        if (problem.zeta.size() != 0) terminal += problem.zeta;
        GabsdeOptions back;
        back.x = &x;
        back.generator_forcing = problem.psi.empty() ? nullptr : &problem.psi;
        back.terminal_value = &terminal;
        FbsfdeSolution cur;
        cur.backward = solve_gabsde(sys.backward, sys.extension, brownian, engine, back);
        cur.x = std::move(x);
        cur.terminal_residual = (cur.backward.y.slice(grid.idxT()) - terminal).squaredNorm() / static_cast<double>(n_paths);

        const double diff = have_prev ? composite_distance(cur, prev, 0.0) : solution_norm(cur, 0.0);
        const double wdiff = have_prev ? composite_distance(cur, prev, theta) : solution_norm(cur, theta);
        history.push_back(diff);
        weighted.push_back(wdiff);
        prev = std::move(cur);
        have_prev = true;
        if (diff < options.tol) {
            converged = true;
            break;
        }
        if (!std::isfinite(diff) || (history.front() > 0.0 && diff > 1e6 * history.front())) break;
    }
    prev.iterations = std::min(k, options.max_iter);
    prev.history = history;
    prev.weighted_history = weighted;
    prev.converged = converged;
    prev.epsilon = problem.epsilon;
    prev.schedule = {problem.epsilon};
    if (!converged && options.on_nonconvergence == OnNonConvergence::raise) {
        throw NonConvergence(history, "Picard iteration at epsilon = " + std::to_string(problem.epsilon) +
                                          " did not reach tol " + std::to_string(options.tol) + " in " +
                                          std::to_string(prev.iterations) + " iterations");
    }
    return prev;
}

FbsfdeSolution solve_picard(const FbsfdeSystem& system, const BrownianEnsemble& brownian,
                            const ConditionalExpectationEngine& engine, const PicardOptions& options)
{
    ContinuationProblem problem;
    problem.base = &system;
    problem.epsilon = 1.0;
    return solve_picard(problem, brownian, engine, options);
}

FbsfdeSolution solve_continuation(const FbsfdeSystem& system, const BrownianEnsemble& brownian,
                                  const ConditionalExpectationEngine& engine, const ContinuationOptions& options)
{
    std::vector<double> schedule = options.schedule;
    if (schedule.empty()) {
        for (int k = 0; k <= 8; ++k) schedule.push_back(k / 8.0);
    }
    if (schedule.front() != 0.0 || schedule.back() != 1.0) {
        raise(ErrorCode::invalid_argument, "continuation schedule must run from 0 to 1");
    }
    for (std::size_t k = 1; k < schedule.size(); ++k) {
        if (!(schedule[k] > schedule[k - 1])) raise(ErrorCode::invalid_argument, "continuation schedule must increase");
    }

    PicardOptions picard = options.picard;
    picard.on_nonconvergence = OnNonConvergence::raise;
    ContinuationProblem problem;
    problem.base = &system;
    problem.epsilon = 0.0;
    picard.warm_start = nullptr;
    FbsfdeSolution current = solve_picard(problem, brownian, engine, picard);
    std::vector<double> refined{0.0};
    std::size_t total_iterations = current.iterations;

    double eps = 0.0;
    for (std::size_t k = 1; k < schedule.size(); ++k) {
        const double target = schedule[k];
        double step = target - eps;
        while (eps < target) {
            step = std::min(step, target - eps);
            problem.epsilon = eps + step;
            picard.warm_start = &current;
            try {
                FbsfdeSolution next = solve_picard(problem, brownian, engine, picard);
                total_iterations += next.iterations;
                current = std::move(next);
                eps = problem.epsilon;
                refined.push_back(eps);
            } catch (const NonConvergence&) {
                step /= 2.0;
            } catch (const NonFiniteState&) {
                step /= 2.0;
            }
            if (step < options.min_step) {
                raise(ErrorCode::step_underflow, "continuation step fell below " + std::to_string(options.min_step) +
                                                     " at epsilon = " + std::to_string(eps));
            }
        }
    }
    current.schedule = std::move(refined);
    current.iterations = total_iterations;
    return current;
}

}  // namespace fbsfde
