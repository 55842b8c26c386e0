#include "fbsfde/gabsde.hpp"

#include <cmath>
#include <string>

#include "fbsfde/error.hpp"

namespace fbsfde {

namespace {

RowMatrix broadcast(const Eigen::VectorXd& v, std::size_t n_paths)
{
    return v.transpose().replicate(static_cast<Eigen::Index>(n_paths), 1);
}

bool anticipates(GeneratorKind kind)
{
    return kind != GeneratorKind::instantaneous;
}

// Weight applied to y_s (resp. vec z_s) inside the tail integral.
Eigen::MatrixXd weight_y(const GeneratorSpec& spec, double s)
{
    if (spec.kind == GeneratorKind::affine_adjoint) return spec.gy.at(s);
    return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(spec.m), static_cast<Eigen::Index>(spec.m));
}

Eigen::MatrixXd weight_z(const GeneratorSpec& spec, double s)
{
    if (spec.kind == GeneratorKind::affine_adjoint) return spec.gz.at(s);
    const auto md = static_cast<Eigen::Index>(spec.m * spec.d);
    return Eigen::MatrixXd::Identity(md, md);
}

// Everything after the tail sums: conditioning, g, x-coupling and forcing.
RowMatrix generator_values(const GeneratorSpec& spec, std::size_t i, const TimeGrid& grid, const TailIntegrals& tails,
                           const RowMatrix& y_next, const RowMatrix& z_next, const StepProjector& projector,
                           const ProcessEnsemble* x, const ProcessEnsemble* forcing)
{
    const double t = grid.time(i);
    const Eigen::RowVectorXd g0 = spec.g0.at(t).col(0).transpose();
    RowMatrix f;
    switch (spec.kind) {
    case GeneratorKind::instantaneous: {
        RowMatrix raw = y_next * spec.gy.at(t).transpose() + z_next * spec.gz.at(t).transpose();
        raw.rowwise() += g0;
        f = projector.fit(raw).fitted;
        break;
    }
    case GeneratorKind::f1: {
        RowMatrix stacked(tails.y.rows(), tails.y.cols() + tails.z.cols());
        stacked << tails.y, tails.z;
        const RowMatrix cond = projector.fit(stacked).fitted;
        f = cond.leftCols(tails.y.cols()) * spec.gy.at(t).transpose() +
            cond.rightCols(tails.z.cols()) * spec.gz.at(t).transpose();
        f.rowwise() += g0;
        break;
    }
    case GeneratorKind::f2: {
        RowMatrix raw = tails.y * spec.gy.at(t).transpose() + tails.z * spec.gz.at(t).transpose();
        raw.rowwise() += g0;
        f = projector.fit(raw).fitted;
        break;
    }
    case GeneratorKind::affine_adjoint: {
        f = projector.fit(RowMatrix(tails.y + tails.z)).fitted;
        f.rowwise() += g0;
        break;
    }
    }
    if (spec.n > 0) {
        if (!x || !x->covers(i)) raise(ErrorCode::range_mismatch, "x-coupled generator needs X at node " + std::to_string(i));
        f += x->slice(i) * spec.gx.at(t).transpose();
    }
    if (forcing) f += forcing->slice(i);
    return f;
}

}  // namespace

TerminalExtension TerminalExtension::constant(Eigen::VectorXd xi, Eigen::VectorXd eta)
{
    TerminalExtension out;
    out.m_ = static_cast<std::size_t>(xi.size());
    out.z_dim_ = static_cast<std::size_t>(eta.size());
    out.xi_ = [xi](std::size_t, const BrownianEnsemble& b, const ProcessEnsemble*) { return broadcast(xi, b.n_paths()); };
    out.eta_ = [eta](std::size_t, const BrownianEnsemble& b, const ProcessEnsemble*) {
        return broadcast(eta, b.n_paths());
    };
    return out;
}

TerminalExtension TerminalExtension::time_function(std::size_t m, std::size_t z_dim,
                                                   std::function<Eigen::VectorXd(double)> xi,
                                                   std::function<Eigen::VectorXd(double)> eta)
{
    TerminalExtension out;
    out.m_ = m;
    out.z_dim_ = z_dim;
    out.xi_ = [xi](std::size_t node, const BrownianEnsemble& b, const ProcessEnsemble*) {
        return broadcast(xi(b.grid().time(node)), b.n_paths());
    };
    out.eta_ = [eta](std::size_t node, const BrownianEnsemble& b, const ProcessEnsemble*) {
        return broadcast(eta(b.grid().time(node)), b.n_paths());
    };
    return out;
}

TerminalExtension TerminalExtension::path_map(std::size_t m, std::size_t z_dim, PathMap xi, PathMap eta)
{
    auto wrap = [](PathMap map, std::size_t width) {
        return [map = std::move(map), width](std::size_t, const BrownianEnsemble& b, const ProcessEnsemble* x) {
            const std::size_t iT = b.grid().idxT();
            RowMatrix out(static_cast<Eigen::Index>(b.n_paths()), static_cast<Eigen::Index>(width));
            const auto bT = b.values().slice(iT);
            Eigen::VectorXd x_row;
            for (std::size_t p = 0; p < b.n_paths(); ++p) {
                const auto row = static_cast<Eigen::Index>(p);
                if (x) x_row = x->slice(iT).row(row).transpose();
                const Eigen::VectorXd v = map(bT.row(row).transpose(), x_row);
                if (static_cast<std::size_t>(v.size()) != width) {
                    raise(ErrorCode::dimension_mismatch, "terminal path map returned the wrong dimension");
                }
                out.row(row) = v.transpose();
            }
            return out;
        };
    };
    TerminalExtension out;
    out.m_ = m;
    out.z_dim_ = z_dim;
    out.xi_ = wrap(std::move(xi), m);
    out.eta_ = wrap(std::move(eta), z_dim);
    return out;
}

RowMatrix TerminalExtension::xi(std::size_t node, const BrownianEnsemble& brownian, const ProcessEnsemble* x) const
{
    return xi_(node, brownian, x);
}

RowMatrix TerminalExtension::eta(std::size_t node, const BrownianEnsemble& brownian, const ProcessEnsemble* x) const
{
    return eta_(node, brownian, x);
}

GeneratorSpec GeneratorSpec::zero(std::size_t m, std::size_t d)
{
    GeneratorSpec g;
    g.m = m;
    g.d = d;
    const auto rows = static_cast<Eigen::Index>(m);
    g.gy = TimeMatrix::zero(rows, rows);
    g.gz = TimeMatrix::zero(rows, static_cast<Eigen::Index>(m * d));
    g.g0 = TimeMatrix::zero(rows, 1);
    g.gx = TimeMatrix::zero(rows, 0);
    return g;
}

void GeneratorSpec::validate() const
{
    const auto rows = static_cast<Eigen::Index>(m);
    auto require = [&](const TimeMatrix& a, Eigen::Index r, Eigen::Index c, const char* name) {
        if (a.rows() != r || a.cols() != c) {
            raise(ErrorCode::dimension_mismatch, std::string("generator ") + name + " must be " + std::to_string(r) +
                                                     "x" + std::to_string(c));
        }
    };
    if (m == 0 || d == 0) raise(ErrorCode::dimension_mismatch, "generator needs m >= 1 and d >= 1");
    require(gy, rows, rows, "gy");
    require(gz, rows, static_cast<Eigen::Index>(m * d), "gz");
    require(g0, rows, 1, "g0");
    require(gx, rows, static_cast<Eigen::Index>(n), "gx");
    if (lipschitz < 0.0) raise(ErrorCode::negative_lipschitz, "generator Lipschitz constant must be nonnegative");
    const double slope = std::sqrt(std::pow(gy.norm_bound(), 2) + std::pow(gz.norm_bound(), 2) +
                                   std::pow(gx.norm_bound(), 2));
    if (lipschitz + 1e-12 < slope) {
        raise(ErrorCode::invalid_argument, "generator Lipschitz constant " + std::to_string(lipschitz) +
                                               " is below its slope norm " + std::to_string(slope));
    }
}

TailIntegrals tail_integrals(const GeneratorSpec& spec, std::size_t i, const ProcessEnsemble& y,
                             const ProcessEnsemble& z)
{
    const TimeGrid& grid = y.grid();
    const std::size_t last = grid.last();
    for (std::size_t j = i + 1; j <= last; ++j) {
        if (!y.covers(j) || !z.covers(j)) {
            raise(ErrorCode::missing_future, "future value at node " + std::to_string(j) + " is not populated");
        }
    }
    const double h = grid.step();
    TailIntegrals out;
    const bool adjoint = spec.kind == GeneratorKind::affine_adjoint;
    if (adjoint) {
        out.y = RowMatrix::Zero(y.slice(i + 1).rows(), weight_y(spec, 0.0).rows());
        out.z = RowMatrix::Zero(z.slice(i + 1).rows(), weight_z(spec, 0.0).rows());
    } else {
        out.y = y.slice(i + 1) * (h * weight_y(spec, grid.time(i))).transpose();
        out.z = z.slice(i + 1) * (h * weight_z(spec, grid.time(i))).transpose();
    }
    for (std::size_t j = i + 1; j < last; ++j) {
        if (!adjoint || j > i + 1) out.y += y.slice(j) * (h * weight_y(spec, grid.time(j))).transpose();
        out.z += z.slice(j) * (h * weight_z(spec, grid.time(j))).transpose();
    }
    return out;
}

RowMatrix eval_anticipated_generator(const GeneratorSpec& spec, std::size_t i, const ProcessEnsemble& y,
                                     const ProcessEnsemble& z, const StepProjector& projector,
                                     const ProcessEnsemble* x, const ProcessEnsemble* forcing)
{
    spec.validate();
    if (!y.covers(i + 1) || !z.covers(i + 1)) {
        raise(ErrorCode::missing_future, "node " + std::to_string(i + 1) + " is not populated");
    }
    TailIntegrals tails;
    if (anticipates(spec.kind)) tails = tail_integrals(spec, i, y, z);
    return generator_values(spec, i, y.grid(), tails, RowMatrix(y.slice(i + 1)), RowMatrix(z.slice(i + 1)),
                            projector, x, forcing);
}

BackwardStep backward_step(const RowMatrix& y_next, const RowMatrix& f_value, const ConstSliceMap& increment,
                           double h, const StepProjector& projector)
{
    const Eigen::Index m = y_next.cols();
    const Eigen::Index d = increment.cols();
    if (f_value.rows() != y_next.rows() || f_value.cols() != m || increment.rows() != y_next.rows()) {
        raise(ErrorCode::dimension_mismatch, "backward step inputs are not aligned");
    }
    RowMatrix targets(y_next.rows(), 2 * m);
    targets << y_next, f_value;
    const Projection first = projector.fit(targets);

    BackwardStep out;
    out.y = first.fitted.leftCols(m) + h * first.fitted.rightCols(m);
    const RowMatrix centred = y_next - first.fitted.leftCols(m);
    RowMatrix z_target(y_next.rows(), m * d);
    for (Eigen::Index c = 0; c < d; ++c) {
        z_target.middleCols(c * m, m) = (centred.array().colwise() * (increment.col(c).array() / h)).matrix();
    }
    const Projection second = projector.fit(z_target);
    out.z = second.fitted;
    out.coefficients.resize(first.coefficients.rows(), m + m * d);
    out.coefficients << first.coefficients.leftCols(m) + h * first.coefficients.rightCols(m), second.coefficients;
    out.ahead.resize(first.coefficients.rows(), m + m * d);
    out.ahead << first.coefficients.leftCols(m), second.coefficients;
    const RowMatrix y_target = y_next + h * f_value;
    out.residual = (y_target - out.y).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(y_next.rows(), 1));
    return out;
}

BackwardSolution solve_gabsde(const GeneratorSpec& generator, const TerminalExtension& terminal,
                              const BrownianEnsemble& brownian, const ConditionalExpectationEngine& engine,
                              const GabsdeOptions& options)
{
    generator.validate();
    const TimeGrid& grid = brownian.grid();
    const double h = grid.step();
    const std::size_t n_paths = brownian.n_paths();
    const std::size_t m = generator.m;
    const std::size_t d = generator.d;
    if (h * generator.lipschitz >= 1.0) {
        raise(ErrorCode::stability_violation, "explicit backward step needs h*L < 1 (h*L = " +
                                                  std::to_string(h * generator.lipschitz) + ")");
    }
    if (brownian.dim() != d) raise(ErrorCode::dimension_mismatch, "generator d differs from Brownian dimension");
    if (terminal.y_dim() != m || terminal.z_dim() != m * d) {
        raise(ErrorCode::dimension_mismatch, "terminal extension dimensions differ from (m, m*d)");
    }
    if (options.x && (options.x->n_paths() != n_paths || !options.x->covers(grid.idx0()))) {
        raise(ErrorCode::dimension_mismatch, "state ensemble does not match the Brownian ensemble");
    }

    const FeatureSource features =
        options.x ? FeatureSource::for_state(brownian, *options.x) : FeatureSource::for_brownian(brownian);

    BackwardSolution out;
    out.y = ProcessEnsemble(grid, grid.idx0(), grid.last(), n_paths, m);
    out.z = ProcessEnsemble(grid, grid.idx0(), grid.last(), n_paths, m * d);
    for (std::size_t node = grid.idxT(); node <= grid.last(); ++node) {
        out.y.slice(node) = terminal.xi(node, brownian, options.x);
        out.z.slice(node) = terminal.eta(node, brownian, options.x);
    }
    if (options.terminal_value) {
        const RowMatrix& v = *options.terminal_value;
        if (static_cast<std::size_t>(v.rows()) != n_paths || static_cast<std::size_t>(v.cols()) != m) {
            raise(ErrorCode::dimension_mismatch, "terminal value must be paths x m");
        }
        out.y.slice(grid.idxT()) = v;
    }
    if (!out.y.all_finite() || !out.z.all_finite()) throw NonFiniteState(grid.idxT(), "terminal condition");

    out.policy = RegressionPolicy(grid, m, d);
    out.ahead = RegressionPolicy(grid, m, d);
    out.residuals.assign(grid.horizon_steps(), 0.0);

    // Running tails sum_{j=i+1}^{last-1} h W(t_j) v_j for the node being solved.
    const bool tails_needed = anticipates(generator.kind);
    TailIntegrals running;
    if (tails_needed) {
        running.y = RowMatrix::Zero(static_cast<Eigen::Index>(n_paths), weight_y(generator, 0.0).rows());
        running.z = RowMatrix::Zero(static_cast<Eigen::Index>(n_paths), weight_z(generator, 0.0).rows());
        for (std::size_t j = grid.idxT(); j < grid.last(); ++j) {
            running.y += out.y.slice(j) * (h * weight_y(generator, grid.time(j))).transpose();
            running.z += out.z.slice(j) * (h * weight_z(generator, grid.time(j))).transpose();
        }
    }

    for (std::size_t i = grid.idxT(); i-- > grid.idx0();) {
        const auto projector = engine.prepare(features, i);
        const RowMatrix y_next = out.y.slice(i + 1);
        const RowMatrix z_next = out.z.slice(i + 1);
        TailIntegrals tails;
        if (tails_needed) {
            const double t = grid.time(i);
            if (generator.kind == GeneratorKind::affine_adjoint) {
                tails.y = running.y;
                if (i + 1 < grid.last()) tails.y -= y_next * (h * weight_y(generator, grid.time(i + 1))).transpose();
                tails.z = running.z;
            } else {
                tails.y = running.y + y_next * (h * weight_y(generator, t)).transpose();
                tails.z = running.z + z_next * (h * weight_z(generator, t)).transpose();
            }
        }
        const RowMatrix f = generator_values(generator, i, grid, tails, y_next, z_next, *projector, options.x,
                                             options.generator_forcing);
        BackwardStep step = backward_step(y_next, f, brownian.increment(i), h, *projector);
        if (!step.y.allFinite() || !step.z.allFinite()) throw NonFiniteState(i, "backward sweep");
        out.y.slice(i) = step.y;
        out.z.slice(i) = step.z;
        out.residuals[i - grid.idx0()] = step.residual;
        if (projector->ill_conditioned()) ++out.ill_conditioned_steps;
        out.policy.set_step(i, StepMap{projector->basis(), std::move(step.coefficients)});
        out.ahead.set_step(i, StepMap{projector->basis(), std::move(step.ahead)});
        if (tails_needed && i > grid.idx0()) {
            const double t = grid.time(i);
            running.y += out.y.slice(i) * (h * weight_y(generator, t)).transpose();
            running.z += out.z.slice(i) * (h * weight_z(generator, t)).transpose();
        }
    }
    return out;
}

}  // namespace fbsfde
