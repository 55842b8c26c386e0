#include "fbsfde/oracles.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "fbsfde/error.hpp"
#include "fbsfde/lq.hpp"

namespace fbsfde {

namespace {

std::size_t steps_for(double length, double step, const char* what)
{
    if (!(step > 0.0)) raise(ErrorCode::invalid_argument, std::string(what) + ": fine step must be positive");
    const double ratio = length / step;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        raise(ErrorCode::non_divisible_horizon, std::string(what) + ": length is not a multiple of the fine step");
    }
    return static_cast<std::size_t>(rounded);
}

Eigen::VectorXd apply(const AffineMap& p, double t, const Eigen::VectorXd& arg)
{
    return p.slope.at(t) * arg + p.intercept.at(t).col(0);
}

bool zero_map(const AffineMap& p)
{
    return p.slope.is_zero() && p.intercept.is_zero();
}

// Composite Simpson on [a, b] with an even number of panels near `step`.
Eigen::VectorXd simpson(const std::function<Eigen::VectorXd(double)>& f, double a, double b, double step,
                        Eigen::Index dim)
{
    if (b <= a) return Eigen::VectorXd::Zero(dim);
    auto panels = static_cast<std::size_t>(std::ceil((b - a) / step));
    if (panels % 2 == 1) ++panels;
    panels = std::max<std::size_t>(panels, 2);
    const double dx = (b - a) / static_cast<double>(panels);
    Eigen::VectorXd sum = f(a) + f(b);
    for (std::size_t j = 1; j < panels; ++j) sum += (j % 2 == 1 ? 4.0 : 2.0) * f(a + static_cast<double>(j) * dx);
    return sum * dx / 3.0;
}

Eigen::MatrixXd tail_weight(const GeneratorSpec& spec, const TimeMatrix& w, double t, Eigen::Index dim)
{
    if (spec.kind == GeneratorKind::affine_adjoint) return w.at(t);
    return Eigen::MatrixXd::Identity(dim, dim);
}

}  // namespace

Eigen::VectorXd DeterministicPath::at(double t) const
{
    if (times.empty() || t < times.front() - 1e-12 || t > times.back() + 1e-12) {
        raise(ErrorCode::range_mismatch, "deterministic path queried outside its range");
    }
    const double dt = times.size() > 1 ? times[1] - times[0] : 1.0;
    const double pos = (t - times.front()) / dt;
    const auto j = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(pos))), times.size() - 1);
    if (j + 1 >= times.size()) return values.back();
    const double w = pos - static_cast<double>(j);
    return (1.0 - w) * values[j] + w * values[j + 1];
}

DeterministicPath integro_ode_rk4(const SfdeCoefficients& coeffs, const std::function<Eigen::VectorXd(double)>& rho,
                                  double M, double T, double fine_step)
{
    coeffs.validate();
    if (coeffs.coupling.active()) raise(ErrorCode::unsupported_kernel, "coupled coefficients have no deterministic oracle");
    for (const auto& column : coeffs.diffusion) {
        for (const auto& s : column) {
            if (!zero_map(s.inner())) raise(ErrorCode::unsupported_kernel, "oracle needs a vanishing diffusion");
        }
    }
    std::vector<const MemoryFunctionalSpec*> integrals_of_p;
    for (const auto& s : coeffs.drift) {
        if (s.kind() == MemoryKind::windowed_integral) {
            raise(ErrorCode::unsupported_kernel, "windowed memory has no auxiliary-state reduction");
        }
        if (s.kind() == MemoryKind::integral_of_p) integrals_of_p.push_back(&s);
    }

    const auto n = static_cast<Eigen::Index>(coeffs.n);
    const auto q = static_cast<Eigen::Index>(integrals_of_p.size());
    // State layout: x, int x, then one running integral per integral_of_p term.
    auto rhs = [&](double t, const Eigen::VectorXd& s) {
        const Eigen::VectorXd x = s.head(n);
        const Eigen::VectorXd I = s.segment(n, n);
        Eigen::VectorXd out(s.size());
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(n);
        Eigen::Index slot = 0;
        for (const auto& term : coeffs.drift) {
            switch (term.kind()) {
            case MemoryKind::integral_of_state: dx += apply(term.inner(), t, I); break;
            case MemoryKind::integral_of_p: dx += s.segment(2 * n + slot * n, n); ++slot; break;
            case MemoryKind::instantaneous: dx += apply(term.inner(), t, x); break;
            case MemoryKind::windowed_integral: break;
            }
        }
        out.head(n) = dx;
        out.segment(n, n) = x;
        for (Eigen::Index k = 0; k < q; ++k) out.segment(2 * n + k * n, n) = apply(integrals_of_p[k]->inner(), t, x);
        return out;
    };

    Eigen::VectorXd state(2 * n + q * n);
    state.head(n) = rho(0.0);
    state.segment(n, n) = simpson(rho, -M, 0.0, fine_step, n);
    for (Eigen::Index k = 0; k < q; ++k) {
        const AffineMap& p = integrals_of_p[k]->inner();
        state.segment(2 * n + k * n, n) = simpson([&](double r) { return apply(p, r, rho(r)); }, -M, 0.0, fine_step, n);
    }

    const std::size_t steps = steps_for(T, fine_step, "integro_ode_rk4");
    const double dt = T / static_cast<double>(steps);
    DeterministicPath out;
    out.times.reserve(steps + 1);
    out.values.reserve(steps + 1);
    out.times.push_back(0.0);
    out.values.push_back(state.head(n));
    for (std::size_t j = 0; j < steps; ++j) {
        const double t = static_cast<double>(j) * dt;
        const Eigen::VectorXd k1 = rhs(t, state);
        const Eigen::VectorXd k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1);
        const Eigen::VectorXd k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2);
        const Eigen::VectorXd k4 = rhs(t + dt, state + dt * k3);
        state += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.times.push_back(static_cast<double>(j + 1) * dt);
        out.values.push_back(state.head(n));
    }
    return out;
}

DeterministicPath ode_anticipated_backward(double T, double K, double fine_step)
{
    const std::size_t before = steps_for(T, fine_step, "ode_anticipated_backward");
    const std::size_t after = steps_for(K, fine_step, "ode_anticipated_backward");
    const double dt = fine_step;
    DeterministicPath out;
    out.times.resize(before + after + 1);
    out.values.assign(before + after + 1, Eigen::VectorXd::Ones(1));
    for (std::size_t j = 0; j < out.times.size(); ++j) out.times[j] = static_cast<double>(j) * dt;

    // In reversed time tau = T - t: dy/dtau = S, dS/dtau = y, S = int_t^{T+K} y.
    Eigen::Vector2d s(1.0, K);
    auto rhs = [](const Eigen::Vector2d& v) { return Eigen::Vector2d(v(1), v(0)); };
    for (std::size_t j = before; j-- > 0;) {
        const Eigen::Vector2d k1 = rhs(s);
        const Eigen::Vector2d k2 = rhs(s + 0.5 * dt * k1);
        const Eigen::Vector2d k3 = rhs(s + 0.5 * dt * k2);
        const Eigen::Vector2d k4 = rhs(s + dt * k3);
        s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.values[j] = Eigen::VectorXd::Constant(1, s(0));
    }
    return out;
}

BinomialDriver::BinomialDriver(const TimeGrid& grid) : grid_(grid), depth_(grid.horizon_steps())
{
    if (depth_ > max_depth) {
        raise(ErrorCode::depth_exceeded, "binomial depth " + std::to_string(depth_) + " exceeds " +
                                             std::to_string(max_depth));
    }
    if (depth_ == 0) raise(ErrorCode::invalid_argument, "binomial driver needs at least one step");
}

BrownianEnsemble BinomialDriver::ensemble() const
{
    const double s = std::sqrt(grid_.step());
    ProcessEnsemble increments(grid_, grid_.idx0(), grid_.last() - 1, n_paths(), 1);
    for (std::size_t step = 0; step < depth_; ++step) {
        auto slice = increments.slice(grid_.idx0() + step);
        for (std::size_t p = 0; p < n_paths(); ++p) slice(static_cast<Eigen::Index>(p), 0) = up(p, step) ? s : -s;
    }
    return BrownianEnsemble::from_increments(grid_, std::move(increments));
}

ProcessEnsemble TreeSolution::expand_y(const BinomialDriver& driver) const
{
    const TimeGrid& grid = driver.grid();
    ProcessEnsemble out(grid, grid.idx0(), grid.idxT(), driver.n_paths(), static_cast<std::size_t>(y[0].cols()));
    for (std::size_t level = 0; level <= driver.depth(); ++level) {
        auto slice = out.slice(grid.idx0() + level);
        for (std::size_t p = 0; p < driver.n_paths(); ++p) {
            slice.row(static_cast<Eigen::Index>(p)) = y[level].row(static_cast<Eigen::Index>(driver.node_of(p, level)));
        }
    }
    return out;
}

ProcessEnsemble TreeSolution::expand_z(const BinomialDriver& driver) const
{
    const TimeGrid& grid = driver.grid();
    ProcessEnsemble out(grid, grid.idx0(), grid.idxT(), driver.n_paths(), static_cast<std::size_t>(z[0].cols()));
    for (std::size_t level = 0; level <= driver.depth(); ++level) {
        auto slice = out.slice(grid.idx0() + level);
        for (std::size_t p = 0; p < driver.n_paths(); ++p) {
            slice.row(static_cast<Eigen::Index>(p)) = z[level].row(static_cast<Eigen::Index>(driver.node_of(p, level)));
        }
    }
    return out;
}

TreeSolution binomial_exact_backward(const BinomialDriver& driver, const GeneratorSpec& generator,
                                     const TerminalExtension& terminal)
{
    generator.validate();
    if (generator.n > 0) raise(ErrorCode::oracle_inapplicable, "tree oracle does not model x-coupled generators");
    if (generator.d != 1) raise(ErrorCode::oracle_inapplicable, "tree oracle drives a single Brownian column");
    const TimeGrid& grid = driver.grid();
    const double h = grid.step();
    const double sqrt_h = std::sqrt(h);
    const auto m = static_cast<Eigen::Index>(generator.m);
    const std::size_t depth = driver.depth();
    const BrownianEnsemble brownian = driver.ensemble();

    TreeSolution out;
    out.y.resize(depth + 1);
    out.z.resize(depth + 1);
    out.y[depth] = terminal.xi(grid.idxT(), brownian, nullptr);
    out.z[depth] = terminal.eta(grid.idxT(), brownian, nullptr);

    const bool anticipated = generator.kind != GeneratorKind::instantaneous;
    // U(node) = E[sum_{j >= level} h W(t_j) v_j | node], with actual node values.
    Eigen::MatrixXd uy = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(driver.n_paths()), m);
    Eigen::MatrixXd uz = uy;
    if (anticipated) {
        for (std::size_t node = grid.idxT(); node < grid.last(); ++node) {
            const double t = grid.time(node);
            uy += terminal.xi(node, brownian, nullptr) * (h * tail_weight(generator, generator.gy, t, m)).transpose();
            uz += terminal.eta(node, brownian, nullptr) * (h * tail_weight(generator, generator.gz, t, m)).transpose();
        }
    }

    for (std::size_t level = depth; level-- > 0;) {
        const double t = grid.time(grid.idx0() + level);
        const auto width = static_cast<Eigen::Index>(std::size_t{1} << level);
        const Eigen::MatrixXd& yc = out.y[level + 1];
        const Eigen::MatrixXd& zc = out.z[level + 1];
        Eigen::MatrixXd y(width, m);
        Eigen::MatrixXd z(width, m);
        Eigen::MatrixXd uy_next(width, m);
        Eigen::MatrixXd uz_next(width, m);
        const Eigen::MatrixXd wy = tail_weight(generator, generator.gy, t, m);
        const Eigen::MatrixXd wz = tail_weight(generator, generator.gz, t, m);
        const Eigen::MatrixXd wy_next = tail_weight(generator, generator.gy, t + h, m);
        const bool next_in_tail = grid.idx0() + level + 1 < grid.last();
        const Eigen::MatrixXd gy = generator.gy.at(t);
        const Eigen::MatrixXd gz = generator.gz.at(t);
        const Eigen::VectorXd g0 = generator.g0.at(t).col(0);
        for (Eigen::Index q = 0; q < width; ++q) {
            const Eigen::VectorXd down = yc.row(2 * q).transpose();
            const Eigen::VectorXd up = yc.row(2 * q + 1).transpose();
            const Eigen::VectorXd mean_y = 0.5 * (down + up);
            const Eigen::VectorXd mean_z = 0.5 * (zc.row(2 * q) + zc.row(2 * q + 1)).transpose();
            Eigen::VectorXd f;
            if (!anticipated) {
                f = gy * mean_y + gz * mean_z + g0;
            } else {
                const Eigen::VectorXd mean_uy = 0.5 * (uy.row(2 * q) + uy.row(2 * q + 1)).transpose();
                const Eigen::VectorXd mean_uz = 0.5 * (uz.row(2 * q) + uz.row(2 * q + 1)).transpose();
                if (generator.kind == GeneratorKind::affine_adjoint) {
                    // Exact discrete adjoint: Y from node l+2 on, Z from node l+1 on. The
                    // running sum holds node l+1 only when it precedes the last node.
                    f = mean_uy + mean_uz + g0;
                    if (next_in_tail) f -= h * wy_next * mean_y;
                } else {
                    const Eigen::VectorXd tail_y = h * wy * mean_y + mean_uy;
                    const Eigen::VectorXd tail_z = h * wz * mean_z + mean_uz;
                    f = gy * tail_y + gz * tail_z + g0;
                }
                uy_next.row(q) = (h * wy * (mean_y + h * f)).transpose() + mean_uy.transpose();
                uz_next.row(q) = mean_uz.transpose();
            }
            y.row(q) = (mean_y + h * f).transpose();
            z.row(q) = ((up - down) / (2.0 * sqrt_h)).transpose();
        }
        if (anticipated) {
            // z at this level enters the tails of shallower levels.
            for (Eigen::Index q = 0; q < width; ++q) uz_next.row(q) += (h * wz * z.row(q).transpose()).transpose();
            uy = std::move(uy_next);
            uz = std::move(uz_next);
        }
        out.y[level] = std::move(y);
        out.z[level] = std::move(z);
    }
    return out;
}

std::uint64_t fnv1a(std::string_view text)
{
    std::uint64_t hash = 14695981039346656037ull;
    for (const char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 1099511628211ull;
    }
    return hash;
}

std::vector<FixtureRecord> reference_fixtures()
{
    std::vector<FixtureRecord> out;

    {
        SfdeCoefficients cosh;
        cosh.n = 1;
        cosh.d = 1;
        cosh.drift.emplace_back(MemoryKind::integral_of_state, AffineMap::linear(Eigen::MatrixXd::Ones(1, 1)), 1.0);
        cosh.diffusion.resize(1);
        cosh.lipschitz = 1.0;
        const auto path = integro_ode_rk4(cosh, [](double) { return Eigen::VectorXd::Ones(1); }, 0.0, 1.0, 1e-3);
        out.push_back({"sfde.cosh.x1", "integro_ode_rk4;integral_of_state;slope=1;M=0;rho=1;T=1;step=1e-3",
                       path.values.back()(0)});
    }
    {
        SfdeCoefficients decay;
        decay.n = 1;
        decay.d = 1;
        decay.drift.emplace_back(MemoryKind::instantaneous, AffineMap::linear(-Eigen::MatrixXd::Ones(1, 1)), 1.0);
        decay.diffusion.resize(1);
        decay.lipschitz = 1.0;
        const auto path = integro_ode_rk4(decay, [](double) { return Eigen::VectorXd::Ones(1); }, 0.0, 1.0, 1e-3);
        out.push_back({"sfde.decay.x1", "integro_ode_rk4;instantaneous;slope=-1;M=0;rho=1;T=1;step=1e-3",
                       path.values.back()(0)});
    }
    {
        const auto path = ode_anticipated_backward(1.0, 0.5, 1e-3);
        out.push_back({"gabsde.anticipated.y0", "ode_anticipated_backward;T=1;K=0.5;step=1e-3", path.values.front()(0)});
    }
    {
        const TimeGrid grid = build_time_grid(0.0, 1.0, 0.0, 0.5);
        const BinomialDriver driver(grid);
        const auto terminal = TerminalExtension::path_map(
            1, 1, [](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return b; },
            [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::VectorXd::Ones(1); });
        const TreeSolution tree = binomial_exact_backward(driver, GeneratorSpec::zero(1, 1), terminal);
        out.push_back({"gabsde.martingale_tree.y0", "binomial;depth=2;f=0;xi=B_T", tree.y[0](0, 0)});
        out.push_back({"gabsde.martingale_tree.z0", "binomial;depth=2;f=0;xi=B_T", tree.z[0](0, 0)});
    }
    {
        const TimeGrid grid = build_time_grid(0.0, 1.0, 0.25, 0.125);
        const BinomialDriver driver(grid);
        GeneratorSpec g = GeneratorSpec::zero(1, 1);
        g.kind = GeneratorKind::f1;
        g.gy = TimeMatrix::scalar(0.5);
        g.gz = TimeMatrix::scalar(0.25);
        g.g0 = TimeMatrix::scalar(0.1);
        g.lipschitz = std::sqrt(0.5 * 0.5 + 0.25 * 0.25);
        const auto terminal = TerminalExtension::path_map(
            1, 1, [](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return Eigen::VectorXd(b.array().sin()); },
            [](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return Eigen::VectorXd(b.array().cos()); });
        const TreeSolution tree = binomial_exact_backward(driver, g, terminal);
        out.push_back({"gabsde.f1_tree.y0",
                       "binomial;depth=8;h=0.125;K=0.25;f1;gy=0.5;gz=0.25;g0=0.1;xi=sin(B_T);eta=cos(B_T)",
                       tree.y[0](0, 0)});
    }
    {
        const TimeGrid grid = build_time_grid(0.0, 1.0, 1.0 / 64.0, 1.0 / 64.0);
        LqProblem p{grid,
                    TimeMatrix::scalar(0.0),
                    TimeMatrix::scalar(1.0),
                    TimeMatrix::scalar(0.0),
                    TimeMatrix::scalar(0.0),
                    TimeMatrix::scalar(1.0),
                    TimeMatrix::scalar(1.0),
                    Eigen::MatrixXd::Zero(1, 1),
                    InitialSegment::constant(grid, Eigen::VectorXd::Ones(1))};
        p.validate();
        const RiccatiSolution r = riccati_reference(p);
        out.push_back({"lq.memoryless.P0", "riccati;A=0;C=1;D=0;F=0;R=1;N=1;Q=0;T=1;h=1/64", r.P[0](0, 0)});
        out.push_back({"lq.memoryless.cost", "riccati;A=0;C=1;D=0;F=0;R=1;N=1;Q=0;T=1;h=1/64;x0=1", r.cost});
    }
    return out;
}

std::string format_fixtures(const std::vector<FixtureRecord>& records)
{
    std::string out;
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%s, %016llx, %.17g\n", r.name.c_str(),
                      static_cast<unsigned long long>(fnv1a(r.input)), r.value);
        out += line;
    }
    return out;
}

}  // namespace fbsfde
