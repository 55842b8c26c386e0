#include "fbsfde/sfde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fbsfde/error.hpp"
#include "fbsfde/parallel.hpp"

namespace fbsfde {

namespace {

void require_shape(const TimeMatrix& m, Eigen::Index rows, Eigen::Index cols, const char* what)
{
    if (m.rows() != rows || m.cols() != cols) {
        raise(ErrorCode::dimension_mismatch, std::string(what) + " must be " + std::to_string(rows) + "x" +
                                                 std::to_string(cols) + ", got " + std::to_string(m.rows()) +
                                                 "x" + std::to_string(m.cols()));
    }
}

// p(t, arg) for every path row of arg.
RowMatrix apply_inner(const AffineMap& p, double t, const RowMatrix& arg)
{
    RowMatrix out = arg * p.slope.at(t).transpose();
    out.rowwise() += p.intercept.at(t).col(0).transpose();
    return out;
}

// Running state of every path functional in a coefficient set. The argument
// path is absorbed one node at a time so node i only ever sees nodes <= i.
class CoefficientEvaluator {
public:
    CoefficientEvaluator(const SfdeCoefficients& coeffs, const TimeGrid& grid, std::size_t n_paths)
        : coeffs_(coeffs), grid_(grid),
          prefix_(grid, 0, grid.idxT(), n_paths, coeffs.n)
    {
        auto add_slot = [&](const MemoryFunctionalSpec& spec) {
            if (spec.kind() == MemoryKind::integral_of_p) {
                accumulators_.push_back(RowMatrix::Zero(static_cast<Eigen::Index>(n_paths), spec.dim()));
            }
        };
        for (const auto& s : coeffs.drift) add_slot(s);
        for (const auto& column : coeffs.diffusion) {
            for (const auto& s : column) add_slot(s);
        }
    }

    /// Running integral of the argument from -M, valid up to the last absorbed node + 1.
    const ProcessEnsemble& prefix() const noexcept { return prefix_; }

    /// Drift and diffusion columns at node i; arg is the argument at node i.
    void evaluate(std::size_t i, const RowMatrix& arg, RowMatrix& drift, std::vector<RowMatrix>& diffusion) const
    {
        std::size_t slot = 0;
        const auto n = static_cast<Eigen::Index>(coeffs_.n);
        drift = RowMatrix::Zero(arg.rows(), n);
        for (const auto& s : coeffs_.drift) drift += term(s, i, arg, slot);
        diffusion.resize(coeffs_.d);
        for (std::size_t c = 0; c < coeffs_.d; ++c) {
            diffusion[c] = RowMatrix::Zero(arg.rows(), n);
            for (const auto& s : coeffs_.diffusion[c]) diffusion[c] += term(s, i, arg, slot);
        }
    }

    void absorb(std::size_t i, const RowMatrix& arg)
    {
        const double h = grid_.step();
        const double t = grid_.time(i);
        if (i + 1 <= prefix_.last()) prefix_.slice(i + 1) = prefix_.slice(i) + h * arg;
        std::size_t slot = 0;
        auto update = [&](const MemoryFunctionalSpec& s) {
            if (s.kind() == MemoryKind::integral_of_p) {
                accumulators_[slot] += h * apply_inner(s.inner(), t, arg);
                ++slot;
            }
        };
        for (const auto& s : coeffs_.drift) update(s);
        for (const auto& column : coeffs_.diffusion) {
            for (const auto& s : column) update(s);
        }
    }

private:
    RowMatrix term(const MemoryFunctionalSpec& s, std::size_t i, const RowMatrix& arg, std::size_t& slot) const
    {
        const double t = grid_.time(i);
        switch (s.kind()) {
        case MemoryKind::integral_of_state:
            return apply_inner(s.inner(), t, prefix_.slice(i));
        case MemoryKind::integral_of_p:
            return accumulators_[slot++];
        case MemoryKind::windowed_integral: {
            const std::size_t back = i - grid_.memory_steps();
            return apply_inner(s.inner(), t, RowMatrix(prefix_.slice(i) - prefix_.slice(back)));
        }
        case MemoryKind::instantaneous:
            return apply_inner(s.inner(), t, arg);
        }
        return {};
    }

    const SfdeCoefficients& coeffs_;
    TimeGrid grid_;
    ProcessEnsemble prefix_;
    std::vector<RowMatrix> accumulators_;
};

void check_inputs(const SfdeCoefficients& coeffs, const InitialSegment& rho, const BrownianEnsemble& brownian)
{
    coeffs.validate();
    if (!(rho.grid() == brownian.grid())) raise(ErrorCode::dimension_mismatch, "initial segment grid differs from Brownian grid");
    if (static_cast<std::size_t>(rho.dim()) != coeffs.n) raise(ErrorCode::dimension_mismatch, "initial segment dimension differs from n");
    if (brownian.dim() != coeffs.d) raise(ErrorCode::dimension_mismatch, "Brownian dimension differs from d");
}

ProcessEnsemble run_euler(const SfdeCoefficients& coeffs, const InitialSegment& rho, const BrownianEnsemble& brownian,
                          const SimulationOptions& options, const ProcessEnsemble* frozen)
{
    check_inputs(coeffs, rho, brownian);
    const TimeGrid& grid = brownian.grid();
    const std::size_t n_paths = brownian.n_paths();
    const auto n = static_cast<Eigen::Index>(coeffs.n);
    const std::size_t d = coeffs.d;
    const double h = grid.step();

    const CouplingSource* coupling = options.coupling;
    if (coupling) {
        if (coupling->y_dim() != coeffs.coupling.y_dim || coupling->z_dim() != coeffs.coupling.z_dim) {
            raise(ErrorCode::dimension_mismatch, "coupling source dimensions differ from coefficient coupling");
        }
    }
    auto check_forcing = [&](const ProcessEnsemble* f, std::size_t dim, const char* name) {
        if (!f) return;
        if (f->dim() != dim || f->n_paths() != n_paths || !f->covers(grid.idx0()) || !f->covers(grid.idxT() - 1)) {
            raise(ErrorCode::dimension_mismatch, std::string(name) + " forcing must cover [0, T) with matching shape");
        }
    };
    check_forcing(options.drift_forcing, coeffs.n, "drift");
    check_forcing(options.diffusion_forcing, coeffs.n * d, "diffusion");

    ProcessEnsemble x(grid, 0, grid.idxT(), n_paths, coeffs.n);
    for (std::size_t i = 0; i <= grid.idx0(); ++i) {
        x.slice(i).rowwise() = rho.values().row(static_cast<Eigen::Index>(i));
    }
    CoefficientEvaluator evaluator(coeffs, grid, n_paths);

    RowMatrix drift;
    std::vector<RowMatrix> diffusion;
    RowMatrix y;
    RowMatrix z;
    for (std::size_t i = 0; i < grid.idxT(); ++i) {
        const RowMatrix arg = frozen ? RowMatrix(frozen->slice(i)) : RowMatrix(x.slice(i));
        if (i >= grid.idx0()) {
            evaluator.evaluate(i, arg, drift, diffusion);
            const double t = grid.time(i);
            if (coupling) {
                const FeatureSource source(brownian, &x, &evaluator.prefix());
                coupling->evaluate(i, source, y, z);
                const YzCoupling& c = coeffs.coupling;
                if (c.y_dim > 0) drift += y * c.drift_y.at(t).transpose();
                if (c.z_dim > 0) drift += z * c.drift_z.at(t).transpose();
                for (std::size_t col = 0; col < d; ++col) {
                    if (c.y_dim > 0) diffusion[col] += y * c.diffusion_y[col].at(t).transpose();
                    if (c.z_dim > 0) diffusion[col] += z * c.diffusion_z[col].at(t).transpose();
                }
            }
            if (options.drift_forcing) drift += options.drift_forcing->slice(i);
            if (options.diffusion_forcing) {
                const auto phi = options.diffusion_forcing->slice(i);
                for (std::size_t col = 0; col < d; ++col) {
                    diffusion[col] += phi.middleCols(static_cast<Eigen::Index>(col) * n, n);
                }
            }
            const auto dB = brownian.increment(i);
            auto next = x.slice(i + 1);
            const auto current = x.slice(i);
            parallel_for_chunks(n_paths, [&](std::size_t begin, std::size_t end) {
                const auto b = static_cast<Eigen::Index>(begin);
                const auto len = static_cast<Eigen::Index>(end - begin);
                next.middleRows(b, len) = current.middleRows(b, len) + h * drift.middleRows(b, len);
                for (std::size_t col = 0; col < d; ++col) {
                    next.middleRows(b, len) +=
                        (diffusion[col].middleRows(b, len).array().colwise() *
                         dB.col(static_cast<Eigen::Index>(col)).segment(b, len).array())
                            .matrix();
                }
            });
            if (!next.allFinite()) throw NonFiniteState(i + 1, "forward simulation");
        }
        evaluator.absorb(i, arg);
    }
    return x;
}

}  // namespace

MemoryFunctionalSpec::MemoryFunctionalSpec(MemoryKind kind, AffineMap inner, double lipschitz)
    : kind_(kind), inner_(std::move(inner)), lipschitz_(lipschitz)
{
    if (inner_.slope.rows() != inner_.intercept.rows() || inner_.intercept.cols() != 1) {
        raise(ErrorCode::dimension_mismatch, "inner map intercept must be a column matching the slope rows");
    }
    if (lipschitz < 0.0) raise(ErrorCode::negative_lipschitz, "functional Lipschitz constant must be nonnegative");
    const double slope_norm = inner_.slope.norm_bound();
    if (lipschitz + 1e-12 < slope_norm) {
        raise(ErrorCode::invalid_argument, "declared Lipschitz constant " + std::to_string(lipschitz) +
                                               " is below the slope norm " + std::to_string(slope_norm));
    }
}

InitialSegment::InitialSegment(const TimeGrid& grid, Eigen::MatrixXd values) : grid_(grid), values_(std::move(values))
{
    if (static_cast<std::size_t>(values_.rows()) != grid.idx0() + 1) {
        raise(ErrorCode::range_mismatch, "initial segment must have one row per node of [-M, 0]");
    }
    if (!values_.allFinite()) raise(ErrorCode::invalid_argument, "initial segment has non-finite values");
}

InitialSegment InitialSegment::constant(const TimeGrid& grid, const Eigen::VectorXd& value)
{
    return {grid, value.transpose().replicate(static_cast<Eigen::Index>(grid.idx0() + 1), 1)};
}

InitialSegment InitialSegment::from_function(const TimeGrid& grid, Eigen::Index n,
                                             const std::function<Eigen::VectorXd(double)>& rho)
{
    Eigen::MatrixXd values(static_cast<Eigen::Index>(grid.idx0() + 1), n);
    for (std::size_t i = 0; i <= grid.idx0(); ++i) values.row(static_cast<Eigen::Index>(i)) = rho(grid.time(i)).transpose();
    return {grid, std::move(values)};
}

YzCoupling YzCoupling::none(std::size_t n, std::size_t d, std::size_t y_dim, std::size_t z_dim)
{
    const auto rows = static_cast<Eigen::Index>(n);
    YzCoupling c;
    c.y_dim = y_dim;
    c.z_dim = z_dim;
    c.drift_y = TimeMatrix::zero(rows, static_cast<Eigen::Index>(y_dim));
    c.drift_z = TimeMatrix::zero(rows, static_cast<Eigen::Index>(z_dim));
    c.diffusion_y.assign(d, TimeMatrix::zero(rows, static_cast<Eigen::Index>(y_dim)));
    c.diffusion_z.assign(d, TimeMatrix::zero(rows, static_cast<Eigen::Index>(z_dim)));
    return c;
}

void SfdeCoefficients::validate() const
{
    if (n == 0 || d == 0) raise(ErrorCode::dimension_mismatch, "n and d must be positive");
    const auto rows = static_cast<Eigen::Index>(n);
    auto check_term = [&](const MemoryFunctionalSpec& s) {
        require_shape(s.inner().slope, rows, rows, "functional slope");
        if (s.lipschitz() > lipschitz + 1e-12) {
            raise(ErrorCode::invalid_argument, "coefficient Lipschitz constant is below one of its terms");
        }
    };
    for (const auto& s : drift) check_term(s);
    if (diffusion.size() != d) raise(ErrorCode::dimension_mismatch, "need one diffusion term list per Brownian column");
    for (const auto& column : diffusion) {
        for (const auto& s : column) check_term(s);
    }
    if (coupling.active()) {
        const auto yd = static_cast<Eigen::Index>(coupling.y_dim);
        const auto zd = static_cast<Eigen::Index>(coupling.z_dim);
        require_shape(coupling.drift_y, rows, yd, "drift_y");
        require_shape(coupling.drift_z, rows, zd, "drift_z");
        if (coupling.diffusion_y.size() != d || coupling.diffusion_z.size() != d) {
            raise(ErrorCode::dimension_mismatch, "coupling needs one diffusion block per Brownian column");
        }
        for (std::size_t c = 0; c < d; ++c) {
            require_shape(coupling.diffusion_y[c], rows, yd, "diffusion_y");
            require_shape(coupling.diffusion_z[c], rows, zd, "diffusion_z");
        }
    }
}

Eigen::VectorXd memory_integral(const ProcessEnsemble& x, std::size_t path, std::size_t from, std::size_t to)
{
    if (from > to) raise(ErrorCode::index_order, "memory integral needs from <= to");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.dim()));
    if (from == to) return out;
    if (!x.covers(from) || !x.covers(to - 1)) raise(ErrorCode::range_mismatch, "memory integral range not covered");
    const double h = x.grid().step();
    for (std::size_t i = from; i < to; ++i) {
        const auto row = x.at(i, path);
        for (std::size_t c = 0; c < x.dim(); ++c) out(static_cast<Eigen::Index>(c)) += row[c] * h;
    }
    return out;
}

ProcessEnsemble simulate_sfde(const SfdeCoefficients& coeffs, const InitialSegment& rho,
                              const BrownianEnsemble& brownian, const SimulationOptions& options)
{
    return run_euler(coeffs, rho, brownian, options, nullptr);
}

ContractData picard_map_diagnostic(const SfdeCoefficients& coeffs, const InitialSegment& rho,
                                   const BrownianEnsemble& brownian, const ProcessEnsemble& x,
                                   const ProcessEnsemble& x_prime, double theta)
{
    const TimeGrid& grid = brownian.grid();
    for (const ProcessEnsemble* e : {&x, &x_prime}) {
        if (!(e->grid() == grid) || !e->covers(0) || !e->covers(grid.idxT()) || e->n_paths() != brownian.n_paths() ||
            e->dim() != coeffs.n) {
            raise(ErrorCode::dimension_mismatch, "diagnostic inputs must cover [-M, T] with matching shape");
        }
        for (std::size_t i = 0; i <= grid.idx0(); ++i) {
            const auto row = rho.values().row(static_cast<Eigen::Index>(i));
            for (std::size_t p = 0; p < e->n_paths(); ++p) {
                for (std::size_t c = 0; c < e->dim(); ++c) {
                    if ((*e)(i, p, c) != row(static_cast<Eigen::Index>(c))) {
                        raise(ErrorCode::invalid_argument, "diagnostic inputs must equal rho on [-M, 0]");
                    }
                }
            }
        }
    }
    const WeightedNormSpec spec{theta, WeightSign::decay, 0, grid.idxT()};
    ContractData out;
    out.norm_in = weighted_l2_norm(difference(x, x_prime), spec);
    if (out.norm_in == 0.0) raise(ErrorCode::zero_denominator, "diagnostic inputs are identical");
    const ProcessEnsemble image = run_euler(coeffs, rho, brownian, {}, &x);
    const ProcessEnsemble image_prime = run_euler(coeffs, rho, brownian, {}, &x_prime);
    out.norm_out = weighted_l2_norm(difference(image, image_prime), spec);
    out.ratio = out.norm_out / out.norm_in;
    return out;
}

}  // namespace fbsfde
