#include "fbsfde/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fbsfde/error.hpp"
#include "fbsfde/parallel.hpp"

namespace fbsfde {

namespace {

std::size_t steps_of(double length, double h, const char* name)
{
    const double ratio = length / h;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio))) {
        raise(ErrorCode::non_divisible_horizon,
              std::string(name) + " = " + std::to_string(length) + " is not a multiple of h = " +
                  std::to_string(h));
    }
    return static_cast<std::size_t>(rounded);
}

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform in (0, 1]; never returns zero so the logarithm below is finite.
double to_unit(std::uint64_t bits) noexcept
{
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

std::vector<double> TimeGrid::nodes() const
{
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = time(i);
    return out;
}

TimeGrid build_time_grid(double M, double T, double K, double h)
{
    if (!(h > 0.0) || !std::isfinite(h)) raise(ErrorCode::invalid_argument, "step h must be positive");
    if (!(T > 0.0)) raise(ErrorCode::invalid_argument, "terminal time T must be positive");
    if (M < 0.0 || K < 0.0) raise(ErrorCode::invalid_argument, "horizons M and K must be nonnegative");
    TimeGrid grid;
    grid.h_ = h;
    grid.memory_steps_ = steps_of(M, h, "M");
    grid.horizon_steps_ = steps_of(T, h, "T");
    grid.anticipation_steps_ = steps_of(K, h, "K");
    if (grid.horizon_steps_ == 0) raise(ErrorCode::invalid_argument, "T must span at least one step");
    return grid;
}

ProcessEnsemble::ProcessEnsemble(const TimeGrid& grid, std::size_t first, std::size_t last,
                                 std::size_t n_paths, std::size_t dim, double fill)
    : grid_(grid), first_(first), last_(last), n_paths_(n_paths), dim_(dim)
{
    if (first > last || last >= grid.size()) {
        raise(ErrorCode::range_mismatch, "ensemble range [" + std::to_string(first) + ", " +
                                             std::to_string(last) + "] outside grid");
    }
    data_.assign((last - first + 1) * n_paths * dim, fill);
}

std::span<double> ProcessEnsemble::at(std::size_t i, std::size_t path)
{
    return {data_.data() + offset(i, path), dim_};
}

std::span<const double> ProcessEnsemble::at(std::size_t i, std::size_t path) const
{
    return {data_.data() + offset(i, path), dim_};
}

SliceMap ProcessEnsemble::slice(std::size_t i)
{
    return SliceMap(data_.data() + offset(i, 0), static_cast<Eigen::Index>(n_paths_),
                    static_cast<Eigen::Index>(dim_));
}

ConstSliceMap ProcessEnsemble::slice(std::size_t i) const
{
    return ConstSliceMap(data_.data() + offset(i, 0), static_cast<Eigen::Index>(n_paths_),
                         static_cast<Eigen::Index>(dim_));
}

bool ProcessEnsemble::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ProcessEnsemble difference(const ProcessEnsemble& a, const ProcessEnsemble& b)
{
    if (!(a.grid() == b.grid()) || a.n_paths() != b.n_paths() || a.dim() != b.dim()) {
        raise(ErrorCode::dimension_mismatch, "difference of incompatible ensembles");
    }
    const std::size_t first = std::max(a.first(), b.first());
    const std::size_t last = std::min(a.last(), b.last());
    if (first > last) raise(ErrorCode::range_mismatch, "ensembles do not overlap");
    ProcessEnsemble out(a.grid(), first, last, a.n_paths(), a.dim());
    for (std::size_t i = first; i <= last; ++i) out.slice(i) = a.slice(i) - b.slice(i);
    return out;
}

ProcessEnsemble prefix_integral(const ProcessEnsemble& x)
{
    ProcessEnsemble out(x.grid(), x.first(), x.last(), x.n_paths(), x.dim());
    const double h = x.grid().step();
    for (std::size_t i = x.first() + 1; i <= x.last(); ++i) {
        out.slice(i) = out.slice(i - 1) + h * x.slice(i - 1);
    }
    return out;
}

BrownianEnsemble BrownianEnsemble::from_increments(const TimeGrid& grid, ProcessEnsemble increments,
                                                   std::uint64_t seed)
{
    if (!(increments.grid() == grid) || increments.first() != grid.idx0() ||
        increments.last() + 1 != grid.last()) {
        raise(ErrorCode::range_mismatch, "Brownian increments must cover nodes [idx0, last-1]");
    }
    BrownianEnsemble out;
    out.seed_ = seed;
    out.values_ = ProcessEnsemble(grid, 0, grid.last(), increments.n_paths(), increments.dim());
    for (std::size_t i = grid.idx0(); i < grid.last(); ++i) {
        out.values_.slice(i + 1) = out.values_.slice(i) + increments.slice(i);
    }
    out.increments_ = std::move(increments);
    return out;
}

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept
{
    const std::uint64_t key = splitmix64(splitmix64(seed ^ 0x5851f42d4c957f2dULL) ^ stream);
    const std::uint64_t a = splitmix64(key ^ splitmix64(2 * counter));
    const std::uint64_t b = splitmix64(key ^ splitmix64(2 * counter + 1));
    const double r = std::sqrt(-2.0 * std::log(to_unit(a)));
    return r * std::cos(2.0 * std::numbers::pi * to_unit(b));
}

BrownianEnsemble sample_brownian(const TimeGrid& grid, std::size_t n_paths, std::size_t d,
                                 std::uint64_t seed)
{
    if (n_paths == 0 || d == 0) raise(ErrorCode::invalid_argument, "need n_paths >= 1 and d >= 1");
    ProcessEnsemble increments(grid, grid.idx0(), grid.last() - 1, n_paths, d);
    const double sqrt_h = std::sqrt(grid.step());
    const std::size_t first = grid.idx0();
    const std::size_t steps = grid.last() - first;
    parallel_for(n_paths, [&](std::size_t path) {
        for (std::size_t s = 0; s < steps; ++s) {
            auto row = increments.at(first + s, path);
            for (std::size_t c = 0; c < d; ++c) {
                row[c] = sqrt_h * counter_normal(seed, path, s * d + c);
            }
        }
    });
    return BrownianEnsemble::from_increments(grid, std::move(increments), seed);
}

double weighted_l2_norm_squared(const ProcessEnsemble& ensemble, const WeightedNormSpec& spec)
{
    if (spec.theta < 0.0) raise(ErrorCode::invalid_argument, "theta must be nonnegative");
    if (spec.first > spec.last || !ensemble.covers(spec.first) || !ensemble.covers(spec.last)) {
        raise(ErrorCode::range_mismatch, "norm range [" + std::to_string(spec.first) + ", " +
                                             std::to_string(spec.last) + "] not covered by ensemble");
    }
    const TimeGrid& grid = ensemble.grid();
    const double h = grid.step();
    const double sign = spec.sign == WeightSign::decay ? -1.0 : 1.0;
    double total = 0.0;
    for (std::size_t i = spec.first; i < spec.last; ++i) {
        const double weight = std::exp(sign * spec.theta * grid.time(i));
        total += weight * ensemble.slice(i).squaredNorm();
    }
    return total * h / static_cast<double>(ensemble.n_paths());
}

double weighted_l2_norm(const ProcessEnsemble& ensemble, const WeightedNormSpec& spec)
{
    return std::sqrt(weighted_l2_norm_squared(ensemble, spec));
}

double theta_star(double L)
{
    if (L < 0.0) raise(ErrorCode::negative_lipschitz, "Lipschitz constant must be nonnegative");
    return 2.0 * L * L + 2.0 * L * std::sqrt(L * L + 2.0);
}

}  // namespace fbsfde
