#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fbsfde {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SliceMap = Eigen::Map<RowMatrix>;
using ConstSliceMap = Eigen::Map<const RowMatrix>;

/// Uniform mesh over [-M, T+K] with marked nodes for 0 and T.
///
/// Node times are stored as integer step counts times h, so the segment
/// boundaries 0 and T are hit exactly and indexing never drifts.
class TimeGrid {
public:
    TimeGrid() = default;

    double step() const noexcept { return h_; }
    double memory() const noexcept { return static_cast<double>(memory_steps_) * h_; }
    double horizon() const noexcept { return static_cast<double>(horizon_steps_) * h_; }
    double anticipation() const noexcept { return static_cast<double>(anticipation_steps_) * h_; }

    std::size_t memory_steps() const noexcept { return memory_steps_; }
    std::size_t horizon_steps() const noexcept { return horizon_steps_; }
    std::size_t anticipation_steps() const noexcept { return anticipation_steps_; }

    /// Number of nodes, (M + T + K)/h + 1.
    std::size_t size() const noexcept { return memory_steps_ + horizon_steps_ + anticipation_steps_ + 1; }
    std::size_t idx0() const noexcept { return memory_steps_; }
    std::size_t idxT() const noexcept { return memory_steps_ + horizon_steps_; }
    std::size_t last() const noexcept { return size() - 1; }

    double time(std::size_t i) const noexcept
    {
        return (static_cast<double>(i) - static_cast<double>(memory_steps_)) * h_;
    }
    std::vector<double> nodes() const;

    bool operator==(const TimeGrid& other) const = default;

    friend TimeGrid build_time_grid(double M, double T, double K, double h);

private:
    double h_ = 0.0;
    std::size_t memory_steps_ = 0;
    std::size_t horizon_steps_ = 0;
    std::size_t anticipation_steps_ = 0;
};

/// Throws NonDivisibleHorizon unless M, T, K are integer multiples of h
/// (relative tolerance 1e-9).
TimeGrid build_time_grid(double M, double T, double K, double h);

/// Sampled process values on a contiguous node range [first, last] of a grid,
/// stored time-major: for each node a (paths x dim) row-major block.
class ProcessEnsemble {
public:
    ProcessEnsemble() = default;
    ProcessEnsemble(const TimeGrid& grid, std::size_t first, std::size_t last, std::size_t n_paths,
                    std::size_t dim, double fill = 0.0);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t first() const noexcept { return first_; }
    std::size_t last() const noexcept { return last_; }
    std::size_t n_times() const noexcept { return last_ - first_ + 1; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return data_.empty(); }
    bool covers(std::size_t i) const noexcept { return !data_.empty() && i >= first_ && i <= last_; }

    std::span<double> at(std::size_t i, std::size_t path);
    std::span<const double> at(std::size_t i, std::size_t path) const;
    double& operator()(std::size_t i, std::size_t path, std::size_t c) { return data_[offset(i, path) + c]; }
    double operator()(std::size_t i, std::size_t path, std::size_t c) const { return data_[offset(i, path) + c]; }

    /// (paths x dim) view of node i.
    SliceMap slice(std::size_t i);
    ConstSliceMap slice(std::size_t i) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool all_finite() const;

private:
    std::size_t offset(std::size_t i, std::size_t path) const noexcept
    {
        return ((i - first_) * n_paths_ + path) * dim_;
    }

    TimeGrid grid_;
    std::size_t first_ = 0;
    std::size_t last_ = 0;
    std::size_t n_paths_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// a - b on the common node range; both must share grid, paths and dim.
ProcessEnsemble difference(const ProcessEnsemble& a, const ProcessEnsemble& b);

/// Left-Riemann prefix integrals: node i holds sum_{j<i} x_j h over the
/// ensemble's own range, i.e. the memory integral from its first node.
ProcessEnsemble prefix_integral(const ProcessEnsemble& x);

/// d-dimensional Brownian paths on a grid. B vanishes at every node <= 0 and
/// increments over [t_i, t_{i+1}] are stored exactly as drawn.
class BrownianEnsemble {
public:
    BrownianEnsemble() = default;

    /// Takes ownership of increments on nodes [idx0, last-1]; values are their
    /// running sums.
    static BrownianEnsemble from_increments(const TimeGrid& grid, ProcessEnsemble increments,
                                            std::uint64_t seed = 0);

    const TimeGrid& grid() const noexcept { return values_.grid(); }
    std::size_t n_paths() const noexcept { return values_.n_paths(); }
    std::size_t dim() const noexcept { return values_.dim(); }
    std::uint64_t seed() const noexcept { return seed_; }

    const ProcessEnsemble& values() const noexcept { return values_; }
    const ProcessEnsemble& increments() const noexcept { return increments_; }

    /// (paths x d) increment B_{i+1} - B_i, valid for idx0 <= i < last.
    ConstSliceMap increment(std::size_t i) const { return increments_.slice(i); }

private:
    std::uint64_t seed_ = 0;
    ProcessEnsemble values_;
    ProcessEnsemble increments_;
};

/// Standard normal draw keyed by (seed, stream, counter); stateless, so any
/// partition of work reproduces the same numbers.
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept;

/// Path j's increments depend only on (seed, j); component c at step i uses
/// counter i*d + c.
BrownianEnsemble sample_brownian(const TimeGrid& grid, std::size_t n_paths, std::size_t d,
                                 std::uint64_t seed);

enum class WeightSign { decay, growth };

/// (E sum_i e^{-/+ theta t_i} |v_i|^2 h)^{1/2} over nodes [first, last).
struct WeightedNormSpec {
    double theta = 0.0;
    WeightSign sign = WeightSign::decay;
    std::size_t first = 0;
    std::size_t last = 0;
};

double weighted_l2_norm(const ProcessEnsemble& ensemble, const WeightedNormSpec& spec);

/// Weighted squared norm (no square root); building block for composite norms.
double weighted_l2_norm_squared(const ProcessEnsemble& ensemble, const WeightedNormSpec& spec);

/// 2L^2 + 2L sqrt(L^2 + 2): the weight that makes the SFDE Picard map halve
/// squared distances.
double theta_star(double L);

}  // namespace fbsfde
