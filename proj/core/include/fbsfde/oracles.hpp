#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fbsfde/gabsde.hpp"
#include "fbsfde/sfde.hpp"

namespace fbsfde {

/// A deterministic path sampled on a uniform fine grid.
struct DeterministicPath {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> values;

    /// Linear interpolation; t must lie in [times.front(), times.back()].
    Eigen::VectorXd at(double t) const;
};

/// RK4 for a diffusion-free SFDE whose drift terms are integral_of_state,
/// integral_of_p or instantaneous. Memory integrals ride along as extra state,
/// the part over [-M, 0] comes from Simpson's rule on rho. Throws
/// UnsupportedKernel for windowed terms, any diffusion or any coupling.
DeterministicPath integro_ode_rk4(const SfdeCoefficients& coeffs, const std::function<Eigen::VectorXd(double)>& rho,
                                  double M, double T, double fine_step);

/// y' = -int_t^{T+K} y dr on [0, T], y = 1 on [T, T+K], integrated backward by
/// RK4 with the tail integral as auxiliary state.
DeterministicPath ode_anticipated_backward(double T, double K, double fine_step);

/// All 2^depth paths of a symmetric random walk with steps +-sqrt(h) over
/// [0, T]; increments after T vanish. Path p moves up at step s when bit
/// (depth - 1 - s) of p is set.
class BinomialDriver {
public:
    static constexpr std::size_t max_depth = 20;

    /// Throws DepthExceeded if T/h > max_depth.
    explicit BinomialDriver(const TimeGrid& grid);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t depth() const noexcept { return depth_; }
    std::size_t n_paths() const noexcept { return std::size_t{1} << depth_; }
    double probability() const noexcept { return std::ldexp(1.0, -static_cast<int>(depth_)); }
    bool up(std::size_t path, std::size_t step) const noexcept { return ((path >> (depth_ - 1 - step)) & 1u) != 0; }
    /// Index of the tree node a path occupies after `level` steps.
    std::size_t node_of(std::size_t path, std::size_t level) const noexcept { return path >> (depth_ - level); }

    BrownianEnsemble ensemble() const;

private:
    TimeGrid grid_;
    std::size_t depth_ = 0;
};

/// Y and Z at every tree node: level l holds a (2^l x m) block.
struct TreeSolution {
    std::vector<Eigen::MatrixXd> y;
    std::vector<Eigen::MatrixXd> z;

    /// Per-path values on nodes [idx0, idxT] of the driver grid.
    ProcessEnsemble expand_y(const BinomialDriver& driver) const;
    ProcessEnsemble expand_z(const BinomialDriver& driver) const;
};

/// Exact backward induction on the tree: conditional expectations are child
/// averages and Z = (Y_up - Y_down) / (2 sqrt h). Anticipated tails use the
/// same explicit replacement of the node-i value as solve_gabsde. Throws
/// OracleInapplicable for x-coupled generators.
TreeSolution binomial_exact_backward(const BinomialDriver& driver, const GeneratorSpec& generator,
                                     const TerminalExtension& terminal);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

struct FixtureRecord {
    std::string name;
    std::string input;  ///< canonical description of the oracle inputs
    double value = 0.0;
};

/// Every oracle value the test suites freeze.
std::vector<FixtureRecord> reference_fixtures();

/// One line per record: `name, <16 hex digit FNV-1a of input>, value` with 17
/// significant digits.
std::string format_fixtures(const std::vector<FixtureRecord>& records);

}  // namespace fbsfde
