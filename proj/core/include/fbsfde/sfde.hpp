#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fbsfde/affine.hpp"
#include "fbsfde/kernel.hpp"
#include "fbsfde/regression.hpp"

namespace fbsfde {

enum class MemoryKind {
    integral_of_state,  ///< p(t, int_{-M}^t x_r dr)
    integral_of_p,      ///< int_{-M}^t p(r, x_r) dr
    windowed_integral,  ///< p(t, int_{t-M}^t x_r dr)
    instantaneous,      ///< p(t, x_t)
};

/// One path functional built from an affine inner map p. Construction checks
/// that the declared Lipschitz constant dominates the slope norm.
class MemoryFunctionalSpec {
public:
    MemoryFunctionalSpec(MemoryKind kind, AffineMap inner, double lipschitz);

    MemoryKind kind() const noexcept { return kind_; }
    const AffineMap& inner() const noexcept { return inner_; }
    double lipschitz() const noexcept { return lipschitz_; }
    Eigen::Index dim() const noexcept { return inner_.out_dim(); }

private:
    MemoryKind kind_;
    AffineMap inner_;
    double lipschitz_;
};

/// Values of rho at every node of [-M, 0], one row per node.
class InitialSegment {
public:
    InitialSegment(const TimeGrid& grid, Eigen::MatrixXd values);
    static InitialSegment constant(const TimeGrid& grid, const Eigen::VectorXd& value);
    static InitialSegment from_function(const TimeGrid& grid, Eigen::Index n,
                                        const std::function<Eigen::VectorXd(double)>& rho);

    const TimeGrid& grid() const noexcept { return grid_; }
    Eigen::Index dim() const noexcept { return values_.cols(); }
    const Eigen::MatrixXd& values() const noexcept { return values_; }
    Eigen::VectorXd at(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)).transpose(); }

private:
    TimeGrid grid_;
    Eigen::MatrixXd values_;
};

/// Affine dependence of the coefficients on (y, vec z): drift gains
/// drift_y y + drift_z vec(z), diffusion column c gains diffusion_y[c] y +
/// diffusion_z[c] vec(z).
struct YzCoupling {
    std::size_t y_dim = 0;
    std::size_t z_dim = 0;
    TimeMatrix drift_y;
    TimeMatrix drift_z;
    std::vector<TimeMatrix> diffusion_y;
    std::vector<TimeMatrix> diffusion_z;

    bool active() const noexcept { return y_dim + z_dim > 0; }
    static YzCoupling none(std::size_t n, std::size_t d, std::size_t y_dim = 0, std::size_t z_dim = 0);
};

struct SfdeCoefficients {
    std::size_t n = 1;
    std::size_t d = 1;
    std::vector<MemoryFunctionalSpec> drift;
    std::vector<std::vector<MemoryFunctionalSpec>> diffusion;  ///< one list per Brownian column
    YzCoupling coupling;
    double lipschitz = 0.0;  ///< declared constant for the whole (b, sigma) pair

    /// Throws DimensionMismatch or InvalidArgument on inconsistent data.
    void validate() const;
};

/// Left-Riemann sum of x over nodes [from, to) on one path.
Eigen::VectorXd memory_integral(const ProcessEnsemble& x, std::size_t path, std::size_t from, std::size_t to);

struct SimulationOptions {
    const ProcessEnsemble* drift_forcing = nullptr;      ///< phi, dim n
    const ProcessEnsemble* diffusion_forcing = nullptr;  ///< varphi as vec, dim n*d
    const CouplingSource* coupling = nullptr;
};

/// Euler scheme on [0, T]; returns X on [-M, T] (nodes [0, idxT]).
ProcessEnsemble simulate_sfde(const SfdeCoefficients& coeffs, const InitialSegment& rho,
                              const BrownianEnsemble& brownian, const SimulationOptions& options = {});

struct ContractData {
    double norm_in = 0.0;
    double norm_out = 0.0;
    double ratio = 0.0;
};

/// Applies the frozen-argument map x -> X (coefficients read x, not X) to
/// both inputs and compares theta-decay norms over [-M, T).
ContractData picard_map_diagnostic(const SfdeCoefficients& coeffs, const InitialSegment& rho,
                                   const BrownianEnsemble& brownian, const ProcessEnsemble& x,
                                   const ProcessEnsemble& x_prime, double theta);

}  // namespace fbsfde
