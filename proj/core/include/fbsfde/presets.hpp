#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fbsfde/coupled.hpp"
#include "fbsfde/lq.hpp"

namespace fbsfde::presets {

/// Named numeric overrides; scalars are length-one arrays, matrices are
/// row-major. Unknown keys are rejected with InvalidArgument.
using Params = std::map<std::string, std::vector<double>>;

struct SfdeModel {
    SfdeCoefficients coeffs;
    InitialSegment rho;
    std::function<Eigen::VectorXd(double)> rho_fn;  ///< continuous form of rho, for the ODE oracle
};

struct GabsdeModel {
    GeneratorSpec generator;
    TerminalExtension terminal;
};

/// cosh: x' = a int_{-M}^t x, rho = x0 (x'' = x for a = 1, M = 0).
/// delay_noise: b = a int_{-M}^t x, sigma = s0 + s1 x.
/// windowed: b = a int_{t-M}^t x, sigma = int_{-M}^t (s0 + s1 x_r) dr.
SfdeModel make_sfde(const std::string& name, const TimeGrid& grid, const Params& params = {});
std::vector<std::string> sfde_names();

/// martingale: f = 0, xi = B_T, eta = 1.
/// anticipated_f1: f1 with g(u, v) = gy u, xi = 1, eta = 0 (deterministic).
/// f1_affine, f2_affine: g(u, v) = gy u + gz v + g0, xi = sin B_T, eta = cos B_T.
GabsdeModel make_gabsde(const std::string& name, const TimeGrid& grid, const Params& params = {});
std::vector<std::string> gabsde_names();

/// canonical_monotone: b = -c y, sigma = s0 - c z, f = s x, Phi = x with G = 1,
///   lambda1 = lambda2 = c, mu = 1 (s defaults to c; s = -c flips the sign).
/// memory_monotone: canonical plus a int_{-M}^t x in the drift.
/// decoupled: b = -0.5 x, sigma = s0, f = -0.5 y + x, Phi = x.
/// brownian_identity: b = 0, sigma = 1, rho = 0, f = 0, Phi = x, so Y = B and Z = 1.
/// stress: canonical shape with a strong slope c and weak structural constants.
FbsfdeSystem make_fbsfde(const std::string& name, const TimeGrid& grid, const Params& params = {});
std::vector<std::string> fbsfde_names();
/// Presets whose declared structure satisfies the monotonicity condition.
bool is_monotone(const std::string& name);

/// memoryless: A = D = 0, C = R = N = 1, F = Q = 0, x0 = 1.
/// delay: A = 1, C = R = N = 1, D = F = 0, Q = 0.5, rho = 1.
/// noisy_control: A = D = 0, C = R = N = Q = 1, F = 0.5, x0 = 1.
/// Matrices may be overridden (keys A, C, D, F, R, N, Q with n, k, x0).
LqProblem make_lq(const std::string& name, const TimeGrid& grid, const Params& params = {});
std::vector<std::string> lq_names();

}  // namespace fbsfde::presets
