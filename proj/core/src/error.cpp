#include "fbsfde/error.hpp"

#include <utility>

namespace fbsfde {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::non_divisible_horizon: return "NonDivisibleHorizon";
    case ErrorCode::range_mismatch: return "RangeMismatch";
    case ErrorCode::negative_lipschitz: return "NegativeLipschitz";
    case ErrorCode::index_order: return "IndexOrder";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::non_finite_state: return "NonFiniteState";
    case ErrorCode::zero_denominator: return "ZeroDenominator";
    case ErrorCode::too_few_paths: return "TooFewPaths";
    case ErrorCode::ill_conditioned: return "IllConditioned";
    case ErrorCode::stability_violation: return "StabilityViolation";
    case ErrorCode::missing_future: return "MissingFuture";
    case ErrorCode::invalid_structure: return "InvalidStructure";
    case ErrorCode::non_convergence: return "NonConvergence";
    case ErrorCode::step_underflow: return "StepUnderflow";
    case ErrorCode::not_positive_definite: return "NotPositiveDefinite";
    case ErrorCode::mismatched_ensemble: return "MismatchedEnsemble";
    case ErrorCode::optimality_violated: return "OptimalityViolated";
    case ErrorCode::oracle_inapplicable: return "OracleInapplicable";
    case ErrorCode::unsupported_kernel: return "UnsupportedKernel";
    case ErrorCode::depth_exceeded: return "DepthExceeded";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
{
}

NonFiniteState::NonFiniteState(std::size_t step, const std::string& where)
    : Error(ErrorCode::non_finite_state,
            where + " produced a non-finite value at step " + std::to_string(step)),
      step_(step)
{
}

NonConvergence::NonConvergence(std::vector<double> history, const std::string& message)
    : Error(ErrorCode::non_convergence, message), history_(std::move(history))
{
}

void raise(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

}  // namespace fbsfde
