#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fbsfde {

enum class ErrorCode {
    invalid_argument,
    non_divisible_horizon,
    range_mismatch,
    negative_lipschitz,
    index_order,
    dimension_mismatch,
    non_finite_state,
    zero_denominator,
    too_few_paths,
    ill_conditioned,
    stability_violation,
    missing_future,
    invalid_structure,
    non_convergence,
    step_underflow,
    not_positive_definite,
    mismatched_ensemble,
    optimality_violated,
    oracle_inapplicable,
    unsupported_kernel,
    depth_exceeded,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code is the
/// stable, machine-checkable part; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised when a forward or backward recursion produces NaN or infinity.
class NonFiniteState : public Error {
public:
    NonFiniteState(std::size_t step, const std::string& where);

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Raised when a fixed-point iteration exhausts its budget. Carries the
/// successive-difference history so the caller can diagnose the failure.
class NonConvergence : public Error {
public:
    NonConvergence(std::vector<double> history, const std::string& message);

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace fbsfde
