#pragma once

#include <cmath>
#include <functional>
#include <memory>

#include <Eigen/Dense>

namespace fbsfde {

/// Matrix-valued function of time: either constant or a callable with a
/// declared bound on its operator norm (used for Lipschitz checks).
class TimeMatrix {
public:
    TimeMatrix() = default;
    TimeMatrix(Eigen::MatrixXd constant) : constant_(std::move(constant)) {}
    TimeMatrix(Eigen::Index rows, Eigen::Index cols, std::function<Eigen::MatrixXd(double)> fn, double bound)
        : constant_(Eigen::MatrixXd::Zero(rows, cols)), fn_(std::move(fn)), bound_(bound)
    {
    }

    static TimeMatrix zero(Eigen::Index rows, Eigen::Index cols) { return TimeMatrix(Eigen::MatrixXd::Zero(rows, cols)); }
    static TimeMatrix scalar(double v) { return TimeMatrix(Eigen::MatrixXd::Constant(1, 1, v)); }

    Eigen::Index rows() const noexcept { return constant_.rows(); }
    Eigen::Index cols() const noexcept { return constant_.cols(); }
    bool is_constant() const noexcept { return !fn_; }
    bool is_zero() const { return !fn_ && (constant_.size() == 0 || constant_.isZero(0.0)); }

    Eigen::MatrixXd at(double t) const { return fn_ ? fn_(t) : constant_; }
    const Eigen::MatrixXd& constant() const noexcept { return constant_; }

    /// Operator 2-norm for constants, the declared bound otherwise.
    double norm_bound() const
    {
        if (fn_) return bound_;
        if (constant_.size() == 0) return 0.0;
        return Eigen::JacobiSVD<Eigen::MatrixXd>(constant_).singularValues()(0);
    }

    TimeMatrix scaled(double s) const
    {
        if (!fn_) return TimeMatrix(Eigen::MatrixXd(s * constant_));
        auto f = fn_;
        return TimeMatrix(rows(), cols(), [f, s](double t) { return Eigen::MatrixXd(s * f(t)); }, std::abs(s) * bound_);
    }

    friend TimeMatrix operator+(const TimeMatrix& a, const TimeMatrix& b)
    {
        if (!a.fn_ && !b.fn_) return TimeMatrix(Eigen::MatrixXd(a.constant_ + b.constant_));
        return TimeMatrix(a.rows(), a.cols(), [a, b](double t) { return Eigen::MatrixXd(a.at(t) + b.at(t)); },
                          a.norm_bound() + b.norm_bound());
    }

private:
    Eigen::MatrixXd constant_;
    std::function<Eigen::MatrixXd(double)> fn_;
    double bound_ = 0.0;
};

/// x -> slope(t) x + intercept(t).
struct AffineMap {
    TimeMatrix slope;
    TimeMatrix intercept;  ///< column vector

    static AffineMap linear(Eigen::MatrixXd s)
    {
        const Eigen::Index rows = s.rows();
        return {TimeMatrix(std::move(s)), TimeMatrix::zero(rows, 1)};
    }
    static AffineMap make(Eigen::MatrixXd s, Eigen::VectorXd c)
    {
        return {TimeMatrix(std::move(s)), TimeMatrix(Eigen::MatrixXd(c))};
    }

    Eigen::Index out_dim() const noexcept { return slope.rows(); }
    Eigen::Index in_dim() const noexcept { return slope.cols(); }
};

}  // namespace fbsfde
