#include "fbsfde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include <Eigen/SVD>

#include "fbsfde/error.hpp"
#include "fbsfde/parallel.hpp"

namespace fbsfde {

namespace {

void check_enough_paths(std::size_t paths, std::size_t basis_size, std::size_t factor)
{
    if (paths < factor * basis_size) {
        raise(ErrorCode::too_few_paths, std::to_string(paths) + " paths for a basis of size " +
                                            std::to_string(basis_size) + " (need " +
                                            std::to_string(factor * basis_size) + ")");
    }
}

double mean_squared_residual(const RowMatrix& targets, const RowMatrix& fitted)
{
    if (targets.rows() == 0) return 0.0;
    return (targets - fitted).squaredNorm() / static_cast<double>(targets.rows());
}

// Ridge-regularized pseudo-inverse built from one thin SVD of the design.
class LeastSquaresSolver {
public:
    LeastSquaresSolver(const Eigen::MatrixXd& design, const RegressionOptions& options)
        : svd_(design, Eigen::ComputeThinU | Eigen::ComputeThinV)
    {
        const Eigen::VectorXd& s = svd_.singularValues();
        const double s_max = s.size() > 0 ? s(0) : 0.0;
        const double s_min = s.size() > 0 ? s(s.size() - 1) : 0.0;
        ill_ = s_max == 0.0 || s_min < options.singular_cutoff * s_max;
        const double ridge = ill_ ? std::max(options.ridge, options.ridge_floor) : options.ridge;
        factors_.resize(s.size());
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            const bool keep = s_max > 0.0 && s(j) > options.singular_cutoff * s_max;
            factors_(j) = keep ? s(j) / (s(j) * s(j) + ridge) : 0.0;
        }
    }

    bool ill_conditioned() const noexcept { return ill_; }

    RowMatrix coefficients(const RowMatrix& targets) const
    {
        const Eigen::MatrixXd projected = svd_.matrixU().transpose() * targets;
        return svd_.matrixV() * (factors_.asDiagonal() * projected);
    }

private:
    Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd_;
    Eigen::VectorXd factors_;
    bool ill_ = false;
};

class LeastSquaresProjector final : public StepProjector {
public:
    LeastSquaresProjector(std::shared_ptr<const PolynomialBasis> basis, RowMatrix design,
                          const RegressionOptions& options)
        : basis_(std::move(basis)), design_(std::move(design)), solver_(design_, options)
    {
    }

    Projection fit(const RowMatrix& targets) const override
    {
        Projection out;
        out.coefficients = solver_.coefficients(targets);
        out.fitted = design_ * out.coefficients;
        out.residual = mean_squared_residual(targets, out.fitted);
        return out;
    }

    std::shared_ptr<const BasisMap> basis() const override { return basis_; }
    bool ill_conditioned() const override { return solver_.ill_conditioned(); }

private:
    std::shared_ptr<const PolynomialBasis> basis_;
    RowMatrix design_;
    LeastSquaresSolver solver_;
};

class GroupMeanProjector final : public StepProjector {
public:
    explicit GroupMeanProjector(std::shared_ptr<const PartitionBasis> basis) : basis_(std::move(basis)) {}

    Projection fit(const RowMatrix& targets) const override
    {
        const auto& group = basis_->group_of_path();
        const std::size_t groups = basis_->size();
        Projection out;
        out.coefficients = RowMatrix::Zero(static_cast<Eigen::Index>(groups), targets.cols());
        std::vector<double> counts(groups, 0.0);
        for (std::size_t p = 0; p < group.size(); ++p) {
            out.coefficients.row(static_cast<Eigen::Index>(group[p])) += targets.row(static_cast<Eigen::Index>(p));
            counts[group[p]] += 1.0;
        }
        for (std::size_t g = 0; g < groups; ++g) out.coefficients.row(static_cast<Eigen::Index>(g)) /= counts[g];
        out.fitted.resize(targets.rows(), targets.cols());
        for (std::size_t p = 0; p < group.size(); ++p) {
            out.fitted.row(static_cast<Eigen::Index>(p)) = out.coefficients.row(static_cast<Eigen::Index>(group[p]));
        }
        out.residual = mean_squared_residual(targets, out.fitted);
        return out;
    }

    std::shared_ptr<const BasisMap> basis() const override { return basis_; }

private:
    std::shared_ptr<const PartitionBasis> basis_;
};

void exponents_rec(std::size_t var, std::size_t n_vars, int remaining, std::vector<int>& current,
                   std::vector<std::vector<int>>& out)
{
    if (var == n_vars) {
        out.push_back(current);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current[var] = e;
        exponents_rec(var + 1, n_vars, remaining - e, current, out);
    }
    current[var] = 0;
}

}  // namespace

FeatureSource::FeatureSource(const BrownianEnsemble& brownian, const ProcessEnsemble* state,
                             const ProcessEnsemble* memory)
    : brownian_(&brownian), state_(state), memory_(memory)
{
}

FeatureSource FeatureSource::for_brownian(const BrownianEnsemble& brownian)
{
    FeatureSource out(brownian);
    out.owned_memory_ = std::make_shared<const ProcessEnsemble>(prefix_integral(brownian.values()));
    out.memory_ = out.owned_memory_.get();
    return out;
}

FeatureSource FeatureSource::for_state(const BrownianEnsemble& brownian, const ProcessEnsemble& state)
{
    if (state.n_paths() != brownian.n_paths()) {
        raise(ErrorCode::dimension_mismatch, "state and Brownian ensembles have different path counts");
    }
    FeatureSource out(brownian, &state);
    out.owned_memory_ = std::make_shared<const ProcessEnsemble>(prefix_integral(state));
    out.memory_ = out.owned_memory_.get();
    return out;
}

std::size_t FeatureSource::width(const std::vector<FeatureKind>& kinds) const
{
    std::size_t q = 0;
    for (FeatureKind kind : kinds) {
        switch (kind) {
        case FeatureKind::brownian: q += brownian_->dim(); break;
        case FeatureKind::state: q += state_ ? state_->dim() : brownian_->dim(); break;
        case FeatureKind::memory: q += memory_ ? memory_->dim() : 0; break;
        }
    }
    return q;
}

RowMatrix FeatureSource::raw(std::size_t i, const std::vector<FeatureKind>& kinds) const
{
    const auto n = static_cast<Eigen::Index>(n_paths());
    RowMatrix out(n, static_cast<Eigen::Index>(width(kinds)));
    Eigen::Index col = 0;
    auto put = [&](const ProcessEnsemble& e, const char* name) {
        if (!e.covers(i)) {
            raise(ErrorCode::range_mismatch, std::string(name) + " feature undefined at node " + std::to_string(i));
        }
        const auto w = static_cast<Eigen::Index>(e.dim());
        out.middleCols(col, w) = e.slice(i);
        col += w;
    };
    for (FeatureKind kind : kinds) {
        switch (kind) {
        case FeatureKind::brownian: put(brownian_->values(), "brownian"); break;
        case FeatureKind::state: put(state_ ? *state_ : brownian_->values(), "state"); break;
        case FeatureKind::memory:
            if (memory_) put(*memory_, "memory");
            break;
        }
    }
    return out;
}

PolynomialBasis::PolynomialBasis(const RowMatrix& raw, const std::vector<FeatureKind>& kinds, int degree)
    : kinds_(kinds)
{
    if (degree < 0) raise(ErrorCode::invalid_argument, "basis degree must be nonnegative");
    const double n = static_cast<double>(std::max<Eigen::Index>(raw.rows(), 1));
    std::vector<double> means;
    std::vector<double> scales;
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        const double mean = raw.col(c).sum() / n;
        const double var = (raw.col(c).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        // The spread test is immune to the rounding left in a long sum.
        const double spread = raw.rows() > 0 ? raw.col(c).maxCoeff() - raw.col(c).minCoeff() : 0.0;
        if (spread > 1e-10 * std::max(1.0, std::abs(mean)) && sd > 0.0) {
            active_.push_back(c);
            means.push_back(mean);
            scales.push_back(sd);
        }
    }
    mean_ = Eigen::Map<const Eigen::RowVectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    scale_ = Eigen::Map<const Eigen::RowVectorXd>(scales.data(), static_cast<Eigen::Index>(scales.size()));
    std::vector<int> current(active_.size(), 0);
    for (int total = 0; total <= degree; ++total) {
        // Exactly `total`: enumerate <= total and keep the matching ones.
        std::vector<std::vector<int>> all;
        exponents_rec(0, active_.size(), total, current, all);
        for (auto& e : all) {
            int sum = 0;
            for (int v : e) sum += v;
            if (sum == total) exponents_.push_back(std::move(e));
        }
    }
}

RowMatrix PolynomialBasis::design(const RowMatrix& raw) const
{
    const Eigen::Index n = raw.rows();
    const auto a = static_cast<Eigen::Index>(active_.size());
    int max_degree = 0;
    for (const auto& e : exponents_) {
        for (int v : e) max_degree = std::max(max_degree, v);
    }
    // powers[j] is (n x max_degree+1): column p holds z_j^p.
    std::vector<Eigen::MatrixXd> powers(static_cast<std::size_t>(a));
    for (Eigen::Index j = 0; j < a; ++j) {
        auto& pw = powers[static_cast<std::size_t>(j)];
        pw.resize(n, max_degree + 1);
        pw.col(0).setOnes();
        if (max_degree >= 1) pw.col(1) = (raw.col(active_[static_cast<std::size_t>(j)]).array() - mean_(j)) / scale_(j);
        for (int p = 2; p <= max_degree; ++p) pw.col(p) = pw.col(p - 1).cwiseProduct(pw.col(1));
    }
    RowMatrix out(n, static_cast<Eigen::Index>(exponents_.size()));
    for (std::size_t k = 0; k < exponents_.size(); ++k) {
        Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
        for (Eigen::Index j = 0; j < a; ++j) {
            const int e = exponents_[k][static_cast<std::size_t>(j)];
            if (e > 0) col.array() *= powers[static_cast<std::size_t>(j)].col(e).array();
        }
        out.col(static_cast<Eigen::Index>(k)) = col;
    }
    return out;
}

RowMatrix PolynomialBasis::apply(const FeatureSource& source, std::size_t i, const RowMatrix& coefficients) const
{
    if (static_cast<std::size_t>(coefficients.rows()) != size()) {
        raise(ErrorCode::dimension_mismatch, "coefficient rows do not match basis size");
    }
    return design(source.raw(i, kinds_)) * coefficients;
}

std::uint64_t PartitionBasis::key(const BrownianEnsemble& brownian, std::size_t i, std::size_t path)
{
    const TimeGrid& grid = brownian.grid();
    const std::size_t d = brownian.dim();
    const std::size_t bits = (i - grid.idx0()) * d;
    if (bits > 64) raise(ErrorCode::depth_exceeded, "increment prefix longer than 64 signs");
    std::uint64_t k = 0;
    std::size_t b = 0;
    for (std::size_t j = grid.idx0(); j < i; ++j) {
        const auto row = brownian.increments().at(j, path);
        for (std::size_t c = 0; c < d; ++c, ++b) {
            if (row[c] > 0.0) k |= std::uint64_t{1} << b;
        }
    }
    return k;
}

PartitionBasis::PartitionBasis(const BrownianEnsemble& brownian, std::size_t i)
{
    const std::size_t n = brownian.n_paths();
    group_of_path_.resize(n);
    std::unordered_map<std::uint64_t, std::size_t> index;
    for (std::size_t p = 0; p < n; ++p) {
        const std::uint64_t k = key(brownian, i, p);
        auto [it, inserted] = index.emplace(k, keys_.size());
        if (inserted) keys_.push_back(k);
        group_of_path_[p] = it->second;
    }
    n_groups_ = keys_.size();
}

RowMatrix PartitionBasis::apply(const FeatureSource& source, std::size_t i, const RowMatrix& coefficients) const
{
    std::unordered_map<std::uint64_t, std::size_t> index;
    for (std::size_t g = 0; g < keys_.size(); ++g) index.emplace(keys_[g], g);
    const std::size_t n = source.n_paths();
    RowMatrix out(static_cast<Eigen::Index>(n), coefficients.cols());
    for (std::size_t p = 0; p < n; ++p) {
        const auto it = index.find(key(source.brownian(), i, p));
        if (it == index.end()) raise(ErrorCode::invalid_argument, "path prefix not seen when the partition was fitted");
        out.row(static_cast<Eigen::Index>(p)) = coefficients.row(static_cast<Eigen::Index>(it->second));
    }
    return out;
}

RegressionResult regress_condexp(const RowMatrix& targets, const RowMatrix& design, const RegressionOptions& options)
{
    if (targets.rows() != design.rows()) raise(ErrorCode::dimension_mismatch, "targets and design differ in rows");
    if (!design.allFinite()) raise(ErrorCode::invalid_argument, "design contains non-finite values");
    check_enough_paths(static_cast<std::size_t>(design.rows()), static_cast<std::size_t>(design.cols()),
                       options.min_paths_per_function);
    const LeastSquaresSolver solver(design, options);
    RegressionResult out;
    out.ill_conditioned = solver.ill_conditioned();
    out.coefficients = solver.coefficients(targets);
    out.fitted = design * out.coefficients;
    out.residual = mean_squared_residual(targets, out.fitted);
    return out;
}

std::unique_ptr<StepProjector> PolynomialEngine::prepare(const FeatureSource& source, std::size_t i) const
{
    const RowMatrix raw = source.raw(i, config_.features);
    if (!raw.allFinite()) throw NonFiniteState(i, "regression features");
    auto basis = std::make_shared<const PolynomialBasis>(raw, config_.features, config_.degree);
    check_enough_paths(source.n_paths(), basis->size(), config_.min_paths_per_function);
    RegressionOptions options;
    options.ridge = config_.ridge;
    options.ridge_floor = std::max(config_.ridge, 1e-8);
    options.singular_cutoff = config_.singular_cutoff;
    RowMatrix design = basis->design(raw);
    return std::make_unique<LeastSquaresProjector>(std::move(basis), std::move(design), options);
}

std::unique_ptr<StepProjector> PartitionEngine::prepare(const FeatureSource& source, std::size_t i) const
{
    return std::make_unique<GroupMeanProjector>(std::make_shared<const PartitionBasis>(source.brownian(), i));
}

RegressionPolicy::RegressionPolicy(const TimeGrid& grid, std::size_t m, std::size_t d)
    : grid_(grid), m_(m), d_(d), steps_(grid.idxT())
{
}

void RegressionPolicy::set_step(std::size_t i, StepMap map)
{
    if (i < grid_.idx0() || i >= grid_.idxT()) raise(ErrorCode::range_mismatch, "policy nodes are [idx0, idxT)");
    if (static_cast<std::size_t>(map.coefficients.cols()) != m_ + m_ * d_) {
        raise(ErrorCode::dimension_mismatch, "policy step must map to m + m*d outputs");
    }
    steps_[i] = std::move(map);
}

bool RegressionPolicy::has_step(std::size_t i) const
{
    return i < steps_.size() && !steps_[i].empty();
}

const StepMap& RegressionPolicy::step(std::size_t i) const
{
    if (!has_step(i)) raise(ErrorCode::missing_future, "policy has no map at node " + std::to_string(i));
    return steps_[i];
}

void RegressionPolicy::evaluate(std::size_t i, const FeatureSource& source, RowMatrix& y, RowMatrix& z) const
{
    const RowMatrix out = step(i).evaluate(source, i);
    const auto m = static_cast<Eigen::Index>(m_);
    y = out.leftCols(m);
    z = out.rightCols(out.cols() - m);
}

void ConstantCoupling::evaluate(std::size_t, const FeatureSource& source, RowMatrix& y, RowMatrix& z) const
{
    const auto n = static_cast<Eigen::Index>(source.n_paths());
    y = y_.transpose().replicate(n, 1);
    z = z_.transpose().replicate(n, 1);
}

}  // namespace fbsfde
