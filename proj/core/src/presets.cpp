#include "fbsfde/presets.hpp"

#include <cmath>
#include <set>

#include "fbsfde/error.hpp"

namespace fbsfde::presets {

namespace {

// Reads overrides with defaults and rejects keys no reader asked for.
class Reader {
public:
    Reader(const std::string& preset, const Params& params) : preset_(preset), params_(params) {}

    double scalar(const std::string& key, double fallback)
    {
        known_.insert(key);
        const auto it = params_.find(key);
        if (it == params_.end()) return fallback;
        if (it->second.size() != 1) fail(key, "expects a single number");
        return it->second[0];
    }

    Eigen::MatrixXd matrix(const std::string& key, Eigen::Index rows, Eigen::Index cols, const Eigen::MatrixXd& fallback)
    {
        known_.insert(key);
        const auto it = params_.find(key);
        if (it == params_.end()) return fallback;
        if (static_cast<Eigen::Index>(it->second.size()) != rows * cols) {
            fail(key, "expects " + std::to_string(rows * cols) + " row-major entries");
        }
        Eigen::MatrixXd out(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = it->second[static_cast<std::size_t>(r * cols + c)];
        }
        return out;
    }

    void finish() const
    {
        for (const auto& [key, value] : params_) {
            if (!known_.count(key)) fail(key, "is not a parameter of this preset");
        }
    }

private:
    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        raise(ErrorCode::invalid_argument, "preset " + preset_ + ": parameter '" + key + "' " + what);
    }

    std::string preset_;
    const Params& params_;
    std::set<std::string> known_;
};

[[noreturn]] void unknown(const char* family, const std::string& name)
{
    raise(ErrorCode::invalid_argument, std::string("unknown ") + family + " preset '" + name + "'");
}

Eigen::MatrixXd one(double v)
{
    return Eigen::MatrixXd::Constant(1, 1, v);
}

MemoryFunctionalSpec constant_term(double value)
{
    return {MemoryKind::instantaneous, AffineMap::make(one(0.0), Eigen::VectorXd::Constant(1, value)), 0.0};
}

struct CanonicalShape {
    double c = 0.5;        ///< coupling slope in b and sigma
    double s = 0.5;        ///< generator slope in x
    double s0 = 0.2;       ///< diffusion intercept
    double a = 0.0;        ///< memory slope in the drift
    double x0 = 1.0;
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double mu = 1.0;
};

FbsfdeSystem canonical(const TimeGrid& grid, const CanonicalShape& p)
{
    SfdeCoefficients forward;
    forward.n = 1;
    forward.d = 1;
    if (p.a != 0.0) forward.drift.emplace_back(MemoryKind::integral_of_state, AffineMap::linear(one(p.a)), std::abs(p.a));
    forward.diffusion.resize(1);
    forward.diffusion[0].push_back(constant_term(p.s0));
    forward.coupling = YzCoupling::none(1, 1, 1, 1);
    forward.coupling.drift_y = one(-p.c);
    forward.coupling.diffusion_z[0] = one(-p.c);
    forward.lipschitz = std::abs(p.a) + std::abs(p.c);

    GeneratorSpec backward = GeneratorSpec::zero(1, 1);
    backward.n = 1;
    backward.gx = one(p.s);
    backward.lipschitz = std::abs(p.s);

    return FbsfdeSystem{std::move(forward),
                        std::move(backward),
                        TerminalMap{one(1.0), Eigen::VectorXd::Zero(1), 1.0},
                        MonotoneStructure(one(1.0), p.lambda1, p.lambda2, p.mu),
                        InitialSegment::constant(grid, Eigen::VectorXd::Constant(1, p.x0)),
                        TerminalExtension::constant(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1))};
}

GeneratorSpec affine_generator(GeneratorKind kind, double gy, double gz, double g0)
{
    GeneratorSpec g = GeneratorSpec::zero(1, 1);
    g.kind = kind;
    g.gy = one(gy);
    g.gz = one(gz);
    g.g0 = one(g0);
    g.lipschitz = std::sqrt(gy * gy + gz * gz);
    return g;
}

TerminalExtension sin_cos_terminal()
{
    return TerminalExtension::path_map(
        1, 1, [](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return Eigen::VectorXd(b.array().sin()); },
        [](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return Eigen::VectorXd(b.array().cos()); });
}

}  // namespace

SfdeModel make_sfde(const std::string& name, const TimeGrid& grid, const Params& params)
{
    Reader r(name, params);
    SfdeCoefficients c;
    c.n = 1;
    c.d = 1;
    c.diffusion.resize(1);
    double x0 = 1.0;
    if (name == "cosh") {
        const double a = r.scalar("a", 1.0);
        x0 = r.scalar("x0", 1.0);
        c.drift.emplace_back(MemoryKind::integral_of_state, AffineMap::linear(one(a)), std::abs(a));
        c.lipschitz = std::abs(a);
    } else if (name == "delay_noise") {
        const double a = r.scalar("a", -0.5);
        const double s0 = r.scalar("s0", 0.3);
        const double s1 = r.scalar("s1", 0.2);
        x0 = r.scalar("x0", 1.0);
        c.drift.emplace_back(MemoryKind::integral_of_state, AffineMap::linear(one(a)), std::abs(a));
        c.diffusion[0].emplace_back(MemoryKind::instantaneous, AffineMap::make(one(s1), Eigen::VectorXd::Constant(1, s0)),
                                    std::abs(s1));
        c.lipschitz = std::abs(a) + std::abs(s1);
    } else if (name == "windowed") {
        const double a = r.scalar("a", 0.5);
        const double s0 = r.scalar("s0", 0.2);
        const double s1 = r.scalar("s1", 0.3);
        x0 = r.scalar("x0", 1.0);
        c.drift.emplace_back(MemoryKind::windowed_integral, AffineMap::linear(one(a)), std::abs(a));
        c.diffusion[0].emplace_back(MemoryKind::integral_of_p, AffineMap::make(one(s1), Eigen::VectorXd::Constant(1, s0)),
                                    std::abs(s1));
        c.lipschitz = std::abs(a) + std::abs(s1);
    } else {
        unknown("sfde", name);
    }
    r.finish();
    c.validate();
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(1, x0);
    return {std::move(c), InitialSegment::constant(grid, v), [v](double) { return v; }};
}

std::vector<std::string> sfde_names()
{
    return {"cosh", "delay_noise", "windowed"};
}

GabsdeModel make_gabsde(const std::string& name, const TimeGrid& grid, const Params& params)
{
    (void)grid;
    Reader r(name, params);
    GabsdeModel out{GeneratorSpec::zero(1, 1), TerminalExtension::constant(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1))};
    if (name == "martingale") {
        out.terminal = TerminalExtension::path_map(
            1, 1, [](const Eigen::VectorXd& b, const Eigen::VectorXd&) { return b; },
            [](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::VectorXd::Ones(1); });
    } else if (name == "anticipated_f1") {
        out.generator = affine_generator(GeneratorKind::f1, r.scalar("gy", 1.0), 0.0, 0.0);
        out.terminal = TerminalExtension::constant(Eigen::VectorXd::Constant(1, r.scalar("xi", 1.0)), Eigen::VectorXd::Zero(1));
    } else if (name == "f1_affine" || name == "f2_affine") {
        const GeneratorKind kind = name == "f1_affine" ? GeneratorKind::f1 : GeneratorKind::f2;
        out.generator = affine_generator(kind, r.scalar("gy", 0.5), r.scalar("gz", 0.25), r.scalar("g0", 0.1));
        out.terminal = sin_cos_terminal();
    } else {
        unknown("gabsde", name);
    }
    r.finish();
    out.generator.validate();
    return out;
}

std::vector<std::string> gabsde_names()
{
    return {"martingale", "anticipated_f1", "f1_affine", "f2_affine"};
}

FbsfdeSystem make_fbsfde(const std::string& name, const TimeGrid& grid, const Params& params)
{
    Reader r(name, params);
    FbsfdeSystem out = [&] {
        if (name == "canonical_monotone" || name == "memory_monotone") {
            CanonicalShape p;
            p.c = r.scalar("c", 0.5);
            p.s = r.scalar("s", p.c);
            p.s0 = r.scalar("s0", 0.2);
            p.a = name == "memory_monotone" ? r.scalar("a", 0.5) : 0.0;
            p.x0 = r.scalar("x0", 1.0);
            p.lambda1 = r.scalar("lambda1", p.c);
            p.lambda2 = r.scalar("lambda2", p.c);
            p.mu = r.scalar("mu", 1.0);
            return canonical(grid, p);
        }
        if (name == "stress") {
            CanonicalShape p;
            p.c = r.scalar("c", 1.5);
            p.s = r.scalar("s", p.c);
            p.s0 = r.scalar("s0", 0.2);
            p.x0 = r.scalar("x0", 1.0);
            p.lambda1 = r.scalar("lambda1", 0.25);
            p.lambda2 = r.scalar("lambda2", 0.25);
            p.mu = r.scalar("mu", 1.0);
            return canonical(grid, p);
        }
        if (name == "decoupled") {
            const double s0 = r.scalar("s0", 0.3);
            const double x0 = r.scalar("x0", 1.0);
            SfdeCoefficients forward;
            forward.n = 1;
            forward.d = 1;
            forward.drift.emplace_back(MemoryKind::instantaneous, AffineMap::linear(one(-0.5)), 0.5);
            forward.diffusion.resize(1);
            forward.diffusion[0].push_back(constant_term(s0));
            forward.coupling = YzCoupling::none(1, 1, 1, 1);
            forward.lipschitz = 0.5;
            GeneratorSpec backward = GeneratorSpec::zero(1, 1);
            backward.gy = one(-0.5);
            backward.n = 1;
            backward.gx = one(1.0);
            backward.lipschitz = std::sqrt(1.25);
            return FbsfdeSystem{std::move(forward),
                                std::move(backward),
                                TerminalMap{one(1.0), Eigen::VectorXd::Zero(1), 1.0},
                                MonotoneStructure(one(1.0), 1.0, 1.0, 1.0),
                                InitialSegment::constant(grid, Eigen::VectorXd::Constant(1, x0)),
                                TerminalExtension::constant(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1))};
        }
        if (name == "brownian_identity") {
            SfdeCoefficients forward;
            forward.n = 1;
            forward.d = 1;
            forward.diffusion.resize(1);
            forward.diffusion[0].push_back(constant_term(1.0));
            forward.coupling = YzCoupling::none(1, 1, 1, 1);
            forward.lipschitz = 0.0;
            GeneratorSpec backward = GeneratorSpec::zero(1, 1);
            backward.n = 1;
            backward.gx = one(0.0);
            return FbsfdeSystem{std::move(forward),
                                std::move(backward),
                                TerminalMap{one(1.0), Eigen::VectorXd::Zero(1), 1.0},
                                MonotoneStructure(one(1.0), 1.0, 1.0, 1.0),
                                InitialSegment::constant(grid, Eigen::VectorXd::Zero(1)),
                                TerminalExtension::constant(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1))};
        }
        unknown("fbsfde", name);
    }();
    r.finish();
    out.validate();
    return out;
}

std::vector<std::string> fbsfde_names()
{
    return {"canonical_monotone", "memory_monotone", "decoupled", "brownian_identity", "stress"};
}

bool is_monotone(const std::string& name)
{
    return name == "canonical_monotone" || name == "memory_monotone" || name == "stress";
}

LqProblem make_lq(const std::string& name, const TimeGrid& grid, const Params& params)
{
    Reader r(name, params);
    double a = 0.0, c = 1.0, d = 0.0, f = 0.0, rr = 1.0, nn = 1.0, q = 0.0, x0 = 1.0;
    if (name == "memoryless") {
    } else if (name == "delay") {
        a = 1.0;
        q = 0.5;
    } else if (name == "noisy_control") {
        f = 0.5;
        q = 1.0;
    } else {
        unknown("lq", name);
    }
    const auto n = static_cast<Eigen::Index>(r.scalar("n", 1.0));
    const auto k = static_cast<Eigen::Index>(r.scalar("k", 1.0));
    if (n < 1 || k < 1) raise(ErrorCode::invalid_argument, "preset " + name + ": n and k must be positive");
    auto diag = [](Eigen::Index rows, Eigen::Index cols, double v) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
        for (Eigen::Index i = 0; i < std::min(rows, cols); ++i) out(i, i) = v;
        return out;
    };
    LqProblem p{grid,
                TimeMatrix(r.matrix("A", n, n, diag(n, n, a))),
                TimeMatrix(r.matrix("C", n, k, diag(n, k, c))),
                TimeMatrix(r.matrix("D", n, n, diag(n, n, d))),
                TimeMatrix(r.matrix("F", n, k, diag(n, k, f))),
                TimeMatrix(r.matrix("R", n, n, diag(n, n, rr))),
                TimeMatrix(r.matrix("N", k, k, diag(k, k, nn))),
                r.matrix("Q", n, n, diag(n, n, q)),
                InitialSegment::constant(grid, r.matrix("x0", n, 1, Eigen::MatrixXd::Constant(n, 1, x0)).col(0))};
    r.finish();
    p.validate();
    return p;
}

std::vector<std::string> lq_names()
{
    return {"memoryless", "delay", "noisy_control"};
}

}  // namespace fbsfde::presets
