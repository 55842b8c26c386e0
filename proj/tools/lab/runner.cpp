#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fbsfde/error.hpp"
#include "fbsfde/oracles.hpp"

namespace fbsfde::lab {

namespace {

using nlohmann::json;

// Linear interpolation between order statistics (the common "type 7" rule).
double quantile(std::vector<double>& sorted, double q)
{
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

json number_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

double path_mean(const ProcessEnsemble& e, std::size_t i, std::size_t c)
{
    double s = 0.0;
    for (std::size_t p = 0; p < e.n_paths(); ++p) s += e(i, p, c);
    return s / static_cast<double>(e.n_paths());
}

PicardOptions picard_options(const Scenario& s)
{
    PicardOptions po;
    po.tol = s.tol;
    po.max_iter = s.max_iter;
    po.relaxation = s.relaxation;
    return po;
}

FbsfdeSolution solve_coupled(const FbsfdeSystem& system, const BrownianEnsemble& brownian, const Scenario& s)
{
    const PolynomialEngine engine(s.basis());
    if (s.continuation_steps == 0) return solve_picard(system, brownian, engine, picard_options(s));
    ContinuationOptions co;
    co.picard = picard_options(s);
    for (std::size_t k = 0; k <= s.continuation_steps; ++k) {
        co.schedule.push_back(static_cast<double>(k) / static_cast<double>(s.continuation_steps));
    }
    return solve_continuation(system, brownian, engine, co);
}

json monotonicity_json(const MonotonicityReport& r)
{
    return json{{"status", r.status == MonotonicityStatus::pointwise_satisfied ? "pointwise_satisfied" : "violated"},
                {"worst_margin", number_or_null(r.worst_margin)},
                {"witness", r.witness.has_value()},
                {"note", r.note}};
}

json solution_json(const FbsfdeSolution& sol)
{
    return json{{"iterations", sol.iterations},
                {"converged", sol.converged},
                {"history", sol.history},
                {"weighted_history", sol.weighted_history},
                {"schedule", sol.schedule},
                {"terminal_residual", sol.terminal_residual}};
}

json header(const Scenario& s)
{
    const TimeGrid grid = s.grid();
    return json{{"schema_version", kSchemaVersion},
                {"model", to_string(s.model)},
                {"preset", s.preset},
                {"grid", {{"M", s.M}, {"T", s.T}, {"K", s.K}, {"h", s.h}, {"steps", grid.horizon_steps()}}},
                {"paths", s.paths},
                {"seed", s.seed}};
}

// Compares X with its Picard starting guess, X frozen at rho(0) after time 0.
ContractData contraction(const SfdeCoefficients& coeffs, const InitialSegment& rho, const BrownianEnsemble& b,
                         const ProcessEnsemble& x, double theta)
{
    ProcessEnsemble start = x;
    const TimeGrid& grid = b.grid();
    for (std::size_t i = grid.idx0() + 1; i <= grid.idxT(); ++i) start.slice(i) = x.slice(grid.idx0());
    return picard_map_diagnostic(coeffs, rho, b, x, start, theta);
}

RunArtifacts run_sfde(const Scenario& s)
{
    const TimeGrid grid = s.grid();
    const auto model = presets::make_sfde(s.preset, grid, s.params);
    const BrownianEnsemble b = sample_brownian(grid, s.paths, model.coeffs.d, s.seed);
    const ProcessEnsemble x = simulate_sfde(model.coeffs, model.rho, b);
    const double theta = theta_star(model.coeffs.lipschitz);
    const ContractData c = contraction(model.coeffs, model.rho, b, x, theta);

    RunArtifacts out;
    out.csv = summary_csv(grid, {{"X", &x}});
    out.summary = header(s);
    std::vector<double> terminal;
    for (std::size_t c2 = 0; c2 < x.dim(); ++c2) terminal.push_back(path_mean(x, grid.idxT(), c2));
    out.summary["terminal_mean"] = terminal;
    out.summary["contraction"] = {{"lipschitz", model.coeffs.lipschitz},
                                  {"theta", theta},
                                  {"norm_in", c.norm_in},
                                  {"norm_out", c.norm_out},
                                  {"ratio", number_or_null(c.ratio)}};
    return out;
}

RunArtifacts run_gabsde(const Scenario& s)
{
    const TimeGrid grid = s.grid();
    const auto model = presets::make_gabsde(s.preset, grid, s.params);
    const BrownianEnsemble b = sample_brownian(grid, s.paths, model.generator.d, s.seed);
    const PolynomialEngine engine(s.basis());
    const BackwardSolution sol = solve_gabsde(model.generator, model.terminal, b, engine);

    RunArtifacts out;
    out.csv = summary_csv(grid, {{"Y", &sol.y}, {"Z", &sol.z}});
    out.summary = header(s);
    out.summary["y0"] = path_mean(sol.y, grid.idx0(), 0);
    out.summary["z0"] = path_mean(sol.z, grid.idx0(), 0);
    out.summary["max_residual"] = *std::max_element(sol.residuals.begin(), sol.residuals.end());
    out.summary["ill_conditioned_steps"] = sol.ill_conditioned_steps;
    return out;
}

RunArtifacts run_fbsfde(const Scenario& s)
{
    const TimeGrid grid = s.grid();
    const FbsfdeSystem system = presets::make_fbsfde(s.preset, grid, s.params);
    const BrownianEnsemble b = sample_brownian(grid, s.paths, system.d(), s.seed);
    const FbsfdeSolution sol = solve_coupled(system, b, s);
    const MonotonicityReport mono = check_monotonicity(system, grid, SamplerConfig{s.seed, 1.0}, s.monotone_trials);

    RunArtifacts out;
    out.csv = summary_csv(grid, {{"X", &sol.x}, {"Y", &sol.y()}, {"Z", &sol.z()}});
    out.summary = header(s);
    out.summary["solver"] = solution_json(sol);
    out.summary["y0"] = path_mean(sol.y(), grid.idx0(), 0);
    out.summary["monotonicity"] = monotonicity_json(mono);
    return out;
}

struct LqRun {
    LqProblem problem;
    BrownianEnsemble brownian;
    FbsfdeSolution solution;
    OptimalityReport report;
};

LqRun solve_lq(const Scenario& s, bool full_checks)
{
    const TimeGrid grid = s.grid();
    LqRun run{presets::make_lq(s.preset, grid, s.params), {}, {}, {}};
    const FbsfdeSystem system = build_adjoint_fbsfde(run.problem);
    run.brownian = sample_brownian(grid, s.paths, system.d(), s.seed);
    run.solution = solve_coupled(system, run.brownian, s);
    const BrownianEnsemble eval = sample_brownian(grid, s.paths, system.d(), s.evaluation_seed);
    OptimalityOptions oo;
    oo.n_perturbations = full_checks ? s.perturbations : 0;
    oo.n_pairs = full_checks ? s.pairs : 0;
    oo.seed = s.evaluation_seed;
    oo.raise_on_violation = false;
    run.report = verify_optimality(run.problem, run.solution, eval, oo);
    return run;
}

RunArtifacts run_lq(const Scenario& s)
{
    const TimeGrid grid = s.grid();
    const LqRun run = solve_lq(s, true);
    const FeedbackControl policy(run.problem, run.solution.backward.ahead);
    const ProcessEnsemble u = record_controls(run.problem, policy, run.solution.x, run.brownian);

    RunArtifacts out;
    out.csv = summary_csv(grid, {{"X", &run.solution.x}, {"Y", &run.solution.y()}, {"Z", &run.solution.z()}, {"u", &u}});
    out.summary = header(s);
    out.summary["solver"] = solution_json(run.solution);

    std::size_t perturbations_passed = 0;
    double worst_gap = std::numeric_limits<double>::infinity();
    for (const auto& c : run.report.perturbations) {
        if (c.passed) ++perturbations_passed;
        worst_gap = std::min(worst_gap, c.difference + 3.0 * c.standard_error);
    }
    std::size_t pairs_passed = 0;
    for (const auto& c : run.report.convexity) {
        if (c.passed) ++pairs_passed;
    }
    json riccati = nullptr;
    try {
        riccati = riccati_reference(run.problem).cost;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::oracle_inapplicable) throw;
    }
    out.summary["cost"] = {{"value", run.report.optimal.value},
                           {"standard_error", run.report.optimal.standard_error},
                           {"riccati", riccati}};
    out.summary["optimality"] = {{"perturbations", run.report.perturbations.size()},
                                 {"perturbations_passed", perturbations_passed},
                                 {"worst_margin", number_or_null(worst_gap)},
                                 {"pairs", run.report.convexity.size()},
                                 {"pairs_passed", pairs_passed},
                                 {"duality_residual", run.report.duality_residual},
                                 {"all_passed", run.report.all_passed}};
    return out;
}

Scenario with_h(Scenario s, double h)
{
    s.h = h;
    if (s.model == Model::lq) s.K = h;
    return s;
}

double max_rmse(const ProcessEnsemble& y, const BrownianEnsemble& b)
{
    const TimeGrid& grid = b.grid();
    double worst = 0.0;
    for (std::size_t i = grid.idx0(); i <= grid.idxT(); ++i) {
        double sum = 0.0;
        for (std::size_t p = 0; p < b.n_paths(); ++p) {
            const double e = y(i, p, 0) - b.values()(i, p, 0);
            sum += e * e;
        }
        worst = std::max(worst, std::sqrt(sum / static_cast<double>(b.n_paths())));
    }
    return worst;
}

// Error against the reference at one refinement level.
double h_error(const Scenario& s)
{
    const TimeGrid grid = s.grid();
    switch (s.model) {
    case Model::sfde: {
        const auto model = presets::make_sfde(s.preset, grid, s.params);
        DeterministicPath oracle;
        try {
            oracle = integro_ode_rk4(model.coeffs, model.rho_fn, s.M, s.T, 1e-3);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::unsupported_kernel) throw;
            throw NoOracle("preset '" + s.preset + "' has no deterministic ODE reference");
        }
        const BrownianEnsemble b = sample_brownian(grid, 1, model.coeffs.d, s.seed);
        const ProcessEnsemble x = simulate_sfde(model.coeffs, model.rho, b);
        double worst = 0.0;
        for (std::size_t i = grid.idx0(); i <= grid.idxT(); ++i) {
            const Eigen::VectorXd ref = oracle.at(grid.time(i));
            for (std::size_t c = 0; c < x.dim(); ++c) {
                worst = std::max(worst, std::abs(x(i, 0, c) - ref(static_cast<Eigen::Index>(c))));
            }
        }
        return worst;
    }
    case Model::gabsde: {
        if (s.preset != "anticipated_f1" || !s.params.empty()) {
            throw NoOracle("only the default anticipated_f1 preset has a deterministic reference along h");
        }
        const auto model = presets::make_gabsde(s.preset, grid, s.params);
        const BrownianEnsemble b = sample_brownian(grid, s.paths, 1, s.seed);
        const PolynomialEngine engine(s.basis());
        const BackwardSolution sol = solve_gabsde(model.generator, model.terminal, b, engine);
        const DeterministicPath oracle = ode_anticipated_backward(s.T, s.K, 1e-3);
        return std::abs(path_mean(sol.y, grid.idx0(), 0) - oracle.values.front()(0));
    }
    case Model::lq: {
        const LqProblem problem = presets::make_lq(s.preset, grid, s.params);
        double reference = 0.0;
        try {
            reference = riccati_reference(problem).cost;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::oracle_inapplicable) throw;
            throw NoOracle("the Riccati reference needs A = 0 and D = 0");
        }
        return std::abs(solve_lq(s, false).report.optimal.value - reference);
    }
    case Model::fbsfde:
        break;
    }
    throw NoOracle("fbsfde scenarios have no reference along h");
}

constexpr std::size_t kReplications = 4;

// Root-mean-square over replications of max-over-time RMSE(Y - B).
double paths_error(const Scenario& s)
{
    const bool martingale = s.model == Model::gabsde && s.preset == "martingale";
    const bool identity = s.model == Model::fbsfde && s.preset == "brownian_identity";
    if (!(martingale || identity) || !s.params.empty()) {
        throw NoOracle("the paths axis needs the martingale or brownian_identity preset with default parameters");
    }
    const TimeGrid grid = s.grid();
    double sum = 0.0;
    for (std::size_t r = 0; r < kReplications; ++r) {
        const BrownianEnsemble b = sample_brownian(grid, s.paths, 1, s.seed + 1000003u * r);
        double e = 0.0;
        if (martingale) {
            const auto model = presets::make_gabsde(s.preset, grid, s.params);
            const PolynomialEngine engine(s.basis());
            e = max_rmse(solve_gabsde(model.generator, model.terminal, b, engine).y, b);
        } else {
            e = max_rmse(solve_coupled(presets::make_fbsfde(s.preset, grid, s.params), b, s).y(), b);
        }
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(kReplications));
}

}  // namespace

std::string format_double(double value)
{
    if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string summary_csv(const TimeGrid& grid, const std::vector<SummaryColumn>& columns)
{
    std::ostringstream out;
    out << "time";
    for (const auto& col : columns) {
        for (std::size_t c = 0; c < col.values->dim(); ++c) {
            const std::string name = col.values->dim() == 1 ? col.name : col.name + std::to_string(c + 1);
            for (const char* stat : {"mean", "std", "q05", "q95"}) out << ',' << name << '_' << stat;
        }
    }
    out << '\n';
    std::vector<double> sorted;
    for (std::size_t i = grid.idx0(); i <= grid.idxT(); ++i) {
        out << format_double(grid.time(i));
        for (const auto& col : columns) {
            const ProcessEnsemble& e = *col.values;
            for (std::size_t c = 0; c < e.dim(); ++c) {
                if (!e.covers(i)) {
                    out << ",,,,";
                    continue;
                }
                sorted.clear();
                for (std::size_t p = 0; p < e.n_paths(); ++p) sorted.push_back(e(i, p, c));
                const double n = static_cast<double>(sorted.size());
                double mean = 0.0;
                for (double v : sorted) mean += v;
                mean /= n;
                double var = 0.0;
                for (double v : sorted) var += (v - mean) * (v - mean);
                std::sort(sorted.begin(), sorted.end());
                out << ',' << format_double(mean) << ',' << format_double(std::sqrt(var / n)) << ','
                    << format_double(quantile(sorted, 0.05)) << ',' << format_double(quantile(sorted, 0.95));
            }
        }
        out << '\n';
    }
    return out.str();
}

RunArtifacts run_scenario(const Scenario& scenario)
{
    switch (scenario.model) {
    case Model::sfde: return run_sfde(scenario);
    case Model::gabsde: return run_gabsde(scenario);
    case Model::fbsfde: return run_fbsfde(scenario);
    case Model::lq: return run_lq(scenario);
    }
    return {};
}

std::vector<StudyRow> run_study(const Scenario& scenario, StudyAxis axis, std::size_t levels)
{
    if (levels < 2) throw ConfigError("--levels", "a study needs at least two levels");
    std::vector<StudyRow> rows;
    for (std::size_t level = 0; level < levels; ++level) {
        StudyRow row;
        row.level = level;
        if (axis == StudyAxis::h) {
            const Scenario s = with_h(scenario, scenario.h / std::ldexp(1.0, static_cast<int>(level)));
            row.parameter = s.h;
            row.error = h_error(s);
        } else {
            Scenario s = scenario;
            s.paths = scenario.paths << (2 * level);
            row.parameter = static_cast<double>(s.paths);
            row.error = paths_error(s);
        }
        row.ratio = rows.empty() ? std::numeric_limits<double>::quiet_NaN() : rows.back().error / row.error;
        rows.push_back(row);
    }
    return rows;
}

std::string format_study(const std::vector<StudyRow>& rows)
{
    std::ostringstream out;
    out << "level,parameter,error,ratio\n";
    for (const auto& r : rows) {
        out << r.level << ',' << format_double(r.parameter) << ',' << format_double(r.error) << ','
            << (std::isnan(r.ratio) ? std::string() : format_double(r.ratio)) << '\n';
    }
    return out.str();
}

json check_monotone(const Scenario& scenario, std::size_t trials)
{
    const TimeGrid grid = scenario.grid();
    if (scenario.model != Model::fbsfde && scenario.model != Model::lq) {
        throw ConfigError("model", "monotonicity applies to fbsfde and lq scenarios");
    }
    const FbsfdeSystem system = scenario.model == Model::fbsfde
                                    ? presets::make_fbsfde(scenario.preset, grid, scenario.params)
                                    : build_adjoint_fbsfde(presets::make_lq(scenario.preset, grid, scenario.params));
    json out = header(scenario);
    out["trials"] = trials;
    out["monotonicity"] = monotonicity_json(check_monotonicity(system, grid, SamplerConfig{scenario.seed, 1.0}, trials));
    return out;
}

void write_files(const std::filesystem::path& directory, const std::vector<std::pair<std::string, std::string>>& files)
{
    std::filesystem::create_directories(directory);
    for (const auto& [name, content] : files) {
        const auto target = directory / name;
        const auto partial = directory / (name + ".partial");
        {
            std::ofstream out(partial, std::ios::binary | std::ios::trunc);
            out << content;
            if (!out) throw std::runtime_error("cannot write " + partial.string());
        }
        std::filesystem::rename(partial, target);
    }
}

}  // namespace fbsfde::lab
