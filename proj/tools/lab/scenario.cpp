#include "scenario.hpp"

#include <cmath>
#include <fstream>

#include "fbsfde/error.hpp"

namespace fbsfde::lab {

namespace {

using nlohmann::json;

const json& require(const json& node, const std::string& path, const char* key)
{
    const std::string field = path.empty() ? key : path + "." + key;
    if (!node.is_object() || !node.contains(key)) throw ConfigError(field, "missing required field");
    return node.at(key);
}

double number(const json& v, const std::string& field)
{
    if (!v.is_number()) throw ConfigError(field, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
    return x;
}

double positive(const json& v, const std::string& field)
{
    const double x = number(v, field);
    if (!(x > 0.0)) throw ConfigError(field, "must be positive");
    return x;
}

std::uint64_t count(const json& v, const std::string& field)
{
    if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(field, "must be an integer");
    if (v.get<std::int64_t>() < 0) throw ConfigError(field, "must be nonnegative");
    return v.get<std::uint64_t>();
}

double optional_number(const json& node, const char* key, const std::string& path, double fallback)
{
    if (!node.contains(key)) return fallback;
    return number(node.at(key), path + "." + key);
}

std::uint64_t optional_count(const json& node, const char* key, const std::string& path, std::uint64_t fallback)
{
    if (!node.contains(key)) return fallback;
    return count(node.at(key), path + "." + key);
}

Model parse_model(const json& v)
{
    if (!v.is_string()) throw ConfigError("model", "must be a string");
    const auto s = v.get<std::string>();
    if (s == "sfde") return Model::sfde;
    if (s == "gabsde") return Model::gabsde;
    if (s == "fbsfde") return Model::fbsfde;
    if (s == "lq") return Model::lq;
    throw ConfigError("model", "unknown model '" + s + "' (expected sfde, gabsde, fbsfde or lq)");
}

FeatureKind parse_feature(const json& v, const std::string& field)
{
    if (!v.is_string()) throw ConfigError(field, "must be a string");
    const auto s = v.get<std::string>();
    if (s == "state") return FeatureKind::state;
    if (s == "memory") return FeatureKind::memory;
    if (s == "brownian") return FeatureKind::brownian;
    throw ConfigError(field, "unknown feature '" + s + "' (expected state, memory or brownian)");
}

presets::Params parse_params(const json& v)
{
    presets::Params out;
    if (v.is_null()) return out;
    if (!v.is_object()) throw ConfigError("preset.params", "must be an object");
    for (const auto& [key, value] : v.items()) {
        const std::string field = "preset.params." + key;
        if (value.is_number()) {
            out[key] = {number(value, field)};
        } else if (value.is_array()) {
            std::vector<double> entries;
            for (std::size_t j = 0; j < value.size(); ++j) entries.push_back(number(value[j], field + "[" + std::to_string(j) + "]"));
            out[key] = std::move(entries);
        } else {
            throw ConfigError(field, "must be a number or an array of numbers");
        }
    }
    return out;
}

// Builds the preset once so every module invariant is checked before compute.
void validate_preset(const Scenario& s)
{
    TimeGrid grid;
    try {
        grid = s.grid();
    } catch (const Error& e) {
        throw ConfigError("grid", e.what());
    }
    try {
        switch (s.model) {
        case Model::sfde: presets::make_sfde(s.preset, grid, s.params); break;
        case Model::gabsde: presets::make_gabsde(s.preset, grid, s.params).generator.validate(); break;
        case Model::fbsfde: presets::make_fbsfde(s.preset, grid, s.params); break;
        case Model::lq: build_adjoint_fbsfde(presets::make_lq(s.preset, grid, s.params)); break;
        }
    } catch (const Error& e) {
        throw ConfigError("preset", e.what());
    }
}

}  // namespace

std::string to_string(Model model)
{
    switch (model) {
    case Model::sfde: return "sfde";
    case Model::gabsde: return "gabsde";
    case Model::fbsfde: return "fbsfde";
    case Model::lq: return "lq";
    }
    return "";
}

BasisConfig Scenario::basis() const
{
    BasisConfig b;
    b.degree = degree;
    b.features = features;
    return b;
}

Scenario parse_scenario(const json& config, const std::filesystem::path& base)
{
    if (!config.is_object()) throw ConfigError("<root>", "must be an object");
    const json& version = require(config, "", "schema_version");
    if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
        throw ConfigError("schema_version", "must equal " + std::to_string(kSchemaVersion));
    }

    Scenario s;
    s.model = parse_model(require(config, "", "model"));

    const json& preset = require(config, "", "preset");
    const json& name = require(preset, "preset", "name");
    if (!name.is_string()) throw ConfigError("preset.name", "must be a string");
    s.preset = name.get<std::string>();
    s.params = parse_params(preset.value("params", json()));

    const json& grid = require(config, "", "grid");
    s.M = number(require(grid, "grid", "M"), "grid.M");
    if (s.M < 0.0) throw ConfigError("grid.M", "must be nonnegative");
    s.T = positive(require(grid, "grid", "T"), "grid.T");
    s.h = positive(require(grid, "grid", "h"), "grid.h");
    s.K = optional_number(grid, "K", "grid", s.model == Model::lq ? s.h : 0.0);
    if (s.K < 0.0) throw ConfigError("grid.K", "must be nonnegative");

    const json& mc = require(config, "", "monte_carlo");
    s.paths = count(require(mc, "monte_carlo", "paths"), "monte_carlo.paths");
    if (s.paths == 0) throw ConfigError("monte_carlo.paths", "must be positive");
    s.seed = count(require(mc, "monte_carlo", "seed"), "monte_carlo.seed");
    const bool coupled = s.model == Model::fbsfde || s.model == Model::lq;
    s.degree = coupled ? 2 : 3;
    s.features = coupled ? std::vector<FeatureKind>{FeatureKind::state, FeatureKind::memory}
                         : std::vector<FeatureKind>{FeatureKind::brownian};
    if (mc.contains("basis")) {
        const json& basis = mc.at("basis");
        if (!basis.is_object()) throw ConfigError("monte_carlo.basis", "must be an object");
        s.degree = static_cast<int>(optional_count(basis, "degree", "monte_carlo.basis", static_cast<std::uint64_t>(s.degree)));
        if (s.degree < 1 || s.degree > 6) throw ConfigError("monte_carlo.basis.degree", "must lie in [1, 6]");
        if (basis.contains("features")) {
            const json& f = basis.at("features");
            if (!f.is_array() || f.empty()) throw ConfigError("monte_carlo.basis.features", "must be a non-empty array");
            s.features.clear();
            for (std::size_t j = 0; j < f.size(); ++j) {
                s.features.push_back(parse_feature(f[j], "monte_carlo.basis.features[" + std::to_string(j) + "]"));
            }
        }
    }
    s.evaluation_seed = optional_count(mc, "evaluation_seed", "monte_carlo", s.seed + 1);

    const json solver = config.value("solver", json::object());
    if (!solver.is_object()) throw ConfigError("solver", "must be an object");
    s.tol = optional_number(solver, "tol", "solver", 1e-3);
    if (!(s.tol > 0.0)) throw ConfigError("solver.tol", "must be positive");
    s.max_iter = optional_count(solver, "max_iter", "solver", 50);
    if (s.max_iter == 0) throw ConfigError("solver.max_iter", "must be positive");
    s.continuation_steps = optional_count(solver, "continuation_steps", "solver", 0);
    s.relaxation = optional_number(solver, "relaxation", "solver", 1.0);
    if (!(s.relaxation > 0.0 && s.relaxation <= 1.0)) throw ConfigError("solver.relaxation", "must lie in (0, 1]");
    s.perturbations = optional_count(solver, "perturbations", "solver", 100);
    s.pairs = optional_count(solver, "pairs", "solver", 50);
    s.monotone_trials = optional_count(solver, "monotone_trials", "solver", 100);

    const json& output = require(config, "", "output");
    const json& dir = require(output, "output", "directory");
    if (!dir.is_string() || dir.get<std::string>().empty()) throw ConfigError("output.directory", "must be a non-empty string");
    s.output_dir = std::filesystem::path(dir.get<std::string>());
    if (s.output_dir.is_relative()) s.output_dir = base / s.output_dir;
    if (output.contains("formats")) {
        const json& formats = output.at("formats");
        if (!formats.is_array() || formats.empty()) throw ConfigError("output.formats", "must be a non-empty array");
        s.csv = false;
        s.json = false;
        for (const auto& f : formats) {
            if (f == "csv") {
                s.csv = true;
            } else if (f == "json") {
                s.json = true;
            } else {
                throw ConfigError("output.formats", "entries must be \"csv\" or \"json\"");
            }
        }
    }

    validate_preset(s);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    json config;
    try {
        config = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
    }
    return parse_scenario(config, path.parent_path());
}

}  // namespace fbsfde::lab
