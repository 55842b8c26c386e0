#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsfde/presets.hpp"

namespace fbsfde::lab {

inline constexpr int kSchemaVersion = 1;

enum class Model { sfde, gabsde, fbsfde, lq };

std::string to_string(Model model);

/// A configuration problem; the message names the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config error: " + field + ": " + what), field_(field)
    {
    }
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct Scenario {
    Model model = Model::sfde;
    std::string preset;
    presets::Params params;

    double M = 0.0;
    double T = 1.0;
    double K = 0.0;
    double h = 0.0;

    std::size_t paths = 0;
    std::uint64_t seed = 0;
    int degree = 3;
    std::vector<FeatureKind> features;

    double tol = 1e-3;
    std::size_t max_iter = 50;
    std::size_t continuation_steps = 0;  ///< 0 solves directly
    double relaxation = 1.0;
    std::size_t perturbations = 100;
    std::size_t pairs = 50;
    std::uint64_t evaluation_seed = 0;
    std::size_t monotone_trials = 100;

    std::filesystem::path output_dir;
    bool csv = true;
    bool json = true;

    TimeGrid grid() const { return build_time_grid(M, T, K, h); }
    BasisConfig basis() const;
};

/// Parses and validates; relative output directories resolve against `base`.
Scenario parse_scenario(const nlohmann::json& config, const std::filesystem::path& base);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace fbsfde::lab
