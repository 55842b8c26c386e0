#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsfde/coupled.hpp"
#include "scenario.hpp"

namespace fbsfde::lab {

/// No reference solution exists for the requested study.
class NoOracle : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunArtifacts {
    std::string csv;
    nlohmann::json summary;
};

/// Solves the scenario; nothing touches the filesystem.
RunArtifacts run_scenario(const Scenario& scenario);

enum class StudyAxis { h, paths };

struct StudyRow {
    std::size_t level = 0;
    double parameter = 0.0;  ///< h or path count
    double error = 0.0;
    double ratio = 0.0;      ///< previous error / this error, NaN on the first level
};

/// Refines h by halving or multiplies paths by four, `levels` times in total.
/// Throws NoOracle when the scenario has no reference for the axis.
std::vector<StudyRow> run_study(const Scenario& scenario, StudyAxis axis, std::size_t levels);
std::string format_study(const std::vector<StudyRow>& rows);

nlohmann::json check_monotone(const Scenario& scenario, std::size_t trials);

/// Creates the directory and writes every file, each fully or not at all.
void write_files(const std::filesystem::path& directory,
                 const std::vector<std::pair<std::string, std::string>>& files);

/// Per-node columns: time, then mean, std, q05, q95 per component.
struct SummaryColumn {
    std::string name;
    const ProcessEnsemble* values = nullptr;
};
std::string summary_csv(const TimeGrid& grid, const std::vector<SummaryColumn>& columns);

/// %.17g, the round-trip format used for every number written.
std::string format_double(double value);

}  // namespace fbsfde::lab
