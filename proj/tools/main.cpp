#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fbsfde/error.hpp"
#include "fbsfde/oracles.hpp"
#include "fbsfde/parallel.hpp"
#include "runner.hpp"
#include "scenario.hpp"

namespace {

enum Exit { ok = 0, config = 2, non_convergence = 3, non_finite = 4, no_oracle = 5 };

int report(const std::string& message, int code)
{
    std::cerr << "fbsfde-lab: " << message << '\n';
    return code;
}

template <typename Fn>
int guarded(Fn&& fn)
{
    using namespace fbsfde;
    try {
        fn();
        return ok;
    } catch (const lab::ConfigError& e) {
        return report(e.what(), config);
    } catch (const lab::NoOracle& e) {
        return report(std::string("no oracle: ") + e.what(), no_oracle);
    } catch (const NonConvergence& e) {
        return report(e.what(), non_convergence);
    } catch (const NonFiniteState& e) {
        return report(e.what(), non_finite);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::step_underflow || e.code() == ErrorCode::non_convergence) {
            return report(e.what(), non_convergence);
        }
        if (e.code() == ErrorCode::non_finite_state) return report(e.what(), non_finite);
        return report(std::string(to_string(e.code())) + ": " + e.what(), config);
    } catch (const std::exception& e) {
        return report(e.what(), 1);
    }
}

}  // namespace

int main(int argc, char** argv)
{
    using namespace fbsfde;
    CLI::App app{"Forward-backward stochastic functional differential equation lab"};
    app.require_subcommand(1);

    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (results do not depend on it)")
        ->envname("FBSFDE_LAB_THREADS")
        ->check(CLI::PositiveNumber);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Solve a scenario and write its CSV and JSON summaries");
    run->add_option("config", config_path, "Scenario file")->required();

    auto* study = app.add_subcommand("study", "Refinement study against an oracle");
    std::string axis = "h";
    std::size_t levels = 3;
    study->add_option("config", config_path, "Scenario file")->required();
    study->add_option("--axis", axis, "Refinement axis")->check(CLI::IsMember({"h", "paths"}));
    study->add_option("--levels", levels, "Number of refinement levels")->check(CLI::Range(2, 12));

    auto* monotone = app.add_subcommand("check-monotone", "Sample the monotonicity condition");
    std::size_t trials = 100;
    monotone->add_option("config", config_path, "Scenario file")->required();
    monotone->add_option("--trials", trials, "Number of sampled argument pairs")->check(CLI::PositiveNumber);

    auto* oracles = app.add_subcommand("oracles", "Reference values");
    std::string fixture_dir;
    oracles->add_option("--emit-fixtures", fixture_dir, "Directory for the fixture file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config;
    }
    if (threads > 0) set_thread_count(threads);

    if (*run) {
        return guarded([&] {
            const lab::Scenario s = lab::load_scenario(config_path);
            const lab::RunArtifacts a = lab::run_scenario(s);
            std::vector<std::pair<std::string, std::string>> files;
            if (s.csv) files.emplace_back("summary.csv", a.csv);
            if (s.json) files.emplace_back("summary.json", a.summary.dump(2) + "\n");
            lab::write_files(s.output_dir, files);
            std::cout << "wrote " << s.output_dir.string() << '\n';
        });
    }
    if (*study) {
        return guarded([&] {
            const lab::Scenario s = lab::load_scenario(config_path);
            const auto rows = lab::run_study(s, axis == "h" ? lab::StudyAxis::h : lab::StudyAxis::paths, levels);
            const std::string table = lab::format_study(rows);
            lab::write_files(s.output_dir, {{"study_" + axis + ".csv", table}});
            std::cout << table;
        });
    }
    if (*monotone) {
        return guarded([&] {
            const lab::Scenario s = lab::load_scenario(config_path);
            const std::string text = lab::check_monotone(s, trials).dump(2) + "\n";
            lab::write_files(s.output_dir, {{"monotonicity.json", text}});
            std::cout << text;
        });
    }
    return guarded([&] {
        lab::write_files(fixture_dir, {{"oracle_fixtures.txt", format_fixtures(reference_fixtures())}});
        std::cout << "wrote " << fixture_dir << "/oracle_fixtures.txt\n";
    });
}
