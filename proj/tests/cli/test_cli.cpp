#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

struct Outcome {
    int code = -1;
    std::string output;
};

Outcome run_lab(const std::string& args)
{
    const std::string command = std::string(FBSFDE_LAB_BINARY) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    Outcome out;
    if (!pipe) return out;
    char buffer[4096];
    while (std::fgets(buffer, sizeof buffer, pipe)) out.output += buffer;
    const int status = pclose(pipe);
    out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

std::string scenario(const std::string& name)
{
    return (fs::path(FBSFDE_SCENARIO_DIR) / (name + ".json")).string();
}

fs::path output_of(const std::string& name)
{
    return fs::path(FBSFDE_SCENARIO_DIR) / "out" / name;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

TEST(Cli, RunWritesSummaries)
{
    fs::remove_all(output_of("martingale"));
    const Outcome r = run_lab("run " + scenario("martingale"));
    ASSERT_EQ(r.code, 0) << r.output;
    const std::string csv = slurp(output_of("martingale") / "summary.csv");
    const std::string header = csv.substr(0, csv.find('\n'));
    EXPECT_EQ(header, "time,Y_mean,Y_std,Y_q05,Y_q95,Z_mean,Z_std,Z_q05,Z_q95");
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    EXPECT_EQ(lines, 1u + 33u);
    EXPECT_TRUE(fs::exists(output_of("martingale") / "summary.json"));
    for (const auto& entry : fs::directory_iterator(output_of("martingale"))) {
        EXPECT_NE(entry.path().extension(), ".partial");
    }
}

TEST(Cli, RerunsAreByteIdenticalAcrossThreadCounts)
{
    ASSERT_EQ(run_lab("--threads 1 run " + scenario("canonical")).code, 0);
    const std::string csv = slurp(output_of("canonical") / "summary.csv");
    const std::string json = slurp(output_of("canonical") / "summary.json");
    ASSERT_EQ(run_lab("--threads 4 run " + scenario("canonical")).code, 0);
    EXPECT_EQ(slurp(output_of("canonical") / "summary.csv"), csv);
    EXPECT_EQ(slurp(output_of("canonical") / "summary.json"), json);
}

TEST(Cli, MissingFieldIsNamed)
{
    const Outcome r = run_lab("run " + scenario("missing_h"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("grid.h"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(output_of("missing_h")));
}

TEST(Cli, ConfigurationErrorsExitWithTwo)
{
    EXPECT_EQ(run_lab("run " + scenario("bad_schema")).code, 2);
    EXPECT_EQ(run_lab("run " + scenario("unknown_preset")).code, 2);
    EXPECT_EQ(run_lab("run /nonexistent/config.json").code, 2);
    EXPECT_EQ(run_lab("study " + scenario("cosh") + " --axis q").code, 2);
    EXPECT_EQ(run_lab("").code, 2);
    EXPECT_EQ(run_lab("--help").code, 0);
}

TEST(Cli, DivergentPicardExitsWithFour)
{
    EXPECT_EQ(run_lab("run " + scenario("stress")).code, 4);
}

TEST(Cli, ExhaustedContinuationExitsWithThree)
{
    const Outcome r = run_lab("run " + scenario("stress_unrelaxed"));
    EXPECT_EQ(r.code, 3) << r.output;
}

TEST(Cli, RelaxedContinuationSucceeds)
{
    EXPECT_EQ(run_lab("run " + scenario("stress_continuation")).code, 0);
}

TEST(Cli, StudyWithoutAnOracleExitsWithFive)
{
    EXPECT_EQ(run_lab("study " + scenario("windowed") + " --axis h").code, 5);
}

TEST(Cli, StudyReportsFirstOrderRatios)
{
    const Outcome r = run_lab("study " + scenario("cosh") + " --axis h --levels 3");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(r.output.substr(0, r.output.find('\n')), "level,parameter,error,ratio");
    EXPECT_TRUE(fs::exists(output_of("cosh") / "study_h.csv"));
}

TEST(Cli, CheckMonotoneWritesAReport)
{
    const Outcome r = run_lab("check-monotone " + scenario("canonical") + " --trials 20");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("pointwise_satisfied"), std::string::npos) << r.output;
    EXPECT_TRUE(fs::exists(output_of("canonical") / "monotonicity.json"));
    EXPECT_EQ(run_lab("check-monotone " + scenario("martingale")).code, 2);
}

TEST(Cli, EmitsTheFrozenFixtures)
{
    const fs::path dir = fs::path(FBSFDE_SCENARIO_DIR) / "out" / "fixtures";
    fs::remove_all(dir);
    ASSERT_EQ(run_lab("oracles --emit-fixtures " + dir.string()).code, 0);
    EXPECT_EQ(slurp(dir / "oracle_fixtures.txt"), slurp(FBSFDE_FIXTURE_FILE));
}

}  // namespace
