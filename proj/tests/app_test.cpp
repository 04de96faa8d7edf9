#include "lcinf/app.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lcinf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// 40 units x 2 periods, iid errors, theta0 = 0.
fs::path make_inputs(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("lcinf_app_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    Stream rng(42);
    std::ofstream d(dir / "panel.csv"), l(dir / "loc.csv");
    d << "unit_id,period,y,x,w1\n";
    l << "unit_id,lat,lon\n";
    for (int i = 1; i <= 40; ++i) {
        l << i << "," << 30 + 5 * rng.uniform() << "," << 62 + 8 * rng.uniform() << "\n";
        for (int t = 1; t <= 2; ++t) d << i << "," << t << "," << rng.normal() << "," << rng.normal() << "," << rng.normal() << "\n";
    }
    return dir;
}

RunConfig analyze_config(const fs::path& dir, const std::string& out) {
    RunConfig c;
    c.command = Command::analyze;
    c.seed = 11;
    c.B = 40;
    c.data_path = (dir / "panel.csv").string();
    c.locations_path = (dir / "loc.csv").string();
    c.out_dir = (dir / out).string();
    return c;
}

}  // namespace

TEST(App, ExitCodes) {
    EXPECT_EQ(exit_code(ErrorKind::invalid_input), 2);
    EXPECT_EQ(exit_code(ErrorKind::singular_design), 2);
    EXPECT_EQ(exit_code(ErrorKind::numerical_failure), 3);
    EXPECT_EQ(exit_code(ErrorKind::degenerate), 3);
    EXPECT_EQ(exit_code(ErrorKind::calibration_failure), 4);
}

TEST(App, ConfigChecks) {
    RunConfig c;
    c.data_path = "x";
    c.locations_path = "y";
    EXPECT_THROW(check_config(c), Error);  // no seed
    c.seed = 1;
    EXPECT_NO_THROW(check_config(c));
    c.alpha = 1.0;
    EXPECT_THROW(check_config(c), Error);
    EXPECT_EQ(effective_B(RunConfig{}), 10000);
    RunConfig s;
    s.command = Command::simulate;
    EXPECT_EQ(effective_B(s), 200);
}

TEST(App, ConfigEchoReproducesConfig) {
    RunConfig c;
    c.command = Command::simulate;
    c.seed = 99;
    c.methods = {Method::crs, Method::im};
    c.k_max = 7;
    c.design = "iv-sar";
    c.radius = 0.25;
    RunConfig back;
    back.command = Command::simulate;
    apply_config_json(back, config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_THROW(apply_config_json(back, R"({"sead": 1})"), Error);
}

TEST(App, AnalyzeIsDeterministicAndComplete) {
    const auto dir = make_inputs("analyze");
    const auto paths = run_analyze(analyze_config(dir, "a"));
    run_analyze(analyze_config(dir, "b"));
    for (const char* f : {"report.csv", "moran.csv", "errorgrid.csv", "report.json", "calibration.json", "params.json"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    const std::string report = slurp(dir / "a" / "report.csv");
    for (const char* m : {"\nUNIT,", "\nCCE,", "\nIM,", "\nCRS,"}) EXPECT_NE(report.find(m), std::string::npos) << m;
    const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    EXPECT_EQ(manifest["config"]["seed"], 11);
    EXPECT_EQ(manifest["inputs"].size(), 2u);
    EXPECT_FALSE(manifest["timings"].empty());
    EXPECT_EQ(slurp(dir / "a" / "moran.csv").substr(0, 24), "weights,moran_i,p_value\n");
}

TEST(App, SingleMethodReport) {
    const auto dir = make_inputs("single");
    auto c = analyze_config(dir, "im");
    c.methods = {Method::im};
    run_analyze(c);
    std::istringstream in(slurp(dir / "im" / "report.csv"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[1].substr(0, 3), "IM,");
}

TEST(App, ManifestEchoReruns) {
    const auto dir = make_inputs("echo");
    auto c = analyze_config(dir, "first");
    c.methods = {Method::cce};
    run_analyze(c);
    const auto manifest = nlohmann::json::parse(slurp(dir / "first" / "manifest.json"));
    RunConfig again;
    apply_config_json(again, manifest["config"].dump());
    again.out_dir = (dir / "second").string();
    run_analyze(again);
    EXPECT_EQ(slurp(dir / "first" / "report.csv"), slurp(dir / "second" / "report.csv"));
}

TEST(App, FailureRemovesPartialOutputs) {
    const auto dir = make_inputs("fail");
    auto c = analyze_config(dir, "out");
    std::ofstream(dir / "bad.csv") << "unit_id,period,x\n1,1,2\n";
    c.data_path = (dir / "bad.csv").string();
    try {
        run_analyze(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(exit_code(e.kind()), 2);
        EXPECT_NE(std::string(e.what()).find("prepare"), std::string::npos);
    }
    EXPECT_TRUE(fs::is_empty(dir / "out"));
}

TEST(App, Diagnose) {
    const auto dir = make_inputs("diag");
    auto c = analyze_config(dir, "d");
    c.command = Command::diagnose;
    run_diagnose(c);
    for (const char* f : {"validation.json", "partitions.csv", "ball_growth.csv", "moran.csv", "params.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir / "d" / f)) << f;
}
