#include "lcinf/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace lcinf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lcinf_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p.string();
}

std::string panel_csv(int units) {
    std::string s = "unit_id,period,y,x,w1\n";
    for (int i = units; i >= 1; --i)
        for (int t = 1; t <= 2; ++t)
            s += std::to_string(i) + "," + std::to_string(t) + "," + std::to_string(0.1 * i - t) + "," + std::to_string(std::sin(i + t)) + "," +
                 std::to_string(std::cos(3.0 * i * t)) + "\n";
    return s;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::numerical_failure;
}

}  // namespace

TEST(Io, LoadsAndSortsDataset) {
    const auto dir = temp_dir("load");
    const auto d = load_dataset(write(dir / "d.csv", panel_csv(205)));
    EXPECT_EQ(d.n(), 410);
    EXPECT_EQ(d.p(), 1);
    EXPECT_EQ(d.unit_id.front(), "1");
    EXPECT_EQ(d.loc[1].period, 2);
    EXPECT_FALSE(d.is_iv());
}

TEST(Io, SchemaErrorNamesColumn) {
    const auto dir = temp_dir("schema");
    std::string text = panel_csv(5);
    text.replace(text.find(",y,"), 3, ",q,");
    try {
        load_dataset(write(dir / "d.csv", text));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
        EXPECT_NE(std::string(e.what()).find("missing column(s) y"), std::string::npos) << e.what();
    }
}

TEST(Io, DuplicateAndMissingRows) {
    const auto dir = temp_dir("dup");
    const std::string text = "unit_id,period,y,x\n3,1,1,2\n3,2,1,0\n1,1,0,1\n3,1,4,5\n2,1,1,1\n4,1,2,2\n";
    try {
        load_dataset(write(dir / "d.csv", text));
        FAIL();
    } catch (const Error& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("(unit=3, period=1)"), std::string::npos) << m;
        EXPECT_NE(m.find("lines 2 and 5"), std::string::npos) << m;
    }
    const std::string missing = "unit_id,period,y,x\n1,1,NA,2\n2,1,1,\n3,1,1,1\n4,1,2,2\n";
    try {
        load_dataset(write(dir / "m.csv", missing));
        FAIL();
    } catch (const Error& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("2"), std::string::npos);
        EXPECT_NE(m.find("3"), std::string::npos);
    }
}

TEST(Io, Locations) {
    const auto dir = temp_dir("loc");
    auto d = load_dataset(write(dir / "d.csv", panel_csv(4)));
    attach_locations(d, write(dir / "l.csv", "unit_id,lat,lon\n1,1,2\n2,3,4\n3,5,6\n4,7,8\n"));
    EXPECT_DOUBLE_EQ(d.loc[3].lat, 3);
    EXPECT_EQ(d.loc[3].period, 2);
    EXPECT_EQ(kind_of([&] { attach_locations(d, write(dir / "b.csv", "unit_id,lat,lon\n1,1,2\n")); }), ErrorKind::invalid_input);
}

TEST(Io, FormatNumber) {
    EXPECT_EQ(format_number(-0.2420001), "-0.242");
    EXPECT_EQ(format_number(1234567.0), "1.23457e+06");
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_number(-0.0), "0");
    EXPECT_EQ(format_number(std::optional<double>{}), "");
}

TEST(Io, ReportRoundTrips) {
    Report r;
    r.rows.push_back({"CRS", -0.2421234, std::nullopt, std::nullopt, -1.4971, 0.0841, -2, 1, 6, 0.046875, "FailToReject"});
    r.rows.push_back({"UNIT", -0.145, 0.061, 2.377, -0.26, -0.03, -0.27, -0.02, 205, 0.0001, "Reject"});
    const Report back = report_from_json(report_to_json(report_from_csv(report_to_csv(r))));
    EXPECT_EQ(report_to_csv(back), report_to_csv(r));
    EXPECT_EQ(report_to_json(back), report_to_json(report_from_json(report_to_json(r))));
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_FALSE(back.rows[0].se.has_value());
    EXPECT_DOUBLE_EQ(back.rows[0].theta_hat, -0.242123);
    const std::string header = report_to_csv(Report{});
    EXPECT_EQ(header, "method,theta_hat,se,t_stat,ci_lo,ci_hi,ci_usual_lo,ci_usual_hi,k_hat,alpha_hat,decision\n");
}

TEST(Io, EmitReport) {
    const auto dir = temp_dir("emit");
    const auto path = emit_report(Report{}, ReportFormat::json, dir.string());
    EXPECT_TRUE(fs::exists(path));
    write(dir / "blocker", "");
    EXPECT_EQ(kind_of([&] { emit_report(Report{}, ReportFormat::csv, (dir / "blocker" / "x").string()); }), ErrorKind::invalid_input);
}

TEST(Io, ParamsRoundTrip) {
    const auto dir = temp_dir("params");
    ModelParams p{{0.1, 2.5, 0.7, {}}, CovarianceParams{-0.3, 1.5, 3.0, {}}, 0.6};
    const auto q = load_params(write(dir / "p.json", params_to_json(p)));
    EXPECT_DOUBLE_EQ(q.u.tau2, 2.5);
    ASSERT_TRUE(q.v.has_value());
    EXPECT_DOUBLE_EQ(q.v->tau1, -0.3);
    EXPECT_DOUBLE_EQ(q.rho, 0.6);
    const auto flat = load_params(write(dir / "f.json", R"({"tau1": 0, "tau2": 3, "tau3": 1})"));
    EXPECT_FALSE(flat.v.has_value());
    EXPECT_THROW(load_params(write(dir / "b.json", R"({"tau1": 0, "tau2": -3, "tau3": 1})")), Error);
}

TEST(Io, KhatRowsSumToOne) {
    StudyReport rep;
    rep.k_max = 4;
    MethodSummary crs;
    crs.label = "CRS";
    crs.calibrated = true;
    crs.khat_freq = {{2, 0.25}, {3, 0.25}, {4, 0.5}};
    rep.rows = {crs};
    const std::string csv = khat_csv(rep);
    EXPECT_EQ(csv, "method,2,3,4\nCRS,0.25,0.25,0.5\n");
}

TEST(Io, Digests) {
    EXPECT_EQ(text_digest("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto dir = temp_dir("digest");
    EXPECT_EQ(file_digest(write(dir / "a.txt", "abc")), text_digest("abc"));
}
