#include "lcinf/simstudy.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lcinf;

TEST(SimStudy, DesignNames) {
    EXPECT_EQ(design_from_string("ols-baseline"), std::make_pair(StudyModel::ols, StudyErrors::baseline));
    EXPECT_EQ(design_from_string("iv-sar"), std::make_pair(StudyModel::iv, StudyErrors::sar));
    EXPECT_THROW(design_from_string("probit"), Error);
}

TEST(SimStudy, SarTwoUnitClosedForm) {
    const std::vector<Location> units{{0, 0, 1}, {0, 0.2, 1}, {0, 5, 1}};
    const Matrix a = sar_adjacency(units);
    EXPECT_EQ(a(0, 1), 1);
    EXPECT_EQ(a(0, 2), 0);
    EXPECT_EQ(a(0, 0), 0);
    Vector eps(3);
    eps << 1.0, -2.0, 0.5;
    const Vector u = sar_solve(a, eps);
    const double c = sar_coefficient;
    EXPECT_NEAR(u(0), (eps(0) + c * eps(1)) / (1 - c * c), 1e-12);
    EXPECT_NEAR(u(1), (c * eps(0) + eps(1)) / (1 - c * c), 1e-12);
    EXPECT_NEAR(u(2), eps(2), 1e-15);
    EXPECT_THROW(sar_solve(a, eps, 1.0), Error);
}

TEST(SimStudy, SarStrictRadius) {
    const std::vector<Location> units{{0, 0, 1}, {0, 0.3, 1}};
    EXPECT_EQ(sar_adjacency(units, 0.3)(0, 1), 0);
    EXPECT_EQ(sar_adjacency(units, 0.30001)(0, 1), 1);
}

TEST(SimStudy, Reflection) {
    const std::vector<Location> base{{30, 70, 1}};
    const auto r = reflect_coordinates(base);
    ASSERT_EQ(r.size(), 4u);
    EXPECT_DOUBLE_EQ(r[1].lat, 28.0);
    EXPECT_DOUBLE_EQ(r[2].lon, 80.0);
    EXPECT_DOUBLE_EQ(r[3].lat, 28.0);
    EXPECT_DOUBLE_EQ(r[3].lon, 80.0);
}

TEST(SimStudy, SampleQuantile) {
    EXPECT_DOUBLE_EQ(sample_quantile({4, 1, 3, 2}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(sample_quantile({1, 2, 3, 4, 5}, 0.1), 1.4);
    EXPECT_DOUBLE_EQ(sample_quantile({7}, 0.9), 7.0);
}

TEST(SimStudy, GeometryAndDraws) {
    const auto units = load_unit_coordinates(default_coordinates_path());
    ASSERT_EQ(units.size(), 205u);
    const std::vector<Location> few(units.begin(), units.begin() + 30);
    const auto geo = make_geometry(few, 2);
    EXPECT_EQ(geo.n(), 60);
    EXPECT_EQ(geo.locations[1].period, 2);
    const auto reg = gen_regressors(geo, 3);
    EXPECT_EQ(reg.w.cols(), study_controls);
    EXPECT_EQ(gen_regressors(geo, 3).lead, reg.lead);
    Stream r1(1), r2(1);
    const auto e = gen_errors_baseline(geo, true, r1);
    ASSERT_TRUE(e.v.has_value());
    EXPECT_EQ(gen_errors_baseline(geo, true, r2).u, e.u);
    Stream r3(2);
    const auto s = gen_errors_sar(geo, true, r3);
    const auto d = study_dataset(geo, reg, s, true);
    EXPECT_TRUE(d.is_iv());
    EXPECT_LT((d.x - (study_pi * reg.lead + *s.v)).norm(), 1e-12);
    EXPECT_EQ(d.y, s.u);
}

TEST(SimStudy, SarInnovationCorrelation) {
    // two far-apart units: corr(eps_d1, eps_d2) should be exp(-1)
    const std::vector<Location> units{{0, 0, 1}, {0, 50, 1}};
    const auto geo = make_geometry(units, 2);
    Stream rng(4);
    double sxy = 0, sxx = 0, syy = 0;
    for (int r = 0; r < 20000; ++r) {
        const auto e = gen_errors_sar(geo, false, rng);
        sxy += e.u(0) * e.u(1);
        sxx += e.u(0) * e.u(0);
        syy += e.u(1) * e.u(1);
    }
    EXPECT_NEAR(sxy / std::sqrt(sxx * syy), std::exp(-1.0), 0.03);
}

TEST(SimStudy, SmallStudyRuns) {
    const auto units = load_unit_coordinates(default_coordinates_path());
    DesignSpec spec;
    spec.n_units = 205;
    spec.reps = 2;
    spec.B = 10;
    spec.seed = 3;
    const std::vector<Method> methods{Method::im, Method::crs, Method::cce, Method::unit};
    const auto rep = run_study(spec, units, methods);
    EXPECT_EQ(rep.k_max, 8);
    EXPECT_EQ(rep.theta_grid.size(), 21u);
    EXPECT_EQ(rep.rows.size(), 5u);
    for (const auto& row : rep.rows) {
        EXPECT_EQ(row.power.size(), 21u);
        EXPECT_DOUBLE_EQ(row.size, row.power[10]);
        if (!row.calibrated) continue;
        double total = 0;
        for (const auto& [k, f] : row.khat_freq) total += f;
        if (row.label != "UNIT") {
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}
