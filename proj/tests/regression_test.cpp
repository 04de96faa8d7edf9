#include "support.hpp"

#include <gtest/gtest.h>

using namespace lcinf;

namespace {

Matrix full_design(const PanelDataset& d) {
    Matrix a(d.n(), d.p() + 2);
    a.col(0) = d.x;
    a.middleCols(1, d.p()) = d.w;
    a.col(d.p() + 1).setOnes();
    return a;
}

}  // namespace

TEST(Regression, OlsMatchesNormalEquations) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto d = fixtures::random_panel(20, 2, 3, s, false, 0.7);
        const Matrix a = full_design(d);
        const Vector beta = (a.transpose() * a).ldlt().solve(a.transpose() * d.y);
        const auto f = ols_fit(d);
        EXPECT_NEAR(f.theta_hat, beta(0), 1e-10);
        EXPECT_LT((f.coef_controls - beta.tail(d.p() + 1)).norm(), 1e-10);
        EXPECT_LT((f.residuals_u - (d.y - a * beta)).norm(), 1e-9);
    }
}

TEST(Regression, IvMatchesTwoStageFormula) {
    const auto d = fixtures::random_panel(40, 2, 2, 4, true, -0.3);
    const Matrix a = full_design(d);
    Matrix zmat = a;
    zmat.col(0) = *d.z;
    const Vector beta = (zmat.transpose() * a).lu().solve(zmat.transpose() * d.y);
    const auto f = iv_fit(d);
    EXPECT_NEAR(f.theta_hat, beta(0), 1e-10);
    ASSERT_TRUE(f.pi_hat.has_value());
    ASSERT_TRUE(f.residuals_v.has_value());
    EXPECT_NEAR(fit(d).theta_hat, f.theta_hat, 1e-14);
}

TEST(Regression, SubsetEstimatorMatchesSubsetFit) {
    auto d = fixtures::random_panel(30, 2, 2, 7, false, 1.0);
    IndexList subset;
    for (Index i = 0; i < d.n(); i += 2) subset.push_back(i);
    const SubsetEstimator est(d, subset);
    EXPECT_NEAR(est.estimate(d.y, d.x), ols_fit(d, subset).theta_hat, 1e-10);
}

TEST(Regression, ScoresSumToZeroAndResidualizer) {
    const auto d = fixtures::random_panel(25, 2, 2, 3);
    const auto f = fit(d);
    EXPECT_NEAR(score_vector(d, f).sum(), 0.0, 1e-9);
    const Matrix a = controls_design(d, iota_indices(d.n()));
    const Residualizer r(a);
    EXPECT_EQ(r.rank(), d.p() + 1);
    EXPECT_LT((a.transpose() * r.apply(d.y)).norm(), 1e-9);
}

TEST(Regression, RejectsBadInput) {
    auto d = fixtures::random_panel(3, 1, 2, 1);
    EXPECT_THROW(check_dataset(d), Error);
    auto e = fixtures::random_panel(10, 2, 1, 1);
    e.x = e.w.col(0);
    EXPECT_THROW(ols_fit(e), Error);
    auto g = fixtures::random_panel(10, 2, 1, 1);
    g.y(3) = std::nan("");
    EXPECT_THROW(check_dataset(g), Error);
}
