#include "lcinf/covmodel.hpp"
#include "lcinf/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lcinf;

namespace {

std::vector<Location> panel_locations(int units, std::uint64_t seed) {
    Stream rng(seed);
    std::vector<Location> loc;
    for (int i = 0; i < units; ++i) {
        const double lat = 10 * rng.uniform(), lon = 10 * rng.uniform();
        loc.push_back({lat, lon, 1});
        loc.push_back({lat, lon, 2});
    }
    return loc;
}

Matrix random_design(Index n, Index cols, Stream& rng) {
    Matrix a(n, cols);
    for (Index j = 0; j < cols; ++j) a.col(j) = rng.normals(n);
    a.col(cols - 1).setOnes();
    return a;
}

}  // namespace

TEST(CovModel, KernelEntries) {
    const auto loc = panel_locations(3, 1);
    const CovarianceParams p{0.4, 2.0, 0.5, std::nullopt};
    const Matrix s = exp_cov(p, loc);
    const double d = std::hypot(loc[0].lat - loc[2].lat, loc[0].lon - loc[2].lon);
    EXPECT_NEAR(s(0, 3), std::exp(0.4) * std::exp(-d / 2.0 - 1.0 / 0.5), 1e-14);
    EXPECT_NEAR(s(0, 1), std::exp(0.4) * std::exp(-2.0), 1e-14);
    EXPECT_NEAR(s(0, 0), std::exp(0.4), 1e-14);
    EXPECT_THROW(check_params({0, -1, 1, std::nullopt}), Error);
}

TEST(CovModel, LowerSqrt) {
    const auto loc = panel_locations(20, 2);
    const Matrix s = exp_cov({0, 3, 1, std::nullopt}, loc);
    const Matrix l = lower_sqrt(s, 1.0);
    EXPECT_LT((l * l.transpose() - s).norm(), 1e-6);
    EXPECT_TRUE(l.isLowerTriangular());
}

TEST(CovModel, FastObjectiveMatchesDirect) {
    Stream rng(4);
    const auto loc = panel_locations(30, 3);
    const Index n = static_cast<Index>(loc.size());
    const Matrix a = random_design(n, 3, rng);
    const auto proj = project_residuals(rng.normals(n), a);
    EXPECT_EQ(proj.values.size(), n - 3);
    const QmleObjective fast(proj, loc);
    for (const CovarianceParams p : {CovarianceParams{0, 3, 1, {}}, CovarianceParams{-0.5, 0.7, 4, {}}, CovarianceParams{1.2, 10, 0.2, {}}}) {
        const double direct = projected_nll(proj, exp_cov(p, loc));
        EXPECT_NEAR(fast(p), direct, 1e-8 * std::max(1.0, std::abs(direct)));
    }
}

TEST(CovModel, BasisInvariance) {
    Stream rng(8);
    const auto loc = panel_locations(15, 5);
    const Index n = static_cast<Index>(loc.size());
    const Matrix a = random_design(n, 2, rng);
    const Vector r = rng.normals(n);
    const auto p1 = project_residuals(r, a);
    // rotate the complement basis by a random orthogonal matrix
    Matrix g(n - 2, n - 2);
    for (Index j = 0; j < n - 2; ++j) g.col(j) = rng.normals(n - 2);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    const auto p2 = project_residuals(r, a, p1.basis * q);
    const Matrix s = exp_cov({0.3, 2, 1, {}}, loc);
    EXPECT_NEAR(projected_nll(p1, s), projected_nll(p2, s), 1e-8);
}

TEST(CovModel, QmleNeverWorseThanInit) {
    Stream rng(12);
    const auto loc = panel_locations(40, 6);
    const Index n = static_cast<Index>(loc.size());
    const Matrix l = lower_sqrt(exp_cov({0, 3, 1, {}}, loc), 1.0);
    const Matrix a = random_design(n, 2, rng);
    const auto proj = project_residuals(l * rng.normals(n), a);
    const auto init = default_init(proj, loc);
    const auto fit = qmle_fit(proj, loc, init);
    EXPECT_LE(fit.objective, fit.init_objective);
    EXPECT_NEAR(fit.init_objective, QmleObjective(proj, loc)(init), 1e-9 * std::abs(fit.init_objective) + 1e-12);
    EXPECT_GT(fit.params.tau2, 0);
    EXPECT_GT(fit.params.tau3, 0);
}

TEST(CovModel, RhoEstimate) {
    Stream rng(2);
    const auto loc = panel_locations(150, 9);
    const Index n = static_cast<Index>(loc.size());
    const CovarianceParams p{0, 3, 1, {}};
    const Matrix l = lower_sqrt(exp_cov(p, loc), 1.0);
    const Vector e1 = rng.normals(n), e2 = rng.normals(n);
    const Vector u = l * e1, v = l * (0.8 * e1 + 0.6 * e2);
    EXPECT_NEAR(estimate_rho(u, v, p, p, loc), 0.8, 0.05);
    EXPECT_DOUBLE_EQ(estimate_rho(u, u, p, p, loc), rho_clamp);
    const Matrix j = assemble_joint_cov(p, p, 0.5, loc);
    EXPECT_EQ(j.rows(), 2 * n);
    EXPECT_LT((j.topRightCorner(n, n) - 0.5 * l * l.transpose()).norm(), 1e-9);
}
