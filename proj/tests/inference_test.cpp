#include "lcinf/distributions.hpp"
#include "lcinf/inference.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace lcinf;

namespace {

// Textbook one-sample t statistic of the cluster estimates.
double textbook_t(const Vector& theta, double theta0) {
    const double k = static_cast<double>(theta.size());
    const double m = theta.mean();
    const double sd = std::sqrt((theta.array() - m).square().sum() / (k - 1));
    return (m - theta0) / (sd / std::sqrt(k));
}

// Full enumeration of sign flips with the non-randomized rule.
bool crs_oracle(const Vector& s, double a) {
    const int k = static_cast<int>(s.size());
    const std::size_t m = std::size_t{1} << k;
    std::vector<double> w(m);
    for (std::size_t g = 0; g < m; ++g) {
        Vector h = s;
        for (int c = 0; c < k; ++c)
            if (g >> c & 1) h(c) = -h(c);
        const double mean = h.mean();
        const double var = (h.array() - mean).square().sum() / (k - 1);
        w[g] = var > 0 ? std::abs(h.sum() / std::sqrt(k) / std::sqrt(var)) : 0.0;
    }
    std::vector<double> sorted = w;
    std::sort(sorted.begin(), sorted.end());
    const auto j = static_cast<std::size_t>(std::ceil(static_cast<double>(m) * (1 - a) - 1e-9));
    const double kj = sorted[j - 1];
    const double above = static_cast<double>(std::count_if(w.begin(), w.end(), [&](double v) { return v > kj * (1 + 1e-12); }));
    const double tied = static_cast<double>(std::count_if(w.begin(), w.end(), [&](double v) { return std::abs(v - kj) <= 1e-12 * kj; }));
    if (w[0] > kj * (1 + 1e-12)) return true;
    if (std::abs(w[0] - kj) <= 1e-12 * kj) return (static_cast<double>(m) * a - above) / tied >= 1.0;
    return false;
}

Matrix dense_weights(const Partition& p) {
    Matrix omega = Matrix::Zero(p.size(), p.size());
    for (Index i = 0; i < p.size(); ++i)
        for (Index j = 0; j < p.size(); ++j)
            if (p.assignment[i] == p.assignment[j]) omega(i, j) = 1;
    return omega;
}

}  // namespace

TEST(Inference, ImMatchesTextbookT) {
    Stream rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const int k = 3 + rep % 8;
        const Vector theta = rng.normals(k);
        const auto sv = cluster_statistics(theta, 400, 0.1);
        const auto out = im_test(sv, 0.05);
        EXPECT_NEAR(out.statistic, std::abs(textbook_t(theta, 0.1)), 1e-10);
        EXPECT_NEAR(out.threshold, t_quantile(0.975, k - 1), 1e-12);
        EXPECT_EQ(out.decision == Decision::reject, std::abs(out.statistic) > out.threshold);
    }
    EXPECT_NEAR(im_level_cap(), 2 * normal_cdf(-std::sqrt(3.0)), 1e-15);
    EXPECT_TRUE(im_test(cluster_statistics(Vector::Constant(4, 1.0) + Vector::LinSpaced(4, 0, 1), 8, 0), 0.1).level_warning);
}

TEST(Inference, ImDegenerate) {
    EXPECT_THROW(im_test(cluster_statistics(Vector::Constant(5, 0.3), 50, 0.3), 0.05), Error);
}

TEST(Inference, CrsMatchesEnumerationOracle) {
    Stream rng(5);
    for (int rep = 0; rep < 300; ++rep) {
        const int k = 2 + rep % 9;
        Vector s = rng.normals(k);
        if (rep % 3 == 0) s.array() += 1.5;
        for (double a : {0.01, 0.05, 0.1, 0.25}) {
            const auto out = crs_test(cluster_statistics(s, 100, 0.0), a);
            EXPECT_EQ(out.decision == Decision::reject, crs_oracle(s * std::sqrt(100.0 / k), a)) << "k=" << k << " a=" << a;
        }
    }
}

TEST(Inference, CrsTrivialBelowSixGroups) {
    Stream rng(1);
    for (int rep = 0; rep < 200; ++rep) {
        const Vector s = rng.normals(5).array() + 5.0 * rng.uniform();
        EXPECT_EQ(crs_test(cluster_statistics(s, 50, 0.0), 0.05).decision, Decision::fail_to_reject);
    }
}

TEST(Inference, CrsOrderIndexAndOrbit) {
    EXPECT_EQ(crs_order_index(256, 0.05), 244u);
    EXPECT_EQ(crs_order_index(32, 0.0625), 30u);
    Vector s(3);
    s << 1, 2, 4;
    const auto orbit = sign_orbit(s);
    EXPECT_EQ(orbit.keys.size(), 8u);
    EXPECT_NEAR(orbit.w(orbit.keys[0]), std::abs(textbook_t(s, 0)), 1e-12);
    CrsOptions big;
    big.orbit_draws = 500;
    EXPECT_EQ(sign_orbit(Vector::Ones(25) + Vector::LinSpaced(25, 0, 1), big).keys.size(), 500u);  // identity plus 499 sampled flips
    EXPECT_THROW(sign_orbit(Vector::LinSpaced(25, 0, 1)), Error);
}

TEST(Inference, CceVarianceMatchesDenseSandwich) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const int units = 10 + static_cast<int>(s % 20);
        const auto d = fixtures::random_panel(units, 2, 2, s, s % 4 == 0);
        const auto f = fit(d);
        const int k = 2 + static_cast<int>(s % 4);
        std::vector<int> labels;
        for (Index i = 0; i < d.n(); ++i) labels.push_back(static_cast<int>(i * k / d.n()));
        const auto p = partition_from_labels(labels);
        // dense sandwich: (Z'X)^{-1} Z' diag(e) Omega diag(e) Z (X'Z)^{-1}, element [0,0]
        Matrix x(d.n(), d.p() + 2), z;
        x.col(0) = d.x;
        x.middleCols(1, d.p()) = d.w;
        x.col(d.p() + 1).setOnes();
        z = x;
        if (d.z) z.col(0) = *d.z;
        const Vector e = d.y - x * (z.transpose() * x).lu().solve(z.transpose() * d.y);
        const Matrix bread = (z.transpose() * x).inverse();
        const Matrix meat = z.transpose() * e.asDiagonal() * dense_weights(p) * e.asDiagonal() * z;
        const double oracle = (bread * meat * bread.transpose())(0, 0);
        EXPECT_NEAR(cce_variance(d, p, f) / oracle, 1.0, 1e-8) << "seed " << s;
    }
}

TEST(Inference, CceThresholdAndUnitPartition) {
    EXPECT_NEAR(cce_threshold(8, 0.05), std::sqrt(8.0 / 7.0) * t_quantile(0.975, 7), 1e-12);
    const auto d = fixtures::random_panel(15, 2, 1, 2);
    EXPECT_EQ(unit_partition(d).k, 15);
    const auto t = unit_test(d, 0.0, 0.05);
    EXPECT_EQ(t.k, 15);
}

TEST(Inference, MoranMatchesDoubleLoop) {
    Stream rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 10 + rep;
        std::vector<Location> loc;
        for (int i = 0; i < n; ++i) loc.push_back({rng.uniform(), rng.uniform(), 1 + i % 2});
        const Vector s = rng.normals(n);
        const Matrix w = knn_weights(loc, 2, rep % 2 == 0);
        const double mean = s.mean();
        double num = 0, den = 0, s0 = 0;
        for (int i = 0; i < n; ++i) {
            den += (s(i) - mean) * (s(i) - mean);
            for (int j = 0; j < n; ++j) {
                num += w(i, j) * (s(i) - mean) * (s(j) - mean);
                s0 += w(i, j);
            }
        }
        double s1 = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            double row = 0, col = 0;
            for (int j = 0; j < n; ++j) {
                s1 += 0.5 * (w(i, j) + w(j, i)) * (w(i, j) + w(j, i));
                row += w(i, j);
                col += w(j, i);
            }
            s2 += (row + col) * (row + col);
        }
        const double raw = n / s0 * num / den;
        const double e = -1.0 / (n - 1);
        const double var = (n * n * s1 - n * s2 + 3 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - e * e;
        const auto m = moran_i(s, w);
        EXPECT_NEAR(m.raw_i, raw, 1e-10);
        EXPECT_NEAR(m.expected, e, 1e-12);
        EXPECT_NEAR(m.variance, var, 1e-10);
        EXPECT_NEAR(m.statistic, (raw - e) / std::sqrt(var), 1e-10);
    }
}

TEST(Inference, KnnWeights) {
    std::vector<Location> loc{{0, 0, 1}, {1, 0, 1}, {3, 0, 1}, {0, 0, 2}, {5, 0, 2}, {9, 0, 2}};
    const Matrix w = knn_weights(loc, 2, true);
    EXPECT_EQ(w.row(0).sum(), 2);
    EXPECT_EQ(w(0, 3), 0);  // other period
    EXPECT_EQ(w(0, 1), 1);
    const Matrix u = same_unit_weights({0, 0, 1, 1});
    EXPECT_EQ(u(0, 1), 1);
    EXPECT_EQ(u(0, 0), 0);
    EXPECT_EQ(u(0, 2), 0);
}
