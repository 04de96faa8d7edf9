#include "lcinf/distributions.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace {

double t_density(double x, double df) {
    const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
    return c * std::pow(1 + x * x / df, -(df + 1) / 2);
}

// P(T <= x) for x >= 0 by composite Simpson on [0, x].
double t_cdf_quadrature(double x, double df) {
    const int m = 20000;
    const double h = x / m;
    double s = t_density(0, df) + t_density(x, df);
    for (int i = 1; i < m; ++i) s += (i % 2 ? 4 : 2) * t_density(i * h, df);
    return 0.5 + s * h / 3;
}

}  // namespace

TEST(Distributions, TQuantileMatchesQuadrature) {
    for (double df : {1.0, 4.0, 7.0, 204.0})
        for (double p : {0.9, 0.975, 0.995}) {
            const double q = lcinf::t_quantile(p, df);
            EXPECT_NEAR(t_cdf_quadrature(q, df), p, 1e-7) << "df=" << df << " p=" << p;
        }
}

TEST(Distributions, KnownValues) {
    EXPECT_NEAR(lcinf::t_quantile(0.975, 7), 2.364624, 1e-6);
    EXPECT_NEAR(lcinf::normal_quantile(0.975), 1.959964, 1e-6);
    EXPECT_NEAR(lcinf::t_cdf(lcinf::t_quantile(0.3, 5), 5), 0.3, 1e-12);
    EXPECT_NEAR(lcinf::normal_cdf(0.0), 0.5, 1e-15);
}
