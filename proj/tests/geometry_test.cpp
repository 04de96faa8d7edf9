#include "lcinf/geometry.hpp"
#include "lcinf/partition.hpp"

#include <gtest/gtest.h>

using namespace lcinf;

TEST(Geometry, EuclideanIgnoresPeriod) {
    std::vector<Location> loc{{0, 0, 1}, {3, 4, 1}, {0, 0, 2}};
    const auto dm = geo_dissimilarity(loc);
    EXPECT_DOUBLE_EQ(dm(0, 1), 5.0);
    EXPECT_DOUBLE_EQ(dm(0, 2), 0.0);
    EXPECT_TRUE(validate(dm, true).ok());
}

TEST(Geometry, ValidationFlagsProblems) {
    Matrix m(3, 3);
    m << 0, 1, 5, 2, 0, 1, 5, 1, 0;
    const auto r = validate(DissimilarityMatrix(m), true);
    EXPECT_EQ(r.asymmetric.size(), 1u);
    EXPECT_FALSE(r.triangle.empty());
    m << 0, -1, 1, -1, 0.5, 1, 1, 1, 0;
    const auto r2 = validate(DissimilarityMatrix(m), false);
    EXPECT_EQ(r2.negative.size(), 2u);  // both (0,1) and (1,0)
    EXPECT_EQ(r2.nonzero_diagonal.size(), 1u);
    EXPECT_TRUE(r2.triangle.empty());
}

TEST(Geometry, BalanceAndBoundary) {
    std::vector<Location> loc;
    for (int i = 0; i < 6; ++i) loc.push_back({static_cast<double>(i), 0, 1});
    const auto dm = geo_dissimilarity(loc);
    const auto p = partition_from_labels({0, 0, 0, 1, 1, 1});
    EXPECT_DOUBLE_EQ(balance_ratio(p), 1.0);
    // one point per side lies within 1 of the other cluster
    EXPECT_DOUBLE_EQ(boundary_fraction(p, dm, 1.0), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(boundary_fraction(p, dm, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(balance_ratio(partition_from_labels({0, 1, 1, 1})), 1.0 / 3.0);
}

TEST(Geometry, BallGrowth) {
    std::vector<Location> loc;
    for (int i = 0; i < 5; ++i) loc.push_back({static_cast<double>(i), 0, 1});
    const auto dm = geo_dissimilarity(loc);
    const std::vector<double> radii{0.0, 1.0, 10.0};
    const auto rows = ball_growth_profile(dm, radii);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].max_size, 1);
    EXPECT_EQ(rows[1].min_size, 2);
    EXPECT_EQ(rows[1].max_size, 3);
    EXPECT_DOUBLE_EQ(rows[1].mean_size, 13.0 / 5.0);
    EXPECT_EQ(rows[2].min_size, 5);
}

TEST(Partition, LabelsAndChecks) {
    const auto p = partition_from_labels({7, 3, 7, 9});
    EXPECT_EQ(p.k, 3);
    EXPECT_EQ(p.assignment, (std::vector<int>{0, 1, 0, 2}));
    Partition bad = p;
    bad.k = 4;
    EXPECT_THROW(check_partition(bad), Error);
}
