#include "lcinf/clustering.hpp"
#include "lcinf/rng.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace lcinf;

namespace {

DissimilarityMatrix random_points(int n, std::uint64_t seed, bool duplicates) {
    Stream rng(seed);
    std::vector<Location> loc;
    for (int i = 0; i < n; ++i) {
        if (duplicates && i > 0 && rng.uniform() < 0.3) loc.push_back(loc[rng.below(loc.size())]);
        else loc.push_back({rng.uniform(), rng.uniform(), 1});
    }
    return geo_dissimilarity(loc);
}

double brute_cost(const DissimilarityMatrix& dm, const IndexList& medoids) {
    double c = 0;
    for (Index i = 0; i < dm.n(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index m : medoids) best = std::min(best, dm(i, m) * dm(i, m));
        c += best;
    }
    return c;
}

}  // namespace

TEST(KMedoids, SwapLocalOptimalOnSmallInstances) {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const int n = 3 + static_cast<int>(s % 8);
        const auto dm = random_points(n, s, s % 2 == 0);
        KMedoidsOptions opt;
        opt.record_trace = true;
        if (dm.matrix().maxCoeff() == 0.0) {
            EXPECT_THROW(fit_k_medoids(dm, 2, s, opt), Error);
            continue;
        }
        const auto fit = fit_k_medoids(dm, 2, s, opt);
        const IndexList med = fit.partition.medoids;
        ASSERT_EQ(med.size(), 2u);
        EXPECT_NEAR(fit.cost, brute_cost(dm, med), 1e-12);
        for (std::size_t j = 0; j < med.size(); ++j)
            for (Index c = 0; c < n; ++c) {
                if (c == med[0] || c == med[1]) continue;
                IndexList alt = med;
                alt[j] = c;
                EXPECT_GE(brute_cost(dm, alt), fit.cost - 1e-12) << "seed " << s;
            }
        for (std::size_t t = 1; t < fit.trace.size(); ++t) EXPECT_LE(fit.trace[t], fit.trace[t - 1]);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                if (dm(i, j) == 0.0) {
                    EXPECT_EQ(fit.partition.assignment[i], fit.partition.assignment[j]);
                }
    }
}

TEST(KMedoids, DeterministicAndRestartsNeverWorse) {
    const auto dm = random_points(40, 9, false);
    const auto a = fit_k_medoids(dm, 4, 5);
    const auto b = fit_k_medoids(dm, 4, 5);
    EXPECT_EQ(a.partition.assignment, b.partition.assignment);
    KMedoidsOptions opt;
    opt.restarts = 5;
    EXPECT_LE(fit_k_medoids(dm, 4, 5, opt).cost, a.cost + 1e-12);
}

TEST(KMedoids, Candidates) {
    EXPECT_EQ(default_k_max(410), 8);
    EXPECT_EQ(default_k_max(1640), 12);
    const auto dm = random_points(30, 2, false);
    const auto cs = build_candidates(dm, 5, 1);
    ASSERT_EQ(cs.partitions.size(), 4u);
    for (const auto& [k, p] : cs.partitions) {
        EXPECT_EQ(p.k, k);
        check_partition(p);
    }
    EXPECT_THROW(fit_k_medoids(dm, 31, 1), Error);
}
