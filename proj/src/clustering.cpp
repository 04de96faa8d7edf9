#include "lcinf/clustering.hpp"

#include "lcinf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lcinf {

double cluster_cost(const DissimilarityMatrix& dm, std::span<const Index> members, Index medoid) {
    double cost = 0.0;
    for (Index j : members) cost += dm(medoid, j) * dm(medoid, j);
    return cost;
}

double total_cost(const DissimilarityMatrix& dm, std::span<const Index> medoids) {
    double cost = 0.0;
    for (Index i = 0; i < dm.n(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Index m : medoids) best = std::min(best, dm(i, m) * dm(i, m));
        cost += best;
    }
    return cost;
}

Partition assign_to_medoids(const DissimilarityMatrix& dm, std::span<const Index> medoids) {
    Partition p;
    p.k = static_cast<int>(medoids.size());
    p.medoids.assign(medoids.begin(), medoids.end());
    p.assignment.assign(static_cast<std::size_t>(dm.n()), 0);
    for (Index i = 0; i < dm.n(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int g = 0; g < p.k; ++g) {
            const Index m = medoids[static_cast<std::size_t>(g)];
            if (m == i) {
                best = g;
                break;
            }
            if (dm(i, m) < best_d) {
                best_d = dm(i, m);
                best = g;
            }
        }
        p.assignment[static_cast<std::size_t>(i)] = best;
    }
    return p;
}

namespace {

// Picks uniformly among exact ties so that the seed only matters when the
// deterministic rule is ambiguous.
Index pick_among_ties(const std::vector<Index>& tied, Stream& rng) {
    return tied[static_cast<std::size_t>(rng.below(tied.size()))];
}

IndexList farthest_point_seeding(const DissimilarityMatrix& dm, int k, Stream& rng) {
    const Index n = dm.n();
    const Matrix sq = dm.matrix().array().square().matrix();
    const Vector row_cost = sq.rowwise().sum();

    std::vector<Index> tied;
    const double best_cost = row_cost.minCoeff();
    for (Index i = 0; i < n; ++i)
        if (row_cost(i) == best_cost) tied.push_back(i);

    IndexList medoids{pick_among_ties(tied, rng)};
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    chosen[static_cast<std::size_t>(medoids.front())] = true;
    Vector nearest = dm.matrix().row(medoids.front()).transpose();

    while (static_cast<int>(medoids.size()) < k) {
        double far = -1.0;
        tied.clear();
        for (Index i = 0; i < n; ++i) {
            if (chosen[static_cast<std::size_t>(i)]) continue;
            if (nearest(i) > far) {
                far = nearest(i);
                tied.assign(1, i);
            } else if (nearest(i) == far) {
                tied.push_back(i);
            }
        }
        const Index next = pick_among_ties(tied, rng);
        medoids.push_back(next);
        chosen[static_cast<std::size_t>(next)] = true;
        nearest = nearest.cwiseMin(dm.matrix().row(next).transpose());
    }
    return medoids;
}

struct NearestCache {
    std::vector<int> nearest;  // medoid position
    Vector near_sq;
    Vector second_sq;
};

NearestCache nearest_two(const Matrix& sq, const IndexList& medoids) {
    const Index n = sq.rows();
    NearestCache c{std::vector<int>(static_cast<std::size_t>(n), 0), Vector(n), Vector(n)};
    for (Index i = 0; i < n; ++i) {
        double a = std::numeric_limits<double>::infinity();
        double b = a;
        int ga = 0;
        for (int g = 0; g < static_cast<int>(medoids.size()); ++g) {
            const double v = sq(i, medoids[static_cast<std::size_t>(g)]);
            if (v < a) {
                b = a;
                a = v;
                ga = g;
            } else if (v < b) {
                b = v;
            }
        }
        c.nearest[static_cast<std::size_t>(i)] = ga;
        c.near_sq(i) = a;
        c.second_sq(i) = b;
    }
    return c;
}

KMedoidsFit run_once(const DissimilarityMatrix& dm, int k, std::uint64_t seed, bool record_trace) {
    const Index n = dm.n();
    Stream rng(seed, {0x6b6d6564ULL, static_cast<std::uint64_t>(k)});
    IndexList medoids = farthest_point_seeding(dm, k, rng);
    const Matrix sq = dm.matrix().array().square().matrix();

    std::vector<bool> is_medoid(static_cast<std::size_t>(n), false);
    for (Index m : medoids) is_medoid[static_cast<std::size_t>(m)] = true;

    NearestCache cache = nearest_two(sq, medoids);
    double cost = cache.near_sq.sum();

    KMedoidsFit fit;
    if (record_trace) fit.trace.push_back(cost);

    bool improved = true;
    while (improved) {
        improved = false;
        const double tol = 1e-12 * std::max(1.0, cost);
        for (int g = 0; g < k && !improved; ++g) {
            for (Index j = 0; j < n; ++j) {
                if (is_medoid[static_cast<std::size_t>(j)]) continue;
                double delta = 0.0;
                for (Index i = 0; i < n; ++i) {
                    const double via_j = sq(i, j);
                    const double keep = cache.nearest[static_cast<std::size_t>(i)] == g ? cache.second_sq(i) : cache.near_sq(i);
                    delta += std::min(via_j, keep) - cache.near_sq(i);
                }
                if (delta < -tol) {
                    is_medoid[static_cast<std::size_t>(medoids[static_cast<std::size_t>(g)])] = false;
                    medoids[static_cast<std::size_t>(g)] = j;
                    is_medoid[static_cast<std::size_t>(j)] = true;
                    cache = nearest_two(sq, medoids);
                    cost = cache.near_sq.sum();
                    ++fit.swaps;
                    if (record_trace) fit.trace.push_back(cost);
                    improved = true;
                    break;
                }
            }
        }
    }

    fit.partition = assign_to_medoids(dm, medoids);
    fit.cost = cost;
    return fit;
}

}  // namespace

KMedoidsFit fit_k_medoids(const DissimilarityMatrix& dm, int k, std::uint64_t seed, const KMedoidsOptions& options) {
    if (k < 2 || k > dm.n())
        throw Error(ErrorKind::invalid_argument,
                    "k_medoids: need 2 <= k <= n, got k=" + std::to_string(k) + ", n=" + std::to_string(dm.n()));
    // Co-located points must share a label, so k needs k distinct locations.
    Index distinct = 0;
    for (Index i = 0; i < dm.n() && distinct < k; ++i) {
        bool seen = false;
        for (Index j = 0; j < i && !seen; ++j) seen = dm(i, j) == 0.0;
        if (!seen) ++distinct;
    }
    if (distinct < k)
        throw Error(ErrorKind::invalid_argument,
                    "k_medoids: only " + std::to_string(distinct) + " distinct locations, cannot form k=" + std::to_string(k) + " clusters");
    KMedoidsFit best = run_once(dm, k, seed, options.record_trace);
    for (int r = 1; r < options.restarts; ++r) {
        KMedoidsFit next = run_once(dm, k, derive_key(seed, {static_cast<std::uint64_t>(r)}), options.record_trace);
        if (next.cost < best.cost) best = std::move(next);
    }
    return best;
}

int default_k_max(Index n) {
    int k = 1;
    while (static_cast<Index>(k) * k * k < n) ++k;
    return k;
}

CandidateSet build_candidates(const DissimilarityMatrix& dm, int k_max, std::uint64_t seed, const KMedoidsOptions& options) {
    if (k_max < 2) throw Error(ErrorKind::invalid_argument, "build_candidates: k_max must be at least 2");
    CandidateSet set;
    set.k_max = k_max;
    for (int k = 2; k <= k_max; ++k)
        set.partitions.emplace(k, fit_k_medoids(dm, k, seed ^ static_cast<std::uint64_t>(k), options).partition);
    return set;
}

}  // namespace lcinf
