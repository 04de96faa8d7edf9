#pragma once

#include "lcinf/core.hpp"
#include "lcinf/geometry.hpp"
#include "lcinf/partition.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace lcinf {

/// Sum of squared dissimilarities from `medoid` to every member.
double cluster_cost(const DissimilarityMatrix& dm, std::span<const Index> members, Index medoid);

/// Total cost of assigning every index to its nearest medoid.
double total_cost(const DissimilarityMatrix& dm, std::span<const Index> medoids);

/// Nearest-medoid assignment. A medoid always carries its own label;
/// other ties go to the lowest medoid position.
Partition assign_to_medoids(const DissimilarityMatrix& dm, std::span<const Index> medoids);

struct KMedoidsOptions {
    int restarts = 1;           // >1 reruns with derived seeds and keeps the cheapest
    bool record_trace = false;  // keep the total cost after every accepted swap
};

struct KMedoidsFit {
    Partition partition;
    double cost = 0.0;
    int swaps = 0;
    std::vector<double> trace;  // initial cost followed by the cost after each swap
};

/// Swap-based k-medoids: farthest-point seeding, then first-improvement
/// single-medoid swaps until no swap lowers the total squared cost.
KMedoidsFit fit_k_medoids(const DissimilarityMatrix& dm, int k, std::uint64_t seed, const KMedoidsOptions& options = {});

inline Partition k_medoids(const DissimilarityMatrix& dm, int k, std::uint64_t seed) {
    return fit_k_medoids(dm, k, seed).partition;
}

/// Partitions for every k in 2..k_max.
struct CandidateSet {
    std::map<int, Partition> partitions;
    int k_max = 0;
};

/// ceil(n^{1/3}) with n the total sample size.
int default_k_max(Index n);

CandidateSet build_candidates(const DissimilarityMatrix& dm, int k_max, std::uint64_t seed, const KMedoidsOptions& options = {});

}  // namespace lcinf
