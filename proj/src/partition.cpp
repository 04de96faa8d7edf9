#include "lcinf/partition.hpp"

#include <string>
#include <unordered_map>

namespace lcinf {

std::vector<Index> Partition::cluster_sizes() const {
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    for (int g : assignment) ++sizes[static_cast<std::size_t>(g)];
    return sizes;
}

std::vector<IndexList> Partition::members() const {
    std::vector<IndexList> out(static_cast<std::size_t>(k));
    for (Index i = 0; i < size(); ++i) out[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
    return out;
}

Partition partition_from_labels(const std::vector<int>& labels) {
    Partition p;
    std::unordered_map<int, int> remap;
    p.assignment.reserve(labels.size());
    for (int label : labels) {
        auto [it, inserted] = remap.try_emplace(label, static_cast<int>(remap.size()));
        p.assignment.push_back(it->second);
    }
    p.k = static_cast<int>(remap.size());
    return p;
}

void check_partition(const Partition& p) {
    if (p.k < 1 || p.assignment.empty()) throw Error(ErrorKind::invalid_partition, "partition is empty");
    std::vector<Index> sizes(static_cast<std::size_t>(p.k), 0);
    for (int g : p.assignment) {
        if (g < 0 || g >= p.k)
            throw Error(ErrorKind::invalid_partition, "cluster label " + std::to_string(g) + " outside 0.." + std::to_string(p.k - 1));
        ++sizes[static_cast<std::size_t>(g)];
    }
    for (int g = 0; g < p.k; ++g)
        if (sizes[static_cast<std::size_t>(g)] == 0)
            throw Error(ErrorKind::invalid_partition, "cluster " + std::to_string(g) + " is empty");
}

}  // namespace lcinf
