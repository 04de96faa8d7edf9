#pragma once

#include "lcinf/core.hpp"

#include <vector>

namespace lcinf {

/// Assignment of n spatial indices to k clusters. `medoids` is empty for
/// partitions that do not come from k-medoids (e.g. grouping by unit).
struct Partition {
    std::vector<int> assignment;
    IndexList medoids;
    int k = 0;

    Index size() const { return static_cast<Index>(assignment.size()); }
    std::vector<Index> cluster_sizes() const;
    std::vector<IndexList> members() const;
};

/// Builds a partition from arbitrary integer group labels, relabelling them
/// 0..k-1 in order of first appearance.
Partition partition_from_labels(const std::vector<int>& labels);

/// Throws invalid_partition if a label is out of range or a cluster is empty.
void check_partition(const Partition& p);

}  // namespace lcinf
