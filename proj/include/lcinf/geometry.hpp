#pragma once

#include "lcinf/core.hpp"
#include "lcinf/partition.hpp"

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace lcinf {

/// Centroid of a spatial unit observed in period `period` (>= 1).
struct Location {
    double lat = 0.0;
    double lon = 0.0;
    int period = 1;
};

/// Dense symmetric n x n array of nonnegative dissimilarities. Zero
/// off-diagonal entries are allowed (the same unit observed in two periods).
class DissimilarityMatrix {
public:
    DissimilarityMatrix() = default;
    explicit DissimilarityMatrix(Matrix d) : d_(std::move(d)) {}

    Index n() const { return d_.rows(); }
    double operator()(Index i, Index j) const { return d_(i, j); }
    const Matrix& matrix() const { return d_; }

private:
    Matrix d_;
};

/// Euclidean distance in (lat, lon); the period is ignored, so repeated
/// observations of a unit sit at distance zero.
DissimilarityMatrix geo_dissimilarity(std::span<const Location> locations);

struct ValidationReport {
    std::vector<std::pair<Index, Index>> asymmetric;
    std::vector<std::pair<Index, Index>> negative;
    std::vector<Index> nonzero_diagonal;
    std::vector<std::array<Index, 3>> triangle;  // (i, j, k) with d(i,k) > d(i,j) + d(j,k)
    bool non_square = false;

    bool ok() const {
        return !non_square && asymmetric.empty() && negative.empty() && nonzero_diagonal.empty() && triangle.empty();
    }
};

inline constexpr double metric_tolerance = 1e-9;

/// Report-only structural check. The triangle scan is O(n^3).
ValidationReport validate(const DissimilarityMatrix& dm, bool check_triangle);

/// min_C |C| / max_C |C|.
double balance_ratio(const Partition& p);

/// max_C |{i in C : d(i, X \ C) <= r}| / min_D |D|.
double boundary_fraction(const Partition& p, const DissimilarityMatrix& dm, double r);

struct BallGrowthRow {
    double radius = 0.0;
    Index min_size = 0;
    double mean_size = 0.0;
    Index max_size = 0;
};

/// Closed-ball cardinalities |{j : d(i,j) <= r}| aggregated over centres i.
std::vector<BallGrowthRow> ball_growth_profile(const DissimilarityMatrix& dm, std::span<const double> radii);

}  // namespace lcinf
