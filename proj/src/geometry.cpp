#include "lcinf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lcinf {

DissimilarityMatrix geo_dissimilarity(std::span<const Location> locations) {
    if (locations.empty()) throw Error(ErrorKind::invalid_input, "geo_dissimilarity: no locations");
    const auto n = static_cast<Index>(locations.size());
    for (Index i = 0; i < n; ++i) {
        const auto& l = locations[static_cast<std::size_t>(i)];
        if (!std::isfinite(l.lat) || !std::isfinite(l.lon))
            throw Error(ErrorKind::invalid_input, "geo_dissimilarity: non-finite coordinate at row " + std::to_string(i));
    }
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const auto& a = locations[static_cast<std::size_t>(i)];
        for (Index j = i + 1; j < n; ++j) {
            const auto& b = locations[static_cast<std::size_t>(j)];
            const double v = std::hypot(a.lat - b.lat, a.lon - b.lon);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return DissimilarityMatrix(std::move(d));
}

ValidationReport validate(const DissimilarityMatrix& dm, bool check_triangle) {
    ValidationReport report;
    const Matrix& d = dm.matrix();
    if (d.rows() != d.cols()) {
        report.non_square = true;
        return report;
    }
    const Index n = d.rows();
    for (Index i = 0; i < n; ++i) {
        if (std::abs(d(i, i)) > metric_tolerance) report.nonzero_diagonal.push_back(i);
        for (Index j = 0; j < n; ++j) {
            if (d(i, j) < -metric_tolerance) report.negative.emplace_back(i, j);
            if (j > i && std::abs(d(i, j) - d(j, i)) > metric_tolerance) report.asymmetric.emplace_back(i, j);
        }
    }
    if (check_triangle) {
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) {
                if (j == i) continue;
                for (Index k = 0; k < n; ++k) {
                    if (k == i || k == j) continue;
                    if (d(i, k) > d(i, j) + d(j, k) + metric_tolerance) report.triangle.push_back({i, j, k});
                }
            }
    }
    return report;
}

double balance_ratio(const Partition& p) {
    check_partition(p);
    const auto sizes = p.cluster_sizes();
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    return static_cast<double>(*lo) / static_cast<double>(*hi);
}

double boundary_fraction(const Partition& p, const DissimilarityMatrix& dm, double r) {
    check_partition(p);
    if (p.k < 2) throw Error(ErrorKind::invalid_partition, "boundary_fraction: single cluster has an empty complement");
    if (r < 0.0) throw Error(ErrorKind::invalid_argument, "boundary_fraction: radius must be nonnegative");
    if (dm.n() != p.size()) throw Error(ErrorKind::invalid_argument, "boundary_fraction: partition and dissimilarity sizes differ");

    const Index n = p.size();
    std::vector<Index> boundary(static_cast<std::size_t>(p.k), 0);
    for (Index i = 0; i < n; ++i) {
        const int g = p.assignment[static_cast<std::size_t>(i)];
        double nearest_outside = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j)
            if (p.assignment[static_cast<std::size_t>(j)] != g) nearest_outside = std::min(nearest_outside, dm(i, j));
        if (nearest_outside <= r) ++boundary[static_cast<std::size_t>(g)];
    }
    const auto sizes = p.cluster_sizes();
    const Index most = *std::max_element(boundary.begin(), boundary.end());
    const Index smallest = *std::min_element(sizes.begin(), sizes.end());
    return static_cast<double>(most) / static_cast<double>(smallest);
}

std::vector<BallGrowthRow> ball_growth_profile(const DissimilarityMatrix& dm, std::span<const double> radii) {
    if (!std::is_sorted(radii.begin(), radii.end()))
        throw Error(ErrorKind::invalid_argument, "ball_growth_profile: radii must be sorted ascending");
    const Index n = dm.n();
    std::vector<BallGrowthRow> rows;
    rows.reserve(radii.size());
    // Sorting each row once makes every radius a binary search.
    std::vector<std::vector<double>> sorted_rows(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        auto& row = sorted_rows[static_cast<std::size_t>(i)];
        row.resize(static_cast<std::size_t>(n));
        for (Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = dm(i, j);
        std::sort(row.begin(), row.end());
    }
    for (double r : radii) {
        BallGrowthRow out{r, std::numeric_limits<Index>::max(), 0.0, 0};
        double total = 0.0;
        for (const auto& row : sorted_rows) {
            const auto count = static_cast<Index>(std::upper_bound(row.begin(), row.end(), r) - row.begin());
            out.min_size = std::min(out.min_size, count);
            out.max_size = std::max(out.max_size, count);
            total += static_cast<double>(count);
        }
        if (n == 0) out.min_size = 0;
        out.mean_size = n > 0 ? total / static_cast<double>(n) : 0.0;
        rows.push_back(out);
    }
    return rows;
}

}  // namespace lcinf
