#pragma once

#include "lcinf/core.hpp"
#include "lcinf/geometry.hpp"
#include "lcinf/partition.hpp"
#include "lcinf/regression.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lcinf {

enum class Method { im, crs, cce, unit };
enum class Decision { reject, fail_to_reject };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
inline std::string to_string(Decision d) { return d == Decision::reject ? "Reject" : "FailToReject"; }

/// S_C = sqrt(n/k) (theta_C - theta_star) for each cluster.
struct ClusterStatVector {
    Vector s;
    int k = 0;
    Index n = 0;
    double theta_star = 0.0;
};

ClusterStatVector cluster_statistics(const Vector& theta_by_cluster, Index n, double theta_star);

struct TestOutcome {
    Decision decision = Decision::fail_to_reject;
    double statistic = 0.0;
    double threshold = 0.0;
    double p_value = 1.0;
    Method method = Method::im;
    double a = 0.0;
    int k = 0;
    bool level_warning = false;  // IM only: a above 2 Phi(-sqrt 3)
};

/// t(S) = (k^{-1/2} sum S_C) / sd(S). Throws `degenerate` when every entry is equal.
template <class Derived>
double t_of_s(const Eigen::MatrixBase<Derived>& s) {
    const auto k = static_cast<double>(s.size());
    if (s.size() < 2) throw Error(ErrorKind::invalid_argument, "t_of_s: need at least two clusters");
    if ((s.array() == s(0)).all()) throw Error(ErrorKind::degenerate, "t_of_s: all cluster statistics are equal");
    const double mean = s.mean();
    const double var = (s.array() - mean).square().sum() / (k - 1.0);
    return s.sum() / std::sqrt(k) / std::sqrt(var);
}

/// Largest level for which IM is known to be valid: 2 Phi(-sqrt 3).
double im_level_cap();

/// t_{1-a/2, k-1}.
double im_threshold(int k, double a);
TestOutcome im_test(const ClusterStatVector& sv, double a);

struct CrsOptions {
    std::size_t orbit_draws = 0;                  // 0 = full enumeration (k <= 20)
    std::uint64_t orbit_seed = 0;                 // used only with orbit_draws
    std::optional<std::uint64_t> randomized_seed; // exact-level randomized tie rule
};

inline constexpr int crs_max_enumeration_k = 20;

/// Orbit of |t(hS)| over sign flips h, represented by ordering keys that
/// are monotone in |t|. Entries where hS is constant get key -1 (|t| := 0).
struct SignOrbit {
    std::vector<double> keys;  // keys[0] is the identity
    double sum_squares = 0.0;
    int k = 0;

    double w(double key) const;  // |t| for a key
    std::size_t count_at_least_identity() const;
};

SignOrbit sign_orbit(const Vector& s, const CrsOptions& options = {});

/// ceil(M (1 - a)) computed as M - floor(M a) so attainable levels j/M land exactly.
std::size_t crs_order_index(std::size_t m, double a);

TestOutcome crs_test(const ClusterStatVector& sv, double a, const CrsOptions& options = {});

/// Clustered sandwich variance of theta_hat without small-sample correction:
/// sum_C (sum_{i in C} g_i)^2 / h^2 with h = <z~, x>.
double cce_variance(const PanelDataset& data, const Partition& p, const FitResult& fit);
double cce_variance_from_scores(const Vector& scores, double hessian, const Partition& p);

/// <z~, x> with z~ the full-sample partialled instrument.
double hessian_scale(const PanelDataset& data);

/// sqrt(k/(k-1)) t_{1-a/2,k-1}.
double cce_threshold(int k, double a);
TestOutcome cce_test(const PanelDataset& data, const Partition& p, const FitResult& fit, double theta_star, double a);
TestOutcome cce_test(const PanelDataset& data, const Partition& p, double theta_star, double a);

/// One cluster per cross-sectional unit.
Partition unit_partition(const PanelDataset& data);
TestOutcome unit_test(const PanelDataset& data, double theta_star, double a);

struct MoranResult {
    double statistic = 0.0;  // standardized (z-score)
    double p_value = 1.0;    // two-sided, normal approximation
    double raw_i = 0.0;
    double expected = 0.0;
    double variance = 0.0;
};

/// Moran's I of `scores` (centred) against `weights`, standardized with
/// the normality-assumption moments.
MoranResult moran_i(const Vector& scores, const Matrix& weights);

/// Binary weights linking each location to its `neighbors` nearest others
/// (ties by lowest index). With `within_period` the search is restricted to
/// locations sharing the same period.
Matrix knn_weights(std::span<const Location> locations, int neighbors, bool within_period);

/// w_ij = 1 when i != j share a unit label.
Matrix same_unit_weights(const std::vector<int>& unit_labels);

}  // namespace lcinf
