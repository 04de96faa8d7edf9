#pragma once

#include "lcinf/clustering.hpp"
#include "lcinf/core.hpp"
#include "lcinf/covmodel.hpp"
#include "lcinf/inference.hpp"
#include "lcinf/regression.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lcinf {

/// Fitted Gaussian model used to generate synthetic copies of the data.
/// OLS: y = mean_y + theta x + U with x held fixed.
/// IV:  x = mean_x + V, y = mean_y + theta x + U, V = L_V (rho e1 + sqrt(1-rho^2) e2), U = L_U e1.
struct SimulationModel {
    Vector mean_y;
    Vector mean_x;  // the fixed regressor under OLS
    bool iv = false;
    Matrix root_u;
    Matrix root_v;
    double rho = 0.0;
};

/// Builds the model from a full-sample fit. `params_v` and `rho` are
/// required for IV datasets and ignored otherwise.
SimulationModel make_simulation_model(const PanelDataset& data, const FitResult& fit, const CovarianceParams& params_u,
                                      const std::optional<CovarianceParams>& params_v = std::nullopt, double rho = 0.0);

struct SyntheticDraw {
    Vector y;
    Vector x;
};

/// Replication b under parameter theta. Independent substreams are keyed by
/// (seed, theta tag, b, equation), so any b can be drawn in any order.
class SyntheticStream {
public:
    SyntheticStream(const SimulationModel& model, double theta, std::uint64_t seed, std::uint64_t theta_tag);
    SyntheticStream(const SimulationModel& model, double theta, std::uint64_t seed);

    SyntheticDraw draw(std::uint64_t b) const;
    double theta() const { return theta_; }

private:
    const SimulationModel* model_;
    double theta_;
    std::uint64_t seed_;
    std::uint64_t tag_;
};

/// First B draws of the stream as concrete datasets (regressors, controls
/// and locations copied from `data`).
std::vector<PanelDataset> simulate_datasets(const PanelDataset& data, const SimulationModel& model, double theta, int b_count,
                                            std::uint64_t seed);

struct CalibrationConfig {
    double alpha = 0.05;
    int B = 1000;
    std::uint64_t seed = 0;
    int a_grid_points = 50;
    int threads = 1;
};

/// Theta alternatives j / sqrt(n), j = -10..-1, 1..10.
std::vector<double> alternative_grid(Index n);

/// IM/CCE: alpha j / points for j = 1..points. UNIT adds `points`
/// log-spaced levels from 1e-12 up to alpha / points. CRS: the attainable
/// levels j / 2^k that do not exceed alpha.
std::vector<double> a_grid(Method method, int k, double alpha, int points);

inline constexpr double unit_a_floor = 1e-12;

/// Type-I and power summaries for one cluster count.
struct KColumn {
    int k = 0;
    bool feasible = true;
    std::string infeasible_reason;
    std::vector<double> a;
    std::vector<double> type1;
    double alpha_k = 0.0;
    std::vector<double> power;  // per alternative, at alpha_k
    double avg_power = 0.0;
    double type2_avg() const { return 1.0 - avg_power; }
};

struct ErrorGrid {
    Method method = Method::im;
    int B = 0;
    std::vector<double> alt_grid;
    std::vector<KColumn> columns;
};

struct CalibrationResult {
    Method method = Method::im;
    int k_hat = 0;
    double alpha_hat = 0.0;
    ErrorGrid grid;
    std::uint64_t seed = 0;
    Partition partition;  // the k_hat partition
};

/// Test statistics of every (method, k) on the null and alternative draws.
/// Methods share the same synthetic datasets.
struct SimulatedStatistics {
    struct Slot {
        Method method = Method::im;
        int k = 0;
        bool feasible = true;
        std::string reason;
        Partition partition;
    };
    std::vector<Slot> slots;
    std::vector<double> alt_grid;
    int B = 0;
    double alpha = 0.05;
    int a_grid_points = 50;
    std::uint64_t seed = 0;
    // stats[(t * B + b) * slots + s]; t = 0 is the null, t >= 1 alt_grid[t - 1].
    // IM/CCE/UNIT store |statistic| (0 when degenerate); CRS stores the count
    // of sign patterns whose key is at least the identity's.
    std::vector<double> stats;

    double at(std::size_t t, std::size_t b, std::size_t s) const { return stats[(t * static_cast<std::size_t>(B) + b) * slots.size() + s]; }
};

/// Candidate partitions per method: k-medoids candidates for IM/CRS/CCE and
/// the single unit partition for UNIT.
SimulatedStatistics simulate_statistics(const PanelDataset& data, const SimulationModel& model, const CandidateSet& candidates,
                                        std::span<const Method> methods, const CalibrationConfig& config);

/// Whether a simulated statistic leads to rejection at level a.
bool rejects(Method method, int k, double statistic, double a);

/// Null rejection rates over the a-grid for each k of `method`.
ErrorGrid type1_grid(const SimulatedStatistics& sims, Method method);

/// Largest grid value with Type-I rate <= alpha; 0 if none.
double select_alpha(const KColumn& column, double alpha);

/// Fills alpha_k and power per k and picks k_hat (highest average power,
/// smallest k on ties). Throws calibration_failure when every k is infeasible.
CalibrationResult type2_and_select(const SimulatedStatistics& sims, ErrorGrid grid);

std::vector<CalibrationResult> calibrate(const PanelDataset& data, const SimulationModel& model, const CandidateSet& candidates,
                                         std::span<const Method> methods, const CalibrationConfig& config);

/// A method bound to the observed data and a partition, evaluated at any
/// hypothesized theta. Cluster estimates (or the full-sample fit and its
/// clustered variance) are computed once.
class BoundTest {
public:
    BoundTest(const PanelDataset& data, Method method, const Partition& partition, const CrsOptions& crs = {});

    TestOutcome at(double theta_star, double a) const;

    Method method() const { return method_; }
    int k() const { return partition_.k; }
    double estimate() const { return estimate_; }  // cluster average for IM/CRS, full-sample theta otherwise
    std::optional<double> standard_error() const;  // none for CRS
    double se_scale() const { return se_scale_; }
    const Vector& cluster_estimates() const { return cluster_theta_; }

private:
    Method method_;
    Partition partition_;
    Index n_ = 0;
    CrsOptions crs_;
    Vector cluster_theta_;
    double estimate_ = 0.0;
    double variance_ = 0.0;  // clustered variance (CCE/UNIT)
    double se_scale_ = 0.0;
};

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool lower_unbounded = false;
    bool upper_unbounded = false;
};

/// CRS: inversion over a symmetric grid of `grid_points` around the estimate
/// with half-width `halfwidth_scale` * se-scale, edges refined by bisection.
/// IM/CCE/UNIT: estimate +- threshold * s.e. A level of 0 never rejects and
/// gives an unbounded interval. Throws `degenerate` if nothing is accepted.
ConfidenceInterval confidence_interval(const BoundTest& test, double a, double halfwidth_scale = 10.0, int grid_points = 401);

}  // namespace lcinf
