#pragma once

#include "lcinf/core.hpp"
#include "lcinf/geometry.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lcinf {

/// Outcome y, regressor of interest x, controls w (no intercept column; one
/// is appended internally) and, for IV designs, the excluded instrument z.
struct PanelDataset {
    std::vector<std::string> unit_id;
    std::vector<Location> loc;
    Vector y;
    Vector x;
    Matrix w;
    std::optional<Vector> z;
    std::vector<std::string> control_names;

    Index n() const { return y.size(); }
    Index p() const { return w.cols(); }
    bool is_iv() const { return z.has_value(); }

    /// Labels 0..U-1 by order of first appearance of each unit id.
    std::vector<int> unit_labels() const;
};

/// Throws invalid_input on mismatched lengths, non-finite values or n <= p + 2.
void check_dataset(const PanelDataset& data);

struct FitResult {
    double theta_hat = 0.0;
    Vector coef_controls;  // controls in column order, intercept last
    Vector residuals_u;    // on used_indices, in that order
    std::optional<Vector> residuals_v;
    IndexList used_indices;
    // First stage (IV only): coefficient on z, then controls, intercept last.
    std::optional<double> pi_hat;
    Vector coef_first_stage;
};

inline constexpr double rank_tolerance = 1e-10;
inline constexpr double instrument_tolerance = 1e-10;

/// Least squares of y on [x, w, 1] restricted to `subset`.
FitResult ols_fit(const PanelDataset& data, std::span<const Index> subset);
FitResult ols_fit(const PanelDataset& data);

/// Just-identified 2SLS with instrument z and included exogenous [w, 1].
FitResult iv_fit(const PanelDataset& data, std::span<const Index> subset);
FitResult iv_fit(const PanelDataset& data);

/// OLS or IV depending on whether the dataset carries an instrument.
FitResult fit(const PanelDataset& data, std::span<const Index> subset);
FitResult fit(const PanelDataset& data);

/// [w, 1] rows of `subset`.
Matrix controls_design(const PanelDataset& data, std::span<const Index> subset);

/// Per-observation score of theta_hat: partialled instrument (x for OLS)
/// times the structural residual. Requires a full-sample fit.
Vector score_vector(const PanelDataset& data, const FitResult& fit);

/// Instrument column used for theta (z under IV, x under OLS).
const Vector& instrument(const PanelDataset& data);

/// Residual-maker for a fixed design: v -> M v with M = I - A(A'A)^{-1}A'.
class Residualizer {
public:
    explicit Residualizer(const Matrix& design);
    Index rank() const { return rank_; }
    Index cols() const { return cols_; }
    Vector apply(const Vector& v) const;

private:
    Matrix q_;  // thin orthonormal basis of the column space
    Index rank_ = 0;
    Index cols_ = 0;
};

/// Frisch-Waugh form of the theta estimator on a fixed subset:
/// theta = <z~, y> / <z~, x> with z~ the instrument partialled on [w, 1]
/// within the subset. Built once, then evaluated on many (y, x) draws.
class SubsetEstimator {
public:
    SubsetEstimator(const PanelDataset& data, IndexList subset);

    const IndexList& subset() const { return subset_; }
    const Vector& partialled_instrument() const { return ztilde_; }
    double estimate(const Vector& y_full, const Vector& x_full) const;

private:
    IndexList subset_;
    Vector ztilde_;
};

/// Minimum observations for a within-cluster fit: p + 3.
inline Index min_cluster_size(const PanelDataset& data) { return data.p() + 3; }

}  // namespace lcinf
