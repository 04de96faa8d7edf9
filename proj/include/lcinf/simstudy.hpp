#pragma once

#include "lcinf/calibration.hpp"
#include "lcinf/core.hpp"
#include "lcinf/geometry.hpp"
#include "lcinf/inference.hpp"
#include "lcinf/rng.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lcinf {

enum class StudyModel { ols, iv };
enum class StudyErrors { baseline, sar };

std::string to_string(StudyModel m);
std::string to_string(StudyErrors e);

/// Parses "ols-baseline", "iv-sar", "olsxbaseline", ...
std::pair<StudyModel, StudyErrors> design_from_string(const std::string& s);

struct DesignSpec {
    StudyModel model = StudyModel::ols;
    StudyErrors errors = StudyErrors::baseline;
    int n_units = 205;  // 205, or 820 for the reflected design
    int periods = 2;
    int reps = 200;
    int B = 200;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::optional<int> k_max;  // default: ceil(n^{1/3}) for 205 units, 12 for 820
    int threads = 1;
};

/// Fixed design constants.
inline constexpr double study_pi = 2.0;
inline constexpr double study_uv_corr = 0.8;
inline constexpr double study_regressor_corr = 0.5;
inline constexpr int study_controls = 10;
inline constexpr double sar_coefficient = 0.15;
inline constexpr double sar_radius = 0.3;

/// Reads `unit_id,lat,lon` rows.
std::vector<Location> load_unit_coordinates(const std::string& path);

/// Path of the bundled surrogate centroid file.
std::string default_coordinates_path();

/// 205 base coordinates reflected over the 29 degree latitude and 75 degree
/// longitude lines: original, lat-reflected, lon-reflected, both.
std::vector<Location> reflect_coordinates(std::span<const Location> base);

/// A_{dd'} = 1{||L_d - L_d'|| < radius, d != d'}.
Matrix sar_adjacency(std::span<const Location> units, double radius = sar_radius);

/// Solves (I - coef A) u = eps. Throws numerical_failure (with the spectral
/// radius of coef A) when the system is singular.
Vector sar_solve(const Matrix& adjacency, const Vector& eps, double coef = sar_coefficient);

/// Fixed geometry of a design: panel locations (unit-major, periods
/// 1..T), the square root of Sigma(0, 3, 1) and the SAR system.
struct StudyGeometry {
    int n_units = 0;
    int periods = 0;
    std::vector<Location> units;
    std::vector<Location> locations;
    std::vector<std::string> unit_ids;
    Matrix root;  // lower square root of Sigma(tau = (0, 3, 1))
    Matrix sar_system;  // I - 0.15 A over units
    Eigen::PartialPivLU<Matrix> sar_lu;

    Index n() const { return static_cast<Index>(locations.size()); }
};

StudyGeometry make_geometry(std::span<const Location> units, int periods);

/// The lead regressor (X under OLS, Z under IV) and the controls, drawn
/// once with covariance R (x) Sigma(0, 3, 1), R the equicorrelation-0.5 matrix.
struct Regressors {
    Vector lead;
    Matrix w;
};

Regressors gen_regressors(const StudyGeometry& geo, std::uint64_t seed);

struct ErrorDraw {
    Vector u;
    std::optional<Vector> v;
};

/// U = L e1 and, for IV, V = L (0.8 e1 + 0.6 e2).
ErrorDraw gen_errors_baseline(const StudyGeometry& geo, bool iv, Stream& rng);

/// Per period (I - 0.15 A) U = eps with corr(eps_d1, eps_d2) = exp(-1);
/// IV innovations eta = 0.8 eps + 0.6 eps' with eps' an independent copy.
ErrorDraw gen_errors_sar(const StudyGeometry& geo, bool iv, Stream& rng);

/// Dataset for one replication under theta0 = 0, gamma0 = xi0 = 0.
PanelDataset study_dataset(const StudyGeometry& geo, const Regressors& reg, const ErrorDraw& err, bool iv);

struct MethodSummary {
    std::string label;     // UNIT-U, UNIT, CCE, IM, CRS
    bool calibrated = false;
    double bias = 0.0;     // mean (OLS) or median (IV) of the estimate minus theta0
    double spread = 0.0;   // RMSE (OLS) or median absolute deviation from theta0 (IV)
    double size = 0.0;
    std::vector<double> power;          // rejection rate per theta in the study grid
    std::map<int, double> khat_freq;    // calibrated methods only
    std::array<double, 5> alpha_quantiles{};  // 0.1, 0.25, 0.5, 0.75, 0.9
};

struct StudyReport {
    DesignSpec spec;
    int k_max = 0;
    std::vector<double> theta_grid;  // hypothesized values j / sqrt(n), j = -10..10
    std::vector<MethodSummary> rows;
    int completed = 0;
    int failures = 0;
    std::vector<std::string> failure_messages;
};

inline constexpr std::array<double, 5> alpha_quantile_levels{0.1, 0.25, 0.5, 0.75, 0.9};

/// Linear-interpolation sample quantile (the "type 7" rule).
double sample_quantile(std::vector<double> values, double q);

/// Full pipeline per replication: fit, QMLE under the BASELINE family,
/// calibrate, test over the theta grid. Aborts when more than 5% of the
/// replications fail.
StudyReport run_study(const DesignSpec& spec, std::span<const Location> unit_coordinates, std::span<const Method> methods);

}  // namespace lcinf
