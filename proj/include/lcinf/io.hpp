#pragma once

#include "lcinf/calibration.hpp"
#include "lcinf/covmodel.hpp"
#include "lcinf/geometry.hpp"
#include "lcinf/regression.hpp"
#include "lcinf/simstudy.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lcinf {

/// Dataset CSV with header `unit_id,period,y,x,<controls...>[,z]`. Columns
/// are matched by name; every column other than unit_id, period, y, x and z
/// is a control, in file order. Rows are sorted by (unit_id, period) on
/// load, numerically when every unit id is an integer.
PanelDataset load_dataset(const std::string& path);

/// Attaches coordinates from a `unit_id,lat,lon` file (one row per unit) or
/// a `unit_id,period,lat,lon` file (one row per observation).
void attach_locations(PanelDataset& data, const std::string& path);

/// Headerless n x n CSV of dissimilarities.
DissimilarityMatrix load_dissimilarity(const std::string& path, Index expected_n);

/// Fitted covariance parameters, `{"tau1","tau2","tau3","rho"}`; IV models
/// nest them as `{"u": {...}, "v": {...}, "rho": r}`.
struct ModelParams {
    CovarianceParams u;
    std::optional<CovarianceParams> v;
    double rho = 0.0;
};

ModelParams load_params(const std::string& path);
std::string params_to_json(const ModelParams& params);

/// Shortest text with 6 significant digits; "" for missing values.
std::string format_number(double v);
std::string format_number(const std::optional<double>& v);

/// One row of the per-method estimate report.
struct ReportRow {
    std::string method;
    double theta_hat = 0.0;
    std::optional<double> se;
    std::optional<double> t_stat;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double ci_usual_lo = 0.0;
    double ci_usual_hi = 0.0;
    int k_hat = 0;
    double alpha_hat = 0.0;
    std::string decision;
};

struct MoranRow {
    std::string weights;
    double statistic = 0.0;
    double p_value = 0.0;
};

struct Report {
    std::vector<ReportRow> rows;
    std::vector<MoranRow> moran;
};

enum class ReportFormat { csv, json };

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{"method",      "theta_hat", "se",    "t_stat",   "ci_lo",    "ci_hi",
                                               "ci_usual_lo", "ci_usual_hi", "k_hat", "alpha_hat", "decision"};
    return cols;
}

std::string report_to_csv(const Report& report);
std::string report_to_json(const Report& report);
Report report_from_csv(const std::string& text);
Report report_from_json(const std::string& text);
std::string moran_to_csv(const std::vector<MoranRow>& rows);

/// Writes `<stem>.csv` or `<stem>.json` under `dir` and returns the path.
std::string emit_report(const Report& report, ReportFormat format, const std::string& dir, const std::string& stem = "report");

/// ErrorGrid rows `method,k,a,type1`.
std::string error_grid_csv(const std::vector<CalibrationResult>& results);
std::string calibration_json(const std::vector<CalibrationResult>& results);

/// Study outputs.
std::string summary_csv(const StudyReport& report);
std::string khat_csv(const StudyReport& report);
std::string alphahat_csv(const StudyReport& report);
std::string power_csv(const StudyReport& report);

/// Hex SHA-256 of a file's contents.
std::string file_digest(const std::string& path);
std::string text_digest(const std::string& text);

void write_text(const std::string& path, const std::string& text);

}  // namespace lcinf
