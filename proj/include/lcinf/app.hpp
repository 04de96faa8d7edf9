#pragma once

#include "lcinf/calibration.hpp"
#include "lcinf/io.hpp"
#include "lcinf/parallel.hpp"
#include "lcinf/simstudy.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lcinf {

enum class Command { analyze, calibrate, simulate, diagnose };

std::string to_string(Command c);

struct RunConfig {
    Command command = Command::analyze;
    double alpha = 0.05;
    std::optional<int> k_max;
    std::optional<int> B;  // default: 10000 for analyze/calibrate, 200 for simulate
    std::optional<std::uint64_t> seed;
    std::vector<Method> methods{Method::unit, Method::cce, Method::im, Method::crs};
    std::string data_path;
    std::string locations_path;
    std::string dissimilarity_path;
    std::string params_path;
    std::string out_dir = "out";
    int threads = default_threads();
    std::size_t orbit_draws = 0;
    std::optional<std::uint64_t> randomized_crs;
    int restarts = 1;
    // simulate
    std::string design = "ols-baseline";
    int units = 205;
    int reps = 200;
    std::string coords_path;
    // diagnose
    std::optional<double> radius;
};

/// Throws invalid_argument when the configuration is inconsistent
/// (alpha outside (0, 1), missing seed or input paths, ...).
void check_config(const RunConfig& config);

int effective_B(const RunConfig& config);

/// JSON mirror of every field; `config_from_json` fills only the keys present.
std::string config_to_json(const RunConfig& config);
void apply_config_json(RunConfig& config, const std::string& text);

/// Stage outputs shared by analyze, calibrate and diagnose.
struct PreparedData {
    PanelDataset data;
    DissimilarityMatrix dissimilarity;
    FitResult fit;
    CandidateSet candidates;
};

/// Loads the dataset (with locations) and the dissimilarity, fits the full
/// sample and builds the k-medoids candidates.
PreparedData prepare(const RunConfig& config);

/// Covariance model from a params file or by QMLE on the fit's residuals.
ModelParams fit_model_params(const PreparedData& prepared, const RunConfig& config);

/// Moran rows from the full-sample scores: 2-NN spatial
/// weights per period, pooled over periods, and same-unit weights.
std::vector<MoranRow> moran_table(const PanelDataset& data, const FitResult& fit);

/// Report row for one calibrated method.
ReportRow report_row(const PanelDataset& data, const CalibrationResult& result, double alpha, const CrsOptions& crs = {});

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

/// Config echo, software version, SHA-256 of the inputs and stage timings.
std::string manifest_json(const RunConfig& config, const std::vector<std::string>& inputs, const std::vector<StageTiming>& timings);

/// The four commands. Each writes its files under config.out_dir (the
/// manifest first), removes partial outputs on failure and returns the
/// paths written.
std::vector<std::string> run_analyze(const RunConfig& config);
std::vector<std::string> run_calibrate(const RunConfig& config);
std::vector<std::string> run_simulate(const RunConfig& config);
std::vector<std::string> run_diagnose(const RunConfig& config);
std::vector<std::string> run(const RunConfig& config);

/// 0 success, 2 input error, 3 numerical failure, 4 calibration failure.
int exit_code(ErrorKind kind);

std::string software_version();

}  // namespace lcinf
