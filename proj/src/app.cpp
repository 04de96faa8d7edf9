#include "lcinf/app.hpp"

#include "lcinf/clustering.hpp"
#include "lcinf/covmodel.hpp"
#include "lcinf/geometry.hpp"
#include "lcinf/inference.hpp"
#include "lcinf/rng.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>

#ifndef LCINF_VERSION
#define LCINF_VERSION "0.0.0"
#endif

namespace lcinf {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string software_version() { return LCINF_VERSION; }

std::string to_string(Command c) {
    switch (c) {
        case Command::analyze: return "analyze";
        case Command::calibrate: return "calibrate";
        case Command::simulate: return "simulate";
        case Command::diagnose: return "diagnose";
    }
    return "?";
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_input:
        case ErrorKind::invalid_argument:
        case ErrorKind::invalid_partition:
        case ErrorKind::singular_design:
        case ErrorKind::too_small_cluster: return 2;
        case ErrorKind::degenerate:
        case ErrorKind::numerical_failure:
        case ErrorKind::enumeration_too_large: return 3;
        case ErrorKind::calibration_failure: return 4;
    }
    return 3;
}

int effective_B(const RunConfig& config) {
    if (config.B) return *config.B;
    return config.command == Command::simulate ? 200 : 10000;
}

void check_config(const RunConfig& config) {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::invalid_argument, m); };
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) fail("--alpha must lie in (0, 1)");
    if (!config.seed) fail("--seed is required: every command is simulation- or clustering-based and runs must be reproducible");
    if (config.B && *config.B < 1) fail("--B must be at least 1");
    if (config.k_max && *config.k_max < 2) fail("--kmax must be at least 2");
    if (config.threads < 1) fail("--threads must be at least 1");
    if (config.restarts < 1) fail("--restarts must be at least 1");
    if (config.methods.empty() && config.command != Command::analyze) fail("--method selects no method");
    if (config.command == Command::simulate) {
        if (config.reps < 1) fail("--reps must be at least 1");
        if (config.units != 205 && config.units != 820) fail("--units must be 205 or 820");
        design_from_string(config.design);
    } else {
        if (config.data_path.empty()) fail("--data is required for " + to_string(config.command));
        if (config.locations_path.empty()) fail("--locations is required for " + to_string(config.command));
    }
}

std::string config_to_json(const RunConfig& c) {
    json methods = json::array();
    for (Method m : c.methods) methods.push_back(to_string(m));
    json j{{"command", to_string(c.command)},
           {"alpha", c.alpha},
           {"kmax", c.k_max ? json(*c.k_max) : json(nullptr)},
           {"B", effective_B(c)},
           {"seed", c.seed ? json(*c.seed) : json(nullptr)},
           {"method", methods},
           {"data", c.data_path},
           {"locations", c.locations_path},
           {"dissimilarity", c.dissimilarity_path},
           {"params", c.params_path},
           {"out", c.out_dir},
           {"threads", c.threads},
           {"orbit_draws", c.orbit_draws},
           {"randomized_crs", c.randomized_crs ? json(*c.randomized_crs) : json(nullptr)},
           {"restarts", c.restarts},
           {"design", c.design},
           {"units", c.units},
           {"reps", c.reps},
           {"coords", c.coords_path},
           {"radius", c.radius ? json(*c.radius) : json(nullptr)}};
    return j.dump(2);
}

void apply_config_json(RunConfig& c, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_input, std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::invalid_input, "config: expected a JSON object");
    static const std::set<std::string> known{"command", "alpha",   "kmax",    "B",      "seed",   "method", "data",
                                             "locations", "dissimilarity", "params", "out", "threads", "orbit_draws",
                                             "randomized_crs", "restarts", "design", "units", "reps", "coords", "radius"};
    try {
        for (const auto& [key, v] : j.items()) {
            if (!known.count(key)) throw Error(ErrorKind::invalid_input, "config: unknown key '" + key + "'");
            if (v.is_null()) continue;
            if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "kmax") c.k_max = v.get<int>();
            else if (key == "B") c.B = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "method") {
                c.methods.clear();
                const auto add = [&](const std::string& s) {
                    if (s == "all") c.methods = {Method::unit, Method::cce, Method::im, Method::crs};
                    else c.methods.push_back(method_from_string(s));
                };
                if (v.is_array())
                    for (const auto& m : v) add(m.get<std::string>());
                else
                    add(v.get<std::string>());
            } else if (key == "data") c.data_path = v.get<std::string>();
            else if (key == "locations") c.locations_path = v.get<std::string>();
            else if (key == "dissimilarity") c.dissimilarity_path = v.get<std::string>();
            else if (key == "params") c.params_path = v.get<std::string>();
            else if (key == "out") c.out_dir = v.get<std::string>();
            else if (key == "threads") c.threads = v.get<int>();
            else if (key == "orbit_draws") c.orbit_draws = v.get<std::size_t>();
            else if (key == "randomized_crs") c.randomized_crs = v.get<std::uint64_t>();
            else if (key == "restarts") c.restarts = v.get<int>();
            else if (key == "design") c.design = v.get<std::string>();
            else if (key == "units") c.units = v.get<int>();
            else if (key == "reps") c.reps = v.get<int>();
            else if (key == "coords") c.coords_path = v.get<std::string>();
            else if (key == "radius") c.radius = v.get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_input, std::string("config: ") + e.what());
    }
}

namespace {

// Runs one named stage, logging its duration and prefixing errors with the stage name.
class Stages {
public:
    template <class Fn>
    auto run(const std::string& name, Fn&& fn) -> decltype(fn()) {
        const auto start = std::chrono::steady_clock::now();
        spdlog::debug("stage {} started", name);
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                finish(name, start);
            } else {
                auto out = fn();
                finish(name, start);
                return out;
            }
        } catch (const Error& e) {
            throw Error(e.kind(), name + ": " + e.what());
        }
    }
    const std::vector<StageTiming>& timings() const { return timings_; }

private:
    void finish(const std::string& name, std::chrono::steady_clock::time_point start) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        timings_.push_back({name, s});
        spdlog::info("stage {} finished in {:.3f} s", name, s);
    }
    std::vector<StageTiming> timings_;
};

// Tracks written files and deletes them if the command fails.
class OutputSet {
public:
    explicit OutputSet(std::string dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Error(ErrorKind::invalid_input, "cannot create output directory '" + dir_ + "': " + ec.message());
    }
    ~OutputSet() {
        if (committed_) return;
        for (const auto& p : paths_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    std::string write(const std::string& name, const std::string& text) {
        const std::string path = (fs::path(dir_) / name).string();
        write_text(path, text);
        if (std::find(paths_.begin(), paths_.end(), path) == paths_.end()) paths_.push_back(path);
        return path;
    }
    std::vector<std::string> commit() {
        committed_ = true;
        return paths_;
    }

private:
    std::string dir_;
    std::vector<std::string> paths_;
    bool committed_ = false;
};

std::vector<std::string> input_paths(const RunConfig& c) {
    std::vector<std::string> out;
    for (const auto* p : {&c.data_path, &c.locations_path, &c.dissimilarity_path, &c.params_path, &c.coords_path})
        if (!p->empty()) out.push_back(*p);
    return out;
}

CrsOptions crs_options(const RunConfig& c) {
    CrsOptions o;
    o.orbit_draws = c.orbit_draws;
    o.orbit_seed = derive_key(*c.seed, {0x6f726269ULL});
    o.randomized_seed = c.randomized_crs;
    return o;
}

Matrix residual_design(const PanelDataset& data) {
    Matrix design(data.n(), data.p() + 2);
    design.col(0) = instrument(data);
    design.rightCols(data.p() + 1) = controls_design(data, iota_indices(data.n()));
    return design;
}

}  // namespace

PreparedData prepare(const RunConfig& config) {
    PreparedData out;
    out.data = load_dataset(config.data_path);
    attach_locations(out.data, config.locations_path);
    out.dissimilarity = config.dissimilarity_path.empty() ? geo_dissimilarity(out.data.loc)
                                                          : load_dissimilarity(config.dissimilarity_path, out.data.n());
    out.fit = fit(out.data);
    const int k_max = config.k_max ? *config.k_max : default_k_max(out.data.n());
    KMedoidsOptions opts;
    opts.restarts = config.restarts;
    out.candidates = build_candidates(out.dissimilarity, k_max, derive_key(*config.seed, {0x6b6d6564ULL}), opts);
    return out;
}

ModelParams fit_model_params(const PreparedData& prepared, const RunConfig& config) {
    if (!config.params_path.empty()) {
        ModelParams p = load_params(config.params_path);
        if (prepared.data.is_iv() && !p.v) throw Error(ErrorKind::invalid_input, "params: IV data needs {\"u\":…, \"v\":…, \"rho\":…}");
        return p;
    }
    const auto& data = prepared.data;
    const Matrix design = residual_design(data);
    ModelParams out;
    const ProjectedResiduals pu = project_residuals(prepared.fit.residuals_u, design);
    const QmleFit qu = qmle_fit(pu, data.loc, default_init(pu, data.loc));
    if (!qu.converged) spdlog::warn("QMLE for U did not converge; using the best point found");
    out.u = qu.params;
    if (data.is_iv()) {
        const ProjectedResiduals pv = project_residuals(*prepared.fit.residuals_v, design);
        const QmleFit qv = qmle_fit(pv, data.loc, default_init(pv, data.loc));
        if (!qv.converged) spdlog::warn("QMLE for V did not converge; using the best point found");
        out.v = qv.params;
        out.rho = estimate_rho(prepared.fit.residuals_u, *prepared.fit.residuals_v, out.u, *out.v, data.loc);
    }
    return out;
}

std::vector<MoranRow> moran_table(const PanelDataset& data, const FitResult& fit) {
    const Vector scores = score_vector(data, fit);
    std::vector<MoranRow> rows;
    std::set<int> periods;
    for (const auto& l : data.loc) periods.insert(l.period);
    const auto add = [&](const std::string& label, const Vector& s, const Matrix& w) {
        try {
            const MoranResult m = moran_i(s, w);
            rows.push_back({label, m.statistic, m.p_value});
        } catch (const Error& e) {
            spdlog::warn("Moran test '{}' skipped: {}", label, e.what());
        }
    };
    if (periods.size() > 1)
        for (int p : periods) {
            std::vector<Location> locs;
            std::vector<double> s;
            for (Index i = 0; i < data.n(); ++i)
                if (data.loc[static_cast<std::size_t>(i)].period == p) {
                    locs.push_back(data.loc[static_cast<std::size_t>(i)]);
                    s.push_back(scores(i));
                }
            if (locs.size() < 3) continue;
            add("spatial_period_" + std::to_string(p), Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size())), knn_weights(locs, 2, true));
        }
    add("spatial_pooled", scores, knn_weights(data.loc, 2, true));
    if (periods.size() > 1) add("intertemporal", scores, same_unit_weights(data.unit_labels()));
    return rows;
}

ReportRow report_row(const PanelDataset& data, const CalibrationResult& result, double alpha, const CrsOptions& crs) {
    const BoundTest test(data, result.method, result.partition, crs);
    ReportRow row;
    row.method = to_string(result.method);
    row.theta_hat = test.estimate();
    row.se = test.standard_error();
    row.k_hat = result.k_hat;
    row.alpha_hat = result.alpha_hat;
    if (result.method != Method::crs) row.t_stat = test.at(0.0, alpha).statistic;
    const auto interval = [&](double a, double& lo, double& hi) {
        try {
            const ConfidenceInterval ci = confidence_interval(test, a);
            lo = ci.lower_unbounded ? -std::numeric_limits<double>::infinity() : ci.lo;
            hi = ci.upper_unbounded ? std::numeric_limits<double>::infinity() : ci.hi;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::degenerate) throw;
            spdlog::warn("{}: {}", row.method, e.what());
            lo = hi = std::nan("");
        }
    };
    interval(result.alpha_hat, row.ci_lo, row.ci_hi);
    interval(alpha, row.ci_usual_lo, row.ci_usual_hi);
    row.decision = to_string(test.at(0.0, result.alpha_hat).decision);
    return row;
}

std::string manifest_json(const RunConfig& config, const std::vector<std::string>& inputs, const std::vector<StageTiming>& timings) {
    json digests = json::object();
    for (const auto& p : inputs) digests[p] = "sha256:" + file_digest(p);
    json stages = json::array();
    for (const auto& t : timings) stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    json j{{"software", "lcinf"}, {"version", software_version()}, {"config", json::parse(config_to_json(config))}, {"inputs", digests},
           {"timings", stages}};
    return j.dump(2) + "\n";
}

namespace {

struct Calibrated {
    PreparedData prepared;
    ModelParams params;
    std::vector<CalibrationResult> results;
};

Calibrated calibrate_pipeline(const RunConfig& config, Stages& stages) {
    Calibrated c;
    c.prepared = stages.run("prepare", [&] { return prepare(config); });
    c.params = stages.run("covariance", [&] { return fit_model_params(c.prepared, config); });
    c.results = stages.run("calibration", [&] {
        const SimulationModel model = make_simulation_model(c.prepared.data, c.prepared.fit, c.params.u, c.params.v, c.params.rho);
        CalibrationConfig cc;
        cc.alpha = config.alpha;
        cc.B = effective_B(config);
        cc.seed = derive_key(*config.seed, {0x63616c69ULL});
        cc.threads = config.threads;
        return calibrate(c.prepared.data, model, c.prepared.candidates, config.methods, cc);
    });
    for (const auto& r : c.results) spdlog::info("{}: k_hat = {}, alpha_hat = {}", to_string(r.method), r.k_hat, format_number(r.alpha_hat));
    return c;
}

}  // namespace

std::vector<std::string> run_analyze(const RunConfig& config) {
    check_config(config);
    OutputSet out(config.out_dir);
    Stages stages;
    const auto inputs = input_paths(config);
    out.write("manifest.json", manifest_json(config, inputs, {}));

    Calibrated c;
    if (!config.methods.empty()) c = calibrate_pipeline(config, stages);
    else c.prepared = stages.run("prepare", [&] { return prepare(config); });

    Report report;
    stages.run("report", [&] {
        report.moran = moran_table(c.prepared.data, c.prepared.fit);
        for (const auto& r : c.results) report.rows.push_back(report_row(c.prepared.data, r, config.alpha, crs_options(config)));
    });
    out.write("report.csv", report_to_csv(report));
    out.write("report.json", report_to_json(report));
    out.write("moran.csv", moran_to_csv(report.moran));
    if (!config.methods.empty()) {
        out.write("params.json", params_to_json(c.params));
        out.write("errorgrid.csv", error_grid_csv(c.results));
        out.write("calibration.json", calibration_json(c.results));
    }
    out.write("manifest.json", manifest_json(config, inputs, stages.timings()));
    return out.commit();
}

std::vector<std::string> run_calibrate(const RunConfig& config) {
    check_config(config);
    OutputSet out(config.out_dir);
    Stages stages;
    const auto inputs = input_paths(config);
    out.write("manifest.json", manifest_json(config, inputs, {}));
    const Calibrated c = calibrate_pipeline(config, stages);
    out.write("params.json", params_to_json(c.params));
    out.write("errorgrid.csv", error_grid_csv(c.results));
    out.write("calibration.json", calibration_json(c.results));
    out.write("manifest.json", manifest_json(config, inputs, stages.timings()));
    return out.commit();
}

std::vector<std::string> run_simulate(const RunConfig& config) {
    check_config(config);
    OutputSet out(config.out_dir);
    Stages stages;
    RunConfig echo = config;
    if (echo.coords_path.empty()) echo.coords_path = default_coordinates_path();
    const auto inputs = input_paths(echo);
    out.write("manifest.json", manifest_json(echo, inputs, {}));

    DesignSpec spec;
    std::tie(spec.model, spec.errors) = design_from_string(config.design);
    spec.n_units = config.units;
    spec.reps = config.reps;
    spec.B = effective_B(config);
    spec.seed = *config.seed;
    spec.alpha = config.alpha;
    spec.k_max = config.k_max;
    spec.threads = config.threads;
    std::vector<Method> methods;
    for (Method m : config.methods) methods.push_back(m);

    const auto coords = stages.run("coordinates", [&] { return load_unit_coordinates(echo.coords_path); });
    const StudyReport report = stages.run("study", [&] { return run_study(spec, coords, methods); });
    if (report.failures > 0) spdlog::warn("{} of {} replications failed", report.failures, spec.reps);
    for (const auto& m : report.failure_messages) spdlog::debug("{}", m);

    out.write("summary.csv", summary_csv(report));
    out.write("khat.csv", khat_csv(report));
    out.write("alphahat.csv", alphahat_csv(report));
    out.write("power.csv", power_csv(report));
    out.write("manifest.json", manifest_json(echo, inputs, stages.timings()));
    return out.commit();
}

std::vector<std::string> run_diagnose(const RunConfig& config) {
    check_config(config);
    OutputSet out(config.out_dir);
    Stages stages;
    const auto inputs = input_paths(config);
    out.write("manifest.json", manifest_json(config, inputs, {}));

    const PreparedData prepared = stages.run("prepare", [&] { return prepare(config); });
    const auto& dm = prepared.dissimilarity;

    std::string validation;
    stages.run("validate", [&] {
        const ValidationReport v = validate(dm, dm.n() <= 2000);
        json j{{"n", dm.n()},
               {"asymmetric", v.asymmetric.size()},
               {"negative", v.negative.size()},
               {"nonzero_diagonal", v.nonzero_diagonal.size()},
               {"triangle_violations", v.triangle.size()},
               {"triangle_checked", dm.n() <= 2000},
               {"ok", v.ok()}};
        if (!v.triangle.empty()) spdlog::warn("dissimilarity violates the triangle inequality in {} triples", v.triangle.size());
        validation = j.dump(2) + "\n";
    });

    // Default boundary radius: median distance to the nearest other location at positive distance.
    double radius = 0.0;
    if (config.radius) radius = *config.radius;
    else {
        std::vector<double> nearest;
        for (Index i = 0; i < dm.n(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < dm.n(); ++j)
                if (dm(i, j) > 0.0) best = std::min(best, dm(i, j));
            if (std::isfinite(best)) nearest.push_back(best);
        }
        radius = nearest.empty() ? 0.0 : sample_quantile(nearest, 0.5);
    }

    std::string partitions = "k,min_size,max_size,balance_ratio,boundary_fraction,radius\n";
    for (const auto& [k, p] : prepared.candidates.partitions) {
        const auto sizes = p.cluster_sizes();
        partitions += std::to_string(k) + "," + std::to_string(*std::min_element(sizes.begin(), sizes.end())) + "," +
                      std::to_string(*std::max_element(sizes.begin(), sizes.end())) + "," + format_number(balance_ratio(p)) + "," +
                      format_number(boundary_fraction(p, dm, radius)) + "," + format_number(radius) + "\n";
    }

    std::vector<double> radii;
    const double diameter = dm.matrix().maxCoeff();
    for (int j = 1; j <= 10; ++j) radii.push_back(diameter * j / 10.0);
    std::string growth = "radius,min_size,mean_size,max_size\n";
    for (const auto& r : ball_growth_profile(dm, radii))
        growth += format_number(r.radius) + "," + std::to_string(r.min_size) + "," + format_number(r.mean_size) + "," +
                  std::to_string(r.max_size) + "\n";

    const auto moran = stages.run("moran", [&] { return moran_table(prepared.data, prepared.fit); });
    const ModelParams params = stages.run("covariance", [&] { return fit_model_params(prepared, config); });

    out.write("validation.json", validation);
    out.write("partitions.csv", partitions);
    out.write("ball_growth.csv", growth);
    out.write("moran.csv", moran_to_csv(moran));
    out.write("params.json", params_to_json(params));
    out.write("manifest.json", manifest_json(config, inputs, stages.timings()));
    return out.commit();
}

std::vector<std::string> run(const RunConfig& config) {
    switch (config.command) {
        case Command::analyze: return run_analyze(config);
        case Command::calibrate: return run_calibrate(config);
        case Command::simulate: return run_simulate(config);
        case Command::diagnose: return run_diagnose(config);
    }
    return {};
}

}  // namespace lcinf
