#include "lcinf/simstudy.hpp"

#include "lcinf/clustering.hpp"
#include "lcinf/covmodel.hpp"
#include "lcinf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#ifndef LCINF_DATA_DIR
#define LCINF_DATA_DIR "data"
#endif

namespace lcinf {

std::string to_string(StudyModel m) { return m == StudyModel::ols ? "ols" : "iv"; }
std::string to_string(StudyErrors e) { return e == StudyErrors::baseline ? "baseline" : "sar"; }

std::pair<StudyModel, StudyErrors> design_from_string(const std::string& s) {
    std::string lower;
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    const auto sep = lower.find_first_of("-x_:/");
    const std::string model = lower.substr(0, sep);
    const std::string errors = sep == std::string::npos ? "" : lower.substr(sep + 1);
    std::pair<StudyModel, StudyErrors> out;
    if (model == "ols") out.first = StudyModel::ols;
    else if (model == "iv") out.first = StudyModel::iv;
    else throw Error(ErrorKind::invalid_argument, "unknown design '" + s + "' (expected {ols,iv}-{baseline,sar})");
    if (errors == "baseline") out.second = StudyErrors::baseline;
    else if (errors == "sar") out.second = StudyErrors::sar;
    else throw Error(ErrorKind::invalid_argument, "unknown design '" + s + "' (expected {ols,iv}-{baseline,sar})");
    return out;
}

std::vector<Location> load_unit_coordinates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::invalid_input, "cannot open coordinate file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::invalid_input, "coordinate file '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "unit_id,lat,lon") throw Error(ErrorKind::invalid_input, "coordinate file header must be 'unit_id,lat,lon', got '" + line + "'");
    std::vector<Location> out;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string id, lat, lon;
        std::getline(ss, id, ',');
        std::getline(ss, lat, ',');
        std::getline(ss, lon, ',');
        try {
            Location loc;
            loc.lat = std::stod(lat);
            loc.lon = std::stod(lon);
            if (!std::isfinite(loc.lat) || !std::isfinite(loc.lon)) throw std::invalid_argument("non-finite");
            out.push_back(loc);
        } catch (const std::exception&) {
            throw Error(ErrorKind::invalid_input, "coordinate file '" + path + "' line " + std::to_string(row) + ": bad number");
        }
    }
    if (out.size() < 2) throw Error(ErrorKind::invalid_input, "coordinate file '" + path + "' has fewer than two rows");
    return out;
}

std::string default_coordinates_path() { return std::string(LCINF_DATA_DIR) + "/districts_surrogate.csv"; }

std::vector<Location> reflect_coordinates(std::span<const Location> base) {
    std::vector<Location> out(base.begin(), base.end());
    for (const auto& l : base) out.push_back({2.0 * 29.0 - l.lat, l.lon, l.period});
    for (const auto& l : base) out.push_back({l.lat, 2.0 * 75.0 - l.lon, l.period});
    for (const auto& l : base) out.push_back({2.0 * 29.0 - l.lat, 2.0 * 75.0 - l.lon, l.period});
    return out;
}

Matrix sar_adjacency(std::span<const Location> units, double radius) {
    const auto n = static_cast<Index>(units.size());
    Matrix a = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            const auto& p = units[static_cast<std::size_t>(i)];
            const auto& q = units[static_cast<std::size_t>(j)];
            if (i != j && std::hypot(p.lat - q.lat, p.lon - q.lon) < radius) a(i, j) = 1.0;
        }
    return a;
}

namespace {

Matrix sar_matrix(const Matrix& adjacency, double coef) {
    return Matrix::Identity(adjacency.rows(), adjacency.cols()) - coef * adjacency;
}

void check_sar(const Matrix& adjacency, double coef) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(adjacency, Eigen::EigenvaluesOnly);
    const Vector lam = eig.eigenvalues();
    const double gap = (1.0 - coef * lam.array()).abs().minCoeff();
    if (gap < 1e-12) {
        std::ostringstream msg;
        msg << "SAR system I - " << coef << " A is singular (spectral radius of " << coef << " A = "
            << coef * lam.array().abs().maxCoeff() << ")";
        throw Error(ErrorKind::numerical_failure, msg.str());
    }
}

}  // namespace

Vector sar_solve(const Matrix& adjacency, const Vector& eps, double coef) {
    check_sar(adjacency, coef);
    return sar_matrix(adjacency, coef).partialPivLu().solve(eps);
}

StudyGeometry make_geometry(std::span<const Location> units, int periods) {
    if (periods < 1) throw Error(ErrorKind::invalid_argument, "study: periods must be positive");
    StudyGeometry geo;
    geo.n_units = static_cast<int>(units.size());
    geo.periods = periods;
    geo.units.assign(units.begin(), units.end());
    for (int d = 0; d < geo.n_units; ++d)
        for (int e = 1; e <= periods; ++e) {
            Location l = units[static_cast<std::size_t>(d)];
            l.period = e;
            geo.locations.push_back(l);
            geo.unit_ids.push_back(std::to_string(d + 1));
        }
    geo.root = lower_sqrt(exp_cov(CovarianceParams{0.0, 3.0, 1.0, {}}, geo.locations), 1.0);
    const Matrix adjacency = sar_adjacency(units);
    check_sar(adjacency, sar_coefficient);
    geo.sar_system = sar_matrix(adjacency, sar_coefficient);
    geo.sar_lu.compute(geo.sar_system);
    return geo;
}

namespace {

Matrix normal_matrix(Stream& rng, Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

}  // namespace

Regressors gen_regressors(const StudyGeometry& geo, std::uint64_t seed) {
    constexpr int cols = study_controls + 1;
    Matrix r = Matrix::Constant(cols, cols, study_regressor_corr);
    r.diagonal().setOnes();
    const Matrix root_r = r.llt().matrixL();
    Stream rng(seed, {0x72656772ULL});
    const Matrix draw = geo.root * normal_matrix(rng, geo.n(), cols) * root_r.transpose();
    return {draw.col(0), draw.rightCols(study_controls)};
}

ErrorDraw gen_errors_baseline(const StudyGeometry& geo, bool iv, Stream& rng) {
    const Vector e1 = rng.normals(geo.n());
    ErrorDraw out;
    out.u = geo.root * e1;
    if (iv) {
        const Vector e2 = rng.normals(geo.n());
        const double c = study_uv_corr;
        out.v = geo.root * (c * e1 + std::sqrt(1.0 - c * c) * e2);
    }
    return out;
}

namespace {

// Innovations with corr(eps_d1, eps_d2) = exp(-1) within a unit (AR-type
// chaining for more than two periods) and independence across units.
Vector sar_innovations(const StudyGeometry& geo, Stream& rng) {
    const Vector z = rng.normals(geo.n());
    const double c = std::exp(-1.0);
    const double s = std::sqrt(1.0 - c * c);
    Vector eps(geo.n());
    for (int d = 0; d < geo.n_units; ++d) {
        const Index base = static_cast<Index>(d) * geo.periods;
        eps(base) = z(base);
        for (int e = 1; e < geo.periods; ++e) eps(base + e) = c * eps(base + e - 1) + s * z(base + e);
    }
    return eps;
}

Vector sar_apply(const StudyGeometry& geo, const Vector& eps) {
    Vector u(geo.n());
    Vector slice(geo.n_units);
    for (int e = 0; e < geo.periods; ++e) {
        for (int d = 0; d < geo.n_units; ++d) slice(d) = eps(static_cast<Index>(d) * geo.periods + e);
        const Vector solved = geo.sar_lu.solve(slice);
        for (int d = 0; d < geo.n_units; ++d) u(static_cast<Index>(d) * geo.periods + e) = solved(d);
    }
    return u;
}

}  // namespace

ErrorDraw gen_errors_sar(const StudyGeometry& geo, bool iv, Stream& rng) {
    const Vector eps = sar_innovations(geo, rng);
    ErrorDraw out;
    out.u = sar_apply(geo, eps);
    if (iv) {
        const Vector other = sar_innovations(geo, rng);
        const double c = study_uv_corr;
        out.v = sar_apply(geo, c * eps + std::sqrt(1.0 - c * c) * other);
    }
    return out;
}

PanelDataset study_dataset(const StudyGeometry& geo, const Regressors& reg, const ErrorDraw& err, bool iv) {
    PanelDataset data;
    data.unit_id = geo.unit_ids;
    data.loc = geo.locations;
    data.w = reg.w;
    for (int l = 1; l <= study_controls; ++l) data.control_names.push_back("w" + std::to_string(l));
    if (iv) {
        if (!err.v) throw Error(ErrorKind::invalid_argument, "study: IV design needs first-stage errors");
        data.z = reg.lead;
        data.x = study_pi * reg.lead + *err.v;
    } else {
        data.x = reg.lead;
    }
    data.y = err.u;  // theta0 = 0, gamma0 = 0
    return data;
}

double sample_quantile(std::vector<double> values, double q) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

struct RowOutcome {
    double estimate = 0.0;
    std::vector<char> rejects;  // per theta in the grid
    int k_hat = 0;
    double alpha_hat = 0.0;
};

struct RepOutcome {
    bool ok = false;
    std::string error;
    std::vector<RowOutcome> rows;
};

bool rejects_at(const BoundTest& test, double theta, double a) {
    try {
        return test.at(theta, a).decision == Decision::reject;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::degenerate) return false;
        throw;
    }
}

RowOutcome evaluate(const BoundTest& test, const std::vector<double>& grid, double a) {
    RowOutcome row;
    row.estimate = test.estimate();
    for (double theta : grid) row.rejects.push_back(rejects_at(test, theta, a) ? 1 : 0);
    row.k_hat = test.k();
    row.alpha_hat = a;
    return row;
}

}  // namespace

StudyReport run_study(const DesignSpec& spec, std::span<const Location> unit_coordinates, std::span<const Method> methods) {
    if (spec.reps < 1) throw Error(ErrorKind::invalid_argument, "study: reps must be at least 1");
    if (spec.B < 1) throw Error(ErrorKind::invalid_argument, "study: B must be at least 1");
    if (spec.n_units != 205 && spec.n_units != 820)
        throw Error(ErrorKind::invalid_argument, "study: units must be 205 or 820");

    std::vector<Location> units(unit_coordinates.begin(), unit_coordinates.end());
    if (spec.n_units == 820 && units.size() * 4 == 820) units = reflect_coordinates(units);
    if (static_cast<int>(units.size()) != spec.n_units)
        throw Error(ErrorKind::invalid_input, "study: coordinate file has " + std::to_string(units.size()) + " units, design needs " +
                                                  std::to_string(spec.n_units));

    const bool iv = spec.model == StudyModel::iv;
    const StudyGeometry geo = make_geometry(units, spec.periods);
    const Regressors reg = gen_regressors(geo, spec.seed);

    StudyReport report;
    report.spec = spec;
    report.k_max = spec.k_max ? *spec.k_max : (spec.n_units == 820 ? 12 : default_k_max(geo.n()));
    const double root_n = std::sqrt(static_cast<double>(geo.n()));
    for (int j = -10; j <= 10; ++j) report.theta_grid.push_back(j / root_n);

    const CandidateSet candidates = build_candidates(geo_dissimilarity(geo.locations), report.k_max, derive_key(spec.seed, {0x6b6d6564ULL}));

    // Row order: UNIT-U, then the calibrated methods as requested.
    std::vector<std::string> labels{"UNIT-U"};
    for (Method m : methods) labels.push_back(to_string(m));

    const int outer = std::clamp(spec.threads, 1, spec.reps);
    const int inner = std::max(1, spec.threads / outer);
    std::vector<RepOutcome> reps(static_cast<std::size_t>(spec.reps));

    parallel_for(reps.size(), outer, [&](std::size_t r) {
        RepOutcome& out = reps[r];
        try {
            Stream rng(spec.seed, {0x6572726fULL, r});
            const ErrorDraw err = spec.errors == StudyErrors::baseline ? gen_errors_baseline(geo, iv, rng) : gen_errors_sar(geo, iv, rng);
            const PanelDataset data = study_dataset(geo, reg, err, iv);
            const FitResult f = fit(data);

            // Covariance model fitted to preliminary residuals, BASELINE family.
            Matrix design(data.n(), data.p() + 2);
            design.col(0) = instrument(data);
            design.rightCols(data.p() + 1) = controls_design(data, iota_indices(data.n()));
            const ProjectedResiduals pu = project_residuals(f.residuals_u, design);
            const QmleFit qu = qmle_fit(pu, data.loc, default_init(pu, data.loc));
            std::optional<CovarianceParams> pv;
            double rho = 0.0;
            if (iv) {
                const ProjectedResiduals pvr = project_residuals(*f.residuals_v, design);
                pv = qmle_fit(pvr, data.loc, default_init(pvr, data.loc)).params;
                rho = estimate_rho(f.residuals_u, *f.residuals_v, qu.params, *pv, data.loc);
            }
            const SimulationModel model = make_simulation_model(data, f, qu.params, pv, rho);

            CalibrationConfig cfg;
            cfg.alpha = spec.alpha;
            cfg.B = spec.B;
            cfg.seed = derive_key(spec.seed, {0x63616c69ULL, r});
            cfg.threads = inner;
            const auto results = calibrate(data, model, candidates, methods, cfg);

            out.rows.push_back(evaluate(BoundTest(data, Method::unit, unit_partition(data)), report.theta_grid, spec.alpha));
            for (const auto& res : results)
                out.rows.push_back(evaluate(BoundTest(data, res.method, res.partition), report.theta_grid, res.alpha_hat));
            out.ok = true;
        } catch (const Error& e) {
            out.error = e.what();
        }
    });

    for (std::size_t r = 0; r < reps.size(); ++r) {
        if (reps[r].ok) ++report.completed;
        else {
            ++report.failures;
            report.failure_messages.push_back("replication " + std::to_string(r) + ": " + reps[r].error);
        }
    }
    if (report.failures > 0.05 * spec.reps) {
        std::string msg = "study: " + std::to_string(report.failures) + " of " + std::to_string(spec.reps) + " replications failed";
        if (!report.failure_messages.empty()) msg += "; first failure: " + report.failure_messages.front();
        throw Error(ErrorKind::numerical_failure, msg);
    }

    const std::size_t zero = 10;  // index of theta = 0 in the grid
    for (std::size_t row = 0; row < labels.size(); ++row) {
        MethodSummary s;
        s.label = labels[row];
        s.calibrated = row > 0;
        s.power.assign(report.theta_grid.size(), 0.0);
        std::vector<double> errors;
        std::vector<double> alphas;
        for (const auto& rep : reps) {
            if (!rep.ok) continue;
            const RowOutcome& o = rep.rows[row];
            errors.push_back(o.estimate);
            alphas.push_back(o.alpha_hat);
            for (std::size_t t = 0; t < o.rejects.size(); ++t) s.power[t] += o.rejects[t];
            if (s.calibrated) s.khat_freq[o.k_hat] += 1.0;
        }
        const auto m = static_cast<double>(errors.size());
        if (m > 0) {
            for (auto& p : s.power) p /= m;
            for (auto& [k, f] : s.khat_freq) f /= m;
            if (iv) {
                s.bias = sample_quantile(errors, 0.5);
                std::vector<double> abs_err;
                for (double e : errors) abs_err.push_back(std::abs(e));
                s.spread = sample_quantile(abs_err, 0.5);
            } else {
                double sum = 0.0;
                double sq = 0.0;
                for (double e : errors) {
                    sum += e;
                    sq += e * e;
                }
                s.bias = sum / m;
                s.spread = std::sqrt(sq / m);
            }
            if (s.calibrated)
                for (std::size_t q = 0; q < alpha_quantile_levels.size(); ++q) s.alpha_quantiles[q] = sample_quantile(alphas, alpha_quantile_levels[q]);
        }
        s.size = s.power[zero];
        report.rows.push_back(std::move(s));
    }
    return report;
}

}  // namespace lcinf
