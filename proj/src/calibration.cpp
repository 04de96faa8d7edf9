#include "lcinf/calibration.hpp"

#include "lcinf/distributions.hpp"
#include "lcinf/parallel.hpp"
#include "lcinf/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace lcinf {

SimulationModel make_simulation_model(const PanelDataset& data, const FitResult& fit, const CovarianceParams& params_u,
                                      const std::optional<CovarianceParams>& params_v, double rho) {
    check_dataset(data);
    if (static_cast<Index>(fit.used_indices.size()) != data.n())
        throw Error(ErrorKind::invalid_argument, "simulation model: requires a full-sample fit");
    if (static_cast<Index>(data.loc.size()) != data.n())
        throw Error(ErrorKind::invalid_input, "simulation model: dataset has no locations");
    check_params(params_u);

    const Matrix controls = controls_design(data, fit.used_indices);
    SimulationModel model;
    model.mean_y = controls * fit.coef_controls;
    model.root_u = lower_sqrt(exp_cov(params_u, data.loc), std::exp(params_u.tau1));
    model.iv = data.is_iv();
    if (!model.iv) {
        model.mean_x = data.x;
        return model;
    }
    if (!params_v) throw Error(ErrorKind::invalid_argument, "simulation model: IV needs first-stage covariance parameters");
    if (!fit.pi_hat) throw Error(ErrorKind::invalid_argument, "simulation model: IV needs a first-stage fit");
    if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::invalid_argument, "simulation model: |rho| must be below 1");
    check_params(*params_v);
    model.mean_x = *fit.pi_hat * *data.z + controls * fit.coef_first_stage.tail(controls.cols());
    model.root_v = lower_sqrt(exp_cov(*params_v, data.loc), std::exp(params_v->tau1));
    model.rho = rho;
    return model;
}

SyntheticStream::SyntheticStream(const SimulationModel& model, double theta, std::uint64_t seed, std::uint64_t theta_tag)
    : model_(&model), theta_(theta), seed_(seed), tag_(theta_tag) {}

SyntheticStream::SyntheticStream(const SimulationModel& model, double theta, std::uint64_t seed)
    : SyntheticStream(model, theta, seed, std::bit_cast<std::uint64_t>(theta + 0.0)) {}

SyntheticDraw SyntheticStream::draw(std::uint64_t b) const {
    const SimulationModel& m = *model_;
    const Index n = m.mean_y.size();
    Stream first(seed_, {tag_, b, 0});
    const Vector e1 = first.normals(n);
    SyntheticDraw out;
    if (m.iv) {
        Stream second(seed_, {tag_, b, 1});
        const Vector e2 = second.normals(n);
        out.x = m.mean_x + m.root_v * (m.rho * e1 + std::sqrt(1.0 - m.rho * m.rho) * e2);
    } else {
        out.x = m.mean_x;
    }
    out.y = m.mean_y + theta_ * out.x + m.root_u * e1;
    return out;
}

std::vector<PanelDataset> simulate_datasets(const PanelDataset& data, const SimulationModel& model, double theta, int b_count,
                                            std::uint64_t seed) {
    if (b_count < 1) throw Error(ErrorKind::invalid_argument, "simulate_datasets: B must be at least 1");
    const SyntheticStream stream(model, theta, seed);
    std::vector<PanelDataset> out;
    out.reserve(static_cast<std::size_t>(b_count));
    for (int b = 0; b < b_count; ++b) {
        SyntheticDraw d = stream.draw(static_cast<std::uint64_t>(b));
        PanelDataset copy = data;
        copy.y = std::move(d.y);
        copy.x = std::move(d.x);
        out.push_back(std::move(copy));
    }
    return out;
}

std::vector<double> alternative_grid(Index n) {
    std::vector<double> grid;
    const double root = std::sqrt(static_cast<double>(n));
    for (int j = -10; j <= 10; ++j)
        if (j != 0) grid.push_back(j / root);
    return grid;
}

std::vector<double> a_grid(Method method, int k, double alpha, int points) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::invalid_argument, "alpha must lie in (0, 1)");
    std::vector<double> grid;
    if (method == Method::crs) {
        if (k > crs_max_enumeration_k) return grid;
        const double m = std::ldexp(1.0, k);
        for (double j = 1.0; j / m <= alpha; j += 1.0) grid.push_back(j / m);
        return grid;
    }
    if (points < 1) throw Error(ErrorKind::invalid_argument, "a-grid needs at least one point");
    // unit-level clustering can need levels far below alpha / points
    if (method == Method::unit) {
        const double lo = std::log(unit_a_floor);
        const double hi = std::log(alpha / points);
        for (int j = 0; j < points; ++j) grid.push_back(std::exp(lo + (hi - lo) * j / points));
    }
    for (int j = 1; j <= points; ++j) grid.push_back(alpha * j / points);
    return grid;
}

bool rejects(Method method, int k, double statistic, double a) {
    if (a <= 0.0) return false;
    switch (method) {
        case Method::crs: return statistic <= std::floor(std::ldexp(a, k) + 1e-9);
        case Method::im: return statistic > im_threshold(k, a);
        case Method::cce:
        case Method::unit: return statistic > cce_threshold(k, a);
    }
    return false;
}

namespace {

// Per-slot evaluation state for the simulated statistics.
struct SlotEval {
    std::vector<SubsetEstimator> clusters;  // IM/CRS
    double root_n_over_k = 0.0;
};

bool uses_full_fit(Method m) { return m == Method::cce || m == Method::unit; }

// Vectorized rejection threshold for a fixed (method, k, a); CRS compares counts.
double threshold_for(Method method, int k, double a) {
    if (method == Method::crs) return std::floor(std::ldexp(a, k) + 1e-9);
    return method == Method::im ? im_threshold(k, a) : cce_threshold(k, a);
}

bool passes(Method method, double statistic, double threshold) {
    return method == Method::crs ? statistic <= threshold : statistic > threshold;
}

std::size_t find_slot(const SimulatedStatistics& sims, Method method, int k) {
    for (std::size_t s = 0; s < sims.slots.size(); ++s)
        if (sims.slots[s].method == method && sims.slots[s].k == k) return s;
    throw Error(ErrorKind::invalid_argument, "no simulated statistics for " + to_string(method) + " k=" + std::to_string(k));
}

}  // namespace

SimulatedStatistics simulate_statistics(const PanelDataset& data, const SimulationModel& model, const CandidateSet& candidates,
                                        std::span<const Method> methods, const CalibrationConfig& config) {
    if (config.B < 1) throw Error(ErrorKind::invalid_argument, "calibration: B must be at least 1");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw Error(ErrorKind::invalid_argument, "calibration: alpha must lie in (0, 1)");
    if (model.mean_y.size() != data.n()) throw Error(ErrorKind::invalid_argument, "calibration: model does not match the dataset");

    SimulatedStatistics sims;
    sims.B = config.B;
    sims.alpha = config.alpha;
    sims.a_grid_points = config.a_grid_points;
    sims.seed = config.seed;
    sims.alt_grid = alternative_grid(data.n());

    std::vector<SlotEval> evals;
    const double n = static_cast<double>(data.n());
    for (Method method : methods) {
        auto add = [&](int k, const Partition& p) {
            SimulatedStatistics::Slot slot;
            slot.method = method;
            slot.k = k;
            slot.partition = p;
            SlotEval ev;
            ev.root_n_over_k = std::sqrt(n / k);
            if (k < 2) {
                slot.feasible = false;
                slot.reason = "fewer than two clusters";
            } else if (method == Method::crs && k > crs_max_enumeration_k) {
                slot.feasible = false;
                slot.reason = "k exceeds full sign-flip enumeration";
            } else if (!uses_full_fit(method)) {
                try {
                    for (auto& members : p.members()) ev.clusters.emplace_back(data, std::move(members));
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::too_small_cluster && e.kind() != ErrorKind::singular_design) throw;
                    slot.feasible = false;
                    slot.reason = e.what();
                    ev.clusters.clear();
                }
            }
            sims.slots.push_back(std::move(slot));
            evals.push_back(std::move(ev));
        };
        if (method == Method::unit) {
            const Partition p = unit_partition(data);
            add(p.k, p);
        } else {
            for (const auto& [k, p] : candidates.partitions) add(k, p);
        }
    }

    const bool need_full = std::any_of(sims.slots.begin(), sims.slots.end(), [](const auto& s) { return s.feasible && uses_full_fit(s.method); });
    std::optional<SubsetEstimator> full;
    std::optional<Residualizer> controls;
    if (need_full) {
        full.emplace(data, iota_indices(data.n()));
        controls.emplace(controls_design(data, iota_indices(data.n())));
    }

    const std::size_t thetas = sims.alt_grid.size() + 1;
    const std::size_t per_draw = sims.slots.size();
    const auto b_count = static_cast<std::size_t>(config.B);
    sims.stats.assign(thetas * b_count * per_draw, 0.0);

    std::vector<SyntheticStream> streams;
    streams.emplace_back(model, 0.0, config.seed);
    for (double theta : sims.alt_grid) streams.emplace_back(model, theta, config.seed);

    parallel_for(thetas * b_count, config.threads, [&](std::size_t job) {
        const std::size_t t = job / b_count;
        const std::size_t b = job % b_count;
        const SyntheticDraw d = streams[t].draw(b);
        double* out = sims.stats.data() + job * per_draw;

        double theta_full = 0.0;
        double hessian = 0.0;
        Vector scores;
        if (need_full) {
            theta_full = full->estimate(d.y, d.x);
            const Vector& zt = full->partialled_instrument();
            scores = zt.cwiseProduct(controls->apply(d.y - theta_full * d.x));
            hessian = zt.dot(d.x);
        }

        Vector s;
        for (std::size_t slot = 0; slot < per_draw; ++slot) {
            const auto& meta = sims.slots[slot];
            if (!meta.feasible) continue;
            const SlotEval& ev = evals[slot];
            if (uses_full_fit(meta.method)) {
                Vector sums = Vector::Zero(meta.k);
                for (Index i = 0; i < scores.size(); ++i) sums(meta.partition.assignment[static_cast<std::size_t>(i)]) += scores(i);
                const double between = sums.squaredNorm();
                const double stat = std::abs(theta_full) * std::abs(hessian) / std::sqrt(between);
                out[slot] = (between > 1e-24 * scores.squaredNorm() && std::isfinite(stat)) ? stat : 0.0;
                continue;
            }
            s.resize(meta.k);
            for (int c = 0; c < meta.k; ++c) s(c) = ev.root_n_over_k * ev.clusters[static_cast<std::size_t>(c)].estimate(d.y, d.x);
            if (meta.method == Method::im) {
                const bool usable = s.allFinite() && !(s.array() == s(0)).all();
                const double t = usable ? std::abs(t_of_s(s)) : 0.0;
                out[slot] = std::isfinite(t) ? t : 0.0;
            } else {
                out[slot] = s.allFinite() ? static_cast<double>(sign_orbit(s).count_at_least_identity()) : std::ldexp(1.0, meta.k);
            }
        }
    });
    return sims;
}

ErrorGrid type1_grid(const SimulatedStatistics& sims, Method method) {
    ErrorGrid grid;
    grid.method = method;
    grid.B = sims.B;
    grid.alt_grid = sims.alt_grid;
    const auto b_count = static_cast<std::size_t>(sims.B);
    for (std::size_t s = 0; s < sims.slots.size(); ++s) {
        const auto& meta = sims.slots[s];
        if (meta.method != method) continue;
        KColumn col;
        col.k = meta.k;
        col.feasible = meta.feasible;
        col.infeasible_reason = meta.reason;
        if (meta.feasible) {
            col.a = a_grid(method, meta.k, sims.alpha, sims.a_grid_points);
            for (double a : col.a) {
                const double thr = threshold_for(method, meta.k, a);
                std::size_t hits = 0;
                for (std::size_t b = 0; b < b_count; ++b) hits += passes(method, sims.at(0, b, s), thr) ? 1 : 0;
                col.type1.push_back(static_cast<double>(hits) / static_cast<double>(b_count));
            }
        }
        grid.columns.push_back(std::move(col));
    }
    std::sort(grid.columns.begin(), grid.columns.end(), [](const KColumn& l, const KColumn& r) { return l.k < r.k; });
    return grid;
}

double select_alpha(const KColumn& column, double alpha) {
    double best = 0.0;
    for (std::size_t j = 0; j < column.a.size(); ++j)
        if (column.type1[j] <= alpha && column.a[j] > best) best = column.a[j];
    return best;
}

CalibrationResult type2_and_select(const SimulatedStatistics& sims, ErrorGrid grid) {
    const auto b_count = static_cast<std::size_t>(sims.B);
    const KColumn* chosen = nullptr;
    for (auto& col : grid.columns) {
        if (!col.feasible) continue;
        const std::size_t s = find_slot(sims, grid.method, col.k);
        col.alpha_k = select_alpha(col, sims.alpha);
        col.power.assign(sims.alt_grid.size(), 0.0);
        if (col.alpha_k > 0.0) {
            const double thr = threshold_for(grid.method, col.k, col.alpha_k);
            for (std::size_t t = 0; t < sims.alt_grid.size(); ++t) {
                std::size_t hits = 0;
                for (std::size_t b = 0; b < b_count; ++b) hits += passes(grid.method, sims.at(t + 1, b, s), thr) ? 1 : 0;
                col.power[t] = static_cast<double>(hits) / static_cast<double>(b_count);
            }
        }
        double total = 0.0;
        for (double p : col.power) total += p;
        col.avg_power = total / static_cast<double>(col.power.size());
        if (!chosen || col.avg_power > chosen->avg_power) chosen = &col;
    }
    if (!chosen)
        throw Error(ErrorKind::calibration_failure,
                    "calibration: no feasible cluster count for " + to_string(grid.method) + "; rerun with a smaller k_max");

    CalibrationResult out;
    out.method = grid.method;
    out.k_hat = chosen->k;
    out.alpha_hat = chosen->alpha_k;
    out.seed = sims.seed;
    out.partition = sims.slots[find_slot(sims, grid.method, chosen->k)].partition;
    out.grid = std::move(grid);
    return out;
}

std::vector<CalibrationResult> calibrate(const PanelDataset& data, const SimulationModel& model, const CandidateSet& candidates,
                                         std::span<const Method> methods, const CalibrationConfig& config) {
    const SimulatedStatistics sims = simulate_statistics(data, model, candidates, methods, config);
    std::vector<CalibrationResult> out;
    for (Method m : methods) out.push_back(type2_and_select(sims, type1_grid(sims, m)));
    return out;
}

BoundTest::BoundTest(const PanelDataset& data, Method method, const Partition& partition, const CrsOptions& crs)
    : method_(method), partition_(partition), n_(data.n()), crs_(crs) {
    check_partition(partition_);
    if (partition_.size() != data.n()) throw Error(ErrorKind::invalid_partition, "partition does not match the dataset");
    if (partition_.k < 2) throw Error(ErrorKind::invalid_partition, "need at least two clusters");
    if (uses_full_fit(method_)) {
        const FitResult f = fit(data);
        estimate_ = f.theta_hat;
        variance_ = cce_variance(data, partition_, f);
        se_scale_ = std::sqrt(variance_);
        return;
    }
    const auto members = partition_.members();
    cluster_theta_.resize(partition_.k);
    for (int c = 0; c < partition_.k; ++c) cluster_theta_(c) = fit(data, members[static_cast<std::size_t>(c)]).theta_hat;
    estimate_ = cluster_theta_.mean();
    const double var = (cluster_theta_.array() - estimate_).square().sum() / (partition_.k - 1.0);
    se_scale_ = std::sqrt(var / partition_.k);
}

std::optional<double> BoundTest::standard_error() const {
    if (method_ == Method::crs) return std::nullopt;
    return se_scale_;
}

TestOutcome BoundTest::at(double theta_star, double a) const {
    if (a <= 0.0) {
        TestOutcome out = at(theta_star, 0.5);
        out.decision = Decision::fail_to_reject;
        out.a = a;
        out.threshold = std::numeric_limits<double>::infinity();
        out.level_warning = false;
        return out;
    }
    if (method_ == Method::im) return im_test(cluster_statistics(cluster_theta_, n_, theta_star), a);
    if (method_ == Method::crs) return crs_test(cluster_statistics(cluster_theta_, n_, theta_star), a, crs_);
    if (!(a < 1.0)) throw Error(ErrorKind::invalid_argument, "test level must lie in (0, 1)");
    TestOutcome out;
    out.method = method_;
    out.a = a;
    out.k = partition_.k;
    out.statistic = std::abs(estimate_ - theta_star) / se_scale_;
    out.threshold = cce_threshold(partition_.k, a);
    const double scale = std::sqrt(partition_.k / (partition_.k - 1.0));
    out.p_value = 2.0 * (1.0 - t_cdf(out.statistic / scale, partition_.k - 1.0));
    out.decision = out.statistic > out.threshold ? Decision::reject : Decision::fail_to_reject;
    return out;
}

ConfidenceInterval confidence_interval(const BoundTest& test, double a, double halfwidth_scale, int grid_points) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (a <= 0.0) return {-inf, inf, true, true};
    const double center = test.estimate();
    if (test.method() != Method::crs) {
        const double cv = test.method() == Method::im ? im_threshold(test.k(), a) : cce_threshold(test.k(), a);
        const double half = cv * test.se_scale();
        return {center - half, center + half, false, false};
    }
    if (grid_points < 3) throw Error(ErrorKind::invalid_argument, "confidence_interval: need at least three grid points");

    double scale = test.se_scale();
    if (!(scale > 0.0)) scale = std::max(std::abs(center), 1.0) * 1e-3;
    const double hw = halfwidth_scale * scale;
    const auto theta_at = [&](int i) { return center - hw + 2.0 * hw * i / (grid_points - 1); };
    const auto accepted = [&](double theta) {
        try {
            return test.at(theta, a).decision == Decision::fail_to_reject;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::degenerate) return true;  // |t| undefined: no evidence against theta
            throw;
        }
    };

    int first = -1;
    int last = -1;
    for (int i = 0; i < grid_points; ++i)
        if (accepted(theta_at(i))) {
            if (first < 0) first = i;
            last = i;
        }
    if (first < 0) throw Error(ErrorKind::degenerate, "confidence_interval: no grid value is accepted");

    const double tol = 1e-7 * hw;
    const auto refine = [&](double in, double out_) {
        while (std::abs(out_ - in) > tol) {
            const double mid = 0.5 * (in + out_);
            (accepted(mid) ? in : out_) = mid;
        }
        return in;
    };
    ConfidenceInterval ci;
    ci.lower_unbounded = first == 0;
    ci.upper_unbounded = last == grid_points - 1;
    ci.lo = ci.lower_unbounded ? theta_at(0) : refine(theta_at(first), theta_at(first - 1));
    ci.hi = ci.upper_unbounded ? theta_at(grid_points - 1) : refine(theta_at(last), theta_at(last + 1));
    return ci;
}

}  // namespace lcinf
