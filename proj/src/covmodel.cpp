#include "lcinf/covmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace lcinf {

void check_params(const CovarianceParams& p) {
    if (!std::isfinite(p.tau1) || !(p.tau2 > 0.0) || !(p.tau3 > 0.0))
        throw Error(ErrorKind::invalid_argument, "covariance parameters: tau1 finite, tau2 > 0 and tau3 > 0 required");
    if (p.rho && !(std::abs(*p.rho) < 1.0)) throw Error(ErrorKind::invalid_argument, "covariance parameters: |rho| < 1 required");
}

SpaceTimeLags space_time_lags(std::span<const Location> locations) {
    const auto n = static_cast<Index>(locations.size());
    SpaceTimeLags lags{Matrix::Zero(n, n), Matrix::Zero(n, n)};
    for (Index i = 0; i < n; ++i) {
        const auto& a = locations[static_cast<std::size_t>(i)];
        for (Index j = i + 1; j < n; ++j) {
            const auto& b = locations[static_cast<std::size_t>(j)];
            lags.geo(i, j) = lags.geo(j, i) = std::hypot(a.lat - b.lat, a.lon - b.lon);
            lags.time(i, j) = lags.time(j, i) = std::abs(a.period - b.period);
        }
    }
    return lags;
}

Matrix exp_cov(const CovarianceParams& p, const SpaceTimeLags& lags) {
    check_params(p);
    return (p.tau1 - lags.geo.array() / p.tau2 - lags.time.array() / p.tau3).exp().matrix();
}

Matrix exp_cov(const CovarianceParams& p, std::span<const Location> locations) { return exp_cov(p, space_time_lags(locations)); }

namespace {

std::optional<Eigen::LLT<Matrix>> jittered_llt(const Matrix& s, double scale) {
    for (double rel : {1e-10, 1e-8, 1e-6}) {
        Matrix m = s;
        m.diagonal().array() += rel * scale;
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() == Eigen::Success) return llt;
    }
    return std::nullopt;
}

}  // namespace

Matrix lower_sqrt(const Matrix& s, double scale) {
    auto llt = jittered_llt(s, scale);
    if (!llt) throw Error(ErrorKind::numerical_failure, "covariance matrix is not positive definite after jitter up to 1e-6");
    return llt->matrixL();
}

ProjectedResiduals project_residuals(const Vector& residuals, const Matrix& design) {
    const Index n = design.rows();
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols() || design.cols() >= n)
        throw Error(ErrorKind::singular_design, "project_residuals: design must have full column rank below n");
    const Matrix q = qr.householderQ();
    return project_residuals(residuals, design, q.rightCols(n - design.cols()));
}

ProjectedResiduals project_residuals(const Vector& residuals, const Matrix& design, const Matrix& basis) {
    if (residuals.size() != design.rows() || basis.rows() != design.rows())
        throw Error(ErrorKind::invalid_argument, "project_residuals: dimension mismatch");
    ProjectedResiduals out;
    out.ell = design.cols();
    out.basis = basis;
    out.values = basis.transpose() * residuals;
    out.design = design;
    return out;
}

double projected_nll(const ProjectedResiduals& proj, const Matrix& sigma) {
    const Matrix s = proj.basis.transpose() * sigma * proj.basis;
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::numerical_failure, "projected covariance is not positive definite");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return 0.5 * logdet + 0.5 * proj.values.dot(llt.solve(proj.values));
}

QmleObjective::QmleObjective(const ProjectedResiduals& proj, std::span<const Location> locations)
    : resid_(proj.basis * proj.values), design_(proj.design), lags_(space_time_lags(locations)) {
    if (static_cast<Index>(locations.size()) != design_.rows())
        throw Error(ErrorKind::invalid_argument, "QMLE: locations do not match the residual length");
    Eigen::LLT<Matrix> gram(design_.transpose() * design_);
    logdet_gram_ = 2.0 * gram.matrixLLT().diagonal().array().log().sum();
}

double QmleObjective::operator()(const CovarianceParams& p) const {
    const Matrix sigma = exp_cov(p, lags_);
    const auto llt = jittered_llt(sigma, std::exp(p.tau1));
    if (!llt) return std::numeric_limits<double>::infinity();
    const auto l = llt->matrixL();
    const Matrix b = l.solve(design_);
    const Vector c = l.solve(resid_);
    Eigen::LLT<Matrix> inner(b.transpose() * b);
    if (inner.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Vector bc = b.transpose() * c;
    const double logdet = 2.0 * llt->matrixLLT().diagonal().array().log().sum() +
                          2.0 * inner.matrixLLT().diagonal().array().log().sum() - logdet_gram_;
    const double quad = c.squaredNorm() - bc.dot(inner.solve(bc));
    const double value = 0.5 * logdet + 0.5 * quad;
    return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
}

CovarianceParams default_init(const ProjectedResiduals& proj, std::span<const Location> locations) {
    CovarianceParams init;
    const double var = proj.values.squaredNorm() / static_cast<double>(std::max<Index>(proj.values.size(), 1));
    init.tau1 = std::log(var > 0.0 ? var : 1.0);
    std::vector<double> dist;
    const auto n = locations.size();
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            dist.push_back(std::hypot(locations[i].lat - locations[j].lat, locations[i].lon - locations[j].lon));
    if (!dist.empty()) {
        auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
        std::nth_element(dist.begin(), mid, dist.end());
        if (*mid > 0.0) init.tau2 = *mid;
    }
    init.tau3 = 1.0;
    return init;
}

namespace {

using Point = std::array<double, 3>;

constexpr Point lower_bound{-30.0, -9.210340371976184, -9.210340371976184};  // log 1e-4
constexpr Point upper_bound{30.0, 9.210340371976184, 9.210340371976184};

Point clamp(Point x) {
    for (std::size_t i = 0; i < 3; ++i) x[i] = std::clamp(x[i], lower_bound[i], upper_bound[i]);
    return x;
}

CovarianceParams to_params(const Point& x) { return {x[0], std::exp(x[1]), std::exp(x[2]), std::nullopt}; }

struct SimplexResult {
    Point x;
    double f;
    bool converged;
};

// Box-clamped Nelder-Mead with standard coefficients.
template <class F>
SimplexResult nelder_mead(F&& f, Point start, double f_start, double step, int max_iter, double ftol, int& evaluations) {
    std::array<Point, 4> p;
    std::array<double, 4> v;
    p[0] = start;
    v[0] = f_start;
    for (std::size_t i = 0; i < 3; ++i) {
        Point q = start;
        q[i] += step;
        if (q[i] > upper_bound[i]) q[i] = start[i] - step;
        p[i + 1] = clamp(q);
        v[i + 1] = f(p[i + 1]);
        ++evaluations;
    }
    auto eval = [&](const Point& q) {
        ++evaluations;
        return f(q);
    };
    for (int iter = 0; iter < max_iter; ++iter) {
        std::array<std::size_t, 4> order{0, 1, 2, 3};
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::array<Point, 4> ps;
        std::array<double, 4> vs;
        for (std::size_t i = 0; i < 4; ++i) {
            ps[i] = p[order[i]];
            vs[i] = v[order[i]];
        }
        p = ps;
        v = vs;
        if (std::isfinite(v[3]) && v[3] - v[0] < ftol) return {p[0], v[0], true};

        Point centroid{0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t d = 0; d < 3; ++d) centroid[d] += p[i][d] / 3.0;
        auto along = [&](double t) {
            Point q;
            for (std::size_t d = 0; d < 3; ++d) q[d] = centroid[d] + t * (p[3][d] - centroid[d]);
            return clamp(q);
        };
        const Point xr = along(-1.0);
        const double fr = eval(xr);
        if (fr < v[0]) {
            const Point xe = along(-2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                p[3] = xe;
                v[3] = fe;
            } else {
                p[3] = xr;
                v[3] = fr;
            }
            continue;
        }
        if (fr < v[2]) {
            p[3] = xr;
            v[3] = fr;
            continue;
        }
        const bool outside = fr < v[3];
        const Point xc = along(outside ? -0.5 : 0.5);
        const double fc = eval(xc);
        if (fc < (outside ? fr : v[3])) {
            p[3] = xc;
            v[3] = fc;
            continue;
        }
        for (std::size_t i = 1; i < 4; ++i) {
            for (std::size_t d = 0; d < 3; ++d) p[i][d] = p[0][d] + 0.5 * (p[i][d] - p[0][d]);
            v[i] = eval(p[i]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    return {p[best], v[best], false};
}

}  // namespace

QmleFit qmle_fit(const ProjectedResiduals& proj, std::span<const Location> locations, const CovarianceParams& init) {
    check_params(init);
    if (proj.values.size() < 20)
        throw Error(ErrorKind::invalid_argument, "qmle_fit: need at least 20 residual dimensions (n - ell >= 20)");
    const QmleObjective objective(proj, locations);
    auto f = [&](const Point& x) { return objective(to_params(x)); };

    QmleFit out;
    const Point x0 = clamp({init.tau1, std::log(init.tau2), std::log(init.tau3)});
    out.init_objective = f(x0);
    ++out.evaluations;
    if (!std::isfinite(out.init_objective))
        throw Error(ErrorKind::numerical_failure, "qmle_fit: covariance at the initial value is not positive definite");

    struct Candidate {
        Point x;
        double f;
    };
    std::vector<Candidate> grid;
    const double spread = std::log(3.0);
    for (double d1 : {-1.0, 0.0, 1.0})
        for (double d2 : {-spread, 0.0, spread})
            for (double d3 : {-spread, 0.0, spread}) {
                const Point x = clamp({x0[0] + d1, x0[1] + d2, x0[2] + d3});
                const bool centre = d1 == 0.0 && d2 == 0.0 && d3 == 0.0;
                grid.push_back({x, centre ? out.init_objective : f(x)});
                if (!centre) ++out.evaluations;
            }
    std::stable_sort(grid.begin(), grid.end(), [](const Candidate& a, const Candidate& b) { return a.f < b.f; });

    SimplexResult best{x0, out.init_objective, false};
    for (std::size_t r = 0; r < 3 && r < grid.size(); ++r) {
        if (!std::isfinite(grid[r].f)) break;
        const SimplexResult run = nelder_mead(f, grid[r].x, grid[r].f, 0.5, 500, 1e-8, out.evaluations);
        if (run.f < best.f || (run.f == best.f && run.converged)) best = run;
    }
    out.params = to_params(best.x);
    out.objective = best.f;
    out.converged = best.converged;
    return out;
}

Matrix assemble_joint_cov(const CovarianceParams& u, const CovarianceParams& v, double rho, std::span<const Location> locations) {
    if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::invalid_argument, "assemble_joint_cov: |rho| < 1 required");
    const SpaceTimeLags lags = space_time_lags(locations);
    const Matrix su = exp_cov(u, lags);
    const Matrix sv = exp_cov(v, lags);
    const Matrix lu = lower_sqrt(su, std::exp(u.tau1));
    const Matrix lv = lower_sqrt(sv, std::exp(v.tau1));
    const Index n = su.rows();
    Matrix joint(2 * n, 2 * n);
    joint.topLeftCorner(n, n) = su;
    joint.bottomRightCorner(n, n) = sv;
    joint.topRightCorner(n, n) = rho * lu * lv.transpose();
    joint.bottomLeftCorner(n, n) = joint.topRightCorner(n, n).transpose();
    return joint;
}

double estimate_rho(const Vector& u_hat, const Vector& v_hat, const CovarianceParams& u, const CovarianceParams& v,
                    std::span<const Location> locations) {
    const SpaceTimeLags lags = space_time_lags(locations);
    const Matrix lu = lower_sqrt(exp_cov(u, lags), std::exp(u.tau1));
    const Matrix lv = lower_sqrt(exp_cov(v, lags), std::exp(v.tau1));
    const Vector a = lu.triangularView<Eigen::Lower>().solve(u_hat);
    const Vector b = lv.triangularView<Eigen::Lower>().solve(v_hat);
    const Vector ac = a.array() - a.mean();
    const Vector bc = b.array() - b.mean();
    const double denom = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
    if (!(denom > 0.0)) throw Error(ErrorKind::degenerate, "estimate_rho: whitened residuals have zero variance");
    return std::clamp(ac.dot(bc) / denom, -rho_clamp, rho_clamp);
}

}  // namespace lcinf
