#include "lcinf/inference.hpp"

#include "lcinf/distributions.hpp"
#include "lcinf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lcinf {

std::string to_string(Method m) {
    switch (m) {
        case Method::im: return "IM";
        case Method::crs: return "CRS";
        case Method::cce: return "CCE";
        case Method::unit: return "UNIT";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "im") return Method::im;
    if (lower == "crs") return Method::crs;
    if (lower == "cce") return Method::cce;
    if (lower == "unit") return Method::unit;
    throw Error(ErrorKind::invalid_argument, "unknown method '" + s + "'");
}

ClusterStatVector cluster_statistics(const Vector& theta_by_cluster, Index n, double theta_star) {
    ClusterStatVector sv;
    sv.k = static_cast<int>(theta_by_cluster.size());
    sv.n = n;
    sv.theta_star = theta_star;
    sv.s = std::sqrt(static_cast<double>(n) / sv.k) * (theta_by_cluster.array() - theta_star).matrix();
    return sv;
}

namespace {

void check_level(double a) {
    if (!(a > 0.0 && a < 1.0)) throw Error(ErrorKind::invalid_argument, "test level must lie in (0, 1)");
}

}  // namespace

double im_level_cap() { return 2.0 * normal_cdf(-std::sqrt(3.0)); }

double im_threshold(int k, double a) { return t_quantile(1.0 - a / 2.0, k - 1.0); }

TestOutcome im_test(const ClusterStatVector& sv, double a) {
    check_level(a);
    TestOutcome out;
    out.method = Method::im;
    out.a = a;
    out.k = sv.k;
    const double t = t_of_s(sv.s);
    out.statistic = std::abs(t);
    out.threshold = im_threshold(sv.k, a);
    out.p_value = 2.0 * (1.0 - t_cdf(out.statistic, sv.k - 1.0));
    out.decision = out.statistic > out.threshold ? Decision::reject : Decision::fail_to_reject;
    out.level_warning = a > im_level_cap();
    return out;
}

double SignOrbit::w(double key) const {
    if (key < 0.0) return 0.0;
    const double kd = k;
    const double resid = sum_squares - key * key / kd;
    if (resid <= 0.0) return 0.0;
    return key / std::sqrt(kd) / std::sqrt(resid / (kd - 1.0));
}

std::size_t SignOrbit::count_at_least_identity() const {
    const double id = keys.front();
    return static_cast<std::size_t>(std::count_if(keys.begin(), keys.end(), [id](double v) { return v >= id; }));
}

SignOrbit sign_orbit(const Vector& s, const CrsOptions& options) {
    const int k = static_cast<int>(s.size());
    if (k < 2) throw Error(ErrorKind::invalid_argument, "sign_orbit: need at least two clusters");
    SignOrbit orbit;
    orbit.k = k;
    orbit.sum_squares = s.squaredNorm();

    // The two sign patterns making every h_C S_C equal (only possible when all
    // |S_C| coincide) have undefined |t|.
    const bool equal_magnitudes = (s.array().abs() == std::abs(s(0))).all();

    if (options.orbit_draws == 0) {
        if (k > crs_max_enumeration_k)
            throw Error(ErrorKind::enumeration_too_large, "CRS: k=" + std::to_string(k) + " exceeds full enumeration (k <= 20); use --orbit-draws");
        const int lo = k / 2;
        const int hi = k - lo;
        // Half sums are formed by direct summation in index order, so h and
        // its complement produce exactly negated totals.
        auto half_sums = [&](int offset, int width) {
            std::vector<double> out(std::size_t{1} << width);
            for (std::size_t m = 0; m < out.size(); ++m) {
                double acc = 0.0;
                for (int c = 0; c < width; ++c) acc += (m >> c & 1U) ? -s(offset + c) : s(offset + c);
                out[m] = acc;
            }
            return out;
        };
        const auto low = half_sums(0, lo);
        const auto high = half_sums(lo, hi);
        const std::size_t total = std::size_t{1} << k;
        const std::size_t low_mask = (std::size_t{1} << lo) - 1;
        orbit.keys.resize(total);
        for (std::size_t h = 0; h < total; ++h) orbit.keys[h] = std::abs(low[h & low_mask] + high[h >> lo]);
        if (equal_magnitudes) {
            std::size_t negative_mask = 0;
            for (int c = 0; c < k; ++c)
                if (s(c) < 0.0) negative_mask |= std::size_t{1} << c;
            orbit.keys[negative_mask] = -1.0;
            orbit.keys[negative_mask ^ (total - 1)] = -1.0;
        }
        return orbit;
    }

    Stream rng(options.orbit_seed, {0x6f72626974ULL, static_cast<std::uint64_t>(k)});
    orbit.keys.reserve(options.orbit_draws);
    std::vector<int> signs(static_cast<std::size_t>(k), 1);
    for (std::size_t d = 0; d < options.orbit_draws; ++d) {
        if (d > 0)
            for (auto& sg : signs) sg = (rng.next_u64() >> 63) ? -1 : 1;
        double acc = 0.0;
        bool all_same = equal_magnitudes;
        for (int c = 0; c < k; ++c) {
            const double v = signs[static_cast<std::size_t>(c)] * s(c);
            acc += v;
            all_same = all_same && v == signs[0] * s(0);
        }
        orbit.keys.push_back(all_same ? -1.0 : std::abs(acc));
    }
    return orbit;
}

std::size_t crs_order_index(std::size_t m, double a) {
    const auto above = static_cast<std::size_t>(std::floor(static_cast<double>(m) * a + 1e-9));
    return above >= m ? 1 : m - above;
}

TestOutcome crs_test(const ClusterStatVector& sv, double a, const CrsOptions& options) {
    check_level(a);
    const SignOrbit orbit = sign_orbit(sv.s, options);
    const std::size_t m = orbit.keys.size();
    std::vector<double> sorted(orbit.keys);
    std::sort(sorted.begin(), sorted.end());
    const double kj = sorted[crs_order_index(m, a) - 1];
    const double ks = orbit.keys.front();

    const auto above = static_cast<double>(std::count_if(sorted.begin(), sorted.end(), [kj](double v) { return v > kj; }));
    const auto tied = static_cast<double>(std::count(sorted.begin(), sorted.end(), kj));
    const double a_tilde = (static_cast<double>(m) * a - above) / tied;

    bool reject = ks > kj;
    if (!reject && ks == kj) {
        if (options.randomized_seed) {
            Stream rng(*options.randomized_seed, {0x72616e64ULL});
            reject = rng.uniform() < a_tilde;
        } else {
            reject = a_tilde >= 1.0;
        }
    }

    TestOutcome out;
    out.method = Method::crs;
    out.a = a;
    out.k = sv.k;
    out.statistic = orbit.w(ks);
    out.threshold = orbit.w(kj);
    out.p_value = static_cast<double>(orbit.count_at_least_identity()) / static_cast<double>(m);
    out.decision = reject ? Decision::reject : Decision::fail_to_reject;
    return out;
}

double hessian_scale(const PanelDataset& data) {
    const Residualizer m(controls_design(data, iota_indices(data.n())));
    return m.apply(instrument(data)).dot(data.x);
}

double cce_variance_from_scores(const Vector& scores, double hessian, const Partition& p) {
    check_partition(p);
    if (p.size() != scores.size()) throw Error(ErrorKind::invalid_argument, "cce_variance: partition does not match the sample");
    Vector sums = Vector::Zero(p.k);
    for (Index i = 0; i < scores.size(); ++i) sums(p.assignment[static_cast<std::size_t>(i)]) += scores(i);
    const double between = sums.squaredNorm();
    if (!(between > 1e-24 * scores.squaredNorm()))
        throw Error(ErrorKind::degenerate, "cce_variance: cluster score sums are all zero");
    return between / (hessian * hessian);
}

double cce_variance(const PanelDataset& data, const Partition& p, const FitResult& fit) {
    return cce_variance_from_scores(score_vector(data, fit), hessian_scale(data), p);
}

double cce_threshold(int k, double a) { return std::sqrt(static_cast<double>(k) / (k - 1.0)) * t_quantile(1.0 - a / 2.0, k - 1.0); }

TestOutcome cce_test(const PanelDataset& data, const Partition& p, const FitResult& fit, double theta_star, double a) {
    check_level(a);
    if (p.k < 2) throw Error(ErrorKind::invalid_partition, "cce_test: need at least two clusters");
    const double variance = cce_variance(data, p, fit);
    TestOutcome out;
    out.method = Method::cce;
    out.a = a;
    out.k = p.k;
    out.statistic = std::abs(fit.theta_hat - theta_star) / std::sqrt(variance);
    out.threshold = cce_threshold(p.k, a);
    const double scale = std::sqrt(static_cast<double>(p.k) / (p.k - 1.0));
    out.p_value = 2.0 * (1.0 - t_cdf(out.statistic / scale, p.k - 1.0));
    out.decision = out.statistic > out.threshold ? Decision::reject : Decision::fail_to_reject;
    return out;
}

TestOutcome cce_test(const PanelDataset& data, const Partition& p, double theta_star, double a) {
    return cce_test(data, p, fit(data), theta_star, a);
}

Partition unit_partition(const PanelDataset& data) {
    if (data.unit_id.empty()) {
        std::vector<int> labels(static_cast<std::size_t>(data.n()));
        std::iota(labels.begin(), labels.end(), 0);
        return partition_from_labels(labels);
    }
    return partition_from_labels(data.unit_labels());
}

TestOutcome unit_test(const PanelDataset& data, double theta_star, double a) {
    TestOutcome out = cce_test(data, unit_partition(data), theta_star, a);
    out.method = Method::unit;
    return out;
}

MoranResult moran_i(const Vector& scores, const Matrix& weights) {
    const Index n = scores.size();
    if (weights.rows() != n || weights.cols() != n) throw Error(ErrorKind::invalid_argument, "moran_i: weights must be n x n");
    if ((weights.array() < 0.0).any()) throw Error(ErrorKind::invalid_argument, "moran_i: weights must be nonnegative");
    if ((weights.diagonal().array() != 0.0).any()) throw Error(ErrorKind::invalid_argument, "moran_i: weights must have a zero diagonal");
    const double s0 = weights.sum();
    if (s0 <= 0.0) throw Error(ErrorKind::invalid_argument, "moran_i: weights are all zero");

    const Vector z = scores.array() - scores.mean();
    const double zz = z.squaredNorm();
    if (zz <= 0.0) throw Error(ErrorKind::degenerate, "moran_i: score vector is constant");

    const double nd = static_cast<double>(n);
    MoranResult out;
    out.raw_i = nd / s0 * z.dot(weights * z) / zz;
    out.expected = -1.0 / (nd - 1.0);
    const Matrix sym = weights + weights.transpose();
    const double s1 = 0.5 * sym.array().square().sum();
    const double s2 = (weights.rowwise().sum() + weights.colwise().sum().transpose()).squaredNorm();
    out.variance = (nd * nd * s1 - nd * s2 + 3.0 * s0 * s0) / ((nd * nd - 1.0) * s0 * s0) - out.expected * out.expected;
    out.statistic = (out.raw_i - out.expected) / std::sqrt(out.variance);
    out.p_value = 2.0 * normal_cdf(-std::abs(out.statistic));
    return out;
}

Matrix knn_weights(std::span<const Location> locations, int neighbors, bool within_period) {
    const auto n = static_cast<Index>(locations.size());
    Matrix w = Matrix::Zero(n, n);
    std::vector<std::pair<double, Index>> cand;
    for (Index i = 0; i < n; ++i) {
        const auto& a = locations[static_cast<std::size_t>(i)];
        cand.clear();
        for (Index j = 0; j < n; ++j) {
            const auto& b = locations[static_cast<std::size_t>(j)];
            if (j == i || (within_period && a.period != b.period)) continue;
            cand.emplace_back(std::hypot(a.lat - b.lat, a.lon - b.lon), j);
        }
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(neighbors), cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
        for (std::size_t r = 0; r < take; ++r) w(i, cand[r].second) = 1.0;
    }
    return w;
}

Matrix same_unit_weights(const std::vector<int>& unit_labels) {
    const auto n = static_cast<Index>(unit_labels.size());
    Matrix w = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (i != j && unit_labels[static_cast<std::size_t>(i)] == unit_labels[static_cast<std::size_t>(j)]) w(i, j) = 1.0;
    return w;
}

}  // namespace lcinf
