#include "lcinf/regression.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

namespace lcinf {

std::vector<int> PanelDataset::unit_labels() const {
    std::unordered_map<std::string, int> seen;
    std::vector<int> labels;
    labels.reserve(unit_id.size());
    for (const auto& u : unit_id) labels.push_back(seen.try_emplace(u, static_cast<int>(seen.size())).first->second);
    return labels;
}

void check_dataset(const PanelDataset& data) {
    const Index n = data.n();
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_input, "dataset: " + msg); };
    if (data.x.size() != n || data.w.rows() != n) fail("y, x and w must have the same number of rows");
    if (data.z && data.z->size() != n) fail("z must have the same number of rows as y");
    if (!data.loc.empty() && static_cast<Index>(data.loc.size()) != n) fail("locations must match the number of rows");
    if (!data.unit_id.empty() && static_cast<Index>(data.unit_id.size()) != n) fail("unit ids must match the number of rows");
    if (n <= data.p() + 2) fail("need n > p + 2 (n=" + std::to_string(n) + ", p=" + std::to_string(data.p()) + ")");
    if (!data.y.allFinite() || !data.x.allFinite() || !data.w.allFinite() || (data.z && !data.z->allFinite()))
        fail("non-finite value");
}

const Vector& instrument(const PanelDataset& data) { return data.z ? *data.z : data.x; }

Matrix controls_design(const PanelDataset& data, std::span<const Index> subset) {
    const auto m = static_cast<Index>(subset.size());
    Matrix a(m, data.p() + 1);
    for (Index r = 0; r < m; ++r) {
        const Index i = subset[static_cast<std::size_t>(r)];
        a.row(r).head(data.p()) = data.w.row(i);
        a(r, data.p()) = 1.0;
    }
    return a;
}

namespace {

Vector gather(const Vector& v, std::span<const Index> subset) {
    Vector out(static_cast<Index>(subset.size()));
    for (std::size_t r = 0; r < subset.size(); ++r) out(static_cast<Index>(r)) = v(subset[r]);
    return out;
}

std::string column_name(const PanelDataset& data, Index col, const char* lead) {
    if (col == 0) return lead;
    if (col == data.p() + 1) return "intercept";
    const auto c = static_cast<std::size_t>(col - 1);
    return c < data.control_names.size() ? data.control_names[c] : "w" + std::to_string(col);
}

void check_size(const PanelDataset& data, std::span<const Index> subset) {
    if (static_cast<Index>(subset.size()) < min_cluster_size(data))
        throw Error(ErrorKind::too_small_cluster, "fit: subset of " + std::to_string(subset.size()) + " observations, need at least " +
                                                      std::to_string(min_cluster_size(data)));
}

// Least squares with a rank check; names the first column pivoted out.
Vector solve_full_rank(const Matrix& design, const Vector& rhs, const PanelDataset& data, const char* lead) {
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(rank_tolerance);
    if (qr.rank() < design.cols()) {
        const Index offending = qr.colsPermutation().indices()(qr.rank());
        throw Error(ErrorKind::singular_design, "fit: design is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                                                    std::to_string(design.cols()) + "), column '" + column_name(data, offending, lead) +
                                                    "' is collinear with the others");
    }
    return qr.solve(rhs);
}

Matrix with_lead(const Vector& lead, const Matrix& controls) {
    Matrix d(controls.rows(), controls.cols() + 1);
    d.col(0) = lead;
    d.rightCols(controls.cols()) = controls;
    return d;
}

}  // namespace

FitResult ols_fit(const PanelDataset& data, std::span<const Index> subset) {
    check_size(data, subset);
    const Matrix controls = controls_design(data, subset);
    const Vector y = gather(data.y, subset);
    const Matrix design = with_lead(gather(data.x, subset), controls);
    const Vector coef = solve_full_rank(design, y, data, "x");

    FitResult out;
    out.theta_hat = coef(0);
    out.coef_controls = coef.tail(coef.size() - 1);
    out.residuals_u = y - design * coef;
    out.used_indices.assign(subset.begin(), subset.end());
    return out;
}

FitResult ols_fit(const PanelDataset& data) { return ols_fit(data, iota_indices(data.n())); }

FitResult iv_fit(const PanelDataset& data, std::span<const Index> subset) {
    if (!data.z) throw Error(ErrorKind::invalid_argument, "iv_fit: dataset has no instrument");
    check_size(data, subset);
    const Matrix controls = controls_design(data, subset);
    const Vector y = gather(data.y, subset);
    const Vector x = gather(data.x, subset);
    const Vector z = gather(*data.z, subset);

    const Matrix first = with_lead(z, controls);
    const Vector pi = solve_full_rank(first, x, data, "z");
    if (std::abs(pi(0)) < instrument_tolerance)
        throw Error(ErrorKind::degenerate, "iv_fit: first-stage coefficient on the instrument is zero (|pi| < 1e-10)");

    const Residualizer m(controls);
    const Vector ztilde = m.apply(z);
    const double theta = ztilde.dot(y) / ztilde.dot(x);
    const Vector structural = y - theta * x;
    const Vector gamma = Eigen::ColPivHouseholderQR<Matrix>(controls).solve(structural);

    FitResult out;
    out.theta_hat = theta;
    out.coef_controls = gamma;
    out.residuals_u = structural - controls * gamma;
    out.residuals_v = x - first * pi;
    out.used_indices.assign(subset.begin(), subset.end());
    out.pi_hat = pi(0);
    out.coef_first_stage = pi;
    return out;
}

FitResult iv_fit(const PanelDataset& data) { return iv_fit(data, iota_indices(data.n())); }

FitResult fit(const PanelDataset& data, std::span<const Index> subset) {
    return data.is_iv() ? iv_fit(data, subset) : ols_fit(data, subset);
}

FitResult fit(const PanelDataset& data) { return fit(data, iota_indices(data.n())); }

Vector score_vector(const PanelDataset& data, const FitResult& fit) {
    if (static_cast<Index>(fit.used_indices.size()) != data.n())
        throw Error(ErrorKind::invalid_argument, "score_vector: requires a full-sample fit");
    const Residualizer m(controls_design(data, fit.used_indices));
    const Vector ztilde = m.apply(gather(instrument(data), fit.used_indices));
    return ztilde.cwiseProduct(fit.residuals_u);
}

Residualizer::Residualizer(const Matrix& design) : cols_(design.cols()) {
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(rank_tolerance);
    rank_ = qr.rank();
    q_ = qr.householderQ() * Matrix::Identity(design.rows(), rank_);
}

Vector Residualizer::apply(const Vector& v) const { return v - q_ * (q_.transpose() * v); }

SubsetEstimator::SubsetEstimator(const PanelDataset& data, IndexList subset) : subset_(std::move(subset)) {
    check_size(data, subset_);
    const Matrix controls = controls_design(data, subset_);
    const Vector z = gather(instrument(data), subset_);
    const Residualizer m(with_lead(z, controls));
    if (m.rank() < controls.cols() + 1)
        throw Error(ErrorKind::singular_design, "subset design is rank deficient (" + std::to_string(subset_.size()) + " observations)");
    ztilde_ = Residualizer(controls).apply(z);
}

double SubsetEstimator::estimate(const Vector& y_full, const Vector& x_full) const {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t r = 0; r < subset_.size(); ++r) {
        const Index i = subset_[r];
        const double zt = ztilde_(static_cast<Index>(r));
        num += zt * y_full(i);
        den += zt * x_full(i);
    }
    return num / den;
}

}  // namespace lcinf
