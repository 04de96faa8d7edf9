#pragma once

#include "lcinf/core.hpp"
#include "lcinf/geometry.hpp"

#include <optional>
#include <span>

namespace lcinf {

/// Exponential space-time covariance exp(tau1) exp(-d/tau2 - |de|/tau3).
/// tau1 is a log-variance; tau2 (spatial range) and tau3 (temporal range)
/// must be positive. rho is the cross-equation correlation for IV models.
struct CovarianceParams {
    double tau1 = 0.0;
    double tau2 = 1.0;
    double tau3 = 1.0;
    std::optional<double> rho;
};

void check_params(const CovarianceParams& p);

/// Pairwise geographic distances and period gaps.
struct SpaceTimeLags {
    Matrix geo;
    Matrix time;
};

SpaceTimeLags space_time_lags(std::span<const Location> locations);

Matrix exp_cov(const CovarianceParams& p, const SpaceTimeLags& lags);
Matrix exp_cov(const CovarianceParams& p, std::span<const Location> locations);

/// Lower-triangular L with L L' = S + eps I, eps = 1e-10 * scale, retried at
/// 1e-8 and 1e-6. Throws numerical_failure if all attempts fail.
Matrix lower_sqrt(const Matrix& s, double scale);

/// Residuals expressed in an orthonormal basis of the orthogonal complement
/// of the design's column space.
struct ProjectedResiduals {
    Vector values;  // basis' residuals, length n - ell
    Matrix basis;   // n x (n - ell)
    Index ell = 0;
    Matrix design;
};

ProjectedResiduals project_residuals(const Vector& residuals, const Matrix& design);

/// Same as project_residuals but with a caller-supplied orthonormal basis
/// of the complement (used to check basis invariance).
ProjectedResiduals project_residuals(const Vector& residuals, const Matrix& design, const Matrix& basis);

/// Negative Gaussian log-likelihood of the projected residuals (constant
/// dropped): 0.5 log det(B' S B) + 0.5 v' (B' S B)^{-1} v, formed directly.
double projected_nll(const ProjectedResiduals& proj, const Matrix& sigma);

/// Evaluates projected_nll without forming B' S B, via
/// log det(B'SB) = log det S + log det(A'S^{-1}A) - log det(A'A) and the
/// matching restricted quadratic form. Reused across many covariance
/// candidates for one set of residuals.
class QmleObjective {
public:
    QmleObjective(const ProjectedResiduals& proj, std::span<const Location> locations);

    double operator()(const CovarianceParams& p) const;  // +inf when S cannot be factorized
    const SpaceTimeLags& lags() const { return lags_; }

private:
    Vector resid_;  // basis * values
    Matrix design_;
    SpaceTimeLags lags_;
    double logdet_gram_ = 0.0;
};

struct QmleFit {
    CovarianceParams params;
    double objective = 0.0;
    double init_objective = 0.0;
    bool converged = false;
    int evaluations = 0;
};

/// tau1 = log of the projected residual variance, tau2 = median pairwise
/// geographic distance, tau3 = 1.
CovarianceParams default_init(const ProjectedResiduals& proj, std::span<const Location> locations);

/// Minimizes the projected negative log-likelihood over (tau1, log tau2,
/// log tau3): a 3x3x3 grid around `init`, then Nelder-Mead from the three
/// best grid points. The returned objective never exceeds the init value.
QmleFit qmle_fit(const ProjectedResiduals& proj, std::span<const Location> locations, const CovarianceParams& init);

/// [[S_U, rho L_U L_V'], [rho L_V L_U', S_V]] with L lower-triangular roots.
Matrix assemble_joint_cov(const CovarianceParams& u, const CovarianceParams& v, double rho, std::span<const Location> locations);

/// Pearson correlation of L_U^{-1} u_hat and L_V^{-1} v_hat, clamped to +-0.99.
double estimate_rho(const Vector& u_hat, const Vector& v_hat, const CovarianceParams& u, const CovarianceParams& v,
                    std::span<const Location> locations);

inline constexpr double rho_clamp = 0.99;

}  // namespace lcinf
