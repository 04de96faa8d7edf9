#pragma once

namespace lcinf {

/// Quantile of Student's t with `df` degrees of freedom.
double t_quantile(double p, double df);
double t_cdf(double t, double df);
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace lcinf
