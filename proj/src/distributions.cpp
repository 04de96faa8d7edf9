#include "lcinf/distributions.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>

namespace lcinf {

double t_quantile(double p, double df) { return boost::math::quantile(boost::math::students_t_distribution<double>(df), p); }

double t_cdf(double t, double df) { return boost::math::cdf(boost::math::students_t_distribution<double>(df), t); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

}  // namespace lcinf
