#include "lrvb/special.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <numbers>

namespace lrvb::special {

double digamma(double x) { return boost::math::digamma(x); }

double trigamma(double x) { return boost::math::trigamma(x); }

double inverse_digamma(double y) {
  // Minka's initialisation followed by Newton; converges in a handful of steps.
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + 0.5772156649015329);
  for (int i = 0; i < 50; ++i) {
    const double step = (digamma(x) - y) / trigamma(x);
    x -= step;
    if (x <= 0.0) x = 1e-300;
    if (std::abs(step) <= 1e-15 * x) break;
  }
  return x;
}

double log_mv_gamma(int p, double x) {
  double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= p; ++j) out += std::lgamma(x + 0.5 * (1 - j));
  return out;
}

double mv_digamma(int p, double n) {
  double out = 0.0;
  for (int i = 1; i <= p; ++i) out += digamma(0.5 * (n - i + 1));
  return out;
}

double mv_trigamma(int p, double n) {
  double out = 0.0;
  for (int i = 1; i <= p; ++i) out += trigamma(0.5 * (n - i + 1));
  return out;
}

}  // namespace lrvb::special
