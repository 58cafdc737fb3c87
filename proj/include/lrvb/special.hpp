#pragma once

namespace lrvb::special {

double digamma(double x);
double trigamma(double x);

/// Inverse of the digamma function on (0, inf).
double inverse_digamma(double y);

/// log of the multivariate gamma function Gamma_p(x).
double log_mv_gamma(int p, double x);

/// sum_{i=1..p} digamma((n - i + 1) / 2)
double mv_digamma(int p, double n);

/// sum_{i=1..p} trigamma((n - i + 1) / 2)
double mv_trigamma(int p, double n);

}  // namespace lrvb::special
