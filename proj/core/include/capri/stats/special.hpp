#pragma once

namespace capri::stats {

/// Regularized lower incomplete gamma P(a, x); a > 0, x ≥ 0.
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x), computed
/// directly in the tail to keep relative accuracy.
double gamma_q(double a, double x);

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
double chi2_sf(double x, double dof);

/// Upper tail of the standard normal.
double normal_sf(double z);

}  // namespace capri::stats
