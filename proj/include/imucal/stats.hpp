#pragma once

#include <vector>

namespace imucal {

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Quantile of the chi-square distribution with `dof` degrees of freedom,
/// i.e. the x with P(dof/2, x/2) = prob.
double chi_square_quantile(double dof, double prob);

/// Median of a copy of the values.
double median(std::vector<double> values);

/// 1.4826 * median(|x - median(x)|); consistent with the standard deviation
/// for normal data.
double mad_sigma(const std::vector<double>& values);

} // namespace imucal
