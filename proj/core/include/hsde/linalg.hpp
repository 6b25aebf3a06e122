#pragma once

#include <span>

#include "hsde/types.hpp"

namespace hsde {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Throws std::invalid_argument unless `m` is square, symmetric to a relative
/// 1e-10 and positive definite.
void require_spd(const Matrix& m, const char* name);

double mvn_log_pdf(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& chol);

/// Independent normals with per-coordinate variance; zero variance is a point
/// mass (0 at the mean, -inf elsewhere).
double diag_normal_log_pdf(const Vector& x, const Vector& mean, const Vector& variance);

double log_sum_exp(std::span<const double> v);

/// Log multivariate gamma function of dimension `d`.
double log_multigamma(double a, int d);

/// Eigenvalues floored at `floor`, symmetric result.
Matrix nearest_spd(const Matrix& m, double floor);

}  // namespace hsde
