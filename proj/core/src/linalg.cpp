#include "hsde/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace hsde {

void require_spd(const Matrix& m, const char* name) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(name) + " must be a non-empty square matrix");
  }
  if (!m.allFinite()) throw std::invalid_argument(std::string(name) + " has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(name) + " must be positive definite");
  }
}

double mvn_log_pdf(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& chol) {
  const Vector r = chol.matrixL().solve(x - mean);
  const auto diag = chol.matrixLLT().diagonal();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) log_det += 2.0 * std::log(diag[i]);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det + r.squaredNorm());
}

double diag_normal_log_pdf(const Vector& x, const Vector& mean, const Vector& variance) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mean[d];
    if (variance[d] <= 0.0) {
      if (std::abs(diff) > 1e-12 * (1.0 + std::abs(mean[d]))) {
        return -std::numeric_limits<double>::infinity();
      }
      continue;
    }
    acc += -0.5 * (kLog2Pi + std::log(variance[d]) + diff * diff / variance[d]);
  }
  return acc;
}

double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double a : v) hi = std::max(hi, a);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double a : v) s += std::exp(a - hi);
  return hi + std::log(s);
}

double log_multigamma(double a, int d) {
  double acc = 0.25 * d * (d - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= d; ++j) acc += std::lgamma(a + 0.5 * (1 - j));
  return acc;
}

Matrix nearest_spd(const Matrix& m, double floor) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues().cwiseMax(floor);
  Matrix out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace hsde
