#pragma once

#include <span>
#include <vector>

#include "hsde/model.hpp"

namespace hsde {

/// s_k = A_k s_{k-1} + c_k + N(0, Q_k), z_k = H s_k + N(0, R) for k = 1..K.
struct LinearGaussianSSM {
  std::vector<Matrix> A;
  std::vector<Vector> c;
  std::vector<Matrix> Q;
  Matrix H;
  Matrix R;
  Vector m0;
  Matrix P0;

  int steps() const { return static_cast<int>(A.size()); }
  void validate() const;
};

/// Augmented-state ([x; y]) linear-Gaussian system obtained by fixing the
/// event sequence. Requires a Gaussian observation model.
LinearGaussianSSM build_ssm(const InducingSequence& events, const TimeGrid& grid, const ModelParams& params);

struct KalmanResult {
  Matrix means;  // (K + 1) x n, row 0 is the prior
  std::vector<Matrix> covs;
  std::vector<double> log_predictive;  // per step 1..K
  double log_marginal_likelihood = 0.0;
};

/// Forward filter with Joseph-form covariance updates. `obs` rows are z_1..z_K.
KalmanResult kalman_filter(const LinearGaussianSSM& ssm, const Matrix& obs);

struct GpModel {
  double lengthscale = 1.0;
  double signal_var = 1.0;
  double noise_var = 0.0;

  void validate() const;
};

inline constexpr double kGpJitter = 1e-8;

Matrix rbf_kernel(std::span<const double> a, std::span<const double> b, double lengthscale, double signal_var);

struct GpPrediction {
  Vector mean;
  Vector variance;     // empty when not requested
  Vector coefficients;  // (K + (noise + jitter) I)^-1 y
  double solve_residual = 0.0;
};

/// Exact zero-mean GP posterior at the query inputs via dense Cholesky.
GpPrediction gp_fit_predict(const GpModel& model, std::span<const double> train_t,
                            std::span<const double> train_y, std::span<const double> query_t,
                            bool with_variance = true);

double gp_log_marginal(const GpModel& model, std::span<const double> train_t, std::span<const double> train_y);

/// Hyperparameters maximising the log marginal likelihood over the grid.
GpModel gp_grid_search(std::span<const double> train_t, std::span<const double> train_y,
                       std::span<const double> lengthscales, std::span<const double> signal_vars,
                       std::span<const double> noise_vars);

struct CostSample {
  int n;
  double seconds;
};

/// Wall-clock of an exact GP fit (mean at the training inputs) for each size.
std::vector<CostSample> cubic_cost_probe(std::span<const int> sizes, std::uint64_t seed = 1);

/// Least-squares slope of log(seconds) on log(n), ignoring n < min_n.
double loglog_slope(std::span<const CostSample> samples, int min_n = 2);

}  // namespace hsde
