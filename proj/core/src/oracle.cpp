#include "hsde/oracle.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "hsde/linalg.hpp"

namespace hsde {

void LinearGaussianSSM::validate() const {
  const Eigen::Index n = m0.size();
  if (P0.rows() != n || P0.cols() != n) throw std::invalid_argument("P0 must be n x n");
  if (c.size() != A.size() || Q.size() != A.size()) throw std::invalid_argument("per-step arrays differ in length");
  for (std::size_t k = 0; k < A.size(); ++k) {
    if (A[k].rows() != n || A[k].cols() != n || c[k].size() != n || Q[k].rows() != n || Q[k].cols() != n) {
      throw std::invalid_argument("transition " + std::to_string(k + 1) + " has the wrong shape");
    }
  }
  if (H.cols() != n || R.rows() != H.rows() || R.cols() != H.rows()) {
    throw std::invalid_argument("observation matrices have inconsistent shapes");
  }
  require_spd(R, "R");
}

LinearGaussianSSM build_ssm(const InducingSequence& events, const TimeGrid& grid, const ModelParams& params) {
  const auto* g = std::get_if<GaussianObsModel>(&params.obs);
  if (g == nullptr) throw std::invalid_argument("the Kalman oracle covers the Gaussian observation model only");
  const int D = params.dim();
  if (events.dim() != D) throw std::invalid_argument("event marks do not match the latent dimension");
  const std::vector<int> steps = snap_events(events, grid);
  const int K = grid.steps();
  if (steps.back() < K) throw std::invalid_argument("events end before the grid");
  const double dt = grid.dt();

  LinearGaussianSSM ssm;
  ssm.H = Matrix::Zero(g->obs_dim(), 2 * D);
  ssm.H.rightCols(D) = g->W();
  ssm.R = g->R();
  ssm.m0.resize(2 * D);
  ssm.m0 << params.initial.x_mean, params.initial.y_mean;
  Vector v0(2 * D);
  v0 << params.initial.x_std.array().square().matrix(), params.initial.y_std.array().square().matrix();
  ssm.P0 = v0.asDiagonal();

  const auto& pts = events.points();
  std::size_t j = 0;
  for (int k = 1; k <= K; ++k) {
    while (steps[j] < k) ++j;
    const double next_time = grid.time(steps[j]);
    const double prev_time = j == 0 ? grid.origin() : grid.time(steps[j - 1]);
    const Vector& mark = pts[j].mark;
    const double t = grid.time(k - 1);
    Matrix A = Matrix::Identity(2 * D, 2 * D);
    Vector c = Vector::Zero(2 * D);
    Matrix Q = Matrix::Zero(2 * D, 2 * D);
    A.block(D, 0, D, D) = dt * Matrix::Identity(D, D);
    if (is_pinned_step(k - 1, grid, next_time)) {
      A.topLeftCorner(D, D).setZero();
      c.head(D) = mark;
    } else {
      const double gain = dt / (next_time - t);
      A.topLeftCorner(D, D) *= 1.0 - gain;
      c.head(D) = gain * mark;
      const double f = bridge_factor(t, next_time, prev_time) * dt;
      Q.topLeftCorner(D, D).diagonal() = params.noise.sigma_x.array().square() * f;
    }
    Q.bottomRightCorner(D, D).diagonal() = params.noise.sigma_y.array().square() * dt;
    ssm.A.push_back(std::move(A));
    ssm.c.push_back(std::move(c));
    ssm.Q.push_back(std::move(Q));
  }
  return ssm;
}

KalmanResult kalman_filter(const LinearGaussianSSM& ssm, const Matrix& obs) {
  ssm.validate();
  const int K = ssm.steps();
  const Eigen::Index n = ssm.m0.size();
  if (obs.rows() != K || obs.cols() != ssm.H.rows()) throw std::invalid_argument("observations do not match the system");
  KalmanResult out;
  out.means.resize(K + 1, n);
  out.means.row(0) = ssm.m0.transpose();
  out.covs.push_back(ssm.P0);
  out.log_predictive.reserve(K);
  Vector m = ssm.m0;
  Matrix P = ssm.P0;
  const Matrix I = Matrix::Identity(n, n);
  for (int k = 0; k < K; ++k) {
    m = ssm.A[k] * m + ssm.c[k];
    P = ssm.A[k] * P * ssm.A[k].transpose() + ssm.Q[k];
    P = 0.5 * (P + P.transpose());
    const Matrix S = ssm.H * P * ssm.H.transpose() + ssm.R;
    Eigen::LLT<Matrix> chol(0.5 * (S + S.transpose()));
    if (chol.info() != Eigen::Success) {
      throw NumericalError("innovation covariance lost positive definiteness at step " + std::to_string(k + 1));
    }
    const Vector z = obs.row(k).transpose();
    const Vector pred = ssm.H * m;
    const double lp = mvn_log_pdf(z, pred, chol);
    out.log_predictive.push_back(lp);
    out.log_marginal_likelihood += lp;
    const Matrix gain = chol.solve(ssm.H * P).transpose();
    m += gain * (z - pred);
    const Matrix IKH = I - gain * ssm.H;
    P = IKH * P * IKH.transpose() + gain * ssm.R * gain.transpose();
    P = 0.5 * (P + P.transpose());
    out.means.row(k + 1) = m.transpose();
    out.covs.push_back(P);
  }
  return out;
}

void GpModel::validate() const {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("GP lengthscale must be positive");
  if (!(signal_var > 0.0)) throw std::invalid_argument("GP signal variance must be positive");
  if (!(noise_var >= 0.0)) throw std::invalid_argument("GP noise variance must be non-negative");
}

Matrix rbf_kernel(std::span<const double> a, std::span<const double> b, double lengthscale, double signal_var) {
  Matrix k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = a[i] - b[j];
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = signal_var * std::exp(-d * d * inv);
    }
  }
  return k;
}

namespace {

Eigen::LLT<Matrix> gp_factor(const GpModel& model, std::span<const double> t) {
  Matrix k = rbf_kernel(t, t, model.lengthscale, model.signal_var);
  k.diagonal().array() += model.noise_var + kGpJitter;
  Eigen::LLT<Matrix> chol(k);
  if (chol.info() != Eigen::Success) throw NumericalError("GP kernel matrix is indefinite after jitter");
  return chol;
}

}  // namespace

GpPrediction gp_fit_predict(const GpModel& model, std::span<const double> train_t, std::span<const double> train_y,
                            std::span<const double> query_t, bool with_variance) {
  model.validate();
  if (train_t.size() != train_y.size() || train_t.empty()) {
    throw std::invalid_argument("GP training inputs and targets must be non-empty and equal in length");
  }
  if (train_t.size() > 10000) throw std::invalid_argument("exact GP supports at most 10000 training points");
  const Eigen::LLT<Matrix> chol = gp_factor(model, train_t);
  const Eigen::Map<const Vector> y(train_y.data(), static_cast<Eigen::Index>(train_y.size()));
  GpPrediction out;
  out.coefficients = chol.solve(y);
  Matrix kt = rbf_kernel(train_t, train_t, model.lengthscale, model.signal_var);
  kt.diagonal().array() += model.noise_var + kGpJitter;
  out.solve_residual = (kt * out.coefficients - y).cwiseAbs().maxCoeff();
  const Matrix ks = rbf_kernel(query_t, train_t, model.lengthscale, model.signal_var);
  out.mean = ks * out.coefficients;
  if (with_variance) {
    const Matrix v = chol.matrixL().solve(ks.transpose());
    out.variance = (model.signal_var - v.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  }
  return out;
}

double gp_log_marginal(const GpModel& model, std::span<const double> train_t, std::span<const double> train_y) {
  model.validate();
  const Eigen::LLT<Matrix> chol = gp_factor(model, train_t);
  const Eigen::Map<const Vector> y(train_y.data(), static_cast<Eigen::Index>(train_y.size()));
  return mvn_log_pdf(y, Vector::Zero(y.size()), chol);
}

GpModel gp_grid_search(std::span<const double> train_t, std::span<const double> train_y,
                       std::span<const double> lengthscales, std::span<const double> signal_vars,
                       std::span<const double> noise_vars) {
  GpModel best;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double l : lengthscales) {
    for (double s : signal_vars) {
      for (double n : noise_vars) {
        const GpModel m{l, s, n};
        double lml;
        try {
          lml = gp_log_marginal(m, train_t, train_y);
        } catch (const NumericalError&) {
          continue;
        }
        if (lml > best_lml) {
          best_lml = lml;
          best = m;
        }
      }
    }
  }
  if (!std::isfinite(best_lml)) throw NumericalError("no grid point gave a valid GP marginal likelihood");
  return best;
}

std::vector<CostSample> cubic_cost_probe(std::span<const int> sizes, std::uint64_t seed) {
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw std::invalid_argument("probe sizes must be ascending");
  std::vector<CostSample> out;
  Rng rng(seed);
  std::normal_distribution<double> normal;
  for (int n : sizes) {
    if (n < 1) throw std::invalid_argument("probe sizes must be positive");
    std::vector<double> t(static_cast<std::size_t>(n));
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      t[i] = i;
      y[i] = normal(rng);
    }
    const GpModel model{10.0, 1.0, 0.1};
    const auto start = std::chrono::steady_clock::now();
    const GpPrediction p = gp_fit_predict(model, t, y, t, false);
    const auto stop = std::chrono::steady_clock::now();
    if (!p.mean.allFinite()) throw NumericalError("GP probe produced non-finite predictions");
    out.push_back({n, std::chrono::duration<double>(stop - start).count()});
  }
  return out;
}

double loglog_slope(std::span<const CostSample> samples, int min_n) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int count = 0;
  for (const auto& s : samples) {
    if (s.n < min_n || !(s.seconds > 0.0)) continue;
    const double x = std::log(static_cast<double>(s.n));
    const double y = std::log(s.seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) throw std::invalid_argument("slope needs at least two usable samples");
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

}  // namespace hsde
