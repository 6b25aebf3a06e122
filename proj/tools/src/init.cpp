#include <algorithm>
#include <cmath>
#include <limits>

#include "hsde/linalg.hpp"
#include "hsde_cli/cli.hpp"

namespace hsde::cli {

namespace {

// Gaussian-kernel smoothing along time, renormalised at the edges.
Matrix smooth_rows(const Matrix& counts, double width_bins) {
  if (!(width_bins > 0.0)) return counts;
  const int half = static_cast<int>(std::ceil(4.0 * width_bins));
  std::vector<double> kernel(2 * half + 1);
  for (int i = -half; i <= half; ++i) kernel[i + half] = std::exp(-0.5 * (i / width_bins) * (i / width_bins));
  const int K = static_cast<int>(counts.rows());
  Matrix out(counts.rows(), counts.cols());
  for (int k = 0; k < K; ++k) {
    double norm = 0.0;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(counts.cols());
    for (int i = std::max(0, k - half); i <= std::min(K - 1, k + half); ++i) {
      acc += kernel[i - k + half] * counts.row(i);
      norm += kernel[i - k + half];
    }
    out.row(k) = acc / norm;
  }
  return out;
}

struct Pca {
  Matrix loadings;  // M x D, columns scaled by sqrt(eigenvalue)
  Matrix scores_map;  // M x D, features -> unit-scale scores
};

Pca top_components(const Matrix& second_moment, int D) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(second_moment);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed during initialisation");
  const int M = static_cast<int>(second_moment.rows());
  Pca out{Matrix(M, D), Matrix(M, D)};
  for (int d = 0; d < D; ++d) {
    const int col = M - 1 - d;  // eigenvalues ascend
    const double lam = std::max(es.eigenvalues()[col], 1e-12);
    Vector v = es.eigenvectors().col(col);
    // Sign convention: largest-magnitude entry positive, so results do not
    // depend on the solver's arbitrary sign.
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    out.loadings.col(d) = v * std::sqrt(lam);
    out.scores_map.col(d) = v / std::sqrt(lam);
  }
  return out;
}

}  // namespace

ModelParams auto_init(std::span<const ObservationSeries> trials, const AutoInit& opts) {
  if (trials.empty()) throw std::invalid_argument("auto_init needs at least one trial");
  const ObservationSeries& first = trials.front();
  const int D = opts.latent_dim;
  const int M = first.dim();
  if (D < 1 || D > M) throw std::invalid_argument("auto_init.latent_dim must lie in [1, observed dimension]");
  for (const auto& t : trials) {
    t.validate();
    if (t.kind != first.kind || t.dim() != M || std::abs(t.dt - first.dt) > 1e-12 * first.dt) {
      throw std::invalid_argument("trials differ in kind, dimension or bin width");
    }
  }
  const double dt = first.dt;

  // Per-trial features whose principal directions seed the loadings.
  std::vector<Matrix> features;
  Vector mean_rate = Vector::Zero(M);
  long rows = 0;
  if (first.kind == ObsKind::spikes) {
    for (const auto& t : trials) {
      mean_rate += t.data.colwise().sum().transpose();
      rows += t.steps();
    }
    mean_rate /= static_cast<double>(rows) * dt;
    for (const auto& t : trials) {
      const Matrix rate = smooth_rows(t.data, opts.smooth / dt) / dt;
      Matrix f(rate.rows(), M);
      for (int m = 0; m < M; ++m) {
        const double eps = 0.1 * mean_rate[m] + 1e-3;
        f.col(m) = (rate.col(m).array() + eps).log().matrix();
      }
      features.push_back(std::move(f));
    }
    Vector centre = Vector::Zero(M);
    for (const auto& f : features) centre += f.colwise().sum().transpose();
    centre /= static_cast<double>(rows);
    for (auto& f : features) f.rowwise() -= centre.transpose();
  } else {
    for (const auto& t : trials) {
      features.push_back(t.data);
      rows += t.steps();
    }
  }
  Matrix C = Matrix::Zero(M, M);
  for (const auto& f : features) C.noalias() += f.transpose() * f;
  C /= static_cast<double>(rows);
  Pca pca;
  if (opts.loadings) {
    if (first.kind != ObsKind::gaussian) throw std::invalid_argument("auto_init.loadings applies to real-valued observations");
    if (opts.loadings->rows() != M || opts.loadings->cols() != D) {
      throw std::invalid_argument("auto_init.loadings must be " + std::to_string(M) + " x " + std::to_string(D));
    }
    pca.loadings = *opts.loadings;
    pca.scores_map = pca.loadings.completeOrthogonalDecomposition().pseudoInverse().transpose();
  } else {
    pca = top_components(C, D);
  }

  ObsModel obs = GaussianObsModel(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  if (first.kind == ObsKind::spikes) {
    Vector b(M);
    for (int m = 0; m < M; ++m) {
      b[m] = std::log(std::max(mean_rate[m], 1e-3)) - 0.5 * pca.loadings.row(m).squaredNorm();
    }
    obs = PointProcessObsModel(pca.loadings, b);
  } else {
    // Residual second moment of z - W y_hat.
    const Matrix P = pca.loadings * pca.scores_map.transpose();
    const Matrix I_P = Matrix::Identity(M, M) - P;
    const Matrix res = I_P * C * I_P.transpose();
    Vector r(M);
    for (int m = 0; m < M; ++m) r[m] = std::max(res(m, m), 0.05 * C(m, m)) + 1e-12;
    obs = GaussianObsModel(pca.loadings, r.asDiagonal());
  }

  const double wait_mean = opts.waiting_mean > 0.0 ? opts.waiting_mean : 20.0 * dt;
  const double wait_std = opts.waiting_std > 0.0 ? opts.waiting_std : 0.5 * wait_mean;

  // Slopes of the projected series over one mean waiting time seed the marks.
  const int lag = std::max(1, static_cast<int>(std::lround(wait_mean / dt)));
  Vector y0 = Vector::Zero(D);
  Vector slope_mean = Vector::Zero(D);
  Matrix slope_sq = Matrix::Zero(D, D);
  long n_slopes = 0;
  for (const auto& f : features) {
    const Matrix y = f * pca.scores_map;
    y0 += y.row(0).transpose() / static_cast<double>(features.size());
    for (Eigen::Index k = 0; k + lag < y.rows(); ++k) {
      const Vector s = (y.row(k + lag) - y.row(k)).transpose() / (lag * dt);
      slope_mean += s;
      slope_sq.noalias() += s * s.transpose();
      ++n_slopes;
    }
  }
  Matrix mark_cov = Matrix::Identity(D, D);
  Vector mark_mean = Vector::Zero(D);
  if (n_slopes > 1) {
    mark_mean = slope_mean / static_cast<double>(n_slopes);
    mark_cov = slope_sq / static_cast<double>(n_slopes) - mark_mean * mark_mean.transpose();
    mark_cov += 1e-6 * (1.0 + mark_cov.trace() / D) * Matrix::Identity(D, D);
  }
  InitialPrior initial = InitialPrior::standard(D);
  initial.y_mean = y0;
  initial.x_mean = mark_mean;
  initial.x_std = mark_cov.diagonal().cwiseSqrt();

  ModelParams params{std::move(obs),
                     NoiseParams::uniform(D, opts.sigma_x, opts.sigma_y),
                     WaitingTimeModel::from_moments(wait_mean, wait_std),
                     MarkModel(mark_mean, mark_cov),
                     PriorHyperparams::weak(D),
                     std::move(initial)};
  params.validate();
  return params;
}

EvalMetrics evaluate(const Matrix& truth, const Matrix& estimate) {
  if (truth.rows() != estimate.rows()) {
    throw std::invalid_argument("truth has " + std::to_string(truth.rows()) + " rows but the estimate has " +
                                std::to_string(estimate.rows()));
  }
  if (truth.rows() < 2 || truth.cols() < 1 || estimate.cols() < 1) {
    throw std::invalid_argument("evaluation needs at least two rows and one column on each side");
  }
  if (!truth.allFinite() || !estimate.allFinite()) throw std::invalid_argument("evaluation inputs must be finite");
  EvalMetrics m;
  m.n = static_cast<int>(truth.rows());
  if (truth.cols() == estimate.cols()) {
    const Matrix diff = truth - estimate;
    m.per_dim_mse = diff.array().square().colwise().mean().transpose();
    m.mse = diff.array().square().mean();
  } else {
    m.mse = std::numeric_limits<double>::quiet_NaN();
  }
  Matrix X(estimate.rows(), estimate.cols() + 1);
  X << estimate, Vector::Ones(estimate.rows());
  const Matrix B = X.colPivHouseholderQr().solve(truth);
  const Matrix resid = truth - X * B;
  const Eigen::RowVectorXd mean = truth.colwise().mean();
  const Eigen::RowVectorXd ss_tot = (truth.rowwise() - mean).array().square().colwise().sum();
  const Eigen::RowVectorXd ss_res = resid.array().square().colwise().sum();
  m.per_dim_r2.resize(truth.cols());
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    m.per_dim_r2[j] = ss_tot[j] > 0.0 ? 1.0 - ss_res[j] / ss_tot[j] : (ss_res[j] <= 1e-24 ? 1.0 : 0.0);
  }
  const double tot = ss_tot.sum();
  m.r2 = tot > 0.0 ? 1.0 - ss_res.sum() / tot : (ss_res.sum() <= 1e-24 ? 1.0 : 0.0);
  return m;
}

Json to_json(const EvalMetrics& m) {
  Json j = {{"schema", kSchemaVersion}, {"n", m.n}, {"r2", m.r2}, {"per_dim_r2", vector_to_json(m.per_dim_r2)}};
  if (std::isfinite(m.mse)) {
    j["mse"] = m.mse;
    j["per_dim_mse"] = vector_to_json(m.per_dim_mse);
  } else {
    j["mse"] = nullptr;
  }
  return j;
}

}  // namespace hsde::cli
