#include "hsde/obs.hpp"

#include <cmath>
#include <random>

#include "hsde/linalg.hpp"

namespace hsde {

GaussianObsModel::GaussianObsModel(Matrix W, Matrix R) : W_(std::move(W)), R_(std::move(R)) {
  if (W_.size() == 0 || !W_.allFinite()) throw std::invalid_argument("W must be non-empty and finite");
  if (R_.rows() != W_.rows()) throw std::invalid_argument("R must be M x M with M = rows(W)");
  require_spd(R_, "observation covariance R");
  chol_.compute(R_);
  const auto diag = chol_.matrixLLT().diagonal();
  for (Eigen::Index i = 0; i < diag.size(); ++i) log_det_ += 2.0 * std::log(diag[i]);
}

PointProcessObsModel::PointProcessObsModel(Matrix W, Vector b) : W_(std::move(W)), b_(std::move(b)) {
  if (W_.size() == 0 || !W_.allFinite()) throw std::invalid_argument("loadings must be non-empty and finite");
  if (b_.size() != W_.rows() || !b_.allFinite()) {
    throw std::invalid_argument("baseline must have one finite entry per neuron");
  }
}

Vector PointProcessObsModel::rates(const Vector& y) const {
  return (W_ * y + b_).array().min(700.0).exp();
}

void ObservationSeries::validate() const {
  if (data.rows() == 0 || data.cols() == 0) throw std::invalid_argument("observation series is empty");
  if (!(dt > 0.0)) throw std::invalid_argument("observation series requires dt > 0");
  if (!data.allFinite()) throw std::invalid_argument("observation series has non-finite entries");
  if (kind == ObsKind::spikes) {
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const double v = data.data()[i];
      if (v < 0.0 || v != std::floor(v)) {
        throw std::invalid_argument("spike counts must be non-negative integers");
      }
    }
  }
}

double gaussian_loglik(const Vector& z, const Vector& y, const GaussianObsModel& model) {
  const Vector r = model.chol().matrixL().solve(z - model.W() * y);
  return -0.5 * (static_cast<double>(z.size()) * kLog2Pi + model.log_det_R() + r.squaredNorm());
}

double spike_loglik(const Vector& counts, const Vector& y, const PointProcessObsModel& model,
                    double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("spike likelihood requires dt > 0");
  const Vector eta = model.W() * y + model.b();
  const double log_dt = std::log(dt);
  double acc = 0.0;
  for (Eigen::Index m = 0; m < counts.size(); ++m) {
    const double n = counts[m];
    if (n < 0.0) throw std::domain_error("spike counts must be >= 0");
    const double e = std::min(eta[m], 700.0);
    acc += (n > 0.0 ? n * (e + log_dt) : 0.0) - std::exp(e) * dt - std::lgamma(n + 1.0);
  }
  return acc;
}

double obs_loglik(const Vector& data, const Vector& y, const ObsModel& model, double dt) {
  if (const auto* g = std::get_if<GaussianObsModel>(&model)) return gaussian_loglik(data, y, *g);
  return spike_loglik(data, y, std::get<PointProcessObsModel>(model), dt);
}

Vector sample_observation(const Vector& y, const GaussianObsModel& model, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector eta(model.obs_dim());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = normal(rng);
  return model.W() * y + model.chol().matrixL() * eta;
}

Vector sample_observation(const Vector& y, const PointProcessObsModel& model, double dt, Rng& rng) {
  const Vector lambda = model.rates(y) * dt;
  Vector out(lambda.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    std::poisson_distribution<long long> pois(lambda[i]);
    out[i] = lambda[i] > 0.0 ? static_cast<double>(pois(rng)) : 0.0;
  }
  return out;
}

int latent_dim(const ObsModel& model) {
  return std::visit([](const auto& m) { return m.latent_dim(); }, model);
}

int obs_dim(const ObsModel& model) {
  return std::visit([](const auto& m) { return m.obs_dim(); }, model);
}

ObsKind obs_kind(const ObsModel& model) {
  return std::holds_alternative<GaussianObsModel>(model) ? ObsKind::gaussian : ObsKind::spikes;
}

Vector predict_observation(const Vector& y, const ObsModel& model, double dt) {
  if (const auto* g = std::get_if<GaussianObsModel>(&model)) return g->W() * y;
  return std::get<PointProcessObsModel>(model).rates(y) * dt;
}

}  // namespace hsde
