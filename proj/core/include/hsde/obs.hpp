#pragma once

#include <variant>

#include "hsde/random.hpp"
#include "hsde/types.hpp"

namespace hsde {

/// z = W y + eps, eps ~ N(0, R).
class GaussianObsModel {
 public:
  GaussianObsModel(Matrix W, Matrix R);

  const Matrix& W() const { return W_; }
  const Matrix& R() const { return R_; }
  int obs_dim() const { return static_cast<int>(W_.rows()); }
  int latent_dim() const { return static_cast<int>(W_.cols()); }
  const Eigen::LLT<Matrix>& chol() const { return chol_; }
  double log_det_R() const { return log_det_; }

 private:
  Matrix W_;
  Matrix R_;
  Eigen::LLT<Matrix> chol_;
  double log_det_ = 0.0;
};

/// Per-bin Poisson counts with log-link rate exp(W y + b) (spikes/second).
class PointProcessObsModel {
 public:
  PointProcessObsModel(Matrix W, Vector b);

  const Matrix& W() const { return W_; }
  const Vector& b() const { return b_; }
  int obs_dim() const { return static_cast<int>(W_.rows()); }
  int latent_dim() const { return static_cast<int>(W_.cols()); }
  Vector rates(const Vector& y) const;

 private:
  Matrix W_;
  Vector b_;
};

using ObsModel = std::variant<GaussianObsModel, PointProcessObsModel>;

enum class ObsKind { gaussian, spikes };

/// K rows (steps 1..K of the grid), M columns. Row k sits at time
/// origin + (k + 1) dt.
struct ObservationSeries {
  ObsKind kind = ObsKind::gaussian;
  Matrix data;
  double dt = 1.0;
  double origin = 0.0;

  int steps() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
  double time(int row) const { return origin + (row + 1) * dt; }
  void validate() const;
};

double gaussian_loglik(const Vector& z, const Vector& y, const GaussianObsModel& model);

double spike_loglik(const Vector& counts, const Vector& y, const PointProcessObsModel& model,
                    double dt);

/// Dispatches on the model alternative.
double obs_loglik(const Vector& data, const Vector& y, const ObsModel& model, double dt);

Vector sample_observation(const Vector& y, const GaussianObsModel& model, Rng& rng);
Vector sample_observation(const Vector& y, const PointProcessObsModel& model, double dt, Rng& rng);

int latent_dim(const ObsModel& model);
int obs_dim(const ObsModel& model);
ObsKind obs_kind(const ObsModel& model);

/// Expected observation at y: W y for the Gaussian model, rate * dt for spikes.
Vector predict_observation(const Vector& y, const ObsModel& model, double dt);

}  // namespace hsde
