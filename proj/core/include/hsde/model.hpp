#pragma once

#include "hsde/inducing.hpp"
#include "hsde/obs.hpp"
#include "hsde/sde.hpp"

namespace hsde {

/// Independent Gaussian priors p(x_0), p(y_0).
struct InitialPrior {
  Vector x_mean;
  Vector x_std;
  Vector y_mean;
  Vector y_std;

  static InitialPrior standard(int dim);
  double log_pdf(const Vector& x0, const Vector& y0) const;
};

/// Everything the filter and the M-step need about the generative model.
struct ModelParams {
  ObsModel obs;
  NoiseParams noise;
  WaitingTimeModel waiting;
  MarkModel marks;
  PriorHyperparams priors;
  InitialPrior initial;

  int dim() const { return noise.dim(); }
  /// Throws std::invalid_argument when component dimensions disagree.
  void validate() const;
};

/// Zero-mean Gaussian prior (std 10) on spike loadings.
inline constexpr double kSpikeLoadingPriorStd = 10.0;

double spike_loading_log_prior(const PointProcessObsModel& model);

}  // namespace hsde
