#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsde/model.hpp"

namespace hsde {

struct ChirpSpec {
  double duration = 250.0;
  double sample_rate = 2.0;
  double f0 = 0.005;
  double f1 = 0.05;
  double amplitude = 1.0;
  double noise_var = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ChirpData {
  ObservationSeries obs;
  Vector clean;  // noiseless signal at the observation times
};

/// z_k = A cos(2 pi (f0 t + (f1 - f0) t^2 / (2 T))) + noise at t = k dt, k = 1..K.
ChirpData gen_chirp(const ChirpSpec& spec);

struct LorenzSpec {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  Eigen::Vector3d x0{1.0, 1.0, 1.0};
  double duration = 50.0;
  double sample_rate = 10.0;
  int obs_dim = 10;
  /// Isotropic observation noise variance unless noise_cov is set.
  double noise_var = 0.1;
  std::optional<Matrix> noise_cov;
  /// Defaults to a seeded N(0, 1) obs_dim x 3 matrix.
  std::optional<Matrix> projection;
  double max_step = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LorenzData {
  ObservationSeries obs;
  Matrix latent;  // K x 3, at the observation times
  Matrix projection;
};

/// Integrates the Lorenz system with fixed-step RK4 for `duration` seconds.
Eigen::Vector3d lorenz_integrate(const Eigen::Vector3d& start, double sigma, double rho, double beta,
                                 double duration, double step);

LorenzData gen_lorenz(const LorenzSpec& spec);

struct SpikeSpec {
  int n_neurons = 20;
  double duration = 3.0;
  double dt = 0.005;
  int dim = 2;
  double loading_scale = 1.0;
  /// Baseline rates (Hz) are log-uniform in [baseline_min, baseline_max].
  double baseline_min = 10.0;
  double baseline_max = 30.0;
  double mean_wait = 0.3;
  double std_wait = 0.1;
  double mark_std = 1.0;
  double sigma_x = 0.1;
  double sigma_y = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SpikeData {
  ObservationSeries obs;
  InducingSequence events;
  LatentPath path;  // rows 0..K
  Matrix W;
  Vector b;
  std::vector<std::string> warnings;
};

SpikeData gen_spikes(const SpikeSpec& spec);

/// Indices of neurons with more than `min_count` spikes in the first `window` seconds.
std::vector<int> select_active_neurons(const ObservationSeries& spikes, double min_count = 5.0,
                                       double window = 3.0);

/// Copy of the series keeping only the given columns.
ObservationSeries select_columns(const ObservationSeries& obs, const std::vector<int>& columns);

struct ModelSample {
  InducingSequence events;
  LatentPath path;
  ObservationSeries obs;
};

/// Draws events until they reach past the grid end, then a path and observations.
InducingSequence sample_events(const ModelParams& params, const TimeGrid& grid, Rng& rng);
ModelSample sample_model(const ModelParams& params, const TimeGrid& grid, Rng& rng);

}  // namespace hsde
