#pragma once

#include <random>

#include "hsde/datagen.hpp"
#include "hsde/model.hpp"
#include "hsde/oracle.hpp"
#include "hsde/smc.hpp"

namespace hsde::test {

inline ModelParams gaussian_params(const Matrix& W, const Matrix& R, double sigma_x, double sigma_y,
                                   WaitingTimeModel wt = WaitingTimeModel(4.0, 4.0)) {
  const int D = static_cast<int>(W.cols());
  return {GaussianObsModel(W, R),
          NoiseParams::uniform(D, sigma_x, sigma_y),
          wt,
          MarkModel(Vector::Zero(D), Matrix::Identity(D, D)),
          PriorHyperparams::weak(D),
          InitialPrior::standard(D)};
}

inline Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// A drawn event sequence and observations for a small linear-Gaussian problem.
struct FixedEventsProblem {
  ModelParams params;
  TimeGrid grid;
  InducingSequence events;
  ObservationSeries obs;
};

inline FixedEventsProblem fixed_events_problem(int K, int D, int M, double dt, std::uint64_t seed,
                                               double sigma_x = 0.5, double sigma_y = 0.3, double r = 0.5) {
  Rng rng(seed);
  const Matrix W = random_matrix(M, D, rng);
  ModelParams p = gaussian_params(W, r * Matrix::Identity(M, M), sigma_x, sigma_y,
                                  WaitingTimeModel::from_moments(8 * dt, 3 * dt));
  const TimeGrid grid(dt, K);
  ModelSample s = sample_model(p, grid, rng);
  return {p, grid, s.events, s.obs};
}

}  // namespace hsde::test
