#pragma once

#include <vector>

#include "hsde/inducing.hpp"
#include "hsde/random.hpp"
#include "hsde/types.hpp"

namespace hsde {

class TimeGrid {
 public:
  TimeGrid(double dt, int steps, double origin = 0.0);

  double dt() const { return dt_; }
  int steps() const { return steps_; }
  double origin() const { return origin_; }
  double time(int k) const { return origin_ + k * dt_; }
  double end() const { return time(steps_); }
  /// Grid index nearest to absolute time t (ties round up).
  int nearest_step(double t) const;

 private:
  double dt_;
  int steps_;
  double origin_;
};

/// Per-dimension scales of the bridge noise (multiplies the bridge diffusion
/// factor) and of the integrator noise.
struct NoiseParams {
  Vector sigma_x;
  Vector sigma_y;

  static NoiseParams uniform(int dim, double sigma_x, double sigma_y);
  int dim() const { return static_cast<int>(sigma_x.size()); }
  void validate() const;
};

/// Rows are grid steps 0..K, columns latent dimensions.
struct LatentPath {
  Matrix x;
  Matrix y;
};

/// Mean and per-coordinate variance of x_{k+1} given x_k under the bridge
/// toward (next_time, next_mark). A pinned step lands on the mark exactly.
struct BridgeMoments {
  Vector mean;
  Vector variance;
  bool pinned = false;
};

/// (t_next - t_k)(t_k - t_prev) / (t_next - t_prev): the diffusion factor
/// before the sigma_x^2 dt scaling.
double bridge_factor(double t_k, double next_time, double prev_time);

/// True when step k+1 is the grid step nearest to next_time.
bool is_pinned_step(int k, const TimeGrid& grid, double next_time);

BridgeMoments bridge_moments(const Vector& x_k, int k, const TimeGrid& grid, double next_time,
                             const Vector& next_mark, double prev_time, const Vector& sigma_x);

Vector bridge_step(const Vector& x_k, int k, const TimeGrid& grid, double next_time,
                   const Vector& next_mark, double prev_time, const NoiseParams& noise, Rng& rng);

/// Log-density of x_next under the bridge transition. Pinned steps are point
/// masses at the mark; zero-variance coordinates likewise.
double bridge_transition_logpdf(const Vector& x_next, const Vector& x_k, int k,
                                const TimeGrid& grid, double next_time, const Vector& next_mark,
                                double prev_time, const NoiseParams& noise);

/// y_{k+1} = y_k + x_k dt + sqrt(dt) * nu, nu ~ N(0, diag(sigma_y^2)).
Vector integrator_step(const Vector& y_k, const Vector& x_k, const TimeGrid& grid,
                       const NoiseParams& noise, Rng& rng);

double integrator_transition_logpdf(const Vector& y_next, const Vector& y_k, const Vector& x_k,
                                    const TimeGrid& grid, const NoiseParams& noise);

/// Grid steps at which each event pins the bridge (nearest step, strictly
/// increasing, first >= 1). Throws if two events share a bin.
std::vector<int> snap_events(const InducingSequence& seq, const TimeGrid& grid);

/// Forward simulation over the whole grid. Event times are snapped to the grid
/// and the bridge runs between snapped times; the last event must reach the
/// end of the grid.
LatentPath simulate_path(const InducingSequence& seq, const TimeGrid& grid,
                         const NoiseParams& noise, const Vector& x0, const Vector& y0, Rng& rng);

}  // namespace hsde
