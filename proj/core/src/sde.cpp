#include "hsde/sde.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "hsde/linalg.hpp"

namespace hsde {

TimeGrid::TimeGrid(double dt, int steps, double origin) : dt_(dt), steps_(steps), origin_(origin) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("time grid requires dt > 0");
  if (steps < 1) throw std::invalid_argument("time grid requires K >= 1");
  if (!std::isfinite(origin)) throw std::invalid_argument("time grid origin must be finite");
}

int TimeGrid::nearest_step(double t) const {
  return static_cast<int>(std::floor((t - origin_) / dt_ + 0.5));
}

NoiseParams NoiseParams::uniform(int dim, double sigma_x, double sigma_y) {
  return {Vector::Constant(dim, sigma_x), Vector::Constant(dim, sigma_y)};
}

void NoiseParams::validate() const {
  if (sigma_x.size() == 0 || sigma_x.size() != sigma_y.size()) {
    throw std::invalid_argument("noise parameters must have matching non-zero dimension");
  }
  if (!sigma_x.allFinite() || !sigma_y.allFinite() || (sigma_x.array() < 0).any() ||
      (sigma_y.array() < 0).any()) {
    throw std::invalid_argument("noise scales must be finite and >= 0");
  }
}

double bridge_factor(double t_k, double next_time, double prev_time) {
  const double span = next_time - prev_time;
  if (!(span > 0.0)) throw std::invalid_argument("bridge requires next event after previous event");
  const double f = (next_time - t_k) * (t_k - prev_time) / span;
  return f > 0.0 ? f : 0.0;
}

bool is_pinned_step(int k, const TimeGrid& grid, double next_time) {
  return next_time - grid.time(k + 1) < 0.5 * grid.dt();
}

BridgeMoments bridge_moments(const Vector& x_k, int k, const TimeGrid& grid, double next_time,
                             const Vector& next_mark, double prev_time, const Vector& sigma_x) {
  const double t_k = grid.time(k);
  if (t_k >= next_time) {
    throw std::logic_error("bridge step at t=" + std::to_string(t_k) +
                           " is past the pending event at t=" + std::to_string(next_time) +
                           "; advance the event first");
  }
  BridgeMoments out;
  if (is_pinned_step(k, grid, next_time)) {
    out.mean = next_mark;
    out.variance = Vector::Zero(x_k.size());
    out.pinned = true;
    return out;
  }
  const double dt = grid.dt();
  out.mean = x_k + (next_mark - x_k) * (dt / (next_time - t_k));
  const double f = bridge_factor(t_k, next_time, prev_time) * dt;
  out.variance = sigma_x.array().square() * f;
  return out;
}

Vector bridge_step(const Vector& x_k, int k, const TimeGrid& grid, double next_time,
                   const Vector& next_mark, double prev_time, const NoiseParams& noise, Rng& rng) {
  BridgeMoments m = bridge_moments(x_k, k, grid, next_time, next_mark, prev_time, noise.sigma_x);
  if (m.pinned) return std::move(m.mean);
  std::normal_distribution<double> normal;
  for (Eigen::Index d = 0; d < m.mean.size(); ++d) {
    m.mean[d] += std::sqrt(m.variance[d]) * normal(rng);
  }
  return std::move(m.mean);
}

double bridge_transition_logpdf(const Vector& x_next, const Vector& x_k, int k,
                                const TimeGrid& grid, double next_time, const Vector& next_mark,
                                double prev_time, const NoiseParams& noise) {
  const BridgeMoments m =
      bridge_moments(x_k, k, grid, next_time, next_mark, prev_time, noise.sigma_x);
  if (m.pinned) {
    return x_next == m.mean ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return diag_normal_log_pdf(x_next, m.mean, m.variance);
}

Vector integrator_step(const Vector& y_k, const Vector& x_k, const TimeGrid& grid,
                       const NoiseParams& noise, Rng& rng) {
  const double dt = grid.dt();
  const double sq = std::sqrt(dt);
  std::normal_distribution<double> normal;
  Vector out = y_k + x_k * dt;
  for (Eigen::Index d = 0; d < out.size(); ++d) {
    if (noise.sigma_y[d] > 0.0) out[d] += sq * noise.sigma_y[d] * normal(rng);
  }
  return out;
}

double integrator_transition_logpdf(const Vector& y_next, const Vector& y_k, const Vector& x_k,
                                    const TimeGrid& grid, const NoiseParams& noise) {
  const Vector mean = y_k + x_k * grid.dt();
  const Vector var = noise.sigma_y.array().square() * grid.dt();
  return diag_normal_log_pdf(y_next, mean, var);
}

std::vector<int> snap_events(const InducingSequence& seq, const TimeGrid& grid) {
  std::vector<int> steps;
  steps.reserve(seq.size());
  int prev = 0;
  for (double t : seq.event_times()) {
    const int s = grid.nearest_step(t);
    if (s <= prev) {
      throw std::invalid_argument("events at t=" + std::to_string(t) +
                                  " violate orderliness: two events share a grid bin");
    }
    steps.push_back(s);
    prev = s;
  }
  return steps;
}

LatentPath simulate_path(const InducingSequence& seq, const TimeGrid& grid,
                         const NoiseParams& noise, const Vector& x0, const Vector& y0, Rng& rng) {
  noise.validate();
  const int dim = noise.dim();
  if (x0.size() != dim || y0.size() != dim) throw std::invalid_argument("initial state dimension mismatch");
  if (!seq.empty() && seq.dim() != dim) throw std::invalid_argument("mark dimension mismatch");
  if (std::abs(seq.origin() - grid.origin()) > 1e-9 * grid.dt()) {
    throw std::invalid_argument("inducing sequence origin must match the grid origin");
  }
  const std::vector<int> steps = snap_events(seq, grid);
  if (steps.empty() || steps.back() < grid.steps()) {
    throw std::invalid_argument("inducing sequence ends before the grid; more events are needed");
  }
  const int K = grid.steps();
  LatentPath path{Matrix(K + 1, dim), Matrix(K + 1, dim)};
  path.x.row(0) = x0.transpose();
  path.y.row(0) = y0.transpose();
  std::size_t next = 0;
  double prev_time = grid.origin();
  Vector x = x0;
  Vector y = y0;
  for (int k = 0; k < K; ++k) {
    while (steps[next] <= k) {
      prev_time = grid.time(steps[next]);
      ++next;
    }
    const double next_time = grid.time(steps[next]);
    const Vector& mark = seq.points()[next].mark;
    Vector x_new = bridge_step(x, k, grid, next_time, mark, prev_time, noise, rng);
    y = integrator_step(y, x, grid, noise, rng);
    x = std::move(x_new);
    path.x.row(k + 1) = x.transpose();
    path.y.row(k + 1) = y.transpose();
  }
  return path;
}

}  // namespace hsde
