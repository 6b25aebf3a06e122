#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hsde/random.hpp"
#include "hsde/types.hpp"

namespace hsde {

// Marked point process over inducing points. Waiting times are Gamma with
// shape/RATE parameterisation, marks are multivariate normal, and the two are
// independent across events (renewal reduction).

struct InducingPoint {
  double tau;   // waiting time since the previous event, > 0
  Vector mark;  // latent-space value the bridge must reach
};

class InducingSequence {
 public:
  InducingSequence() = default;
  InducingSequence(double origin, std::vector<InducingPoint> points);

  double origin() const { return origin_; }
  const std::vector<InducingPoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  int dim() const { return points_.empty() ? 0 : static_cast<int>(points_.front().mark.size()); }

  void push_back(InducingPoint p);

  /// Absolute event times origin + cumulative tau.
  std::vector<double> event_times() const;
  double last_time() const;

  /// Points of `this` followed by the points of `other` (origin of `this`).
  InducingSequence concat(const InducingSequence& other) const;

 private:
  double origin_ = 0.0;
  std::vector<InducingPoint> points_;
};

double gamma_log_pdf(double x, double shape, double rate);

class WaitingTimeModel {
 public:
  WaitingTimeModel(double alpha, double lambda);

  /// Moment-matched construction: shape = mean^2/var, rate = mean/var.
  static WaitingTimeModel from_moments(double mean, double stddev);

  double alpha() const { return alpha_; }
  double lambda() const { return lambda_; }
  double mean() const { return alpha_ / lambda_; }
  double variance() const { return alpha_ / (lambda_ * lambda_); }
  double log_pdf(double tau) const;

 private:
  double alpha_;
  double lambda_;
};

class MarkModel {
 public:
  MarkModel(Vector mu, Matrix sigma);

  int dim() const { return static_cast<int>(mu_.size()); }
  const Vector& mu() const { return mu_; }
  const Matrix& sigma() const { return sigma_; }
  double log_pdf(const Vector& m) const;
  Vector sample(Rng& rng) const;

 private:
  Vector mu_;
  Matrix sigma_;
  Eigen::LLT<Matrix> chol_;
};

// Prior families. `Flat` is an improper constant density used for
// maximum-likelihood updates.
struct FlatPrior {};
struct GammaPrior {
  double shape;
  double rate;
};
struct ExponentialPrior {
  double rate;
};
struct LognormalPrior {
  double mu;
  double sigma2;
};
struct InvGammaPrior {
  double shape;
  double scale;
};

using AlphaPrior = std::variant<GammaPrior, ExponentialPrior, LognormalPrior, FlatPrior>;
using LambdaPrior = std::variant<GammaPrior, InvGammaPrior, FlatPrior>;

/// Normal-Inverse-Wishart prior on the mark mean and covariance:
/// mu | Sigma ~ N(mu0, Sigma / kappa0), Sigma ~ IW(nu, psi).
struct NiwPrior {
  Vector mu0;
  double kappa0;
  double nu;
  Matrix psi;

  double log_density(const Vector& mu, const Matrix& sigma) const;
};

struct PriorHyperparams {
  NiwPrior marks;
  AlphaPrior alpha = GammaPrior{1.0, 1e-3};
  LambdaPrior lambda = GammaPrior{1.0, 1e-3};

  /// Weakly informative defaults for a D-dimensional latent space.
  static PriorHyperparams weak(int dim);
  void validate(int dim) const;
};

double alpha_prior_log_pdf(const AlphaPrior& prior, double alpha);
double lambda_prior_log_pdf(const LambdaPrior& prior, double lambda);

struct RepulsionParams {
  double strength;
  int window = 3;
};

inline constexpr int kMaxOrderlinessAttempts = 10000;

/// tau ~ Gamma(alpha, rate lambda), rejection-resampled until tau > min_tau.
/// Throws IncompatibleBinSize after `max_attempts` rejections.
double sample_waiting_time(const WaitingTimeModel& model, Rng& rng, double min_tau = 0.0,
                           int max_attempts = kMaxOrderlinessAttempts);

Vector sample_mark(const MarkModel& model, Rng& rng);

/// Sum of Gamma log-pdfs of the waiting times and normal log-pdfs of the marks.
double log_density_sequence(const InducingSequence& seq, const WaitingTimeModel& wt,
                            const MarkModel& mk);

inline constexpr double kRepulsionFloor = -1e9;

/// Unnormalised log-density of the repulsive waiting-time prior. Each tau is
/// paired with at most `rep.window` predecessors; coincident taus give the floor.
double log_density_repulsive(std::span<const double> taus, const WaitingTimeModel& wt,
                             const RepulsionParams& rep);

/// Pairwise repulsion term alone (without the Gamma part).
double repulsion_log_weight(std::span<const double> taus, const RepulsionParams& rep);

struct RepulsiveDraw {
  std::vector<double> taus;
  double ess;
  std::optional<std::string> warning;
};

/// Self-normalised importance sampling with independent Gamma proposals;
/// returns one joint draw resampled from the weighted proposals.
RepulsiveDraw sample_repulsive(int n, const WaitingTimeModel& wt, const RepulsionParams& rep,
                               Rng& rng, int n_proposals = 1000);

/// Adjacent gaps of n sorted Uniform(0, horizon) draws (n - 1 gaps).
std::vector<double> order_statistics_gap_sample(int n, double horizon, Rng& rng);

}  // namespace hsde
