#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hsde/ensemble.hpp"
#include "hsde/model.hpp"
#include "hsde/resampling.hpp"

namespace hsde {

enum class ProposalKind { bootstrap, guided };
enum class PathStorage { full_path, filtered_summary };

struct SmcConfig {
  int particles = 1000;
  ProposalKind proposal = ProposalKind::bootstrap;
  /// Guided proposal: 0 is the prior transition, 1 the locally optimal
  /// linear-Gaussian update for y.
  double guided_blend = 1.0;
  ResamplingScheme resampling = ResamplingScheme::systematic;
  /// Resample when ESS < ess_threshold * U; 1.0 resamples every step.
  double ess_threshold = 0.5;
  std::uint64_t seed = 1;
  PathStorage storage = PathStorage::full_path;
  std::size_t memory_cap_bytes = std::size_t{3} << 30;
  /// Weighted 5%/95% bands in the summaries (sorting per step; off for inner EM iterations).
  bool compute_bands = true;
  /// When set, every particle uses this event sequence and no events are born.
  std::optional<InducingSequence> fixed_events;
  /// 0 uses the OpenMP default. Results do not depend on this value.
  int threads = 0;

  void validate() const;
};

/// Rows are grid steps 0..K.
struct PathSummary {
  Matrix mean;
  Matrix lo;
  Matrix hi;
};

struct StateSummary {
  PathSummary x;
  PathSummary y;
};

/// A distinct posterior event chain and the summed final weight of the
/// particles that carry it.
struct WeightedEvents {
  InducingSequence events;
  double weight;
  int multiplicity;
};

struct SmcResult {
  double log_marginal_likelihood = 0.0;
  /// Weighted by the filtering weights at each step.
  StateSummary filtered;
  /// Weighted by the final weights through the genealogy (full-path storage only).
  std::optional<StateSummary> smoothed;
  std::vector<double> ess;  // per step 1..K, before resampling
  int resample_count = 0;
  std::vector<WeightedEvents> event_posterior;
  double mean_event_count = 0.0;
  double mean_waiting_time = 0.0;
  std::optional<ParticleEnsemble> ensemble;
};

/// One proposal draw for the transition into step k.
struct ProposalDraw {
  Vector x;
  Vector y;
  double log_proposal = 0.0;
  /// log p(z|y) + log p(y|.) + log p(x|.) - log proposal.
  double log_weight = 0.0;
};

/// Precomputed pieces of the guided proposal (state independent).
class GuidedProposal {
 public:
  GuidedProposal(const ModelParams& params, double dt, double blend);
  bool active() const { return active_; }
  /// Proposal mean and Cholesky factor for y_k given its prior mean and z_k.
  Vector mean(const Vector& prior_mean, const Vector& z) const;
  const Eigen::LLT<Matrix>& chol() const { return chol_; }

 private:
  bool active_ = false;
  double blend_ = 0.0;
  Matrix gain_;
  Matrix W_;
  Eigen::LLT<Matrix> chol_;
};

ProposalDraw propose_step(const Vector& x_prev, const Vector& y_prev, int k, const TimeGrid& grid,
                          double next_time, const Vector& next_mark, double prev_time,
                          const Vector& z_k, const ModelParams& params, const GuidedProposal* guided,
                          Rng& rng);

/// Importance weight from its four log-density terms.
inline double importance_log_weight(double log_lik, double log_prior_y, double log_prior_x,
                                    double log_proposal) {
  return log_lik + log_prior_y + log_prior_x - log_proposal;
}

SmcResult run_filter(const ObservationSeries& obs, const ModelParams& params, const SmcConfig& cfg);

/// Weighted quantile (q in [0, 1]) of values.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

}  // namespace hsde
