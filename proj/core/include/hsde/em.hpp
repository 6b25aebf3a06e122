#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsde/model.hpp"
#include "hsde/smc.hpp"

namespace hsde {

/// One trial's E-step output paired with its observations.
struct TrialView {
  const ParticleEnsemble& ensemble;
  const ObservationSeries& obs;
};

/// Expected complete-data log-likelihood, split by term.
struct QTerms {
  double initial = 0.0;
  double obs = 0.0;
  double integrator = 0.0;
  double bridge = 0.0;
  double waiting = 0.0;
  double marks = 0.0;
  double priors = 0.0;

  double total() const { return initial + obs + integrator + bridge + waiting + marks + priors; }
};

QTerms q_terms(std::span<const TrialView> trials, const ModelParams& params);
double q_function(const ParticleEnsemble& ensemble, const ModelParams& params,
                  const ObservationSeries& obs);

enum class NoiseCovMode { full, diagonal, fixed };

struct ObservationUpdate {
  Matrix W;
  Matrix R;
  std::vector<std::string> warnings;
};

/// Weighted least squares of z on y pooled over trials, particles and steps.
/// With NoiseCovMode::fixed, `current_R` is returned unchanged. Given
/// `fixed_W`, only R is estimated (residuals about fixed_W y).
ObservationUpdate update_observation(std::span<const TrialView> trials,
                                     NoiseCovMode mode = NoiseCovMode::full,
                                     const Matrix* current_R = nullptr, const Matrix* fixed_W = nullptr);

/// Weighted design for the Poisson GLM: one row per (step, particle) node with
/// nonzero posterior weight, its latent state and the counts of every neuron.
struct SpikeDesign {
  Matrix y;  // n x D
  Vector weight;
  Matrix counts;  // n x M
  double dt = 0.0;
};

SpikeDesign spike_design(std::span<const TrialView> trials);

/// Penalised expected log-likelihood of one neuron in theta = (w, b), with its
/// gradient and Hessian.
double spike_objective(const SpikeDesign& design, int neuron, const Vector& theta);
Vector spike_gradient(const SpikeDesign& design, int neuron, const Vector& theta);
Matrix spike_hessian(const SpikeDesign& design, int neuron, const Vector& theta);

struct NewtonOptions {
  int max_iters = 100;
  double grad_tol = 1e-6;
  int max_halvings = 20;
};

struct SpikeUpdate {
  Matrix W;
  Vector b;
  std::vector<int> iterations;  // per neuron
};

SpikeUpdate update_spike_loadings(std::span<const TrialView> trials, const PointProcessObsModel& start,
                                  const NewtonOptions& opts = {});
/// Baselines only, loadings held: b_m = log(sum w n_m / sum w exp(w_m y) dt).
Vector update_spike_baselines(std::span<const TrialView> trials, const PointProcessObsModel& current);

/// Weighted waiting-time statistics: n = sum w, sum w tau, sum w log tau.
struct WaitingStats {
  double n = 0.0;
  double sum_tau = 0.0;
  double sum_log_tau = 0.0;
};

WaitingStats waiting_stats(std::span<const TrialView> trials);
WaitingStats waiting_stats(std::span<const double> taus, std::span<const double> weights);

/// MAP objective and its gradient in (log alpha, log lambda).
double waiting_objective(const WaitingStats& s, double alpha, double lambda,
                         const AlphaPrior& ap, const LambdaPrior& lp);
Eigen::Vector2d waiting_gradient(const WaitingStats& s, double alpha, double lambda,
                                 const AlphaPrior& ap, const LambdaPrior& lp);

inline constexpr double kAlphaCap = 1e3;
inline constexpr double kAlphaMin = 1e-3;
inline constexpr double kLambdaFloor = 1e-6;

struct WaitingUpdate {
  WaitingTimeModel model;
  std::vector<std::string> warnings;
};

WaitingUpdate update_waiting_time(const WaitingStats& s, const PriorHyperparams& priors,
                                  const WaitingTimeModel& current);
WaitingUpdate update_waiting_time(std::span<const TrialView> trials, const PriorHyperparams& priors,
                                  const WaitingTimeModel& current);

/// Weighted mark statistics: n = sum w, weighted mean and scatter about it.
struct MarkStats {
  double n = 0.0;
  Vector mean;
  Matrix scatter;
};

MarkStats mark_stats(std::span<const TrialView> trials, int dim);
MarkStats mark_stats(std::span<const Vector> marks, std::span<const double> weights, int dim);

MarkModel update_marks(const MarkStats& s, const NiwPrior& prior);
MarkModel update_marks(std::span<const TrialView> trials, const NiwPrior& prior);

inline constexpr double kSigmaFloor = 1e-12;

struct SigmaXUpdate {
  Vector sigma_x;
  std::vector<std::string> warnings;
};

SigmaXUpdate update_sigma_x(std::span<const TrialView> trials, const Vector& current);

struct EmConfig {
  int n_iters = 20;
  SmcConfig smc;
  bool update_obs = true;
  /// With false, the observation update keeps W and refits R (Gaussian) or b (spikes).
  bool update_loadings = true;
  bool update_waiting = true;
  bool update_marks = true;
  bool update_sigma_x = false;
  NoiseCovMode noise_cov = NoiseCovMode::full;
  NewtonOptions newton;
  /// Rerun the filter with the final parameters so the returned E-step
  /// matches them.
  bool final_estep = true;

  void validate() const;
};

struct EmIteration {
  int iteration;
  double log_ml;
  double q_before;
  double q_after;
  ModelParams params;  // after the M-step
  double mean_event_count;
  double mean_waiting_time;
  std::vector<std::string> warnings;
};

using EmTrace = std::vector<EmIteration>;

struct FitResult {
  ModelParams params;
  EmTrace trace;
  std::vector<SmcResult> estep;  // one per trial
};

/// Thrown when an E-step degenerates; carries the iterations completed so far.
class EmAborted : public std::runtime_error {
 public:
  EmAborted(const std::string& what, EmTrace trace, ModelParams params)
      : std::runtime_error(what), trace_(std::move(trace)), params_(std::move(params)) {}
  const EmTrace& trace() const { return trace_; }
  const ModelParams& params() const { return params_; }

 private:
  EmTrace trace_;
  ModelParams params_;
};

/// One M-step given completed E-steps. Warnings are appended to `warnings`.
ModelParams m_step(std::span<const TrialView> trials, const ModelParams& params, const EmConfig& cfg,
                   std::vector<std::string>& warnings);

FitResult fit(std::span<const ObservationSeries> trials, const ModelParams& init, const EmConfig& cfg);
FitResult fit(const ObservationSeries& obs, const ModelParams& init, const EmConfig& cfg);

}  // namespace hsde
