#include "hsde/em.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>

#include "hsde/linalg.hpp"

namespace hsde {

namespace {

// Calls fn(k, slot, weight) for every genealogy node with positive weight.
template <class Fn>
void for_each_node(const ParticleEnsemble& ens, Fn&& fn) {
  const auto& nw = ens.node_weights();
  for (int k = 0; k <= ens.steps(); ++k) {
    const auto& w = nw[k];
    for (int s = 0; s < static_cast<int>(w.size()); ++s) {
      if (w[s] > 0.0) fn(k, s, w[s]);
    }
  }
}

// Calls fn(node, weight) for every non-root arena event with positive weight.
template <class Fn>
void for_each_event(const ParticleEnsemble& ens, Fn&& fn) {
  const std::vector<double> ew = ens.event_weights();
  const EventArena& arena = ens.arena();
  for (std::size_t e = 0; e < arena.size(); ++e) {
    if (arena[static_cast<int>(e)].parent >= 0 && ew[e] > 0.0) fn(arena[static_cast<int>(e)], ew[e]);
  }
}

void check_trials(std::span<const TrialView> trials) {
  if (trials.empty()) throw std::invalid_argument("at least one trial is required");
  for (const auto& t : trials) {
    if (t.ensemble.steps() != t.obs.steps()) {
      throw std::invalid_argument("ensemble and observations have different lengths");
    }
  }
}

double alpha_prior_dlog(const AlphaPrior& prior, double a) {
  return std::visit(Overloaded{[&](const GammaPrior& g) { return (g.shape - 1.0) / a - g.rate; },
                               [&](const ExponentialPrior& e) { return -e.rate; },
                               [&](const LognormalPrior& l) {
                                 return -1.0 / a - (std::log(a) - l.mu) / (l.sigma2 * a);
                               },
                               [](const FlatPrior&) { return 0.0; }},
                    prior);
}

double lambda_prior_dlog(const LambdaPrior& prior, double l) {
  return std::visit(Overloaded{[&](const GammaPrior& g) { return (g.shape - 1.0) / l - g.rate; },
                               [&](const InvGammaPrior& g) { return -(g.shape + 1.0) / l + g.scale / (l * l); },
                               [](const FlatPrior&) { return 0.0; }},
                    prior);
}

// Maximiser of the objective over lambda for fixed alpha.
double best_lambda(const WaitingStats& s, double alpha, const LambdaPrior& prior, double fallback) {
  const double a = s.n * alpha;
  const double lambda = std::visit(
      Overloaded{[&](const GammaPrior& g) { return (g.shape - 1.0 + a) / (g.rate + s.sum_tau); },
                 [&](const InvGammaPrior& g) {
                   const double c = a - g.shape - 1.0;
                   if (s.sum_tau <= 0.0) return c < 0.0 ? g.scale / -c : fallback;
                   return (c + std::sqrt(c * c + 4.0 * s.sum_tau * g.scale)) / (2.0 * s.sum_tau);
                 },
                 [&](const FlatPrior&) { return s.sum_tau > 0.0 ? a / s.sum_tau : fallback; }},
      prior);
  return std::max(lambda, kLambdaFloor);
}

double alpha_prior_mode(const AlphaPrior& prior, double current) {
  const double m = std::visit(Overloaded{[](const GammaPrior& g) { return (g.shape - 1.0) / g.rate; },
                                         [](const ExponentialPrior&) { return 0.0; },
                                         [](const LognormalPrior& l) { return std::exp(l.mu - l.sigma2); },
                                         [&](const FlatPrior&) { return current; }},
                              prior);
  return std::clamp(m, kAlphaMin, kAlphaCap);
}

double lambda_prior_mode(const LambdaPrior& prior, double current) {
  const double m = std::visit(Overloaded{[](const GammaPrior& g) { return (g.shape - 1.0) / g.rate; },
                                         [](const InvGammaPrior& g) { return g.scale / (g.shape + 1.0); },
                                         [&](const FlatPrior&) { return current; }},
                              prior);
  return std::max(m, kLambdaFloor);
}

}  // namespace

// --- Q-function --------------------------------------------------------------

QTerms q_terms(std::span<const TrialView> trials, const ModelParams& params) {
  check_trials(trials);
  QTerms q;
  for (const auto& trial : trials) {
    const ParticleEnsemble& ens = trial.ensemble;
    const TimeGrid& grid = ens.grid();
    const auto& layers = ens.layers();
    if (ens.dim() != params.dim()) throw std::invalid_argument("ensemble dimension mismatch");
    for_each_node(ens, [&](int k, int s, double w) {
      const Vector x = layers[k].x.col(s);
      const Vector y = layers[k].y.col(s);
      if (k == 0) {
        q.initial += w * params.initial.log_pdf(x, y);
        return;
      }
      const int a = layers[k].ancestor[s];
      const Vector xp = layers[k - 1].x.col(a);
      const Vector yp = layers[k - 1].y.col(a);
      q.obs += w * obs_loglik(trial.obs.data.row(k - 1).transpose(), y, params.obs, grid.dt());
      q.integrator += w * integrator_transition_logpdf(y, yp, xp, grid, params.noise);
      const auto target = ens.bridge_target(k, s);
      q.bridge += w * bridge_transition_logpdf(x, xp, k - 1, grid, target.next_time, *target.mark,
                                               target.prev_time, params.noise);
    });
    for_each_event(ens, [&](const EventNode& node, double w) {
      q.waiting += w * params.waiting.log_pdf(node.tau);
      q.marks += w * params.marks.log_pdf(node.mark);
    });
  }
  q.priors = params.priors.marks.log_density(params.marks.mu(), params.marks.sigma()) +
             alpha_prior_log_pdf(params.priors.alpha, params.waiting.alpha()) +
             lambda_prior_log_pdf(params.priors.lambda, params.waiting.lambda());
  if (const auto* p = std::get_if<PointProcessObsModel>(&params.obs)) q.priors += spike_loading_log_prior(*p);
  return q;
}

double q_function(const ParticleEnsemble& ensemble, const ModelParams& params,
                  const ObservationSeries& obs) {
  const TrialView view{ensemble, obs};
  return q_terms(std::span<const TrialView>(&view, 1), params).total();
}

// --- Gaussian observation model ----------------------------------------------

namespace {

Matrix regression_loadings(Matrix Syy, const Matrix& Szy, std::vector<std::string>& warnings) {
  const Eigen::Index D = Syy.rows();
  Eigen::LDLT<Matrix> ldlt(Syy);
  const double scale = Syy.trace() / static_cast<double>(D);
  // LDLT solves treat zero pivots as zero, so inspect the pivots directly.
  const Vector piv = ldlt.vectorD().cwiseAbs();
  const bool singular = ldlt.info() != Eigen::Success || !(scale > 0.0) || !(piv.minCoeff() >= 1e-12 * piv.maxCoeff());
  if (singular) {
    const double eps = 1e-8 * (scale > 0.0 ? scale : 1.0);
    Syy += eps * Matrix::Identity(D, D);
    ldlt.compute(Syy);
    warnings.push_back("latent Gram matrix is near-singular; ridge " + std::to_string(eps) + " added");
  }
  return ldlt.solve(Szy.transpose()).transpose();
}

}  // namespace

ObservationUpdate update_observation(std::span<const TrialView> trials, NoiseCovMode mode,
                                     const Matrix* current_R, const Matrix* fixed_W) {
  check_trials(trials);
  const int D = trials.front().ensemble.dim();
  const int M = trials.front().obs.dim();
  Matrix Syy = Matrix::Zero(D, D);
  Matrix Szy = Matrix::Zero(M, D);
  Matrix Szz = Matrix::Zero(M, M);
  double n = 0.0;
  for (const auto& trial : trials) {
    if (trial.obs.kind != ObsKind::gaussian) throw std::invalid_argument("update_observation needs real-valued observations");
    if (trial.obs.dim() != M || trial.ensemble.dim() != D) throw std::invalid_argument("trial dimensions differ");
    const auto& layers = trial.ensemble.layers();
    for_each_node(trial.ensemble, [&](int k, int s, double w) {
      if (k == 0) return;
      const auto y = layers[k].y.col(s);
      const auto z = trial.obs.data.row(k - 1).transpose();
      Syy.noalias() += w * y * y.transpose();
      Szy.noalias() += w * z * y.transpose();
      Szz.noalias() += w * z * z.transpose();
      n += w;
    });
  }
  ObservationUpdate out;
  if (fixed_W != nullptr) {
    if (fixed_W->rows() != M || fixed_W->cols() != D) throw std::invalid_argument("fixed loadings have the wrong shape");
    out.W = *fixed_W;
  } else {
    out.W = regression_loadings(Syy, Szy, out.warnings);
  }
  if (mode == NoiseCovMode::fixed) {
    if (current_R == nullptr) throw std::invalid_argument("fixed noise covariance needs the current R");
    out.R = *current_R;
    return out;
  }
  Matrix R = (Szz - out.W * Szy.transpose() - Szy * out.W.transpose() + out.W * Syy * out.W.transpose()) / n;
  R = 0.5 * (R + R.transpose());
  if (mode == NoiseCovMode::diagonal) R = Matrix(R.diagonal().asDiagonal());
  const double floor = std::max(1e-12, 1e-10 * Szz.trace() / (n * M));
  out.R = nearest_spd(R, floor);
  return out;
}

// --- Poisson GLM --------------------------------------------------------------

Vector update_spike_baselines(std::span<const TrialView> trials, const PointProcessObsModel& current) {
  const SpikeDesign d = spike_design(trials);
  Vector b(current.W().rows());
  for (Eigen::Index m = 0; m < b.size(); ++m) {
    const Vector eta = d.y * current.W().row(m).transpose();
    const double expected = d.weight.dot(eta.array().exp().matrix()) * d.dt;
    const double observed = d.weight.dot(d.counts.col(m));
    // A silent neuron has no finite optimum; send its rate to the floor.
    b[m] = observed > 0.0 ? std::log(observed / expected) : std::log(1e-6 * d.weight.sum() * d.dt / expected);
  }
  return b;
}

SpikeDesign spike_design(std::span<const TrialView> trials) {
  check_trials(trials);
  const int D = trials.front().ensemble.dim();
  const int M = trials.front().obs.dim();
  const double dt = trials.front().obs.dt;
  std::size_t n = 0;
  for (const auto& trial : trials) {
    if (trial.obs.kind != ObsKind::spikes) throw std::invalid_argument("spike updates need spike-count observations");
    if (trial.obs.dim() != M || trial.ensemble.dim() != D) throw std::invalid_argument("trial dimensions differ");
    if (trial.obs.dt != dt) throw std::invalid_argument("trials must share the bin width");
    for_each_node(trial.ensemble, [&](int k, int, double) { n += k > 0 ? 1 : 0; });
  }
  SpikeDesign d;
  d.y.resize(static_cast<Eigen::Index>(n), D);
  d.weight.resize(static_cast<Eigen::Index>(n));
  d.counts.resize(static_cast<Eigen::Index>(n), M);
  d.dt = dt;
  Eigen::Index row = 0;
  for (const auto& trial : trials) {
    const auto& layers = trial.ensemble.layers();
    for_each_node(trial.ensemble, [&](int k, int s, double w) {
      if (k == 0) return;
      d.y.row(row) = layers[k].y.col(s).transpose();
      d.weight[row] = w;
      d.counts.row(row) = trial.obs.data.row(k - 1);
      ++row;
    });
  }
  return d;
}

namespace {

constexpr double kPriorPrecision = 1.0 / (kSpikeLoadingPriorStd * kSpikeLoadingPriorStd);

double linear_predictor(const SpikeDesign& d, Eigen::Index i, const Vector& theta) {
  const Eigen::Index D = d.y.cols();
  return std::min(d.y.row(i).dot(theta.head(D)) + theta[D], 700.0);
}

}  // namespace

double spike_objective(const SpikeDesign& d, int neuron, const Vector& theta) {
  const Eigen::Index D = d.y.cols();
  const double log_dt = std::log(d.dt);
  double f = 0.0;
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
    const double eta = linear_predictor(d, i, theta);
    const double c = d.counts(i, neuron);
    f += d.weight[i] * ((c > 0.0 ? c * (eta + log_dt) : 0.0) - std::exp(eta) * d.dt - std::lgamma(c + 1.0));
  }
  return f - 0.5 * kPriorPrecision * theta.head(D).squaredNorm();
}

Vector spike_gradient(const SpikeDesign& d, int neuron, const Vector& theta) {
  const Eigen::Index D = d.y.cols();
  Vector g = Vector::Zero(D + 1);
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
    const double r = d.weight[i] * (d.counts(i, neuron) - std::exp(linear_predictor(d, i, theta)) * d.dt);
    g.head(D) += r * d.y.row(i).transpose();
    g[D] += r;
  }
  g.head(D) -= kPriorPrecision * theta.head(D);
  return g;
}

Matrix spike_hessian(const SpikeDesign& d, int neuron, const Vector& theta) {
  (void)neuron;
  const Eigen::Index D = d.y.cols();
  Matrix H = Matrix::Zero(D + 1, D + 1);
  Vector a(D + 1);
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
    const double r = d.weight[i] * std::exp(linear_predictor(d, i, theta)) * d.dt;
    a.head(D) = d.y.row(i).transpose();
    a[D] = 1.0;
    H.noalias() -= r * a * a.transpose();
  }
  H.topLeftCorner(D, D).diagonal().array() -= kPriorPrecision;
  return H;
}

SpikeUpdate update_spike_loadings(std::span<const TrialView> trials, const PointProcessObsModel& start,
                                  const NewtonOptions& opts) {
  const SpikeDesign d = spike_design(trials);
  const int D = static_cast<int>(start.W().cols());
  const int M = static_cast<int>(start.W().rows());
  if (d.y.cols() != D || d.counts.cols() != M) throw std::invalid_argument("spike model dimensions do not match the trials");
  SpikeUpdate out{start.W(), start.b(), std::vector<int>(M, 0)};
  for (int m = 0; m < M; ++m) {
    Vector theta(D + 1);
    theta.head(D) = start.W().row(m).transpose();
    theta[D] = start.b()[m];
    double f = spike_objective(d, m, theta);
    int it = 0;
    for (; it < opts.max_iters; ++it) {
      const Vector g = spike_gradient(d, m, theta);
      if (g.norm() < opts.grad_tol) break;
      Matrix H = spike_hessian(d, m, theta);
      // Ascent direction from the negated (positive definite) Hessian.
      Matrix A = -H;
      A.diagonal().array() += 1e-10 * (1.0 + A.diagonal().cwiseAbs().maxCoeff());
      Eigen::LLT<Matrix> llt(A);
      Vector step = llt.info() == Eigen::Success ? Vector(llt.solve(g)) : g;
      // Predicted gain below the rounding level of f: nothing left to gain.
      if (g.dot(step) <= 1e-12 * (1.0 + std::abs(f))) break;
      int halvings = 0;
      while (true) {
        const Vector cand = theta + step;
        const double fc = spike_objective(d, m, cand);
        if (std::isfinite(fc) && fc >= f) {
          theta = cand;
          f = fc;
          break;
        }
        if (++halvings > opts.max_halvings) {
          throw NumericalError("spike loading update for neuron " + std::to_string(m) +
                               " failed to increase the objective after " +
                               std::to_string(opts.max_halvings) + " step halvings");
        }
        step *= 0.5;
      }
      if (step.norm() < 1e-14 * (1.0 + theta.norm())) break;
    }
    out.W.row(m) = theta.head(D).transpose();
    out.b[m] = theta[D];
    out.iterations[m] = it;
  }
  return out;
}

// --- Waiting times -------------------------------------------------------------

WaitingStats waiting_stats(std::span<const TrialView> trials) {
  check_trials(trials);
  WaitingStats s;
  for (const auto& trial : trials) {
    for_each_event(trial.ensemble, [&](const EventNode& node, double w) {
      s.n += w;
      s.sum_tau += w * node.tau;
      s.sum_log_tau += w * std::log(node.tau);
    });
  }
  return s;
}

WaitingStats waiting_stats(std::span<const double> taus, std::span<const double> weights) {
  if (taus.size() != weights.size()) throw std::invalid_argument("taus and weights differ in length");
  WaitingStats s;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0)) throw std::invalid_argument("waiting times must be positive");
    s.n += weights[i];
    s.sum_tau += weights[i] * taus[i];
    s.sum_log_tau += weights[i] * std::log(taus[i]);
  }
  return s;
}

double waiting_objective(const WaitingStats& s, double alpha, double lambda, const AlphaPrior& ap,
                         const LambdaPrior& lp) {
  return s.n * (alpha * std::log(lambda) - std::lgamma(alpha)) + (alpha - 1.0) * s.sum_log_tau -
         lambda * s.sum_tau + alpha_prior_log_pdf(ap, alpha) + lambda_prior_log_pdf(lp, lambda);
}

Eigen::Vector2d waiting_gradient(const WaitingStats& s, double alpha, double lambda, const AlphaPrior& ap,
                                 const LambdaPrior& lp) {
  const double da = s.n * (std::log(lambda) - boost::math::digamma(alpha)) + s.sum_log_tau +
                    alpha_prior_dlog(ap, alpha);
  const double dl = s.n * alpha / lambda - s.sum_tau + lambda_prior_dlog(lp, lambda);
  return {alpha * da, lambda * dl};
}

WaitingUpdate update_waiting_time(const WaitingStats& s, const PriorHyperparams& priors,
                                  const WaitingTimeModel& current) {
  WaitingUpdate out{current, {}};
  if (s.n < 2.0) {
    out.model = WaitingTimeModel(alpha_prior_mode(priors.alpha, current.alpha()),
                                 lambda_prior_mode(priors.lambda, current.lambda()));
    out.warnings.push_back("fewer than 2 effective events; waiting-time model set to the prior mode");
    return out;
  }
  auto profile = [&](double log_alpha) {
    const double a = std::exp(log_alpha);
    const double l = best_lambda(s, a, priors.lambda, current.lambda());
    return -waiting_objective(s, a, l, priors.alpha, priors.lambda);
  };
  const auto [log_a, neg_f] = boost::math::tools::brent_find_minima(profile, std::log(kAlphaMin),
                                                                    std::log(kAlphaCap), 40);
  double alpha = std::exp(log_a);
  double lambda = best_lambda(s, alpha, priors.lambda, current.lambda());
  const double f_cur = waiting_objective(s, current.alpha(), current.lambda(), priors.alpha, priors.lambda);
  if (!std::isfinite(-neg_f) || (std::isfinite(f_cur) && f_cur > -neg_f && current.alpha() <= kAlphaCap)) {
    alpha = current.alpha();
    lambda = current.lambda();
  }
  out.model = WaitingTimeModel(alpha, lambda);
  return out;
}

WaitingUpdate update_waiting_time(std::span<const TrialView> trials, const PriorHyperparams& priors,
                                  const WaitingTimeModel& current) {
  return update_waiting_time(waiting_stats(trials), priors, current);
}

// --- Marks -----------------------------------------------------------------------

MarkStats mark_stats(std::span<const TrialView> trials, int dim) {
  check_trials(trials);
  std::vector<Vector> marks;
  std::vector<double> weights;
  for (const auto& trial : trials) {
    for_each_event(trial.ensemble, [&](const EventNode& node, double w) {
      marks.push_back(node.mark);
      weights.push_back(w);
    });
  }
  return mark_stats(marks, weights, dim);
}

MarkStats mark_stats(std::span<const Vector> marks, std::span<const double> weights, int dim) {
  if (marks.size() != weights.size()) throw std::invalid_argument("marks and weights differ in length");
  MarkStats s{0.0, Vector::Zero(dim), Matrix::Zero(dim, dim)};
  for (std::size_t i = 0; i < marks.size(); ++i) {
    s.n += weights[i];
    s.mean += weights[i] * marks[i];
  }
  if (s.n <= 0.0) return s;
  s.mean /= s.n;
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const Vector c = marks[i] - s.mean;
    s.scatter.noalias() += weights[i] * c * c.transpose();
  }
  return s;
}

MarkModel update_marks(const MarkStats& s, const NiwPrior& prior) {
  const int D = static_cast<int>(prior.mu0.size());
  const double kn = prior.kappa0 + s.n;
  Vector mu = prior.mu0;
  Matrix psi = prior.psi;
  if (s.n > 0.0) {
    mu = (prior.kappa0 * prior.mu0 + s.n * s.mean) / kn;
    const Vector diff = s.mean - prior.mu0;
    psi += s.scatter + (prior.kappa0 * s.n / kn) * diff * diff.transpose();
  }
  Matrix sigma = psi / (prior.nu + s.n + D + 2.0);
  sigma = 0.5 * (sigma + sigma.transpose());
  return MarkModel(mu, sigma);
}

MarkModel update_marks(std::span<const TrialView> trials, const NiwPrior& prior) {
  return update_marks(mark_stats(trials, static_cast<int>(prior.mu0.size())), prior);
}

// --- Bridge noise ------------------------------------------------------------------

SigmaXUpdate update_sigma_x(std::span<const TrialView> trials, const Vector& current) {
  check_trials(trials);
  const int D = static_cast<int>(current.size());
  Vector num = Vector::Zero(D);
  double den = 0.0;
  for (const auto& trial : trials) {
    const ParticleEnsemble& ens = trial.ensemble;
    const TimeGrid& grid = ens.grid();
    const auto& layers = ens.layers();
    const double dt = grid.dt();
    for_each_node(ens, [&](int k, int s, double w) {
      if (k == 0) return;
      const auto target = ens.bridge_target(k, s);
      if (is_pinned_step(k - 1, grid, target.next_time)) return;
      const double t = grid.time(k - 1);
      const double f = bridge_factor(t, target.next_time, target.prev_time) * dt;
      if (!(f > 0.0)) return;
      const int a = layers[k].ancestor[s];
      const double gain = dt / (target.next_time - t);
      for (int d = 0; d < D; ++d) {
        const double xp = layers[k - 1].x(d, a);
        const double r = layers[k].x(d, s) - (xp + ((*target.mark)[d] - xp) * gain);
        num[d] += w * r * r / f;
      }
      den += w;
    });
  }
  SigmaXUpdate out{current, {}};
  if (!(den > 0.0)) {
    out.warnings.push_back("no non-pinned bridge steps; sigma_x left unchanged");
    return out;
  }
  for (int d = 0; d < D; ++d) out.sigma_x[d] = std::max(std::sqrt(num[d] / den), kSigmaFloor);
  return out;
}

// --- EM loop -------------------------------------------------------------------------

void EmConfig::validate() const {
  if (n_iters < 1) throw std::invalid_argument("EM needs at least one iteration");
  smc.validate();
  if (smc.storage != PathStorage::full_path) throw std::invalid_argument("EM needs full-path particle storage");
  if (newton.max_iters < 1 || newton.max_halvings < 0 || !(newton.grad_tol > 0.0)) {
    throw std::invalid_argument("invalid Newton options");
  }
}

ModelParams m_step(std::span<const TrialView> trials, const ModelParams& params, const EmConfig& cfg,
                   std::vector<std::string>& warnings) {
  ModelParams next = params;
  if (cfg.update_obs) {
    if (const auto* g = std::get_if<GaussianObsModel>(&params.obs)) {
      ObservationUpdate u =
          update_observation(trials, cfg.noise_cov, &g->R(), cfg.update_loadings ? nullptr : &g->W());
      warnings.insert(warnings.end(), u.warnings.begin(), u.warnings.end());
      next.obs = GaussianObsModel(std::move(u.W), std::move(u.R));
    } else if (cfg.update_loadings) {
      const auto& p = std::get<PointProcessObsModel>(params.obs);
      SpikeUpdate u = update_spike_loadings(trials, p, cfg.newton);
      next.obs = PointProcessObsModel(std::move(u.W), std::move(u.b));
    } else {
      const auto& p = std::get<PointProcessObsModel>(params.obs);
      next.obs = PointProcessObsModel(p.W(), update_spike_baselines(trials, p));
    }
  }
  if (cfg.update_waiting) {
    WaitingUpdate u = update_waiting_time(trials, params.priors, params.waiting);
    warnings.insert(warnings.end(), u.warnings.begin(), u.warnings.end());
    next.waiting = u.model;
  }
  if (cfg.update_marks) next.marks = update_marks(trials, params.priors.marks);
  if (cfg.update_sigma_x) {
    SigmaXUpdate u = update_sigma_x(trials, params.noise.sigma_x);
    warnings.insert(warnings.end(), u.warnings.begin(), u.warnings.end());
    next.noise.sigma_x = u.sigma_x;
  }
  return next;
}

FitResult fit(std::span<const ObservationSeries> trials, const ModelParams& init, const EmConfig& cfg) {
  cfg.validate();
  init.validate();
  if (trials.empty()) throw std::invalid_argument("fit needs at least one trial");
  ModelParams params = init;
  EmTrace trace;

  auto e_step = [&](int iter, bool bands) {
    std::vector<SmcResult> results;
    results.reserve(trials.size());
    for (std::size_t t = 0; t < trials.size(); ++t) {
      SmcConfig smc = cfg.smc;
      smc.seed = stream_seed(cfg.smc.seed, static_cast<std::uint64_t>(iter), t);
      smc.compute_bands = bands;
      try {
        results.push_back(run_filter(trials[t], params, smc));
      } catch (const DegenerateFilterError& e) {
        throw EmAborted("E-step of iteration " + std::to_string(iter) + " (trial " + std::to_string(t) +
                            ") degenerated: " + e.what(),
                        trace, params);
      }
    }
    return results;
  };

  std::vector<SmcResult> estep;
  for (int it = 0; it < cfg.n_iters; ++it) {
    const bool last = it + 1 == cfg.n_iters;
    estep = e_step(it, cfg.smc.compute_bands && last && !cfg.final_estep);
    std::vector<TrialView> views;
    views.reserve(trials.size());
    EmIteration rec{it, 0.0, 0.0, 0.0, params, 0.0, 0.0, {}};
    for (std::size_t t = 0; t < trials.size(); ++t) {
      views.push_back({*estep[t].ensemble, trials[t]});
      rec.log_ml += estep[t].log_marginal_likelihood;
      rec.mean_event_count += estep[t].mean_event_count / static_cast<double>(trials.size());
      rec.mean_waiting_time += estep[t].mean_waiting_time / static_cast<double>(trials.size());
    }
    rec.q_before = q_terms(views, params).total();
    try {
      params = m_step(views, params, cfg, rec.warnings);
    } catch (const NumericalError& e) {
      throw EmAborted(std::string("M-step of iteration ") + std::to_string(it) + " failed: " + e.what(), trace,
                      params);
    }
    rec.q_after = q_terms(views, params).total();
    rec.params = params;
    trace.push_back(std::move(rec));
  }
  if (cfg.final_estep) estep = e_step(cfg.n_iters, cfg.smc.compute_bands);
  return {params, std::move(trace), std::move(estep)};
}

FitResult fit(const ObservationSeries& obs, const ModelParams& init, const EmConfig& cfg) {
  return fit(std::span<const ObservationSeries>(&obs, 1), init, cfg);
}

}  // namespace hsde
