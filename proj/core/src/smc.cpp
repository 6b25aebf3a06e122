#include "hsde/smc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>

#include "hsde/linalg.hpp"

#ifdef HSDE_HAVE_OPENMP
#include <omp.h>
#endif

namespace hsde {

void SmcConfig::validate() const {
  if (particles < 2) throw std::invalid_argument("SMC needs at least 2 particles");
  if (!(ess_threshold > 0.0 && ess_threshold <= 1.0)) {
    throw std::invalid_argument("ess_threshold must lie in (0, 1]");
  }
  if (!(guided_blend >= 0.0 && guided_blend <= 1.0)) {
    throw std::invalid_argument("guided_blend must lie in [0, 1]");
  }
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  std::vector<std::size_t> idx;
  idx.reserve(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] > 0.0) {
      idx.push_back(i);
      total += weights[i];
    }
  }
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  });
  const double target = q * total;
  double cum = 0.0;
  for (std::size_t i : idx) {
    cum += weights[i];
    if (cum >= target) return values[i];
  }
  return values[idx.back()];
}

GuidedProposal::GuidedProposal(const ModelParams& params, double dt, double blend) : blend_(blend) {
  const auto* g = std::get_if<GaussianObsModel>(&params.obs);
  if (g == nullptr) throw std::invalid_argument("the guided proposal needs a Gaussian observation model");
  const Vector prior_var = params.noise.sigma_y.array().square() * dt;
  if ((prior_var.array() <= 0.0).any() || blend == 0.0) return;
  active_ = true;
  W_ = g->W();
  const Matrix S = prior_var.asDiagonal();
  const Matrix innov = W_ * S * W_.transpose() + g->R();
  gain_ = S * W_.transpose() * innov.llt().solve(Matrix::Identity(innov.rows(), innov.cols()));
  const Matrix post = S - gain_ * W_ * S;
  Matrix cov = (1.0 - blend) * S + blend * post;
  cov = 0.5 * (cov + cov.transpose());
  chol_.compute(cov);
  if (chol_.info() != Eigen::Success) throw NumericalError("guided proposal covariance is not SPD");
}

Vector GuidedProposal::mean(const Vector& prior_mean, const Vector& z) const {
  return prior_mean + blend_ * (gain_ * (z - W_ * prior_mean));
}

ProposalDraw propose_step(const Vector& x_prev, const Vector& y_prev, int k, const TimeGrid& grid,
                          double next_time, const Vector& next_mark, double prev_time,
                          const Vector& z_k, const ModelParams& params, const GuidedProposal* guided,
                          Rng& rng) {
  // Transition k-1 -> k.
  const BridgeMoments bm =
      bridge_moments(x_prev, k - 1, grid, next_time, next_mark, prev_time, params.noise.sigma_x);
  std::normal_distribution<double> normal;
  ProposalDraw out;
  out.x = bm.mean;
  if (!bm.pinned) {
    for (Eigen::Index d = 0; d < out.x.size(); ++d) out.x[d] += std::sqrt(bm.variance[d]) * normal(rng);
  }
  const double log_prior_x = bm.pinned ? 0.0 : diag_normal_log_pdf(out.x, bm.mean, bm.variance);

  const double dt = grid.dt();
  const Vector y_mean = y_prev + x_prev * dt;
  const Vector y_var = params.noise.sigma_y.array().square() * dt;
  double log_q_y = 0.0;
  if (guided != nullptr && guided->active()) {
    const Vector m = guided->mean(y_mean, z_k);
    Vector eta(m.size());
    for (Eigen::Index d = 0; d < eta.size(); ++d) eta[d] = normal(rng);
    out.y = m + guided->chol().matrixL() * eta;
    log_q_y = mvn_log_pdf(out.y, m, guided->chol());
  } else {
    out.y = y_mean;
    for (Eigen::Index d = 0; d < out.y.size(); ++d) {
      if (y_var[d] > 0.0) out.y[d] += std::sqrt(y_var[d]) * normal(rng);
    }
    log_q_y = diag_normal_log_pdf(out.y, y_mean, y_var);
  }
  const double log_prior_y = diag_normal_log_pdf(out.y, y_mean, y_var);
  const double log_lik = obs_loglik(z_k, out.y, params.obs, dt);
  out.log_proposal = log_prior_x + log_q_y;
  out.log_weight = importance_log_weight(log_lik, log_prior_y, log_prior_x, out.log_proposal);
  return out;
}

namespace {

// Allocation-free observation log-likelihood for the inner loop.
class ObsEvaluator {
 public:
  ObsEvaluator(const ObservationSeries& obs, const ObsModel& model) : dt_(obs.dt) {
    M_ = obs.dim();
    if (const auto* g = std::get_if<GaussianObsModel>(&model)) {
      gaussian_ = true;
      const Matrix Linv =
          g->chol().matrixL().solve(Matrix::Identity(g->obs_dim(), g->obs_dim()));
      LW_ = Linv * g->W();
      Lz_ = Linv * obs.data.transpose();
      constant_ = -0.5 * (M_ * kLog2Pi + g->log_det_R());
    } else {
      const auto& p = std::get<PointProcessObsModel>(model);
      W_ = p.W();
      b_ = p.b();
      counts_ = obs.data.transpose();
      lgam_.resize(counts_.rows(), counts_.cols());
      for (Eigen::Index i = 0; i < counts_.size(); ++i) lgam_.data()[i] = std::lgamma(counts_.data()[i] + 1.0);
    }
  }

  double operator()(int row, const double* y) const {
    const int D = static_cast<int>(gaussian_ ? LW_.cols() : W_.cols());
    double acc = 0.0;
    if (gaussian_) {
      for (int i = 0; i < M_; ++i) {
        double r = Lz_(i, row);
        for (int d = 0; d < D; ++d) r -= LW_(i, d) * y[d];
        acc += r * r;
      }
      return constant_ - 0.5 * acc;
    }
    const double log_dt = std::log(dt_);
    for (int m = 0; m < M_; ++m) {
      double eta = b_[m];
      for (int d = 0; d < D; ++d) eta += W_(m, d) * y[d];
      eta = std::min(eta, 700.0);
      const double n = counts_(m, row);
      acc += (n > 0.0 ? n * (eta + log_dt) : 0.0) - std::exp(eta) * dt_ - lgam_(m, row);
    }
    return acc;
  }

 private:
  bool gaussian_ = false;
  int M_ = 0;
  double dt_;
  double constant_ = 0.0;
  Matrix LW_, Lz_;
  Matrix W_, counts_, lgam_;
  Vector b_;
};

void summarise_step(const GenealogyLayer& layer, std::span<const double> w, int k, bool bands,
                    StateSummary& out) {
  const int D = static_cast<int>(layer.x.rows());
  const int U = static_cast<int>(layer.x.cols());
  std::vector<double> buf(U);
  for (int which = 0; which < 2; ++which) {
    const Matrix& m = which == 0 ? layer.x : layer.y;
    PathSummary& s = which == 0 ? out.x : out.y;
    for (int d = 0; d < D; ++d) {
      double mean = 0.0;
      for (int u = 0; u < U; ++u) mean += w[u] * m(d, u);
      s.mean(k, d) = mean;
      if (bands) {
        for (int u = 0; u < U; ++u) buf[u] = m(d, u);
        s.lo(k, d) = weighted_quantile(buf, w, 0.05);
        s.hi(k, d) = weighted_quantile(buf, w, 0.95);
      } else {
        s.lo(k, d) = s.hi(k, d) = mean;
      }
    }
  }
}

StateSummary make_summary(int K, int D) {
  auto blank = [&] { return PathSummary{Matrix::Zero(K + 1, D), Matrix::Zero(K + 1, D), Matrix::Zero(K + 1, D)}; };
  return {blank(), blank()};
}

GenealogyLayer make_layer(int D, int U) {
  return {Matrix(D, U), Matrix(D, U), std::vector<int>(U, -1), std::vector<int>(U, -1)};
}

}  // namespace

SmcResult run_filter(const ObservationSeries& obs, const ModelParams& params, const SmcConfig& cfg) {
  cfg.validate();
  obs.validate();
  params.validate();
  const int D = params.dim();
  const int U = cfg.particles;
  const int K = obs.steps();
  if (obs_dim(params.obs) != obs.dim()) {
    throw std::invalid_argument("observation dimension does not match the observation model");
  }
  if ((obs.kind == ObsKind::spikes) != (obs_kind(params.obs) == ObsKind::spikes)) {
    throw std::invalid_argument("observation kind does not match the observation model");
  }
  const TimeGrid grid(obs.dt, K, obs.origin);
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const bool full = cfg.storage == PathStorage::full_path;
  if (full && genealogy_bytes(U, K, D) > cfg.memory_cap_bytes) {
    throw std::invalid_argument("full-path storage needs " + std::to_string(genealogy_bytes(U, K, D) >> 20) +
                                " MiB, above the configured cap of " +
                                std::to_string(cfg.memory_cap_bytes >> 20) + " MiB");
  }

  std::optional<GuidedProposal> guided;
  if (cfg.proposal == ProposalKind::guided) guided.emplace(params, dt, cfg.guided_blend);
  const bool use_guided = guided && guided->active();
  const ObsEvaluator loglik(obs, params.obs);

  EventArena arena;
  const int root = arena.add_root(grid.origin(), D);
  // Fixed events: pending node for each step.
  std::vector<int> fixed_pending;
  if (cfg.fixed_events) {
    if (cfg.fixed_events->dim() != D) throw std::invalid_argument("fixed events dimension mismatch");
    std::vector<int> ids{root};
    for (const auto& p : cfg.fixed_events->points()) ids.push_back(arena.add(ids.back(), p.tau, p.mark, grid));
    if (arena[ids.back()].step < K) throw std::invalid_argument("fixed events end before the grid");
    fixed_pending.resize(K + 1);
    std::size_t j = 0;
    for (int k = 0; k <= K; ++k) {
      while (arena[ids[j]].step < k) ++j;
      fixed_pending[k] = ids[j];
    }
  }

  std::vector<GenealogyLayer> layers;
  if (full) layers.reserve(K + 1);
  GenealogyLayer current = make_layer(D, U);
  {
    for (int u = 0; u < U; ++u) {
      Rng rng(stream_seed(cfg.seed, 0, static_cast<std::uint64_t>(u)));
      std::normal_distribution<double> normal;
      for (int d = 0; d < D; ++d) current.x(d, u) = params.initial.x_mean[d] + params.initial.x_std[d] * normal(rng);
      for (int d = 0; d < D; ++d) current.y(d, u) = params.initial.y_mean[d] + params.initial.y_std[d] * normal(rng);
      current.event[u] = cfg.fixed_events ? fixed_pending[0] : root;
    }
  }

  SmcResult result;
  result.filtered = make_summary(K, D);
  result.ess.reserve(K);
  std::vector<double> log_w(U, -std::log(static_cast<double>(U)));
  std::vector<double> w(U, 1.0 / U);
  summarise_step(current, w, 0, cfg.compute_bands, result.filtered);
  std::vector<int> parents(U);
  std::iota(parents.begin(), parents.end(), 0);

  std::vector<double> increments(U);
  std::vector<double> birth_tau(U);
  std::vector<char> birth(U);
  Matrix birth_mark(D, U);
  const WaitingTimeModel& wt = params.waiting;
  const Vector sx = params.noise.sigma_x;
  const Vector sy = params.noise.sigma_y;

  for (int k = 1; k <= K; ++k) {
    GenealogyLayer next = make_layer(D, U);
    next.ancestor = parents;
    std::mutex err_mutex;
    int err_u = U;
    std::exception_ptr err;
    const int row = k - 1;
    const double t_prev = grid.time(k - 1);

#ifdef HSDE_HAVE_OPENMP
#pragma omp parallel for schedule(static) num_threads(cfg.threads > 0 ? cfg.threads : omp_get_max_threads())
#endif
    for (int u = 0; u < U; ++u) {
      try {
        const int p = parents[u];
        Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(u)));
        std::normal_distribution<double> normal;
        const int ev = current.event[p];
        const EventNode& node = arena[ev];
        double next_time;
        double prev_time;
        const double* mark;
        birth[u] = 0;
        if (cfg.fixed_events) {
          const EventNode& pend = arena[fixed_pending[k]];
          next_time = grid.time(pend.step);
          prev_time = grid.time(arena[pend.parent].step);
          mark = pend.mark.data();
        } else if (node.step < k) {
          const double tau = sample_waiting_time(wt, rng, dt);
          int step = grid.nearest_step(node.time + tau);
          step = std::max(step, k);
          birth[u] = 1;
          birth_tau[u] = tau;
          birth_mark.col(u) = params.marks.sample(rng);
          next_time = grid.time(step);
          prev_time = grid.time(node.step);
          mark = birth_mark.col(u).data();
        } else {
          next_time = grid.time(node.step);
          prev_time = grid.time(arena[node.parent].step);
          mark = node.mark.data();
        }

        const double* xp = current.x.col(p).data();
        const double* yp = current.y.col(p).data();
        double* xn = next.x.col(u).data();
        double* yn = next.y.col(u).data();
        if (use_guided) {
          const Vector mk = Eigen::Map<const Vector>(mark, D);
          const ProposalDraw draw = propose_step(current.x.col(p), current.y.col(p), k, grid, next_time, mk,
                                                 prev_time, obs.data.row(row).transpose(), params,
                                                 &*guided, rng);
          next.x.col(u) = draw.x;
          next.y.col(u) = draw.y;
          increments[u] = draw.log_weight;
        } else {
          if (is_pinned_step(k - 1, grid, next_time)) {
            for (int d = 0; d < D; ++d) xn[d] = mark[d];
          } else {
            const double gain = dt / (next_time - t_prev);
            const double f = bridge_factor(t_prev, next_time, prev_time) * dt;
            const double sf = std::sqrt(f);
            for (int d = 0; d < D; ++d) {
              xn[d] = xp[d] + (mark[d] - xp[d]) * gain;
              if (sx[d] > 0.0 && f > 0.0) xn[d] += sx[d] * sf * normal(rng);
            }
          }
          for (int d = 0; d < D; ++d) {
            yn[d] = yp[d] + xp[d] * dt;
            if (sy[d] > 0.0) yn[d] += sqdt * sy[d] * normal(rng);
          }
          // Bootstrap: prior transition terms cancel against the proposal.
          increments[u] = loglik(row, yn);
        }
        if (std::isnan(increments[u])) increments[u] = -std::numeric_limits<double>::infinity();
        next.event[u] = ev;
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (u < err_u) {
          err_u = u;
          err = std::current_exception();
        }
      }
    }
    if (err) std::rethrow_exception(err);

    if (cfg.fixed_events) {
      std::fill(next.event.begin(), next.event.end(), fixed_pending[k]);
    } else {
      for (int u = 0; u < U; ++u) {
        if (birth[u]) next.event[u] = arena.add(next.event[u], birth_tau[u], birth_mark.col(u), grid);
      }
    }

    for (int u = 0; u < U; ++u) log_w[u] += increments[u];
    const double log_inc = log_sum_exp(log_w);
    if (!std::isfinite(log_inc)) {
      throw DegenerateFilterError(k, "all particle weights vanished at step " + std::to_string(k));
    }
    result.log_marginal_likelihood += log_inc;
    for (int u = 0; u < U; ++u) {
      log_w[u] -= log_inc;
      w[u] = std::exp(log_w[u]);
    }
    const double ess = effective_sample_size(w);
    result.ess.push_back(ess);
    summarise_step(next, w, k, cfg.compute_bands, result.filtered);

    if (full) layers.push_back(std::move(current));
    current = std::move(next);

    if (k < K && ess < cfg.ess_threshold * U) {
      Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(U), 1));
      parents = resample_indices(w, cfg.resampling, rng);
      std::fill(log_w.begin(), log_w.end(), -std::log(static_cast<double>(U)));
      ++result.resample_count;
    } else {
      std::iota(parents.begin(), parents.end(), 0);
    }
  }

  const std::vector<int> leaves = current.event;
  {
    std::map<int, std::pair<double, int>> groups;
    double count = 0.0;
    double tau = 0.0;
    for (int u = 0; u < U; ++u) {
      auto& g = groups[leaves[u]];
      g.first += w[u];
      g.second += 1;
    }
    for (const auto& [leaf, g] : groups) {
      InducingSequence chain = arena.chain(leaf, grid.origin());
      const int n = static_cast<int>(chain.size());
      count += g.first * n;
      if (n > 0) {
        double s = 0.0;
        for (const auto& pt : chain.points()) s += pt.tau;
        tau += g.first * s / n;
      }
      result.event_posterior.push_back({std::move(chain), g.first, g.second});
    }
    std::stable_sort(result.event_posterior.begin(), result.event_posterior.end(),
                     [](const WeightedEvents& a, const WeightedEvents& b) { return a.weight > b.weight; });
    result.mean_event_count = count;
    result.mean_waiting_time = tau;
  }

  if (full) {
    layers.push_back(std::move(current));
    ParticleEnsemble ens(grid, std::move(layers), std::move(arena), leaves, w);
    StateSummary smoothed = make_summary(K, D);
    for (int k = 0; k <= K; ++k) {
      summarise_step(ens.layers()[k], ens.node_weights()[k], k, cfg.compute_bands, smoothed);
    }
    result.smoothed = std::move(smoothed);
    result.ensemble = std::move(ens);
  }
  return result;
}

}  // namespace hsde
