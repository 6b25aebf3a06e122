#include "hsde/inducing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hsde/linalg.hpp"

namespace hsde {

InducingSequence::InducingSequence(double origin, std::vector<InducingPoint> points)
    : origin_(origin) {
  points_.reserve(points.size());
  for (auto& p : points) push_back(std::move(p));
}

void InducingSequence::push_back(InducingPoint p) {
  if (!(p.tau > 0.0) || !std::isfinite(p.tau)) {
    throw std::invalid_argument("inducing point waiting time must be finite and > 0");
  }
  if (!p.mark.allFinite()) throw std::invalid_argument("inducing point mark must be finite");
  if (!points_.empty() && p.mark.size() != points_.front().mark.size()) {
    throw std::invalid_argument("inducing point mark dimension mismatch");
  }
  points_.push_back(std::move(p));
}

std::vector<double> InducingSequence::event_times() const {
  std::vector<double> t;
  t.reserve(points_.size());
  double acc = origin_;
  for (const auto& p : points_) {
    acc += p.tau;
    t.push_back(acc);
  }
  return t;
}

double InducingSequence::last_time() const {
  double acc = origin_;
  for (const auto& p : points_) acc += p.tau;
  return acc;
}

InducingSequence InducingSequence::concat(const InducingSequence& other) const {
  InducingSequence out = *this;
  for (const auto& p : other.points()) out.push_back(p);
  return out;
}

double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) throw std::domain_error("Gamma density requires x > 0");
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

WaitingTimeModel::WaitingTimeModel(double alpha, double lambda) : alpha_(alpha), lambda_(lambda) {
  if (!(alpha > 0.0) || !(lambda > 0.0) || !std::isfinite(alpha) || !std::isfinite(lambda)) {
    throw std::invalid_argument("waiting-time model requires alpha > 0 and lambda > 0");
  }
}

WaitingTimeModel WaitingTimeModel::from_moments(double mean, double stddev) {
  if (!(mean > 0.0) || !(stddev > 0.0)) {
    throw std::invalid_argument("waiting-time moments must be positive");
  }
  const double var = stddev * stddev;
  return {mean * mean / var, mean / var};
}

double WaitingTimeModel::log_pdf(double tau) const { return gamma_log_pdf(tau, alpha_, lambda_); }

MarkModel::MarkModel(Vector mu, Matrix sigma) : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  if (mu_.size() == 0 || !mu_.allFinite()) throw std::invalid_argument("mark mean must be finite");
  if (sigma_.rows() != mu_.size()) throw std::invalid_argument("mark covariance dimension mismatch");
  require_spd(sigma_, "mark covariance");
  chol_.compute(sigma_);
}

double MarkModel::log_pdf(const Vector& m) const { return mvn_log_pdf(m, mu_, chol_); }

Vector MarkModel::sample(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vector eta(mu_.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = normal(rng);
  return mu_ + chol_.matrixL() * eta;
}

double NiwPrior::log_density(const Vector& mu, const Matrix& sigma) const {
  const int d = static_cast<int>(mu0.size());
  Eigen::LLT<Matrix> chol(sigma);
  if (chol.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const auto diag = chol.matrixLLT().diagonal();
  double log_det_sigma = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) log_det_sigma += 2.0 * std::log(diag[i]);
  Eigen::LLT<Matrix> mean_chol(sigma / kappa0);
  const double log_mean = mvn_log_pdf(mu, mu0, mean_chol);
  Eigen::LLT<Matrix> psi_chol(psi);
  const auto pd = psi_chol.matrixLLT().diagonal();
  double log_det_psi = 0.0;
  for (Eigen::Index i = 0; i < pd.size(); ++i) log_det_psi += 2.0 * std::log(pd[i]);
  const double trace = chol.solve(psi).trace();
  const double log_iw = 0.5 * nu * log_det_psi - 0.5 * nu * d * std::log(2.0) -
                        log_multigamma(0.5 * nu, d) - 0.5 * (nu + d + 1) * log_det_sigma -
                        0.5 * trace;
  return log_mean + log_iw;
}

PriorHyperparams PriorHyperparams::weak(int dim) {
  PriorHyperparams p;
  p.marks = NiwPrior{Vector::Zero(dim), 0.01, static_cast<double>(dim) + 2.0,
                     Matrix::Identity(dim, dim)};
  return p;
}

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be > 0");
}

}  // namespace

void PriorHyperparams::validate(int dim) const {
  if (marks.mu0.size() != dim) throw std::invalid_argument("NIW mu0 dimension mismatch");
  require_positive(marks.kappa0, "NIW kappa0");
  if (!(marks.nu > dim - 1)) throw std::invalid_argument("NIW nu must exceed D - 1");
  if (marks.psi.rows() != dim) throw std::invalid_argument("NIW psi dimension mismatch");
  require_spd(marks.psi, "NIW psi");
  std::visit(Overloaded{[](const GammaPrior& g) {
                          require_positive(g.shape, "alpha prior shape");
                          require_positive(g.rate, "alpha prior rate");
                        },
                        [](const ExponentialPrior& e) { require_positive(e.rate, "alpha prior rate"); },
                        [](const LognormalPrior& l) { require_positive(l.sigma2, "alpha prior sigma2"); },
                        [](const FlatPrior&) {}},
             alpha);
  std::visit(Overloaded{[](const GammaPrior& g) {
                          require_positive(g.shape, "lambda prior shape");
                          require_positive(g.rate, "lambda prior rate");
                        },
                        [](const InvGammaPrior& g) {
                          require_positive(g.shape, "lambda prior shape");
                          require_positive(g.scale, "lambda prior scale");
                        },
                        [](const FlatPrior&) {}},
             lambda);
}

double alpha_prior_log_pdf(const AlphaPrior& prior, double alpha) {
  return std::visit(
      Overloaded{[&](const GammaPrior& g) { return gamma_log_pdf(alpha, g.shape, g.rate); },
                 [&](const ExponentialPrior& e) { return std::log(e.rate) - e.rate * alpha; },
                 [&](const LognormalPrior& l) {
                   const double z = std::log(alpha) - l.mu;
                   return -std::log(alpha) - 0.5 * std::log(2.0 * M_PI * l.sigma2) -
                          z * z / (2.0 * l.sigma2);
                 },
                 [](const FlatPrior&) { return 0.0; }},
      prior);
}

double lambda_prior_log_pdf(const LambdaPrior& prior, double lambda) {
  return std::visit(
      Overloaded{[&](const GammaPrior& g) { return gamma_log_pdf(lambda, g.shape, g.rate); },
                 [&](const InvGammaPrior& g) {
                   return g.shape * std::log(g.scale) - std::lgamma(g.shape) -
                          (g.shape + 1.0) * std::log(lambda) - g.scale / lambda;
                 },
                 [](const FlatPrior&) { return 0.0; }},
      prior);
}

double sample_waiting_time(const WaitingTimeModel& model, Rng& rng, double min_tau,
                           int max_attempts) {
  std::gamma_distribution<double> gamma(model.alpha(), 1.0 / model.lambda());
  for (int attempt = 0; attempt < std::max(1, max_attempts); ++attempt) {
    const double tau = gamma(rng);
    if (std::isfinite(tau) && tau > min_tau && tau > 0.0) return tau;
  }
  throw IncompatibleBinSize("no waiting time above the bin width " + std::to_string(min_tau) +
                            " after " + std::to_string(max_attempts) +
                            " draws; the bin size is incompatible with the Gamma(" +
                            std::to_string(model.alpha()) + ", " + std::to_string(model.lambda()) +
                            ") waiting-time model");
}

Vector sample_mark(const MarkModel& model, Rng& rng) { return model.sample(rng); }

double log_density_sequence(const InducingSequence& seq, const WaitingTimeModel& wt,
                            const MarkModel& mk) {
  double acc = 0.0;
  for (const auto& p : seq.points()) {
    if (!(p.tau > 0.0)) throw std::domain_error("waiting time must be > 0");
    acc += wt.log_pdf(p.tau) + mk.log_pdf(p.mark);
  }
  return acc;
}

double repulsion_log_weight(std::span<const double> taus, const RepulsionParams& rep) {
  if (!(rep.strength >= 0.0)) throw std::invalid_argument("repulsion strength must be >= 0");
  if (rep.window < 1) throw std::invalid_argument("repulsion window must be >= 1");
  double acc = 0.0;
  const auto n = static_cast<std::ptrdiff_t>(taus.size());
  for (std::ptrdiff_t j = 1; j < n; ++j) {
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, j - rep.window); i < j; ++i) {
      if (rep.strength == 0.0) continue;
      const double gap = taus[i] - taus[j];
      if (gap == 0.0) return kRepulsionFloor;
      acc -= std::log1p(rep.strength / (gap * gap));
    }
  }
  return std::max(acc, kRepulsionFloor);
}

double log_density_repulsive(std::span<const double> taus, const WaitingTimeModel& wt,
                             const RepulsionParams& rep) {
  double acc = 0.0;
  for (double t : taus) {
    if (!(t > 0.0)) throw std::domain_error("waiting time must be > 0");
    acc += wt.log_pdf(t);
  }
  const double rep_term = repulsion_log_weight(taus, rep);
  if (rep_term <= kRepulsionFloor) return kRepulsionFloor;
  return std::max(acc + rep_term, kRepulsionFloor);
}

RepulsiveDraw sample_repulsive(int n, const WaitingTimeModel& wt, const RepulsionParams& rep,
                               Rng& rng, int n_proposals) {
  if (n < 1) throw std::invalid_argument("sample_repulsive needs n >= 1");
  if (n_proposals < 100) throw std::invalid_argument("sample_repulsive needs n_proposals >= 100");
  std::gamma_distribution<double> gamma(wt.alpha(), 1.0 / wt.lambda());
  std::vector<double> proposals(static_cast<std::size_t>(n) * n_proposals);
  std::vector<double> logw(n_proposals);
  for (int p = 0; p < n_proposals; ++p) {
    std::span<double> draw(proposals.data() + static_cast<std::size_t>(p) * n, n);
    for (auto& t : draw) t = gamma(rng);
    logw[p] = repulsion_log_weight(draw, rep);
  }
  const double norm = log_sum_exp(logw);
  std::vector<double> w(n_proposals);
  double sum_sq = 0.0;
  for (int p = 0; p < n_proposals; ++p) {
    w[p] = std::exp(logw[p] - norm);
    sum_sq += w[p] * w[p];
  }
  RepulsiveDraw out;
  out.ess = 1.0 / sum_sq;
  if (out.ess < 10.0) {
    out.warning = "repulsive prior importance sampler has low effective sample size (" +
                  std::to_string(out.ess) + " < 10); increase n_proposals";
  }
  std::discrete_distribution<int> pick(w.begin(), w.end());
  const int chosen = pick(rng);
  out.taus.assign(proposals.begin() + static_cast<std::ptrdiff_t>(chosen) * n,
                  proposals.begin() + static_cast<std::ptrdiff_t>(chosen + 1) * n);
  return out;
}

std::vector<double> order_statistics_gap_sample(int n, double horizon, Rng& rng) {
  if (n < 2) throw std::invalid_argument("order statistics need n >= 2");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  std::vector<double> u(n);
  for (auto& v : u) v = rng.uniform() * horizon;
  std::sort(u.begin(), u.end());
  std::vector<double> gaps(n - 1);
  for (int i = 0; i + 1 < n; ++i) gaps[i] = u[i + 1] - u[i];
  return gaps;
}

}  // namespace hsde
