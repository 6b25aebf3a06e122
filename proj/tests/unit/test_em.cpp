#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hsde/datagen.hpp"
#include "hsde/em.hpp"
#include "hsde/linalg.hpp"
#include "stats.hpp"

using namespace hsde;

namespace {

// Single-particle ensemble holding the given path and events.
ParticleEnsemble single(const TimeGrid& g, const LatentPath& p, const InducingSequence& ev) {
  const std::vector<LatentPath> paths{p};
  const std::vector<InducingSequence> events{ev};
  const std::vector<double> w{1.0};
  return ParticleEnsemble::from_paths(g, paths, events, w);
}

InducingSequence one_event_past(const TimeGrid& g, int D) {
  return InducingSequence(g.origin(), {{g.end() - g.origin() + 1.0, Vector::Zero(D)}});
}

// Full joint log-density of one path, evaluated term by term.
double joint_log_density(const LatentPath& p, const InducingSequence& ev, const ModelParams& params,
                         const ObservationSeries& obs, const TimeGrid& g) {
  double total = params.initial.log_pdf(p.x.row(0).transpose(), p.y.row(0).transpose());
  const auto steps = snap_events(ev, g);
  std::size_t j = 0;
  for (int k = 1; k <= g.steps(); ++k) {
    while (steps[j] < k) ++j;
    const double next = g.time(steps[j]);
    const double prev = j == 0 ? g.origin() : g.time(steps[j - 1]);
    const Vector xp = p.x.row(k - 1).transpose(), yp = p.y.row(k - 1).transpose();
    const Vector x = p.x.row(k).transpose(), y = p.y.row(k).transpose();
    total += bridge_transition_logpdf(x, xp, k - 1, g, next, ev.points()[j].mark, prev, params.noise);
    total += integrator_transition_logpdf(y, yp, xp, g, params.noise);
    total += obs_loglik(obs.data.row(k - 1).transpose(), y, params.obs, g.dt());
  }
  total += log_density_sequence(ev, params.waiting, params.marks);
  total += params.priors.marks.log_density(params.marks.mu(), params.marks.sigma()) +
           alpha_prior_log_pdf(params.priors.alpha, params.waiting.alpha()) +
           lambda_prior_log_pdf(params.priors.lambda, params.waiting.lambda());
  return total;
}

}  // namespace

TEST(QFunction, SingleParticleEqualsJointDensity) {
  const auto prob = test::fixed_events_problem(50, 2, 3, 0.1, 21);
  Rng rng(1);
  const LatentPath p = simulate_path(prob.events, prob.grid, prob.params.noise, Vector::Zero(2), Vector::Zero(2), rng);
  const ParticleEnsemble ens = single(prob.grid, p, prob.events);
  EXPECT_NEAR(q_function(ens, prob.params, prob.obs), joint_log_density(p, prob.events, prob.params, prob.obs, prob.grid),
              1e-8);
}

TEST(QFunction, ObservationShiftOnlyChangesObsTerm) {
  const auto prob = test::fixed_events_problem(30, 1, 2, 0.1, 22);
  Rng rng(1);
  const LatentPath p = simulate_path(prob.events, prob.grid, prob.params.noise, Vector::Zero(1), Vector::Zero(1), rng);
  const ParticleEnsemble ens = single(prob.grid, p, prob.events);
  ObservationSeries shifted = prob.obs;
  shifted.data.array() += 3.0;
  const TrialView a{ens, prob.obs}, b{ens, shifted};
  const QTerms qa = q_terms(std::span<const TrialView>(&a, 1), prob.params);
  const QTerms qb = q_terms(std::span<const TrialView>(&b, 1), prob.params);
  EXPECT_NE(qa.obs, qb.obs);
  EXPECT_EQ(qa.initial, qb.initial);
  EXPECT_EQ(qa.integrator, qb.integrator);
  EXPECT_EQ(qa.bridge, qb.bridge);
  EXPECT_EQ(qa.waiting, qb.waiting);
  EXPECT_EQ(qa.marks, qb.marks);
  EXPECT_EQ(qa.priors, qb.priors);
}

TEST(UpdateObservation, NoiselessRegressionRecoversW) {
  const TimeGrid g(0.1, 200);
  Rng rng(3);
  Matrix W0(3, 2);
  W0 << 1.0, -2.0, 0.5, 0.3, -1.0, 4.0;
  const InducingSequence ev(0.0, {{7.0, Vector::Constant(2, 1.0)}, {9.0, Vector::Constant(2, -1.0)}, {8.0, Vector::Zero(2)}});
  const LatentPath p = simulate_path(ev, g, NoiseParams::uniform(2, 1.0, 0.5), Vector::Zero(2), Vector::Zero(2), rng);
  ObservationSeries obs{ObsKind::gaussian, Matrix(200, 3), 0.1, 0.0};
  for (int k = 1; k <= 200; ++k) obs.data.row(k - 1) = (W0 * p.y.row(k).transpose()).transpose();
  const ParticleEnsemble ens = single(g, p, ev);
  const TrialView v{ens, obs};
  const ObservationUpdate u = update_observation(std::span<const TrialView>(&v, 1));
  EXPECT_LT((u.W - W0).cwiseAbs().maxCoeff(), 1e-8);
  // R sits at the relative SPD floor.
  EXPECT_LT(u.R.cwiseAbs().maxCoeff(), 1e-9 * obs.data.squaredNorm() / obs.data.size());
  EXPECT_TRUE(u.warnings.empty());
}

TEST(UpdateObservation, TwoPointSlope) {
  // D = M = 1, two particles with one step each: W = sum w z y / sum w y^2.
  const TimeGrid g(1.0, 1);
  LatentPath a{Matrix::Zero(2, 1), Matrix::Zero(2, 1)}, b = a;
  a.y(1, 0) = 2.0;
  b.y(1, 0) = -1.0;
  const InducingSequence ev(0.0, {{1.0, Vector::Zero(1)}});
  const std::vector<LatentPath> paths{a, b};
  const std::vector<InducingSequence> events{ev, ev};
  const std::vector<double> w{0.3, 0.7};
  const ParticleEnsemble ens = ParticleEnsemble::from_paths(g, paths, events, w);
  ObservationSeries obs{ObsKind::gaussian, Matrix::Constant(1, 1, 1.5), 1.0, 0.0};
  const TrialView v{ens, obs};
  const ObservationUpdate u = update_observation(std::span<const TrialView>(&v, 1));
  const double slope = (0.3 * 1.5 * 2.0 + 0.7 * 1.5 * -1.0) / (0.3 * 4.0 + 0.7 * 1.0);
  EXPECT_NEAR(u.W(0, 0), slope, 1e-14);
  const double r = 0.3 * std::pow(1.5 - slope * 2.0, 2) + 0.7 * std::pow(1.5 + slope, 2);
  EXPECT_NEAR(u.R(0, 0), r, 1e-12);
}

TEST(UpdateObservation, PermutationInvariantAndOptimal) {
  const auto prob = test::fixed_events_problem(60, 2, 3, 0.1, 23);
  Rng rng(5);
  std::vector<LatentPath> paths;
  std::vector<InducingSequence> events;
  std::vector<double> w;
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  for (int u = 0; u < 6; ++u) {
    paths.push_back(simulate_path(prob.events, prob.grid, prob.params.noise, Vector::Zero(2), Vector::Zero(2), rng));
    events.push_back(prob.events);
    w.push_back(unif(rng));
  }
  const ParticleEnsemble e1 = ParticleEnsemble::from_paths(prob.grid, paths, events, w);
  std::reverse(paths.begin(), paths.end());
  std::reverse(w.begin(), w.end());
  const ParticleEnsemble e2 = ParticleEnsemble::from_paths(prob.grid, paths, events, w);
  const TrialView v1{e1, prob.obs}, v2{e2, prob.obs};
  const ObservationUpdate u1 = update_observation(std::span<const TrialView>(&v1, 1));
  const ObservationUpdate u2 = update_observation(std::span<const TrialView>(&v2, 1));
  // Sums visit particles in a different order, so allow rounding.
  EXPECT_LT((u1.W - u2.W).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((u1.R - u2.R).cwiseAbs().maxCoeff(), 1e-12);

  ModelParams p = prob.params;
  p.obs = GaussianObsModel(u1.W, u1.R);
  const double best = q_terms(std::span<const TrialView>(&v1, 1), p).obs;
  for (int i = 0; i < 100; ++i) {
    ModelParams q = prob.params;
    q.obs = GaussianObsModel(u1.W + test::random_matrix(3, 2, rng, 1e-3), u1.R);
    EXPECT_LE(q_terms(std::span<const TrialView>(&v1, 1), q).obs, best + 1e-9);
  }
}

TEST(UpdateObservation, DiagonalAndFixedModes) {
  const auto prob = test::fixed_events_problem(40, 2, 3, 0.1, 24);
  Rng rng(1);
  const LatentPath p = simulate_path(prob.events, prob.grid, prob.params.noise, Vector::Zero(2), Vector::Zero(2), rng);
  const ParticleEnsemble ens = single(prob.grid, p, prob.events);
  const TrialView v{ens, prob.obs};
  const auto d = update_observation(std::span<const TrialView>(&v, 1), NoiseCovMode::diagonal);
  EXPECT_EQ(d.R(0, 1), 0.0);
  const Matrix R0 = 2.0 * Matrix::Identity(3, 3);
  const auto f = update_observation(std::span<const TrialView>(&v, 1), NoiseCovMode::fixed, &R0);
  EXPECT_EQ(f.R, R0);
}

TEST(UpdateObservation, SingularGramFallsBackToRidge) {
  const TimeGrid g(1.0, 3);
  LatentPath p{Matrix::Zero(4, 2), Matrix::Zero(4, 2)};
  p.y.col(0) << 0.0, 1.0, 2.0, 3.0;
  p.y.col(1) = p.y.col(0);  // collinear latent dimensions
  const InducingSequence ev(0.0, {{5.0, Vector::Zero(2)}});
  const ParticleEnsemble ens = single(g, p, ev);
  ObservationSeries obs{ObsKind::gaussian, Matrix::Ones(3, 1), 1.0, 0.0};
  const TrialView v{ens, obs};
  const auto u = update_observation(std::span<const TrialView>(&v, 1));
  EXPECT_FALSE(u.warnings.empty());
  EXPECT_TRUE(u.W.allFinite());
}

namespace {

SpikeDesign random_design(Rng& rng, int n, int D, double c_scale = 1.0) {
  SpikeDesign d;
  d.y = test::random_matrix(n, D, rng, 0.5);
  d.weight = Vector::Constant(n, 1.0 / n) * 50.0;
  d.counts = Matrix(n, 2);
  std::poisson_distribution<int> pois(c_scale);
  for (int i = 0; i < n; ++i) {
    d.counts(i, 0) = pois(rng);
    d.counts(i, 1) = 0.0;
  }
  d.dt = 0.05;
  return d;
}

}  // namespace

TEST(SpikeLoadings, GradientAndHessianMatchFiniteDifferences) {
  Rng rng(31);
  const SpikeDesign d = random_design(rng, 400, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector theta = test::random_matrix(3, 1, rng);
    const Vector g = spike_gradient(d, 0, theta);
    const Matrix H = spike_hessian(d, 0, theta);
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
      Vector tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (spike_objective(d, 0, tp) - spike_objective(d, 0, tm)) / (2 * h);
      EXPECT_LE(std::abs(fd - g[i]), 1e-5 * std::max(1.0, std::abs(g[i])));
      const Vector fdh = (spike_gradient(d, 0, tp) - spike_gradient(d, 0, tm)) / (2 * h);
      for (int j = 0; j < 3; ++j) EXPECT_LE(std::abs(fdh[j] - H(j, i)), 1e-5 * std::max(1.0, std::abs(H(j, i))));
    }
  }
}

TEST(SpikeLoadings, ConstantLatentRecoversMeanCount) {
  // One neuron, y = 1 everywhere: exp(w + b) dt matches the mean count.
  const TimeGrid g(0.01, 500);
  LatentPath p{Matrix::Ones(501, 1), Matrix::Ones(501, 1)};
  const InducingSequence ev = one_event_past(g, 1);
  const ParticleEnsemble ens = single(g, p, ev);
  Rng rng(2);
  std::poisson_distribution<int> pois(0.4);
  ObservationSeries obs{ObsKind::spikes, Matrix(500, 1), 0.01, 0.0};
  for (int k = 0; k < 500; ++k) obs.data(k, 0) = pois(rng);
  const TrialView v{ens, obs};
  const SpikeUpdate u = update_spike_loadings(std::span<const TrialView>(&v, 1),
                                              PointProcessObsModel(Matrix::Zero(1, 1), Vector::Zero(1)));
  EXPECT_NEAR(std::exp(u.W(0, 0) + u.b[0]) * 0.01, obs.data.mean(), 1e-6);
}

TEST(SpikeLoadings, SilentNeuronDrivesRateToFloor) {
  const TimeGrid g(0.005, 600);
  Rng rng(3);
  LatentPath p{test::random_matrix(601, 2, rng), test::random_matrix(601, 2, rng)};
  const ParticleEnsemble ens = single(g, p, one_event_past(g, 2));
  ObservationSeries obs{ObsKind::spikes, Matrix::Zero(600, 1), 0.005, 0.0};
  const TrialView v{ens, obs};
  const SpikeUpdate u = update_spike_loadings(std::span<const TrialView>(&v, 1),
                                              PointProcessObsModel(Matrix::Zero(1, 2), Vector::Constant(1, std::log(10.0))));
  const PointProcessObsModel fitted(u.W, u.b);
  for (int k = 0; k <= 600; ++k) EXPECT_LT(fitted.rates(p.y.row(k).transpose())[0], 1e-3);
}

TEST(WaitingTime, GradientMatchesFiniteDifferences) {
  const WaitingStats s{12.0, 30.0, 9.0};
  const AlphaPrior aps[] = {GammaPrior{2.0, 0.5}, ExponentialPrior{0.3}, LognormalPrior{1.0, 0.5}, FlatPrior{}};
  const LambdaPrior lps[] = {GammaPrior{2.0, 1.0}, InvGammaPrior{3.0, 2.0}, FlatPrior{}};
  for (const auto& ap : aps) {
    for (const auto& lp : lps) {
      for (double a : {0.5, 2.0, 7.0}) {
        for (double l : {0.2, 1.0, 3.0}) {
          const Eigen::Vector2d g = waiting_gradient(s, a, l, ap, lp);
          const double h = 1e-6;
          const double fa = (waiting_objective(s, a * std::exp(h), l, ap, lp) - waiting_objective(s, a * std::exp(-h), l, ap, lp)) / (2 * h);
          const double fl = (waiting_objective(s, a, l * std::exp(h), ap, lp) - waiting_objective(s, a, l * std::exp(-h), ap, lp)) / (2 * h);
          EXPECT_LE(std::abs(fa - g[0]), 1e-5 * std::max(1.0, std::abs(g[0])));
          EXPECT_LE(std::abs(fl - g[1]), 1e-5 * std::max(1.0, std::abs(g[1])));
        }
      }
    }
  }
}

TEST(WaitingTime, RecoversGeneratorWithFlatPriors) {
  Rng rng(41);
  const WaitingTimeModel truth(20.0, 0.5);
  std::vector<double> taus(10000), w(10000, 1.0);
  for (auto& t : taus) t = sample_waiting_time(truth, rng);
  PriorHyperparams pr = PriorHyperparams::weak(1);
  pr.alpha = FlatPrior{};
  pr.lambda = FlatPrior{};
  const WaitingUpdate u = update_waiting_time(waiting_stats(taus, w), pr, WaitingTimeModel(1.0, 1.0));
  EXPECT_NEAR(u.model.alpha() / 20.0, 1.0, 0.05);
  EXPECT_NEAR(u.model.lambda() / 0.5, 1.0, 0.05);
  // The MAP point is a stationary point of the objective.
  const Eigen::Vector2d g = waiting_gradient(waiting_stats(taus, w), u.model.alpha(), u.model.lambda(), pr.alpha, pr.lambda);
  EXPECT_LT(g.norm(), 1e-3 * 10000);
}

TEST(WaitingTime, GammaPriorLambdaIsClosedForm) {
  Rng rng(42);
  std::vector<double> taus(50), w(50, 1.0);
  for (auto& t : taus) t = sample_waiting_time(WaitingTimeModel(3.0, 1.0), rng);
  PriorHyperparams pr = PriorHyperparams::weak(1);
  pr.lambda = GammaPrior{2.0, 3.0};
  const WaitingStats s = waiting_stats(taus, w);
  const WaitingUpdate u = update_waiting_time(s, pr, WaitingTimeModel(1.0, 1.0));
  EXPECT_NEAR(u.model.lambda(), (2.0 - 1.0 + u.model.alpha() * s.n) / (3.0 + s.sum_tau), 1e-12);
}

TEST(WaitingTime, DegenerateEqualTausHitAlphaCap) {
  std::vector<double> taus(100, 3.0), w(100, 1.0);
  PriorHyperparams pr = PriorHyperparams::weak(1);
  pr.alpha = FlatPrior{};
  pr.lambda = FlatPrior{};
  const WaitingUpdate u = update_waiting_time(waiting_stats(taus, w), pr, WaitingTimeModel(1.0, 1.0));
  EXPECT_NEAR(u.model.alpha(), kAlphaCap, 1e-3 * kAlphaCap);
  EXPECT_NEAR(u.model.mean(), 3.0, 1e-6);
}

TEST(WaitingTime, PriorDominatesSingleEvent) {
  PriorHyperparams pr = PriorHyperparams::weak(1);
  pr.alpha = GammaPrior{2000.0, 100.0};
  pr.lambda = GammaPrior{500.0, 1000.0};
  const std::vector<double> taus{100.0}, w{1.0};
  const WaitingUpdate u = update_waiting_time(waiting_stats(taus, w), pr, WaitingTimeModel(1.0, 1.0));
  EXPECT_NEAR(u.model.alpha() / 20.0, 1.0, 0.1);
  EXPECT_NEAR(u.model.lambda() / 0.5, 1.0, 0.1);
  EXPECT_FALSE(u.warnings.empty());
}

TEST(Marks, RecoverGeneratorFromManySamples) {
  Rng rng(51);
  Matrix S(2, 2);
  S << 2.0, 0.6, 0.6, 1.0;
  Vector mu(2);
  mu << 1.0, -3.0;
  const MarkModel truth(mu, S);
  std::vector<Vector> marks;
  std::vector<double> w;
  for (int i = 0; i < 10000; ++i) {
    marks.push_back(truth.sample(rng));
    w.push_back(1.0);
  }
  const MarkModel m = update_marks(mark_stats(marks, w, 2), PriorHyperparams::weak(2).marks);
  EXPECT_LT((m.mu() - mu).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((m.sigma() - S).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Marks, NoEventsGivePriorMode) {
  const NiwPrior prior{Vector::Constant(2, 0.5), 1.0, 5.0, 3.0 * Matrix::Identity(2, 2)};
  const MarkModel m = update_marks(mark_stats(std::vector<Vector>{}, std::vector<double>{}, 2), prior);
  EXPECT_EQ(m.mu(), prior.mu0);
  EXPECT_LT((m.sigma() - prior.psi / (5.0 + 2.0 + 2.0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Marks, SingleMarkWithVanishingKappa) {
  const NiwPrior prior{Vector::Zero(1), 1e-300, 2.0, Matrix::Identity(1, 1)};
  const std::vector<Vector> marks{Vector::Constant(1, 3.7)};
  const std::vector<double> w{1.0};
  EXPECT_EQ(update_marks(mark_stats(marks, w, 1), prior).mu()[0], 3.7);
}

TEST(Marks, AgreesWithGridMaximisation) {
  // D = 1 brute force over (mu, sigma^2) of the weighted normal log-likelihood plus the NIW log-density.
  const NiwPrior prior{Vector::Constant(1, 1.0), 0.5, 3.0, Matrix::Constant(1, 1, 2.0)};
  const std::vector<Vector> marks{Vector::Constant(1, 0.2), Vector::Constant(1, 2.5), Vector::Constant(1, -0.7)};
  const std::vector<double> w{0.5, 1.0, 0.8};
  const MarkModel m = update_marks(mark_stats(marks, w, 1), prior);
  double best = -INFINITY, bmu = 0, bs = 0;
  for (double mu = -1.0; mu <= 2.0; mu += 0.002) {
    for (double s2 = 0.1; s2 <= 3.0; s2 += 0.002) {
      const MarkModel c(Vector::Constant(1, mu), Matrix::Constant(1, 1, s2));
      double f = prior.log_density(c.mu(), c.sigma());
      for (std::size_t i = 0; i < marks.size(); ++i) f += w[i] * c.log_pdf(marks[i]);
      if (f > best) {
        best = f;
        bmu = mu;
        bs = s2;
      }
    }
  }
  EXPECT_NEAR(m.mu()[0], bmu, 0.002);
  EXPECT_NEAR(m.sigma()(0, 0), bs, 0.002);
}

namespace {

// Ensemble of independent bridge paths through shared events.
ParticleEnsemble bridge_paths(const TimeGrid& g, const InducingSequence& ev, double sigma_x, int n, Rng& rng,
                              double scale = 1.0) {
  std::vector<LatentPath> paths;
  std::vector<InducingSequence> events;
  for (int i = 0; i < n; ++i) {
    LatentPath p = simulate_path(ev, g, NoiseParams::uniform(1, sigma_x, 0.1), Vector::Zero(1), Vector::Zero(1), rng);
    p.x *= scale;
    paths.push_back(std::move(p));
    std::vector<InducingPoint> pts = ev.points();
    for (auto& q : pts) q.mark *= scale;
    events.emplace_back(ev.origin(), pts);
  }
  return ParticleEnsemble::from_paths(g, paths, events, std::vector<double>(n, 1.0));
}

}  // namespace

TEST(SigmaX, RecoveredFromTransitions) {
  const TimeGrid g(0.01, 1000);
  const InducingSequence ev(0.0, {{2.0, Vector::Constant(1, 1.0)}, {3.0, Vector::Constant(1, -1.0)},
                                  {2.5, Vector::Constant(1, 0.5)}, {3.0, Vector::Zero(1)}});
  Rng rng(61);
  const ParticleEnsemble ens = bridge_paths(g, ev, 0.1, 10, rng);
  ObservationSeries obs{ObsKind::gaussian, Matrix::Zero(1000, 1), 0.01, 0.0};
  const TrialView v{ens, obs};
  const SigmaXUpdate u = update_sigma_x(std::span<const TrialView>(&v, 1), Vector::Ones(1));
  EXPECT_NEAR(u.sigma_x[0] / 0.1, 1.0, 0.05);
}

TEST(SigmaX, ZeroNoiseHitsFloorAndScalingIsHomogeneous) {
  const TimeGrid g(0.01, 300);
  const InducingSequence ev(0.0, {{1.5, Vector::Constant(1, 1.0)}, {2.0, Vector::Constant(1, -1.0)}});
  ObservationSeries obs{ObsKind::gaussian, Matrix::Zero(300, 1), 0.01, 0.0};
  Rng rng(62);
  const ParticleEnsemble flat = bridge_paths(g, ev, 0.0, 2, rng);
  const TrialView v0{flat, obs};
  EXPECT_LE(update_sigma_x(std::span<const TrialView>(&v0, 1), Vector::Ones(1)).sigma_x[0], 1e-12);

  Rng r1(7), r2(7);
  const ParticleEnsemble a = bridge_paths(g, ev, 0.3, 3, r1);
  const ParticleEnsemble b = bridge_paths(g, ev, 0.3, 3, r2, 2.5);
  const TrialView va{a, obs}, vb{b, obs};
  const double sa = update_sigma_x(std::span<const TrialView>(&va, 1), Vector::Ones(1)).sigma_x[0];
  const double sb = update_sigma_x(std::span<const TrialView>(&vb, 1), Vector::Ones(1)).sigma_x[0];
  EXPECT_NEAR(sb / sa, 2.5, 1e-9);
}

namespace {

ObservationSeries small_chirp(std::uint64_t seed) {
  ChirpSpec spec;
  spec.duration = 100.0;
  spec.f0 = 0.01;
  spec.f1 = 0.05;
  spec.seed = seed;
  return gen_chirp(spec).obs;
}

ModelParams chirp_init() {
  ModelParams p = test::gaussian_params(Matrix::Ones(1, 1), Matrix::Constant(1, 1, 0.1), 0.1, 1e-2,
                                        WaitingTimeModel::from_moments(10.0, 4.0));
  return p;
}

}  // namespace

TEST(Fit, MonotoneSurrogateAudit) {
  const ObservationSeries obs = small_chirp(3);
  EmConfig cfg;
  cfg.n_iters = 20;
  cfg.smc.particles = 300;
  cfg.smc.ess_threshold = 1.0;
  cfg.smc.seed = 5;
  cfg.update_sigma_x = true;
  const FitResult r = fit(obs, chirp_init(), cfg);
  ASSERT_EQ(r.trace.size(), 20u);
  for (const auto& it : r.trace) EXPECT_GE(it.q_after, it.q_before - 1e-6) << "iteration " << it.iteration;
}

TEST(Fit, AllUpdatesOffKeepsParameters) {
  const ObservationSeries obs = small_chirp(4);
  EmConfig cfg;
  cfg.n_iters = 3;
  cfg.smc.particles = 100;
  cfg.update_obs = cfg.update_waiting = cfg.update_marks = cfg.update_sigma_x = false;
  const ModelParams init = chirp_init();
  const FitResult r = fit(obs, init, cfg);
  ASSERT_EQ(r.trace.size(), 3u);
  const auto& g0 = std::get<GaussianObsModel>(init.obs);
  const auto& g1 = std::get<GaussianObsModel>(r.params.obs);
  EXPECT_EQ(g0.W(), g1.W());
  EXPECT_EQ(g0.R(), g1.R());
  EXPECT_EQ(init.waiting.alpha(), r.params.waiting.alpha());
  EXPECT_EQ(init.marks.sigma(), r.params.marks.sigma());
  for (const auto& it : r.trace) EXPECT_TRUE(std::isfinite(it.log_ml));
}

TEST(Fit, MultiTrialPoolingReducesToSingleTrial) {
  const ObservationSeries a = small_chirp(5), b = small_chirp(6);
  EmConfig cfg;
  cfg.n_iters = 2;
  cfg.smc.particles = 100;
  const ModelParams init = chirp_init();
  const std::vector<ObservationSeries> one{a};
  const FitResult single_trial = fit(a, init, cfg);
  const FitResult pooled_one = fit(std::span<const ObservationSeries>(one), init, cfg);
  EXPECT_EQ(std::get<GaussianObsModel>(single_trial.params.obs).W(), std::get<GaussianObsModel>(pooled_one.params.obs).W());
  EXPECT_EQ(single_trial.trace.back().log_ml, pooled_one.trace.back().log_ml);

  // Pooled statistics: the two-trial update equals the regression on both
  // trials' E-steps combined.
  const std::vector<ObservationSeries> both{a, b};
  cfg.n_iters = 1;
  cfg.final_estep = false;
  const FitResult pooled = fit(std::span<const ObservationSeries>(both), init, cfg);
  const std::vector<TrialView> views{{*pooled.estep[0].ensemble, a}, {*pooled.estep[1].ensemble, b}};
  const ObservationUpdate direct = update_observation(views);
  EXPECT_EQ(std::get<GaussianObsModel>(pooled.params.obs).W(), direct.W);
  EXPECT_EQ(pooled.estep.size(), 2u);
}

TEST(UpdateObservation, FixedLoadingsRefitOnlyNoise) {
  // Two-point problem: with W held at w0 the residual covariance is sum w (z - w0 y)^2.
  const TimeGrid g(1.0, 1);
  LatentPath a{Matrix::Zero(2, 1), Matrix::Zero(2, 1)}, b = a;
  a.y(1, 0) = 2.0;
  b.y(1, 0) = -1.0;
  const InducingSequence ev(0.0, {{1.0, Vector::Zero(1)}});
  const std::vector<LatentPath> paths{a, b};
  const std::vector<InducingSequence> events{ev, ev};
  const ParticleEnsemble ens = ParticleEnsemble::from_paths(g, paths, events, std::vector<double>{0.3, 0.7});
  ObservationSeries obs{ObsKind::gaussian, Matrix::Constant(1, 1, 1.5), 1.0, 0.0};
  const TrialView v{ens, obs};
  const Matrix w0 = Matrix::Constant(1, 1, 0.5);
  const ObservationUpdate u = update_observation(std::span<const TrialView>(&v, 1), NoiseCovMode::full, nullptr, &w0);
  EXPECT_EQ(u.W, w0);
  EXPECT_NEAR(u.R(0, 0), 0.3 * std::pow(1.5 - 1.0, 2) + 0.7 * std::pow(1.5 + 0.5, 2), 1e-12);
}

TEST(SpikeBaselines, MatchWeightedExpectedCounts) {
  const TimeGrid g(0.01, 300);
  Rng rng(6);
  LatentPath p{test::random_matrix(301, 2, rng, 0.5), test::random_matrix(301, 2, rng, 0.5)};
  const ParticleEnsemble ens = single(g, p, one_event_past(g, 2));
  const Matrix W = test::random_matrix(3, 2, rng);
  ObservationSeries obs{ObsKind::spikes, Matrix::Zero(300, 3), 0.01, 0.0};
  std::poisson_distribution<int> pois(0.2);
  for (int k = 0; k < 300; ++k) {
    for (int m = 0; m < 2; ++m) obs.data(k, m) = pois(rng);
  }
  const TrialView v{ens, obs};
  const Vector b = update_spike_baselines(std::span<const TrialView>(&v, 1), PointProcessObsModel(W, Vector::Zero(3)));
  const PointProcessObsModel fitted(W, b);
  for (int m = 0; m < 2; ++m) {
    double expected = 0.0;
    for (int k = 1; k <= 300; ++k) expected += fitted.rates(p.y.row(k).transpose())[m] * 0.01;
    EXPECT_NEAR(expected, obs.data.col(m).sum(), 1e-9 * obs.data.col(m).sum());
  }
  // A silent neuron gets a small but finite rate.
  EXPECT_TRUE(std::isfinite(b[2]));
  double silent = 0.0;
  for (int k = 1; k <= 300; ++k) silent += fitted.rates(p.y.row(k).transpose())[2] * 0.01;
  EXPECT_LT(silent, 1e-3);
}
