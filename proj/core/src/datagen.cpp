#include "hsde/datagen.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace hsde {

void ChirpSpec::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("chirp duration must be positive");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("chirp sample rate must be positive");
  if (!(f0 > 0.0 && f1 >= f0)) throw std::invalid_argument("chirp needs f1 >= f0 > 0");
  if (!(noise_var >= 0.0)) throw std::invalid_argument("chirp noise variance must be non-negative");
}

ChirpData gen_chirp(const ChirpSpec& spec) {
  spec.validate();
  const double dt = 1.0 / spec.sample_rate;
  const int K = static_cast<int>(std::llround(spec.duration * spec.sample_rate));
  Rng rng(stream_seed(spec.seed, 0x63686972ull));
  std::normal_distribution<double> normal(0.0, std::sqrt(spec.noise_var));
  ChirpData out{{ObsKind::gaussian, Matrix(K, 1), dt, 0.0}, Vector(K)};
  for (int k = 0; k < K; ++k) {
    const double t = (k + 1) * dt;
    const double phase = spec.f0 * t + (spec.f1 - spec.f0) * t * t / (2.0 * spec.duration);
    out.clean[k] = spec.amplitude * std::cos(2.0 * std::numbers::pi * phase);
    out.obs.data(k, 0) = out.clean[k] + (spec.noise_var > 0.0 ? normal(rng) : 0.0);
  }
  return out;
}

void LorenzSpec::validate() const {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("Lorenz sample rate must be positive");
  if (!(duration > 0.0)) throw std::invalid_argument("Lorenz duration must be positive");
  if (obs_dim < 3) throw std::invalid_argument("Lorenz projection needs at least 3 observed dimensions");
  if (!(max_step > 0.0)) throw std::invalid_argument("Lorenz integration step must be positive");
  if (noise_cov) {
    if (noise_cov->rows() != obs_dim || noise_cov->cols() != obs_dim) {
      throw std::invalid_argument("Lorenz noise covariance must be obs_dim x obs_dim");
    }
  } else if (!(noise_var >= 0.0)) {
    throw std::invalid_argument("Lorenz noise variance must be non-negative");
  }
  if (projection && (projection->rows() != obs_dim || projection->cols() != 3)) {
    throw std::invalid_argument("Lorenz projection must be obs_dim x 3");
  }
}

namespace {

Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& s, double sigma, double rho, double beta) {
  return {sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2]};
}

Eigen::Vector3d rk4(const Eigen::Vector3d& s, double h, double sigma, double rho, double beta) {
  const Eigen::Vector3d k1 = lorenz_rhs(s, sigma, rho, beta);
  const Eigen::Vector3d k2 = lorenz_rhs(s + 0.5 * h * k1, sigma, rho, beta);
  const Eigen::Vector3d k3 = lorenz_rhs(s + 0.5 * h * k2, sigma, rho, beta);
  const Eigen::Vector3d k4 = lorenz_rhs(s + h * k3, sigma, rho, beta);
  return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Eigen::Vector3d lorenz_integrate(const Eigen::Vector3d& start, double sigma, double rho, double beta,
                                 double duration, double step) {
  const long n = std::max(1L, static_cast<long>(std::ceil(duration / step - 1e-9)));
  const double h = duration / static_cast<double>(n);
  Eigen::Vector3d s = start;
  for (long i = 0; i < n; ++i) {
    s = rk4(s, h, sigma, rho, beta);
    if (!s.allFinite()) throw NumericalError("Lorenz state became non-finite at internal step " + std::to_string(i));
  }
  return s;
}

LorenzData gen_lorenz(const LorenzSpec& spec) {
  spec.validate();
  const double dt = 1.0 / spec.sample_rate;
  const int K = static_cast<int>(std::llround(spec.duration * spec.sample_rate));
  Rng proj_rng(stream_seed(spec.seed, 0x6c6f72ull, 1));
  Rng noise_rng(stream_seed(spec.seed, 0x6c6f72ull, 2));
  std::normal_distribution<double> normal;

  LorenzData out{{ObsKind::gaussian, Matrix(K, spec.obs_dim), dt, 0.0}, Matrix(K, 3), Matrix()};
  if (spec.projection) {
    out.projection = *spec.projection;
  } else {
    out.projection.resize(spec.obs_dim, 3);
    for (Eigen::Index i = 0; i < out.projection.size(); ++i) out.projection.data()[i] = normal(proj_rng);
  }
  Matrix noise_chol = Matrix::Zero(spec.obs_dim, spec.obs_dim);
  if (spec.noise_cov) {
    Eigen::LLT<Matrix> llt(*spec.noise_cov);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("Lorenz noise covariance must be SPD");
    noise_chol = llt.matrixL();
  } else {
    noise_chol.diagonal().setConstant(std::sqrt(spec.noise_var));
  }
  Eigen::Vector3d s = spec.x0;
  for (int k = 0; k < K; ++k) {
    try {
      s = lorenz_integrate(s, spec.sigma, spec.rho, spec.beta, dt, spec.max_step);
    } catch (const NumericalError& e) {
      throw NumericalError("Lorenz integration diverged before sample " + std::to_string(k + 1) + ": " + e.what());
    }
    out.latent.row(k) = s.transpose();
    Vector eps(spec.obs_dim);
    for (int m = 0; m < spec.obs_dim; ++m) eps[m] = normal(noise_rng);
    out.obs.data.row(k) = (out.projection * s + noise_chol * eps).transpose();
  }
  return out;
}

void SpikeSpec::validate() const {
  if (n_neurons < 1) throw std::invalid_argument("spike generator needs at least one neuron");
  if (!(duration > 0.0) || !(dt > 0.0)) throw std::invalid_argument("spike duration and dt must be positive");
  if (dim < 1) throw std::invalid_argument("latent dimension must be at least 1");
  if (!(baseline_min > 0.0 && baseline_max >= baseline_min)) {
    throw std::invalid_argument("baseline rates must satisfy 0 < min <= max");
  }
  if (!(loading_scale >= 0.0)) throw std::invalid_argument("loading scale must be non-negative");
  if (!(mean_wait > dt && std_wait > 0.0)) throw std::invalid_argument("waiting-time mean must exceed dt; std must be positive");
  if (!(mark_std > 0.0)) throw std::invalid_argument("mark std must be positive");
}

InducingSequence sample_events(const ModelParams& params, const TimeGrid& grid, Rng& rng) {
  InducingSequence seq(grid.origin(), {});
  int last_step = 0;
  double t = grid.origin();
  while (last_step < grid.steps()) {
    const double tau = sample_waiting_time(params.waiting, rng, grid.dt());
    const Vector mark = params.marks.sample(rng);
    const int step = grid.nearest_step(t + tau);
    if (step <= last_step) continue;  // snapped into the same bin; redraw
    t += tau;
    last_step = step;
    seq.push_back({tau, mark});
  }
  return seq;
}

ModelSample sample_model(const ModelParams& params, const TimeGrid& grid, Rng& rng) {
  params.validate();
  std::normal_distribution<double> normal;
  const int D = params.dim();
  Vector x0(D), y0(D);
  for (int d = 0; d < D; ++d) x0[d] = params.initial.x_mean[d] + params.initial.x_std[d] * normal(rng);
  for (int d = 0; d < D; ++d) y0[d] = params.initial.y_mean[d] + params.initial.y_std[d] * normal(rng);
  InducingSequence events = sample_events(params, grid, rng);
  LatentPath path = simulate_path(events, grid, params.noise, x0, y0, rng);
  const int K = grid.steps();
  ObservationSeries obs{obs_kind(params.obs), Matrix(K, obs_dim(params.obs)), grid.dt(), grid.origin()};
  for (int k = 1; k <= K; ++k) {
    const Vector y = path.y.row(k).transpose();
    obs.data.row(k - 1) = std::visit(Overloaded{[&](const GaussianObsModel& g) { return sample_observation(y, g, rng); },
                                                [&](const PointProcessObsModel& p) {
                                                  return sample_observation(y, p, grid.dt(), rng);
                                                }},
                                     params.obs)
                              .transpose();
  }
  return {std::move(events), std::move(path), std::move(obs)};
}

SpikeData gen_spikes(const SpikeSpec& spec) {
  spec.validate();
  const int K = static_cast<int>(std::llround(spec.duration / spec.dt));
  const TimeGrid grid(spec.dt, K, 0.0);
  const int D = spec.dim;
  Rng rng(stream_seed(spec.seed, 0x7370696bull));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(std::log(spec.baseline_min), std::log(spec.baseline_max));

  Matrix W(spec.n_neurons, D);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = spec.loading_scale * normal(rng);
  Vector b(spec.n_neurons);
  for (int m = 0; m < spec.n_neurons; ++m) b[m] = spec.baseline_min == spec.baseline_max ? std::log(spec.baseline_min) : unif(rng);

  const ModelParams params{PointProcessObsModel(W, b),
                           NoiseParams::uniform(D, spec.sigma_x, spec.sigma_y),
                           WaitingTimeModel::from_moments(spec.mean_wait, spec.std_wait),
                           MarkModel(Vector::Zero(D), spec.mark_std * spec.mark_std * Matrix::Identity(D, D)),
                           PriorHyperparams::weak(D),
                           InitialPrior{Vector::Zero(D), Vector::Zero(D), Vector::Zero(D), Vector::Zero(D)}};
  InducingSequence events = sample_events(params, grid, rng);
  LatentPath path = simulate_path(events, grid, params.noise, Vector::Zero(D), Vector::Zero(D), rng);
  SpikeData out{{ObsKind::spikes, Matrix(K, spec.n_neurons), spec.dt, 0.0}, std::move(events), std::move(path), W, b, {}};
  const auto& model = std::get<PointProcessObsModel>(params.obs);
  double max_mean = 0.0;
  for (int k = 1; k <= K; ++k) {
    const Vector rates = model.rates(out.path.y.row(k).transpose());
    max_mean = std::max(max_mean, rates.maxCoeff() * spec.dt);
    for (int m = 0; m < spec.n_neurons; ++m) {
      std::poisson_distribution<long> pois(rates[m] * spec.dt);
      out.obs.data(k - 1, m) = static_cast<double>(pois(rng));
    }
  }
  if (max_mean > 20.0) {
    out.warnings.push_back("expected count per bin reaches " + std::to_string(max_mean) +
                           "; the bin width is too coarse for the rates");
  }
  return out;
}

std::vector<int> select_active_neurons(const ObservationSeries& spikes, double min_count, double window) {
  if (spikes.kind != ObsKind::spikes) throw std::invalid_argument("neuron selection needs spike counts");
  std::vector<int> keep;
  for (int m = 0; m < spikes.dim(); ++m) {
    double total = 0.0;
    for (int k = 0; k < spikes.steps() && spikes.time(k) - spikes.origin <= window + 1e-9 * spikes.dt; ++k) {
      total += spikes.data(k, m);
    }
    if (total > min_count) keep.push_back(m);
  }
  return keep;
}

ObservationSeries select_columns(const ObservationSeries& obs, const std::vector<int>& columns) {
  ObservationSeries out{obs.kind, Matrix(obs.steps(), static_cast<Eigen::Index>(columns.size())), obs.dt, obs.origin};
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] < 0 || columns[j] >= obs.dim()) throw std::invalid_argument("column index out of range");
    out.data.col(static_cast<Eigen::Index>(j)) = obs.data.col(columns[j]);
  }
  return out;
}

}  // namespace hsde
