#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>

#include "hsde/datagen.hpp"
#include "hsde/oracle.hpp"
#include "hsde_cli/cli.hpp"

namespace hsde::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t seed_of(const Json& config) {
  if (const long s = config_value<long>(config, "seed", 1); s >= 0) return static_cast<std::uint64_t>(s);
  throw std::invalid_argument("config.seed: must be >= 0");
}

fs::path output_dir(const Json& config) {
  const fs::path dir = config_value<std::string>(config, "output_dir", ".");
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

Json parse_json_file(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": invalid JSON: " + e.what());
  }
}

std::string trial_suffix(std::size_t t, std::size_t n) { return n == 1 ? "" : "_trial" + std::to_string(t + 1); }

// --- simulate -----------------------------------------------------------------

ChirpSpec chirp_spec(const Json& c, std::uint64_t seed) {
  ChirpSpec s;
  s.duration = config_value(c, "chirp.duration", s.duration);
  s.sample_rate = config_value(c, "chirp.sample_rate", s.sample_rate);
  s.f0 = config_value(c, "chirp.f0", s.f0);
  s.f1 = config_value(c, "chirp.f1", s.f1);
  s.amplitude = config_value(c, "chirp.amplitude", s.amplitude);
  s.noise_var = config_value(c, "chirp.noise_var", s.noise_var);
  s.seed = seed;
  return s;
}

LorenzSpec lorenz_spec(const Json& c, std::uint64_t seed) {
  LorenzSpec s;
  s.sigma = config_value(c, "lorenz.sigma", s.sigma);
  s.rho = config_value(c, "lorenz.rho", s.rho);
  s.beta = config_value(c, "lorenz.beta", s.beta);
  if (has_config_value(c, "lorenz.x0")) {
    const auto x0 = config_value<std::vector<double>>(c, "lorenz.x0", {});
    if (x0.size() != 3) throw std::invalid_argument("config.lorenz.x0: expected 3 numbers");
    s.x0 = Eigen::Vector3d(x0[0], x0[1], x0[2]);
  }
  s.duration = config_value(c, "lorenz.duration", s.duration);
  s.sample_rate = config_value(c, "lorenz.sample_rate", s.sample_rate);
  s.obs_dim = config_value(c, "lorenz.obs_dim", s.obs_dim);
  s.noise_var = config_value(c, "lorenz.noise_var", s.noise_var);
  if (has_config_value(c, "lorenz.noise_cov")) s.noise_cov = matrix_from_json(c["lorenz"]["noise_cov"], "config.lorenz.noise_cov");
  if (has_config_value(c, "lorenz.projection")) s.projection = matrix_from_json(c["lorenz"]["projection"], "config.lorenz.projection");
  s.max_step = config_value(c, "lorenz.max_step", s.max_step);
  s.seed = seed;
  return s;
}

SpikeSpec spike_spec(const Json& c, std::uint64_t seed) {
  SpikeSpec s;
  s.n_neurons = config_value(c, "spikes.n_neurons", s.n_neurons);
  s.duration = config_value(c, "spikes.duration", s.duration);
  s.dt = config_value(c, "spikes.dt", s.dt);
  s.dim = config_value(c, "spikes.dim", s.dim);
  s.loading_scale = config_value(c, "spikes.loading_scale", s.loading_scale);
  s.baseline_min = config_value(c, "spikes.baseline_min", s.baseline_min);
  s.baseline_max = config_value(c, "spikes.baseline_max", s.baseline_max);
  s.mean_wait = config_value(c, "spikes.mean_wait", s.mean_wait);
  s.std_wait = config_value(c, "spikes.std_wait", s.std_wait);
  s.mark_std = config_value(c, "spikes.mark_std", s.mark_std);
  s.sigma_x = config_value(c, "spikes.sigma_x", s.sigma_x);
  s.sigma_y = config_value(c, "spikes.sigma_y", s.sigma_y);
  s.seed = seed;
  return s;
}

std::string matrix_csv(const std::string& prefix, const Matrix& values, const ObservationSeries& obs) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index j = 0; j < values.cols(); ++j) header.push_back(prefix + std::to_string(j + 1));
  Matrix table(values.rows(), values.cols() + 1);
  for (int k = 0; k < values.rows(); ++k) table(k, 0) = obs.time(k);
  table.rightCols(values.cols()) = values;
  return table_to_csv(header, table);
}

}  // namespace

int cmd_simulate(const Json& config, std::ostream& out, std::ostream& log) {
  const std::string kind = config_value<std::string>(config, "kind", "");
  const std::uint64_t seed = seed_of(config);
  for (const char* group : {"chirp", "lorenz", "spikes", "model"}) {
    if (group != kind && config.contains(group)) {
      throw std::invalid_argument(std::string("config.") + group + ": settings given for a different kind ('" + kind + "')");
    }
  }
  const fs::path dir = output_dir(config);
  ObservationSeries obs;
  Json truth = {{"schema", kSchemaVersion}, {"kind", kind}, {"seed", seed}};
  std::string truth_csv;
  if (kind == "chirp") {
    const ChirpData d = gen_chirp(chirp_spec(config, seed));
    obs = d.obs;
    truth["clean"] = vector_to_json(d.clean);
    truth_csv = matrix_csv("z", d.clean, obs);
  } else if (kind == "lorenz") {
    const LorenzData d = gen_lorenz(lorenz_spec(config, seed));
    obs = d.obs;
    truth["latent"] = matrix_to_json(d.latent);
    truth["projection"] = matrix_to_json(d.projection);
    truth_csv = matrix_csv("l", d.latent, obs);
  } else if (kind == "spikes") {
    const SpikeSpec spec = spike_spec(config, seed);
    const SpikeData d = gen_spikes(spec);
    for (const auto& w : d.warnings) log << "warning: " << w << "\n";
    obs = d.obs;
    truth["W"] = matrix_to_json(d.W);
    truth["b"] = vector_to_json(d.b);
    truth["events"] = to_json(d.events);
    truth["warnings"] = d.warnings;
    truth_csv = latent_path_to_csv(d.path, TimeGrid(spec.dt, obs.steps(), 0.0));
  } else if (kind == "model") {
    const bool inline_params = has_config_value(config, "model.params");
    const bool file_params = has_config_value(config, "model.params_file");
    if (inline_params == file_params) throw std::invalid_argument("config.model: give exactly one of params or params_file");
    Json pj = inline_params ? config["model"]["params"]
                            : parse_json_file(config_value<std::string>(config, "model.params_file", ""));
    // An all-zero observation covariance requests noiseless observations.
    bool noiseless = false;
    if (pj.is_object() && pj.contains("obs") && pj["obs"].is_object() && pj["obs"].contains("R")) {
      const Matrix R = matrix_from_json(pj["obs"]["R"], "config.model.params.obs.R");
      if (R.isZero(0.0)) {
        noiseless = true;
        pj["obs"]["R"] = matrix_to_json(Matrix::Identity(R.rows(), R.cols()));
      }
    }
    const ModelParams params = params_from_json(pj, "config.model.params");
    const TimeGrid grid(config_value(config, "model.dt", 0.1), config_value(config, "model.steps", 100));
    Rng rng(stream_seed(seed, 0x6d6f64656cull));
    ModelSample s = sample_model(params, grid, rng);
    if (noiseless) {
      const Matrix& W = std::get<GaussianObsModel>(params.obs).W();
      for (int k = 1; k <= grid.steps(); ++k) s.obs.data.row(k - 1) = (W * s.path.y.row(k).transpose()).transpose();
    }
    obs = s.obs;
    truth["events"] = to_json(s.events);
    Json pout = to_json(params);
    if (noiseless) pout["obs"]["R"] = matrix_to_json(Matrix::Zero(obs.dim(), obs.dim()));
    truth["params"] = pout;
    truth_csv = latent_path_to_csv(s.path, grid);
  } else {
    throw std::invalid_argument("config.kind: expected chirp, lorenz, spikes or model");
  }
  atomic_write(dir / "obs.csv", observations_to_csv(obs));
  atomic_write(dir / "truth.csv", truth_csv);
  write_json(dir / "truth.json", truth);
  out << "wrote " << (dir / "obs.csv").string() << " (" << obs.steps() << " rows, " << obs.dim() << " columns)\n";
  return 0;
}

// --- fit ------------------------------------------------------------------------

namespace {

std::vector<ObservationSeries> load_trials(const Json& config) {
  if (!has_config_value(config, "obs")) throw std::invalid_argument("config.obs: missing (observation file path)");
  std::vector<std::string> paths;
  if (config["obs"].is_string()) {
    paths.push_back(config["obs"].get<std::string>());
  } else {
    paths = config_value<std::vector<std::string>>(config, "obs", {});
  }
  const std::string format = config_value<std::string>(config, "obs_format", "csv");
  std::vector<ObservationSeries> trials;
  for (const auto& p : paths) {
    if (format == "csv") {
      trials.push_back(read_observations(p));
    } else if (format == "events") {
      if (!has_config_value(config, "bin_dt")) throw std::invalid_argument("config.bin_dt: required for obs_format = events");
      try {
        trials.push_back(spikes_from_event_list(read_file(p), config_value(config, "bin_dt", 0.0),
                                                config_value(config, "duration", 0.0)));
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(p + ": " + e.what());
      }
    } else {
      throw std::invalid_argument("config.obs_format: expected csv or events");
    }
  }
  return trials;
}

ModelParams initial_params(const Json& config, std::span<const ObservationSeries> trials) {
  const bool inline_init = has_config_value(config, "init");
  const bool file_init = has_config_value(config, "init_file");
  if (inline_init && file_init) throw std::invalid_argument("config: give at most one of init and init_file");
  ModelParams params = [&] {
    if (inline_init) return params_from_json(config["init"], "config.init");
    if (file_init) {
      const std::string path = config_value<std::string>(config, "init_file", "");
      return params_from_json(parse_json_file(path), path);
    }
    AutoInit a;
    a.latent_dim = config_value(config, "auto_init.latent_dim", a.latent_dim);
    a.waiting_mean = config_value(config, "auto_init.waiting_mean", a.waiting_mean);
    a.waiting_std = config_value(config, "auto_init.waiting_std", a.waiting_std);
    a.sigma_x = config_value(config, "auto_init.sigma_x", a.sigma_x);
    a.sigma_y = config_value(config, "auto_init.sigma_y", a.sigma_y);
    a.smooth = config_value(config, "auto_init.smooth", a.smooth);
    if (has_config_value(config, "auto_init.loadings")) {
      a.loadings = matrix_from_json(config["auto_init"]["loadings"], "config.auto_init.loadings");
      a.latent_dim = static_cast<int>(a.loadings->cols());
    }
    return auto_init(trials, a);
  }();
  if (has_config_value(config, "priors")) {
    Json j = to_json(params);
    j["priors"] = config["priors"];
    params = params_from_json(j, "config");
  }
  for (const auto& t : trials) {
    if (t.kind != obs_kind(params.obs)) throw std::invalid_argument("observation kind does not match the initial observation model");
    if (t.dim() != obs_dim(params.obs)) {
      throw std::invalid_argument("observations have " + std::to_string(t.dim()) + " columns but the model expects " +
                                  std::to_string(obs_dim(params.obs)));
    }
  }
  return params;
}

EmConfig em_config(const Json& c) {
  EmConfig cfg;
  cfg.n_iters = config_value(c, "iters", cfg.n_iters);
  SmcConfig& smc = cfg.smc;
  smc.particles = config_value(c, "particles", smc.particles);
  const std::string proposal = config_value<std::string>(c, "proposal", "bootstrap");
  if (proposal == "bootstrap") {
    smc.proposal = ProposalKind::bootstrap;
  } else if (proposal == "guided") {
    smc.proposal = ProposalKind::guided;
  } else {
    throw std::invalid_argument("config.proposal: expected bootstrap or guided");
  }
  smc.guided_blend = config_value(c, "guided_blend", smc.guided_blend);
  const std::string resampling = config_value<std::string>(c, "resampling", "systematic");
  if (resampling == "systematic") {
    smc.resampling = ResamplingScheme::systematic;
  } else if (resampling == "multinomial") {
    smc.resampling = ResamplingScheme::multinomial;
  } else {
    throw std::invalid_argument("config.resampling: expected systematic or multinomial");
  }
  smc.ess_threshold = config_value(c, "ess_threshold", smc.ess_threshold);
  const long cap = config_value<long>(c, "memory_cap_mb", 3072);
  if (cap < 1) throw std::invalid_argument("config.memory_cap_mb: must be positive");
  smc.memory_cap_bytes = static_cast<std::size_t>(cap) << 20;
  smc.seed = seed_of(c);
  smc.threads = config_value(c, "threads", 0);
  cfg.update_obs = config_value(c, "update.obs", cfg.update_obs);
  cfg.update_loadings = config_value(c, "update.loadings", cfg.update_loadings);
  cfg.update_waiting = config_value(c, "update.waiting", cfg.update_waiting);
  cfg.update_marks = config_value(c, "update.marks", cfg.update_marks);
  cfg.update_sigma_x = config_value(c, "update.sigma_x", cfg.update_sigma_x);
  const std::string cov = config_value<std::string>(c, "noise_cov", "full");
  if (cov == "full") {
    cfg.noise_cov = NoiseCovMode::full;
  } else if (cov == "diagonal") {
    cfg.noise_cov = NoiseCovMode::diagonal;
  } else if (cov == "fixed") {
    cfg.noise_cov = NoiseCovMode::fixed;
  } else {
    throw std::invalid_argument("config.noise_cov: expected full, diagonal or fixed");
  }
  cfg.newton.max_iters = config_value(c, "newton.max_iters", cfg.newton.max_iters);
  cfg.newton.grad_tol = config_value(c, "newton.grad_tol", cfg.newton.grad_tol);
  cfg.newton.max_halvings = config_value(c, "newton.max_halvings", cfg.newton.max_halvings);
  cfg.final_estep = config_value(c, "final_estep", cfg.final_estep);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

void write_trial_outputs(const fs::path& dir, const std::string& suffix, const SmcResult& r,
                         const ObservationSeries& obs, const ModelParams& params) {
  const TimeGrid grid(obs.dt, obs.steps(), obs.origin);
  const StateSummary& s = r.smoothed ? *r.smoothed : r.filtered;
  atomic_write(dir / ("summary" + suffix + ".csv"), summary_to_csv(s.y, grid));
  atomic_write(dir / ("summary_x" + suffix + ".csv"), summary_to_csv(s.x, grid));
  ObservationSeries pred{obs.kind, Matrix(obs.steps(), obs.dim()), obs.dt, obs.origin};
  for (int k = 1; k <= grid.steps(); ++k) {
    pred.data.row(k - 1) = predict_observation(s.y.mean.row(k).transpose(), params.obs, obs.dt).transpose();
  }
  atomic_write(dir / ("prediction" + suffix + ".csv"), observations_to_csv(pred));
  Json ev = events_to_json(r.event_posterior);
  write_json(dir / ("events" + suffix + ".json"), ev);
  write_json(dir / ("posterior" + suffix + ".json"), smc_envelope(r, grid));
}

}  // namespace

int cmd_fit(const Json& config, std::ostream& out, std::ostream& log) {
  const std::vector<ObservationSeries> trials = load_trials(config);
  const ModelParams init = initial_params(config, trials);
  const EmConfig cfg = em_config(config);
  const fs::path dir = output_dir(config);
  std::optional<FitResult> fitted;
  try {
    fitted.emplace(fit(trials, init, cfg));
  } catch (const EmAborted& e) {
    write_json(dir / "trace.json", trace_to_json(e.trace()));
    write_json(dir / "params.json", to_json(e.params()));
    log << "error: " << e.what() << "\n"
        << "partial trace (" << e.trace().size() << " iterations) written to " << (dir / "trace.json").string() << "\n";
    return 3;
  }
  const FitResult& result = *fitted;
  for (const auto& it : result.trace) {
    log << "iter " << it.iteration << " log_ml " << format_double(it.log_ml) << " events " << format_double(it.mean_event_count)
        << " mean_wait " << format_double(it.mean_waiting_time) << "\n";
    for (const auto& w : it.warnings) log << "  warning: " << w << "\n";
  }
  write_json(dir / "params.json", to_json(result.params));
  write_json(dir / "trace.json", trace_to_json(result.trace));
  double log_ml = 0.0, events = 0.0, wait = 0.0;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const SmcResult& r = result.estep[t];
    write_trial_outputs(dir, trial_suffix(t, trials.size()), r, trials[t], result.params);
    log_ml += r.log_marginal_likelihood;
    events += r.mean_event_count / static_cast<double>(trials.size());
    wait += r.mean_waiting_time / static_cast<double>(trials.size());
  }
  out << "log_ml " << format_double(log_ml) << "\nmean_event_count " << format_double(events)
      << "\nmean_waiting_time " << format_double(wait) << "\n";
  return 0;
}

// --- eval -----------------------------------------------------------------------

namespace {

Matrix select(const CsvTable& t, const Json& config, const std::string& key, const std::string& source) {
  std::vector<std::string> names;
  if (has_config_value(config, key)) {
    names = config[key].is_string() ? std::vector<std::string>{config[key].get<std::string>()}
                                    : config_value<std::vector<std::string>>(config, key, {});
  } else {
    for (const auto& h : t.header) {
      if (h != "t") names.push_back(h);
    }
  }
  Matrix out(t.values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(t.header.begin(), t.header.end(), names[j]);
    if (it == t.header.end()) throw std::invalid_argument(source + ": no column named '" + names[j] + "'");
    out.col(static_cast<Eigen::Index>(j)) = t.values.col(it - t.header.begin());
  }
  return out;
}

}  // namespace

int cmd_eval(const Json& config, std::ostream& out, std::ostream&) {
  for (const char* key : {"truth", "estimate"}) {
    if (!has_config_value(config, key)) throw std::invalid_argument(std::string("config.") + key + ": missing (CSV path)");
  }
  const std::string tp = config_value<std::string>(config, "truth", "");
  const std::string ep = config_value<std::string>(config, "estimate", "");
  const Matrix truth = select(parse_csv(read_file(tp), tp), config, "truth_columns", tp);
  Matrix est = select(parse_csv(read_file(ep), ep), config, "estimate_columns", ep);
  const int skip = config_value(config, "skip_rows", 0);
  if (skip < 0 || skip >= est.rows()) throw std::invalid_argument("config.skip_rows: out of range");
  est = est.bottomRows(est.rows() - skip).eval();
  const Json metrics = to_json(evaluate(truth, est));
  const fs::path dir = output_dir(config);
  write_json(dir / "metrics.json", metrics);
  out << metrics.dump(2) << "\n";
  return 0;
}

// --- bench ----------------------------------------------------------------------

namespace {

template <class F>
double min_seconds(int repeats, F&& f) {
  double best = INFINITY;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

ModelParams bench_model() {
  return {GaussianObsModel(Matrix::Ones(1, 1), Matrix::Constant(1, 1, 0.1)),
          NoiseParams::uniform(1, 0.1, 0.01),
          WaitingTimeModel::from_moments(10.0, 4.0),
          MarkModel(Vector::Zero(1), Matrix::Identity(1, 1)),
          PriorHyperparams::weak(1),
          InitialPrior::standard(1)};
}

double time_filter(const ModelParams& params, int steps, int particles, std::uint64_t seed, int threads, int repeats) {
  const TimeGrid grid(0.5, steps);
  Rng rng(stream_seed(seed, static_cast<std::uint64_t>(steps)));
  const ModelSample data = sample_model(params, grid, rng);
  SmcConfig cfg;
  cfg.particles = particles;
  cfg.storage = PathStorage::filtered_summary;
  cfg.compute_bands = false;
  cfg.seed = seed;
  cfg.threads = threads;
  return min_seconds(repeats, [&] { run_filter(data.obs, params, cfg); });
}

}  // namespace

int cmd_bench(const Json& config, std::ostream& out, std::ostream& log) {
  const std::uint64_t seed = seed_of(config);
  const int threads = config_value(config, "threads", 1);
  const int repeats = config_value(config, "repeats", 3);
  if (repeats < 1) throw std::invalid_argument("config.repeats: must be >= 1");
  const auto steps = config_value<std::vector<int>>(config, "steps", {250, 500, 1000, 2000, 4000});
  const int particles = config_value(config, "particles", 500);
  const int particle_steps = config_value(config, "particle_steps", 1000);
  const auto counts = config_value<std::vector<int>>(config, "particle_counts", {500, 1000});
  auto gp_sizes = config_value<std::vector<int>>(config, "gp_sizes", {500, 1000, 1500, 2000, 3000});
  for (const std::vector<int>* list : std::initializer_list<const std::vector<int>*>{&steps, &counts, &gp_sizes}) {
    for (int v : *list) {
      if (v < 2) throw std::invalid_argument("config: bench sizes must be >= 2");
    }
  }
  if (particles < 2 || particle_steps < 1) throw std::invalid_argument("config: particles must be >= 2 and particle_steps >= 1");
  std::sort(gp_sizes.begin(), gp_sizes.end());
  const ModelParams params = bench_model();

  std::vector<BenchRow> rows;
  std::vector<CostSample> smc, gp;
  for (int k : steps) {
    const double s = time_filter(params, k, particles, seed, threads, repeats);
    smc.push_back({k, s});
    rows.push_back({k, s, "smc"});
    log << "smc K=" << k << " " << s << " s\n";
  }
  std::vector<double> by_count;
  for (int u : counts) {
    const double s = time_filter(params, particle_steps, u, seed, threads, repeats);
    by_count.push_back(s);
    rows.push_back({u, s, "smc_particles"});
    log << "smc U=" << u << " " << s << " s\n";
  }
  std::vector<double> best(gp_sizes.size(), INFINITY);
  for (int r = 0; r < repeats; ++r) {
    const auto probe = cubic_cost_probe(gp_sizes, seed);
    for (std::size_t i = 0; i < probe.size(); ++i) best[i] = std::min(best[i], probe[i].seconds);
  }
  for (std::size_t i = 0; i < gp_sizes.size(); ++i) {
    gp.push_back({gp_sizes[i], best[i]});
    rows.push_back({gp_sizes[i], best[i], "gp"});
    log << "gp N=" << gp_sizes[i] << " " << best[i] << " s\n";
  }
  Json summary = {{"schema", kSchemaVersion}};
  if (smc.size() >= 2) summary["smc_slope"] = loglog_slope(smc);
  if (gp.size() >= 2) summary["gp_slope"] = loglog_slope(gp);
  if (by_count.size() >= 2) summary["particle_ratio"] = by_count.back() / by_count.front();
  const fs::path dir = output_dir(config);
  atomic_write(dir / "bench.csv", bench_to_csv(rows));
  write_json(dir / "bench_summary.json", summary);
  for (const auto& [k, v] : summary.items()) {
    if (k != "schema") out << k << " " << format_double(v.get<double>()) << "\n";
  }
  return 0;
}

}  // namespace hsde::cli
