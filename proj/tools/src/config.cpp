#include <algorithm>
#include <sstream>

#include "hsde_cli/cli.hpp"

namespace hsde::cli {

namespace {

using K = KeyType;

std::vector<ConfigKey> common_keys(bool with_threads) {
  std::vector<ConfigKey> keys{
      {"seed", K::integer, "1", "master seed; every random stream derives from it"},
      {"output_dir", K::string, ".", "directory for result files (created if missing)"},
  };
  if (with_threads) keys.push_back({"threads", K::integer, "0", "worker threads, 0 for the OpenMP default; results do not depend on it"});
  return keys;
}

std::vector<ConfigKey> smc_keys() {
  return {
      {"particles", K::integer, "1000", "particle count U"},
      {"proposal", K::string, "bootstrap", "bootstrap | guided"},
      {"guided_blend", K::number, "1", "guided proposal blend in [0, 1]; 0 is the prior transition"},
      {"resampling", K::string, "systematic", "systematic | multinomial"},
      {"ess_threshold", K::number, "0.5", "resample when ESS < threshold * U; 1 resamples every step"},
      {"memory_cap_mb", K::integer, "3072", "cap on the stored particle genealogy"},
  };
}

std::vector<ConfigKey> build(Command cmd) {
  std::vector<ConfigKey> keys;
  auto add = [&](std::vector<ConfigKey> more) { keys.insert(keys.end(), more.begin(), more.end()); };
  switch (cmd) {
    case Command::simulate:
      add(common_keys(false));
      add({
          {"kind", K::string, "", "generator: chirp | lorenz | spikes | model (required)"},
          {"chirp.duration", K::number, "250", "seconds"},
          {"chirp.sample_rate", K::number, "2", "Hz"},
          {"chirp.f0", K::number, "0.005", "start frequency (Hz)"},
          {"chirp.f1", K::number, "0.05", "end frequency (Hz)"},
          {"chirp.amplitude", K::number, "1", "signal amplitude"},
          {"chirp.noise_var", K::number, "0.1", "additive white noise variance"},
          {"lorenz.sigma", K::number, "10", "Lorenz sigma"},
          {"lorenz.rho", K::number, "28", "Lorenz rho"},
          {"lorenz.beta", K::number, "2.6666666666666665", "Lorenz beta"},
          {"lorenz.x0", K::numbers, "[1, 1, 1]", "initial state"},
          {"lorenz.duration", K::number, "50", "seconds"},
          {"lorenz.sample_rate", K::number, "10", "Hz"},
          {"lorenz.obs_dim", K::integer, "10", "observed dimensions (>= 3)"},
          {"lorenz.noise_var", K::number, "0.1", "isotropic observation noise variance"},
          {"lorenz.noise_cov", K::matrix, "", "full observation noise covariance (overrides noise_var)"},
          {"lorenz.projection", K::matrix, "", "obs_dim x 3 projection (default: seeded N(0, 1) entries)"},
          {"lorenz.max_step", K::number, "0.001", "largest RK4 step (seconds)"},
          {"spikes.n_neurons", K::integer, "20", "neurons"},
          {"spikes.duration", K::number, "3", "seconds"},
          {"spikes.dt", K::number, "0.005", "bin width (seconds)"},
          {"spikes.dim", K::integer, "2", "latent dimension"},
          {"spikes.loading_scale", K::number, "1", "std of the loading entries"},
          {"spikes.baseline_min", K::number, "10", "lowest baseline rate (Hz)"},
          {"spikes.baseline_max", K::number, "30", "highest baseline rate (Hz)"},
          {"spikes.mean_wait", K::number, "0.3", "mean waiting time between events (seconds)"},
          {"spikes.std_wait", K::number, "0.1", "waiting time std (seconds)"},
          {"spikes.mark_std", K::number, "1", "std of the event marks"},
          {"spikes.sigma_x", K::number, "0.1", "bridge diffusion scale"},
          {"spikes.sigma_y", K::number, "0.01", "integrator diffusion scale"},
          {"model.params", K::object, "", "model parameters (params.json layout); an all-zero R gives noiseless observations"},
          {"model.params_file", K::string, "", "path to a params.json, instead of model.params"},
          {"model.dt", K::number, "0.1", "grid spacing (seconds)"},
          {"model.steps", K::integer, "100", "grid steps K"},
      });
      break;
    case Command::fit:
      add(common_keys(true));
      add({
          {"obs", K::strings, "", "observation CSV path, or a list of paths for several trials (required)"},
          {"obs_format", K::string, "csv", "csv (t,z1.. or t,n1..) | events (neuron_id,time_s)"},
          {"bin_dt", K::number, "", "bin width for obs_format = events"},
          {"duration", K::number, "0", "recording length for obs_format = events; 0 ends at the last spike"},
          {"init", K::object, "", "starting parameters (params.json layout)"},
          {"init_file", K::string, "", "path to a params.json with starting parameters"},
          {"auto_init.latent_dim", K::integer, "1", "latent dimension when no init is given"},
          {"auto_init.waiting_mean", K::number, "20 bins", "initial mean waiting time (seconds)"},
          {"auto_init.waiting_std", K::number, "mean / 2", "initial waiting time std (seconds)"},
          {"auto_init.sigma_x", K::number, "0.1", "bridge diffusion scale"},
          {"auto_init.sigma_y", K::number, "0.01", "integrator diffusion scale"},
          {"auto_init.smooth", K::number, "0.05", "spike count smoothing before the PCA (seconds)"},
          {"auto_init.loadings", K::matrix, "", "known loadings W (M x D) for real-valued data; replaces the PCA"},
          {"priors", K::object, "", "prior hyperparameters (params.json priors layout); replaces those of init"},
          {"iters", K::integer, "20", "EM iterations"},
      });
      add(smc_keys());
      add({
          {"update.obs", K::boolean, "true", "update the observation model"},
          {"update.loadings", K::boolean, "true", "with false the observation update keeps W and refits R (or b for spikes)"},
          {"update.waiting", K::boolean, "true", "update the waiting-time model"},
          {"update.marks", K::boolean, "true", "update the mark distribution"},
          {"update.sigma_x", K::boolean, "false", "update the bridge diffusion scale"},
          {"noise_cov", K::string, "full", "observation noise covariance: full | diagonal | fixed"},
          {"newton.max_iters", K::integer, "100", "spike loading Newton iterations"},
          {"newton.grad_tol", K::number, "1e-06", "spike loading gradient tolerance"},
          {"newton.max_halvings", K::integer, "20", "step halvings per Newton iteration"},
          {"final_estep", K::boolean, "true", "rerun the filter with the final parameters for the outputs"},
      });
      break;
    case Command::eval:
      add({
          {"truth", K::string, "", "CSV with the reference series (required)"},
          {"estimate", K::string, "", "CSV with the estimated series (required)"},
          {"truth_columns", K::strings, "all but t", "columns of the truth file to score"},
          {"estimate_columns", K::strings, "all but t", "columns of the estimate file to score"},
          {"skip_rows", K::integer, "0", "drop this many leading estimate rows (e.g. 1 to skip the t0 row of a summary)"},
          {"output_dir", K::string, ".", "directory for metrics.json"},
          {"seed", K::integer, "1", "unused; accepted for uniformity"},
      });
      break;
    case Command::bench:
      add(common_keys(false));
      add({
          {"threads", K::integer, "1", "SMC worker threads"},
          {"steps", K::integers, "[250, 500, 1000, 2000, 4000]", "grid lengths K for the SMC timing"},
          {"particles", K::integer, "500", "particle count for the K sweep"},
          {"particle_steps", K::integer, "1000", "K for the particle-doubling timing"},
          {"particle_counts", K::integers, "[500, 1000]", "particle counts for the doubling timing"},
          {"gp_sizes", K::integers, "[500, 1000, 1500, 2000, 3000]", "training sizes for the exact GP timing"},
          {"repeats", K::integer, "3", "timings per point; the minimum is reported"},
      });
      break;
  }
  return keys;
}

std::string type_name(KeyType t) {
  switch (t) {
    case K::boolean: return "bool";
    case K::integer: return "int";
    case K::number: return "number";
    case K::string: return "string";
    case K::strings: return "string | [string]";
    case K::integers: return "[int]";
    case K::numbers: return "[number]";
    case K::matrix: return "[[number]]";
    case K::object: return "object";
  }
  return "?";
}

bool type_ok(KeyType t, const Json& v) {
  auto all = [&](auto pred) { return v.is_array() && std::all_of(v.begin(), v.end(), pred); };
  switch (t) {
    case K::boolean: return v.is_boolean();
    case K::integer: return v.is_number_integer();
    case K::number: return v.is_number();
    case K::string: return v.is_string();
    case K::strings: return v.is_string() || (all([](const Json& e) { return e.is_string(); }) && !v.empty());
    case K::integers: return all([](const Json& e) { return e.is_number_integer(); }) && !v.empty();
    case K::numbers: return all([](const Json& e) { return e.is_number(); }) && !v.empty();
    case K::matrix: return all([](const Json& e) { return e.is_array(); }) && !v.empty();
    case K::object: return v.is_object();
  }
  return false;
}

void walk(const std::vector<ConfigKey>& schema, const Json& node, const std::string& prefix) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    const auto key = std::find_if(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.path == path; });
    if (key != schema.end()) {
      if (!type_ok(key->type, it.value())) {
        throw std::invalid_argument("config." + path + ": expected " + type_name(key->type));
      }
      continue;
    }
    const bool is_group = std::any_of(schema.begin(), schema.end(),
                                      [&](const ConfigKey& k) { return k.path.rfind(path + ".", 0) == 0; });
    if (!is_group) throw std::invalid_argument("config: unknown key '" + path + "' (see --help for the schema)");
    if (!it.value().is_object()) throw std::invalid_argument("config." + path + ": expected an object");
    walk(schema, it.value(), path);
  }
}

const Json* find(const Json& config, const std::string& path) {
  const Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object()) return nullptr;
    const auto it = node->find(part);
    if (it == node->end()) return nullptr;
    node = &*it;
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

}  // namespace

const std::vector<ConfigKey>& config_schema(Command cmd) {
  static const std::vector<ConfigKey> tables[] = {build(Command::simulate), build(Command::fit), build(Command::eval),
                                                  build(Command::bench)};
  return tables[static_cast<int>(cmd)];
}

std::string command_name(Command cmd) {
  switch (cmd) {
    case Command::simulate: return "simulate";
    case Command::fit: return "fit";
    case Command::eval: return "eval";
    case Command::bench: return "bench";
  }
  return "?";
}

std::string describe_schema(Command cmd) {
  std::ostringstream os;
  os << "Config keys for '" << command_name(cmd) << "' (JSON; dotted names are nested objects):\n";
  std::size_t width = 0;
  for (const auto& k : config_schema(cmd)) width = std::max(width, k.path.size());
  for (const auto& k : config_schema(cmd)) {
    os << "  " << k.path << std::string(width - k.path.size() + 2, ' ') << type_name(k.type);
    if (!k.fallback.empty()) os << " = " << k.fallback;
    os << "\n      " << k.help << "\n";
  }
  return os.str();
}

void validate_config(Command cmd, const Json& config) {
  if (!config.is_object()) throw std::invalid_argument("config: expected a JSON object");
  walk(config_schema(cmd), config, "");
}

bool has_config_value(const Json& config, const std::string& path) { return find(config, path) != nullptr; }

template <class T>
T config_value(const Json& config, const std::string& path, const T& fallback) {
  const Json* v = find(config, path);
  if (v == nullptr) return fallback;
  try {
    return v->get<T>();
  } catch (const Json::exception&) {
    throw std::invalid_argument("config." + path + ": value has the wrong type");
  }
}

template bool config_value<bool>(const Json&, const std::string&, const bool&);
template int config_value<int>(const Json&, const std::string&, const int&);
template long config_value<long>(const Json&, const std::string&, const long&);
template std::uint64_t config_value<std::uint64_t>(const Json&, const std::string&, const std::uint64_t&);
template double config_value<double>(const Json&, const std::string&, const double&);
template std::string config_value<std::string>(const Json&, const std::string&, const std::string&);
template std::vector<int> config_value<std::vector<int>>(const Json&, const std::string&, const std::vector<int>&);
template std::vector<double> config_value<std::vector<double>>(const Json&, const std::string&,
                                                               const std::vector<double>&);
template std::vector<std::string> config_value<std::vector<std::string>>(const Json&, const std::string&,
                                                                         const std::vector<std::string>&);
template Json config_value<Json>(const Json&, const std::string&, const Json&);

}  // namespace hsde::cli
