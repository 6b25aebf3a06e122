// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.
//   hsde_acceptance [--workdir DIR] [--only N[,N...]]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "hsde/io.hpp"
#include "hsde/oracle.hpp"
#include "hsde/sde.hpp"
#include "hsde/smc.hpp"
#include "hsde_cli/cli.hpp"
#include "stats.hpp"

using namespace hsde;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

fs::path g_work;

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

bool in_band(double v, double lo, double hi) { return v >= lo && v <= hi; }

fs::path write_config(const fs::path& dir, const std::string& name, const Json& j) {
  fs::create_directories(dir);
  const fs::path p = dir / name;
  atomic_write(p, j.dump(2));
  return p;
}

// Runs a CLI command in-process; throws on a non-zero exit code.
std::string hsde(std::vector<std::string> args) {
  args.insert(args.begin(), "hsde");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) {
    std::string cmd;
    for (const auto& a : args) cmd += a + " ";
    throw std::runtime_error("'" + cmd + "' exited with " + std::to_string(code) + ": " + err.str());
  }
  return out.str();
}

Json read_json(const fs::path& p) { return Json::parse(read_file(p)); }

CsvTable read_table(const fs::path& p) { return parse_csv(read_file(p), p.string()); }

Matrix columns(const CsvTable& t, const std::vector<std::string>& names, int skip_rows = 0) {
  Matrix out(t.values.rows() - skip_rows, static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(t.header.begin(), t.header.end(), names[j]);
    if (it == t.header.end()) throw std::runtime_error("missing column " + names[j]);
    out.col(static_cast<Eigen::Index>(j)) = t.values.col(it - t.header.begin()).tail(out.rows());
  }
  return out;
}

std::vector<std::string> numbered(const std::string& prefix, int n) {
  std::vector<std::string> v;
  for (int i = 1; i <= n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

// Event rate over the grid, averaged over the weighted posterior chains.
Vector event_rate(const Json& events_json, const TimeGrid& grid) {
  Vector rate = Vector::Zero(grid.steps());
  double total = 0.0;
  for (const Json& chain : events_json["posterior"]) {
    const double w = chain["weight"].get<double>();
    const InducingSequence seq = inducing_from_json(chain["events"]);
    for (int k : snap_events(seq, grid)) {
      if (k >= 1 && k <= grid.steps()) rate[k - 1] += w;
    }
    total += w;
  }
  return rate / (total * grid.dt());
}

Vector gaussian_smooth(const Vector& v, double width_bins) {
  const int half = static_cast<int>(std::ceil(3.0 * width_bins));
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double s = 0.0, n = 0.0;
    for (int j = -half; j <= half; ++j) {
      const Eigen::Index k = i + j;
      if (k < 0 || k >= v.size()) continue;
      const double w = std::exp(-0.5 * j * j / (width_bins * width_bins));
      s += w * v[k];
      n += w;
    }
    out[i] = s / n;
  }
  return out;
}

// --- 1 ---------------------------------------------------------------------------

Verdict chirp_reproduction() {
  const fs::path dir = g_work / "chirp";
  hsde({"simulate", "-c", write_config(dir, "sim.json", {{"kind", "chirp"}, {"seed", 1}, {"output_dir", (dir / "data").string()}}).string()});
  const Json fit = {
      {"obs", (dir / "data" / "obs.csv").string()},
      {"output_dir", (dir / "fit").string()},
      {"seed", 1},
      {"iters", 20},
      {"particles", 10000},
      {"init",
       {{"obs", {{"kind", "gaussian"}, {"W", {{1.0}}}, {"R", {{0.1}}}}},
        {"noise", {{"sigma_x", {0.1}}, {"sigma_y", {1e-4}}}},
        {"waiting", {{"alpha", 20.0}, {"lambda", 0.5}}},  // mean 40, std 8.94
        {"marks", {{"mu", {0.0}}, {"sigma", {{0.1}}}}}}},
      {"priors", {{"alpha", {{"family", "gamma"}, {"shape", 20.0}, {"rate", 1.0}}}}}};
  const auto start = std::chrono::steady_clock::now();
  hsde({"fit", "-c", write_config(dir, "fit.json", fit).string()});
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;

  const ObservationSeries obs = read_observations(dir / "data" / "obs.csv");
  const Matrix y = columns(read_table(dir / "fit" / "summary.csv"), {"mean_1"}, 1);
  const double mse = (y - obs.data).squaredNorm() / static_cast<double>(obs.steps());

  // Exact GP on 25 noisy samples 10 s apart, hyperparameters by marginal likelihood.
  std::vector<double> train_t, train_y, all_t;
  for (int k = 0; k < obs.steps(); ++k) {
    all_t.push_back(obs.time(k));
    if (std::abs(std::remainder(obs.time(k), 10.0)) < 1e-9) {
      train_t.push_back(obs.time(k));
      train_y.push_back(obs.data(k, 0));
    }
  }
  const std::vector<double> ls{2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0, 50.0};
  const std::vector<double> sv{0.25, 0.5, 1.0, 2.0};
  const std::vector<double> nv{0.01, 0.05, 0.1, 0.2, 0.5};
  const GpModel gp = gp_grid_search(train_t, train_y, ls, sv, nv);
  const Vector pred = gp_fit_predict(gp, train_t, train_y, all_t, false).mean;
  const double gp_mse = (pred - obs.data.col(0)).squaredNorm() / static_cast<double>(obs.steps());

  const Json post = read_json(dir / "fit" / "posterior.json");
  const double count = post["mean_event_count"].get<double>();
  const double wait = post["mean_waiting_time"].get<double>();
  const bool pass = mse <= 0.5 && in_band(gp_mse, 0.1, 0.4) && in_band(count, 20.0, 40.0) && in_band(wait, 6.0, 14.0) &&
                    minutes <= 15.0;
  return {pass, "mse " + fmt(mse) + " (<= 0.5), gp mse " + fmt(gp_mse) + " (0.1..0.4, " + std::to_string(train_t.size()) +
                    " points), events " + fmt(count) + " (20..40), mean wait " + fmt(wait) + " s (6..14), " +
                    fmt(minutes, 3) + " min"};
}

// --- 2 ---------------------------------------------------------------------------

Verdict kalman_equivalence() {
  const auto prob = test::fixed_events_problem(100, 2, 3, 0.1, 2024);
  const double exact = kalman_filter(build_ssm(prob.events, prob.grid, prob.params), prob.obs.data).log_marginal_likelihood;
  SmcConfig cfg;
  cfg.particles = 5000;
  cfg.fixed_events = prob.events;
  cfg.storage = PathStorage::filtered_summary;
  cfg.compute_bands = false;
  std::vector<double> lml;
  for (int s = 0; s < 50; ++s) {
    cfg.seed = stream_seed(77, static_cast<std::uint64_t>(s));
    lml.push_back(run_filter(prob.obs, prob.params, cfg).log_marginal_likelihood);
  }
  const double diff = test::mean(lml) - exact;
  const double se = test::std_error(lml);
  return {std::abs(diff) <= 3.0 * se,
          "smc mean " + fmt(test::mean(lml), 8) + " vs kalman " + fmt(exact, 8) + ", diff " + fmt(diff) + " (3 se = " +
              fmt(3.0 * se) + ")"};
}

// --- 3 ---------------------------------------------------------------------------

Verdict universal_approximation() {
  const double T = 2.0 * std::numbers::pi;
  const TimeGrid grid(T / 6400.0, 6400);
  std::vector<double> errs;
  for (int n : {8, 16, 32, 64}) {
    InducingSequence seq(0.0, {});
    for (int i = 1; i <= n; ++i) seq.push_back({T / n, Vector::Constant(1, std::cos(i * T / n))});
    Rng rng(1);
    const LatentPath p = simulate_path(seq, grid, NoiseParams::uniform(1, 0.0, 0.0), Vector::Constant(1, 1.0),
                                       Vector::Zero(1), rng);
    double err = 0.0;
    for (int k = 0; k <= grid.steps(); ++k) err = std::max(err, std::abs(p.y(k, 0) - std::sin(grid.time(k))));
    errs.push_back(err);
  }
  const bool monotone = std::is_sorted(errs.rbegin(), errs.rend()) &&
                        std::adjacent_find(errs.begin(), errs.end()) == errs.end();
  return {monotone && errs.back() < 0.01, "sup errors N=8,16,32,64: " + fmt(errs[0]) + ", " + fmt(errs[1]) + ", " +
                                              fmt(errs[2]) + ", " + fmt(errs[3]) + " (< 0.01 at 64)"};
}

// --- 4 ---------------------------------------------------------------------------

Verdict scaling() {
  const fs::path dir = g_work / "bench";
  const Json cfg = {{"output_dir", dir.string()},
                    {"threads", 1},
                    {"steps", {250, 500, 1000, 2000, 4000}},
                    {"particles", 1000},
                    {"particle_steps", 1000},
                    {"particle_counts", {500, 1000}},
                    {"gp_sizes", {3000, 4000, 6000, 8000}},
                    {"repeats", 2}};
  const auto start = std::chrono::steady_clock::now();
  hsde({"bench", "-c", write_config(dir, "bench.json", cfg).string()});
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  const Json s = read_json(dir / "bench_summary.json");
  const double smc = s["smc_slope"].get<double>();
  const double gp = s["gp_slope"].get<double>();
  const double ratio = s["particle_ratio"].get<double>();
  return {in_band(smc, 0.85, 1.15) && in_band(gp, 2.5, 3.3) && in_band(ratio, 1.7, 2.4) && minutes <= 10.0,
          "smc slope " + fmt(smc) + " (0.85..1.15), gp slope " + fmt(gp) + " (2.5..3.3), particle doubling " + fmt(ratio) +
              " (1.7..2.4), " + fmt(minutes, 3) + " min"};
}

// --- 5 ---------------------------------------------------------------------------

Verdict lorenz_decoding() {
  const fs::path dir = g_work / "lorenz";
  hsde({"simulate", "-c", write_config(dir, "sim.json", {{"kind", "lorenz"}, {"seed", 1}, {"output_dir", (dir / "data").string()}}).string()});
  const Json truth = read_json(dir / "data" / "truth.json");
  const Json fit = {
      {"obs", (dir / "data" / "obs.csv").string()},
      {"output_dir", (dir / "fit").string()},
      {"seed", 1},
      {"iters", 20},
      {"particles", 20000},
      {"proposal", "guided"},
      {"auto_init",
       {{"loadings", truth["projection"]}, {"waiting_mean", 0.3}, {"waiting_std", 0.3}, {"sigma_x", 1.0}, {"sigma_y", 1.0}}},
      {"update", {{"loadings", false}}},
      {"priors",
       {{"alpha", {{"family", "gamma"}, {"shape", 20.0}, {"rate", 20.0}}},
        {"lambda", {{"family", "gamma"}, {"shape", 1.0}, {"rate", 1e-3}}},
        {"marks", {{"mu0", {0.0, 0.0, 0.0}}, {"kappa0", 0.01}, {"nu", 5.0}, {"psi", matrix_to_json(Matrix::Identity(3, 3))}}}}}};
  const auto start = std::chrono::steady_clock::now();
  hsde({"fit", "-c", write_config(dir, "fit.json", fit).string()});
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;

  const Matrix latent = matrix_from_json(truth["latent"], "latent");  // rows at t = dt..K dt
  const Matrix est = columns(read_table(dir / "fit" / "summary.csv"), numbered("mean_", 3), 1);
  const double r2 = cli::evaluate(latent, est).r2;

  // |dX/dt| of the truth is the norm of its second time derivative.
  const ObservationSeries obs = read_observations(dir / "data" / "obs.csv");
  const double dt = obs.dt;
  const Eigen::Index K = latent.rows();
  Vector accel(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index m = std::clamp<Eigen::Index>(k, 1, K - 2);
    accel[k] = (latent.row(m + 1) - 2.0 * latent.row(m) + latent.row(m - 1)).norm() / (dt * dt);
  }
  const Vector density = gaussian_smooth(event_rate(read_json(dir / "fit" / "events.json"), TimeGrid(dt, static_cast<int>(K))),
                                         0.5 / dt);
  std::vector<double> sorted(accel.data(), accel.data() + K);
  std::sort(sorted.begin(), sorted.end());
  const double q1 = sorted[static_cast<std::size_t>(0.25 * (K - 1))];
  const double q3 = sorted[static_cast<std::size_t>(0.75 * (K - 1))];
  double top = 0.0, bottom = 0.0;
  int n_top = 0, n_bottom = 0;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (accel[k] >= q3) {
      top += density[k];
      ++n_top;
    }
    if (accel[k] <= q1) {
      bottom += density[k];
      ++n_bottom;
    }
  }
  top /= n_top;
  bottom /= n_bottom;
  return {r2 >= 0.7 && top > bottom && minutes <= 45.0,
          "affine r2 " + fmt(r2) + " (>= 0.7), events/s top quartile " + fmt(top) + " vs bottom " + fmt(bottom) + ", " +
              fmt(minutes, 3) + " min"};
}

// --- 6 ---------------------------------------------------------------------------

Verdict spike_fit() {
  const fs::path dir = g_work / "spikes";
  hsde({"simulate", "-c",
        write_config(dir, "sim.json",
                     {{"kind", "spikes"}, {"seed", 1}, {"output_dir", (dir / "data").string()},
                      {"spikes", {{"n_neurons", 20}, {"dim", 2}, {"duration", 3.0}, {"dt", 0.005}}}})
            .string()});
  const Json fit = {{"obs", (dir / "data" / "obs.csv").string()},
                    {"output_dir", (dir / "fit").string()},
                    {"seed", 1},
                    {"iters", 20},
                    {"particles", 2000},
                    {"auto_init", {{"latent_dim", 2}}}};
  hsde({"fit", "-c", write_config(dir, "fit.json", fit).string()});

  const Matrix truth = columns(read_table(dir / "data" / "truth.csv"), {"y1", "y2"});
  const Matrix est = columns(read_table(dir / "fit" / "summary.csv"), numbered("mean_", 2));
  const double r2 = cli::evaluate(truth, est).r2;

  const ObservationSeries obs = read_observations(dir / "data" / "obs.csv");
  const Matrix pred = columns(read_table(dir / "fit" / "prediction.csv"), numbered("n", obs.dim()));
  const Vector predicted = pred.colwise().mean().transpose() / obs.dt;
  const Vector empirical = obs.data.colwise().mean().transpose() / obs.dt;
  const double r = test::correlation(std::vector<double>(predicted.data(), predicted.data() + predicted.size()),
                                     std::vector<double>(empirical.data(), empirical.data() + empirical.size()));
  return {r2 >= 0.6 && r >= 0.9, "affine r2 " + fmt(r2) + " (>= 0.6), rate correlation " + fmt(r) + " (>= 0.9)"};
}

// --- 7 ---------------------------------------------------------------------------

Verdict statistical_suites() {
  const std::string filter =
      "GammaDensity.*:WaitingTimeModel.*:SampleWaitingTime.*:OrderStatisticGaps.*:Marks.*:Priors.*:Repulsion.*:"
      "SampleRepulsive.*:SpikeLoadings.GradientAndHessianMatchFiniteDifferences:"
      "WaitingTime.GradientMatchesFiniteDifferences:SpikeObs.ConcaveInY";
  const fs::path log = g_work / "statistical_suites.log";
  fs::create_directories(g_work);
  const std::string cmd = std::string(HSDE_UNIT_TESTS_PATH) + " --gtest_filter='" + filter + "' > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  const std::string text = read_file(log);
  const auto pos = text.rfind("[==========]");
  std::string summary = pos == std::string::npos ? "no test summary" : text.substr(pos + 13);
  summary = summary.substr(0, summary.find('\n'));
  return {ok, summary + (ok ? "" : ", see " + log.string())};
}

// --- 8 ---------------------------------------------------------------------------

Verdict determinism() {
  const fs::path dir = g_work / "determinism";
  fs::remove_all(dir);
  std::vector<std::string> mismatches;
  int compared = 0;
  auto same_files = [&](const fs::path& a, const fs::path& b, const std::vector<std::string>& files) {
    for (const auto& f : files) {
      ++compared;
      if (read_file(a / f) != read_file(b / f)) mismatches.push_back((a.filename() / f).string());
    }
  };

  Rng rng(9);
  Json model_params = to_json(test::gaussian_params(test::random_matrix(3, 2, rng), 0.2 * Matrix::Identity(3, 3), 0.5, 0.1));
  const std::vector<std::pair<std::string, Json>> sims{
      {"chirp", {{"kind", "chirp"}}},
      {"lorenz", {{"kind", "lorenz"}, {"lorenz", {{"duration", 10.0}}}}},
      {"spikes", {{"kind", "spikes"}}},
      {"model", {{"kind", "model"}, {"model", {{"params", model_params}, {"steps", 200}}}}}};
  for (const auto& [name, base] : sims) {
    for (const char* run : {"a", "b"}) {
      Json c = base;
      c["seed"] = 5;
      c["output_dir"] = (dir / (name + "_" + run)).string();
      hsde({"simulate", "-c", write_config(dir, name + ".json", c).string()});
    }
    same_files(dir / (name + "_a"), dir / (name + "_b"), {"obs.csv", "truth.csv", "truth.json"});
  }

  const std::vector<std::string> fit_files{"params.json", "trace.json", "summary.csv", "summary_x.csv",
                                           "prediction.csv", "events.json", "posterior.json"};
  const Json chirp_fit = {{"obs", (dir / "chirp_a" / "obs.csv").string()},
                          {"seed", 3},
                          {"iters", 3},
                          {"particles", 500},
                          {"auto_init", {{"waiting_mean", 20.0}, {"sigma_y", 1e-3}}}};
  const Json spike_fit = {{"obs", (dir / "spikes_a" / "obs.csv").string()},
                          {"seed", 3},
                          {"iters", 2},
                          {"particles", 300},
                          {"auto_init", {{"latent_dim", 2}}}};
  for (const auto& [name, cfg] : std::vector<std::pair<std::string, Json>>{{"fit_chirp", chirp_fit}, {"fit_spikes", spike_fit}}) {
    const fs::path c = write_config(dir, name + ".json", cfg);
    hsde({"fit", "-c", c.string(), "--threads", "1", "-o", (dir / (name + "_t1")).string()});
    hsde({"fit", "-c", c.string(), "--threads", "4", "-o", (dir / (name + "_t4")).string()});
    same_files(dir / (name + "_t1"), dir / (name + "_t4"), fit_files);
  }

  for (const char* run : {"a", "b"}) {
    const Json e = {{"truth", (dir / "lorenz_a" / "truth.csv").string()},
                    {"estimate", (dir / "lorenz_b" / "truth.csv").string()},
                    {"output_dir", (dir / (std::string("eval_") + run)).string()}};
    hsde({"eval", "-c", write_config(dir, "eval.json", e).string()});
  }
  same_files(dir / "eval_a", dir / "eval_b", {"metrics.json"});

  // Wall-clock columns differ between runs; the measured plan must not.
  for (const char* t : {"1", "4"}) {
    const Json b = {{"steps", {100, 200}}, {"particles", 100}, {"particle_steps", 100}, {"particle_counts", {100, 200}},
                    {"gp_sizes", {50, 100}}, {"repeats", 1}, {"output_dir", (dir / (std::string("bench_t") + t)).string()}};
    hsde({"bench", "-c", write_config(dir, "bench.json", b).string(), "--threads", t});
  }
  ++compared;
  // Drop the seconds column from every line and compare the rest.
  auto plan = [](const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
      rows.push_back(cells);
    }
    if (rows.empty()) return rows;
    const auto it = std::find(rows[0].begin(), rows[0].end(), "seconds");
    if (it != rows[0].end()) {
      const auto col = it - rows[0].begin();
      for (auto& r : rows) {
        if (static_cast<std::ptrdiff_t>(r.size()) > col) r.erase(r.begin() + col);
      }
    }
    return rows;
  };
  const Json s1 = read_json(dir / "bench_t1" / "bench_summary.json");
  const Json s4 = read_json(dir / "bench_t4" / "bench_summary.json");
  bool bench_same = plan(read_file(dir / "bench_t1" / "bench.csv")) == plan(read_file(dir / "bench_t4" / "bench.csv"));
  for (const auto& [k, v] : s1.items()) bench_same = bench_same && s4.contains(k);
  bench_same = bench_same && s1.size() == s4.size();
  if (!bench_same) mismatches.push_back("bench plan");

  std::string detail = std::to_string(compared - static_cast<int>(mismatches.size())) + "/" + std::to_string(compared) +
                       " outputs identical across reruns and thread counts 1 vs 4";
  for (const auto& m : mismatches) detail += "; differs: " + m;
  return {mismatches.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / "hsde_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: hsde_acceptance [--workdir DIR] [--only N[,N...]]\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"chirp reproduction", chirp_reproduction},
      {"kalman oracle equivalence", kalman_equivalence},
      {"universal approximation", universal_approximation},
      {"scaling", scaling},
      {"lorenz decoding", lorenz_decoding},
      {"spike model fit", spike_fit},
      {"statistical suites", statistical_suites},
      {"determinism", determinism}};

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Verdict v{false, ""};
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
