#include <CLI11.hpp>
#include <optional>
#include <ostream>

#include "hsde_cli/cli.hpp"

namespace hsde::cli {

namespace {

struct Flags {
  std::string config;
  std::optional<long> seed;
  std::optional<int> threads;
  std::optional<int> iters;
  bool no_update_all = false;
  std::optional<std::string> output_dir;
  std::optional<std::string> obs;
  std::optional<std::string> init;
  std::optional<std::string> truth;
  std::optional<std::string> estimate;
};

Json load_config(Command cmd, const Flags& f) {
  Json config = Json::object();
  if (!f.config.empty()) {
    try {
      config = Json::parse(read_file(f.config));
    } catch (const Json::parse_error& e) {
      throw std::invalid_argument(f.config + ": invalid JSON: " + e.what());
    }
    if (!config.is_object()) throw std::invalid_argument(f.config + ": expected a JSON object");
  }
  if (f.seed) config["seed"] = *f.seed;
  if (f.threads) config["threads"] = *f.threads;
  if (f.iters) config["iters"] = *f.iters;
  if (f.output_dir) config["output_dir"] = *f.output_dir;
  if (f.obs) config["obs"] = *f.obs;
  if (f.init) config["init_file"] = *f.init;
  if (f.truth) config["truth"] = *f.truth;
  if (f.estimate) config["estimate"] = *f.estimate;
  if (f.no_update_all) {
    for (const char* k : {"obs", "loadings", "waiting", "marks", "sigma_x"}) config["update"][k] = false;
  }
  validate_config(cmd, config);
  return config;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical SDE latent model: simulate, fit, evaluate, benchmark", "hsde"};
  app.require_subcommand(1);
  Flags f;
  struct Sub {
    Command cmd;
    CLI::App* app;
  };
  std::vector<Sub> subs;
  const std::pair<Command, const char*> commands[] = {
      {Command::simulate, "generate a synthetic data set (obs.csv, truth.csv, truth.json)"},
      {Command::fit, "fit the model by particle EM (params.json, trace.json, summaries, events)"},
      {Command::eval, "score an estimate against a reference series (metrics.json)"},
      {Command::bench, "time the particle filter and the exact GP (bench.csv)"},
  };
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(command_name(cmd), help);
    sub->footer("\n" + describe_schema(cmd));
    sub->add_option("-c,--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "override config seed");
    sub->add_option("-o,--output-dir", f.output_dir, "override config output_dir");
    if (cmd == Command::fit || cmd == Command::bench) sub->add_option("--threads", f.threads, "override config threads");
    if (cmd == Command::fit) {
      sub->add_option("--iters", f.iters, "override config iters");
      sub->add_flag("--no-update-all", f.no_update_all, "keep every parameter fixed (inference only)");
      sub->add_option("--obs", f.obs, "override config obs");
      sub->add_option("--init", f.init, "override config init_file");
    }
    if (cmd == Command::eval) {
      sub->add_option("--truth", f.truth, "override config truth");
      sub->add_option("--estimate", f.estimate, "override config estimate");
    }
    subs.push_back({cmd, sub});
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? 0 : 2;
  }
  for (const auto& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      const Json config = load_config(s.cmd, f);
      switch (s.cmd) {
        case Command::simulate: return cmd_simulate(config, out, err);
        case Command::fit: return cmd_fit(config, out, err);
        case Command::eval: return cmd_eval(config, out, err);
        case Command::bench: return cmd_bench(config, out, err);
      }
    } catch (const std::invalid_argument& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    } catch (const NumericalError& e) {
      err << "numerical error: " << e.what() << "\n";
      return 3;
    } catch (const Json::exception& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::filesystem::filesystem_error& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "internal error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace hsde::cli
