#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hsde/em.hpp"
#include "hsde/io.hpp"

namespace hsde::cli {

enum class Command { simulate, fit, eval, bench };

enum class KeyType { boolean, integer, number, string, strings, integers, numbers, matrix, object };

struct ConfigKey {
  std::string path;  // dotted
  KeyType type;
  std::string fallback;  // default shown in --help; empty when required or derived
  std::string help;
};

const std::vector<ConfigKey>& config_schema(Command cmd);
std::string command_name(Command cmd);
/// Key listing for --help.
std::string describe_schema(Command cmd);

/// Rejects unknown keys and wrongly typed values with a message naming the key.
void validate_config(Command cmd, const Json& config);

/// Value at a dotted path, or `fallback` when absent.
template <class T>
T config_value(const Json& config, const std::string& path, const T& fallback);
bool has_config_value(const Json& config, const std::string& path);

/// Moment-matched starting parameters built from the data alone.
struct AutoInit {
  int latent_dim = 1;
  /// Defaults to 20 bins.
  double waiting_mean = 0.0;
  /// Defaults to half the mean.
  double waiting_std = 0.0;
  double sigma_x = 0.1;
  double sigma_y = 0.01;
  /// Gaussian smoothing (seconds) of spike counts before the PCA; 0 disables.
  double smooth = 0.05;
  /// Known Gaussian loadings (M x D); the latent estimate then comes from
  /// their pseudo-inverse instead of the PCA.
  std::optional<Matrix> loadings;
};

ModelParams auto_init(std::span<const ObservationSeries> trials, const AutoInit& opts);

struct EvalMetrics {
  int n = 0;
  double mse = 0.0;  // NaN when the column counts differ
  Vector per_dim_mse;
  /// Coefficient of determination after the least-squares affine map from
  /// estimate to truth, pooled over truth columns and per column.
  double r2 = 0.0;
  Vector per_dim_r2;
};

EvalMetrics evaluate(const Matrix& truth, const Matrix& estimate);
Json to_json(const EvalMetrics& m);

/// Config in, files out. Each returns the process exit code and reports to
/// `log` (progress, warnings) and `out` (results summary).
int cmd_simulate(const Json& config, std::ostream& out, std::ostream& log);
int cmd_fit(const Json& config, std::ostream& out, std::ostream& log);
int cmd_eval(const Json& config, std::ostream& out, std::ostream& log);
int cmd_bench(const Json& config, std::ostream& out, std::ostream& log);

/// Full command line: parses flags, loads and validates the config, runs the
/// command and maps errors to exit codes (2 input, 3 numerical).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hsde::cli
