#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hsde/em.hpp"
#include "hsde/oracle.hpp"

namespace hsde {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Writes to a temporary file in the same directory, then renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// JSON conversions. Readers reject unknown and missing keys with
// std::invalid_argument naming the offending field.
Json matrix_to_json(const Matrix& m);
Json vector_to_json(const Vector& v);
Matrix matrix_from_json(const Json& j, const std::string& field);
Vector vector_from_json(const Json& j, const std::string& field);

Json to_json(const InducingSequence& seq);
InducingSequence inducing_from_json(const Json& j, const std::string& field = "events");

Json to_json(const ModelParams& params);
ModelParams params_from_json(const Json& j, const std::string& field = "params");

Json to_json(const EmIteration& it);
Json trace_to_json(const EmTrace& trace);

Json events_to_json(const std::vector<WeightedEvents>& posterior);

/// log_ml, summary arrays and weighted events.
Json smc_envelope(const SmcResult& result, const TimeGrid& grid);

/// Checks that `j` is an object with no keys outside `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where);

// CSV.
std::string observations_to_csv(const ObservationSeries& obs);
ObservationSeries observations_from_csv(const std::string& text, const std::string& source = "observations");
ObservationSeries read_observations(const std::filesystem::path& path);

/// Event-list CSV `neuron_id,time_s` binned at dt from time 0. Columns follow
/// the sorted distinct neuron ids. With duration <= 0 the grid ends at the
/// last spike.
ObservationSeries spikes_from_event_list(const std::string& text, double dt, double duration = 0.0,
                                         std::vector<long>* neuron_ids = nullptr);

std::string latent_path_to_csv(const LatentPath& path, const TimeGrid& grid);
/// Rows are grid steps 0..K.
std::string summary_to_csv(const PathSummary& summary, const TimeGrid& grid);

struct BenchRow {
  long n;
  double seconds;
  std::string method;
};
std::string bench_to_csv(const std::vector<BenchRow>& rows);

/// Generic numeric table with a header line.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};
CsvTable parse_csv(const std::string& text, const std::string& source);
std::string table_to_csv(const std::vector<std::string>& header, const Matrix& values);

}  // namespace hsde
