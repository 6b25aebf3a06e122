#include "hsde/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

namespace hsde {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  const std::filesystem::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- JSON ---------------------------------------------------------------------

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

namespace {

const Json& member(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(where + ": missing key '" + key + "'");
  return *it;
}

double number(const Json& j, const std::string& field) {
  if (!j.is_number()) throw std::invalid_argument(field + ": expected a number");
  return j.get<double>();
}

double number_at(const Json& j, const char* key, const std::string& where) {
  return number(member(j, key, where), where + "." + key);
}

void check_schema(const Json& j, const std::string& where) {
  const Json& s = member(j, "schema", where);
  if (!s.is_number_integer() || s.get<int>() != kSchemaVersion) {
    throw std::invalid_argument(where + ".schema: unsupported schema version (expected " +
                                std::to_string(kSchemaVersion) + ")");
  }
}

}  // namespace

Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw std::invalid_argument(field + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], field + "[" + std::to_string(i) + "]");
  return v;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(field + ": expected a non-empty array of rows");
  const Vector first = vector_from_json(j[0], field + "[0]");
  Matrix m(static_cast<Eigen::Index>(j.size()), first.size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_from_json(j[r], field + "[" + std::to_string(r) + "]");
    if (row.size() != first.size()) throw std::invalid_argument(field + ": rows differ in length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

Json to_json(const InducingSequence& seq) {
  Json pts = Json::array();
  for (const auto& p : seq.points()) pts.push_back({{"tau", p.tau}, {"mark", vector_to_json(p.mark)}});
  return {{"origin", seq.origin()}, {"points", pts}};
}

InducingSequence inducing_from_json(const Json& j, const std::string& field) {
  check_keys(j, {"origin", "points", "schema"}, field);
  const double origin = number_at(j, "origin", field);
  const Json& pts = member(j, "points", field);
  if (!pts.is_array()) throw std::invalid_argument(field + ".points: expected an array");
  std::vector<InducingPoint> points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string where = field + ".points[" + std::to_string(i) + "]";
    check_keys(pts[i], {"tau", "mark"}, where);
    points.push_back({number_at(pts[i], "tau", where), vector_from_json(member(pts[i], "mark", where), where + ".mark")});
  }
  try {
    return InducingSequence(origin, std::move(points));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(field + ": " + e.what());
  }
}

namespace {

Json alpha_prior_json(const AlphaPrior& p) {
  return std::visit(
      Overloaded{[](const GammaPrior& g) { return Json{{"family", "gamma"}, {"shape", g.shape}, {"rate", g.rate}}; },
                 [](const ExponentialPrior& e) { return Json{{"family", "exponential"}, {"rate", e.rate}}; },
                 [](const LognormalPrior& l) { return Json{{"family", "lognormal"}, {"mu", l.mu}, {"sigma2", l.sigma2}}; },
                 [](const FlatPrior&) { return Json{{"family", "flat"}}; }},
      p);
}

Json lambda_prior_json(const LambdaPrior& p) {
  return std::visit(
      Overloaded{[](const GammaPrior& g) { return Json{{"family", "gamma"}, {"shape", g.shape}, {"rate", g.rate}}; },
                 [](const InvGammaPrior& g) { return Json{{"family", "invgamma"}, {"shape", g.shape}, {"scale", g.scale}}; },
                 [](const FlatPrior&) { return Json{{"family", "flat"}}; }},
      p);
}

std::string family_of(const Json& j, const std::string& where) {
  const Json& f = member(j, "family", where);
  if (!f.is_string()) throw std::invalid_argument(where + ".family: expected a string");
  return f.get<std::string>();
}

AlphaPrior alpha_prior_from_json(const Json& j, const std::string& where) {
  const std::string f = family_of(j, where);
  if (f == "gamma") {
    check_keys(j, {"family", "shape", "rate"}, where);
    return GammaPrior{number_at(j, "shape", where), number_at(j, "rate", where)};
  }
  if (f == "exponential") {
    check_keys(j, {"family", "rate"}, where);
    return ExponentialPrior{number_at(j, "rate", where)};
  }
  if (f == "lognormal") {
    check_keys(j, {"family", "mu", "sigma2"}, where);
    return LognormalPrior{number_at(j, "mu", where), number_at(j, "sigma2", where)};
  }
  if (f == "flat") {
    check_keys(j, {"family"}, where);
    return FlatPrior{};
  }
  throw std::invalid_argument(where + ".family: expected gamma, exponential, lognormal or flat");
}

LambdaPrior lambda_prior_from_json(const Json& j, const std::string& where) {
  const std::string f = family_of(j, where);
  if (f == "gamma") {
    check_keys(j, {"family", "shape", "rate"}, where);
    return GammaPrior{number_at(j, "shape", where), number_at(j, "rate", where)};
  }
  if (f == "invgamma") {
    check_keys(j, {"family", "shape", "scale"}, where);
    return InvGammaPrior{number_at(j, "shape", where), number_at(j, "scale", where)};
  }
  if (f == "flat") {
    check_keys(j, {"family"}, where);
    return FlatPrior{};
  }
  throw std::invalid_argument(where + ".family: expected gamma, invgamma or flat");
}

}  // namespace

Json to_json(const ModelParams& p) {
  Json obs = std::visit(
      Overloaded{[](const GaussianObsModel& g) {
                   return Json{{"kind", "gaussian"}, {"W", matrix_to_json(g.W())}, {"R", matrix_to_json(g.R())}};
                 },
                 [](const PointProcessObsModel& s) {
                   return Json{{"kind", "spikes"}, {"W", matrix_to_json(s.W())}, {"b", vector_to_json(s.b())}};
                 }},
      p.obs);
  return {{"schema", kSchemaVersion},
          {"obs", obs},
          {"noise", {{"sigma_x", vector_to_json(p.noise.sigma_x)}, {"sigma_y", vector_to_json(p.noise.sigma_y)}}},
          {"waiting", {{"alpha", p.waiting.alpha()}, {"lambda", p.waiting.lambda()}}},
          {"marks", {{"mu", vector_to_json(p.marks.mu())}, {"sigma", matrix_to_json(p.marks.sigma())}}},
          {"priors",
           {{"marks",
             {{"mu0", vector_to_json(p.priors.marks.mu0)},
              {"kappa0", p.priors.marks.kappa0},
              {"nu", p.priors.marks.nu},
              {"psi", matrix_to_json(p.priors.marks.psi)}}},
            {"alpha", alpha_prior_json(p.priors.alpha)},
            {"lambda", lambda_prior_json(p.priors.lambda)}}},
          {"initial",
           {{"x_mean", vector_to_json(p.initial.x_mean)},
            {"x_std", vector_to_json(p.initial.x_std)},
            {"y_mean", vector_to_json(p.initial.y_mean)},
            {"y_std", vector_to_json(p.initial.y_std)}}}};
}

ModelParams params_from_json(const Json& j, const std::string& field) {
  check_keys(j, {"schema", "obs", "noise", "waiting", "marks", "priors", "initial"}, field);
  if (j.contains("schema")) check_schema(j, field);
  try {
    const Json& o = member(j, "obs", field);
    const std::string ow = field + ".obs";
    const Json& kind = member(o, "kind", ow);
    ObsModel obs = GaussianObsModel(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
    if (kind == "gaussian") {
      check_keys(o, {"kind", "W", "R"}, ow);
      obs = GaussianObsModel(matrix_from_json(member(o, "W", ow), ow + ".W"), matrix_from_json(member(o, "R", ow), ow + ".R"));
    } else if (kind == "spikes") {
      check_keys(o, {"kind", "W", "b"}, ow);
      obs = PointProcessObsModel(matrix_from_json(member(o, "W", ow), ow + ".W"),
                                 vector_from_json(member(o, "b", ow), ow + ".b"));
    } else {
      throw std::invalid_argument(ow + ".kind: expected gaussian or spikes");
    }
    const Json& n = member(j, "noise", field);
    const std::string nw = field + ".noise";
    check_keys(n, {"sigma_x", "sigma_y"}, nw);
    NoiseParams noise{vector_from_json(member(n, "sigma_x", nw), nw + ".sigma_x"),
                      vector_from_json(member(n, "sigma_y", nw), nw + ".sigma_y")};
    const Json& w = member(j, "waiting", field);
    const std::string ww = field + ".waiting";
    check_keys(w, {"alpha", "lambda"}, ww);
    WaitingTimeModel waiting(number_at(w, "alpha", ww), number_at(w, "lambda", ww));
    const Json& m = member(j, "marks", field);
    const std::string mw = field + ".marks";
    check_keys(m, {"mu", "sigma"}, mw);
    MarkModel marks(vector_from_json(member(m, "mu", mw), mw + ".mu"), matrix_from_json(member(m, "sigma", mw), mw + ".sigma"));
    const int D = noise.dim();
    PriorHyperparams priors = PriorHyperparams::weak(D);
    if (j.contains("priors")) {
      const Json& pr = j["priors"];
      const std::string pw = field + ".priors";
      check_keys(pr, {"marks", "alpha", "lambda"}, pw);
      if (pr.contains("marks")) {
        const Json& niw = pr["marks"];
        const std::string nw2 = pw + ".marks";
        check_keys(niw, {"mu0", "kappa0", "nu", "psi"}, nw2);
        priors.marks = NiwPrior{vector_from_json(member(niw, "mu0", nw2), nw2 + ".mu0"), number_at(niw, "kappa0", nw2),
                                number_at(niw, "nu", nw2), matrix_from_json(member(niw, "psi", nw2), nw2 + ".psi")};
      }
      if (pr.contains("alpha")) priors.alpha = alpha_prior_from_json(pr["alpha"], pw + ".alpha");
      if (pr.contains("lambda")) priors.lambda = lambda_prior_from_json(pr["lambda"], pw + ".lambda");
    }
    InitialPrior initial = InitialPrior::standard(D);
    if (j.contains("initial")) {
      const Json& in = j["initial"];
      const std::string iw = field + ".initial";
      check_keys(in, {"x_mean", "x_std", "y_mean", "y_std"}, iw);
      initial = InitialPrior{vector_from_json(member(in, "x_mean", iw), iw + ".x_mean"),
                             vector_from_json(member(in, "x_std", iw), iw + ".x_std"),
                             vector_from_json(member(in, "y_mean", iw), iw + ".y_mean"),
                             vector_from_json(member(in, "y_std", iw), iw + ".y_std")};
    }
    ModelParams params{std::move(obs), std::move(noise), waiting, std::move(marks), std::move(priors), std::move(initial)};
    params.validate();
    return params;
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.rfind(field, 0) == 0) throw;
    throw std::invalid_argument(field + ": " + msg);
  }
}

Json to_json(const EmIteration& it) {
  Json warnings = Json::array();
  for (const auto& w : it.warnings) warnings.push_back(w);
  Json params = to_json(it.params);
  params.erase("schema");
  return {{"iteration", it.iteration},
          {"log_ml", it.log_ml},
          {"q_before", it.q_before},
          {"q_after", it.q_after},
          {"mean_event_count", it.mean_event_count},
          {"mean_waiting_time", it.mean_waiting_time},
          {"warnings", warnings},
          {"params", params}};
}

Json trace_to_json(const EmTrace& trace) {
  Json its = Json::array();
  for (const auto& it : trace) its.push_back(to_json(it));
  return {{"schema", kSchemaVersion}, {"iterations", its}};
}

Json events_to_json(const std::vector<WeightedEvents>& posterior) {
  Json arr = Json::array();
  for (const auto& w : posterior) {
    arr.push_back({{"weight", w.weight}, {"multiplicity", w.multiplicity}, {"events", to_json(w.events)}});
  }
  return {{"schema", kSchemaVersion}, {"posterior", arr}};
}

namespace {

Json summary_json(const PathSummary& s) {
  return {{"mean", matrix_to_json(s.mean)}, {"lo", matrix_to_json(s.lo)}, {"hi", matrix_to_json(s.hi)}};
}

}  // namespace

Json smc_envelope(const SmcResult& r, const TimeGrid& grid) {
  Json t = Json::array();
  for (int k = 0; k <= grid.steps(); ++k) t.push_back(grid.time(k));
  Json summary = {{"t", t},
                  {"filtered", {{"x", summary_json(r.filtered.x)}, {"y", summary_json(r.filtered.y)}}}};
  if (r.smoothed) summary["smoothed"] = {{"x", summary_json(r.smoothed->x)}, {"y", summary_json(r.smoothed->y)}};
  Json ess = Json::array();
  for (double e : r.ess) ess.push_back(e);
  return {{"schema", kSchemaVersion},
          {"log_ml", r.log_marginal_likelihood},
          {"resample_count", r.resample_count},
          {"mean_event_count", r.mean_event_count},
          {"mean_waiting_time", r.mean_waiting_time},
          {"ess", ess},
          {"summary", summary},
          {"events", events_to_json(r.event_posterior)["posterior"]}};
}

// --- CSV ------------------------------------------------------------------------

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw std::invalid_argument(where + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  CsvTable table;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw std::invalid_argument(source + " line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(table.header.size()) + " columns, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      row.push_back(parse_number(cells[c], source + " line " + std::to_string(lineno) + " column " + table.header[c]));
    }
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw std::invalid_argument(source + ": empty file");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return table;
}

std::string table_to_csv(const std::vector<std::string>& header, const Matrix& values) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string observations_to_csv(const ObservationSeries& obs) {
  std::vector<std::string> header{"t"};
  const char* prefix = obs.kind == ObsKind::spikes ? "n" : "z";
  for (int m = 0; m < obs.dim(); ++m) header.push_back(prefix + std::to_string(m + 1));
  Matrix values(obs.steps(), obs.dim() + 1);
  for (int k = 0; k < obs.steps(); ++k) {
    values(k, 0) = obs.time(k);
    values.row(k).tail(obs.dim()) = obs.data.row(k);
  }
  return table_to_csv(header, values);
}

ObservationSeries observations_from_csv(const std::string& text, const std::string& source) {
  const CsvTable t = parse_csv(text, source);
  if (t.header.size() < 2 || t.header[0] != "t") throw std::invalid_argument(source + ": header must start with t and list at least one series");
  const char prefix = t.header[1].empty() ? '?' : t.header[1][0];
  if (prefix != 'z' && prefix != 'n') throw std::invalid_argument(source + ": series columns must be z1..zM or n1..nM");
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    if (t.header[c] != std::string(1, prefix) + std::to_string(c)) {
      throw std::invalid_argument(source + ": column " + std::to_string(c + 1) + " should be named " + prefix + std::to_string(c));
    }
  }
  if (t.values.rows() < 2) throw std::invalid_argument(source + ": at least two rows are needed to infer dt");
  ObservationSeries obs;
  obs.kind = prefix == 'n' ? ObsKind::spikes : ObsKind::gaussian;
  obs.dt = t.values(1, 0) - t.values(0, 0);
  if (!(obs.dt > 0.0)) throw std::invalid_argument(source + ": times must increase");
  obs.origin = t.values(0, 0) - obs.dt;
  for (Eigen::Index r = 1; r < t.values.rows(); ++r) {
    const double expected = obs.origin + (r + 1) * obs.dt;
    if (std::abs(t.values(r, 0) - expected) > 1e-6 * obs.dt * (1.0 + r)) {
      throw std::invalid_argument(source + ": times are not evenly spaced at row " + std::to_string(r + 1));
    }
  }
  obs.data = t.values.rightCols(t.values.cols() - 1);
  try {
    obs.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(source + ": " + e.what());
  }
  return obs;
}

ObservationSeries read_observations(const std::filesystem::path& path) {
  return observations_from_csv(read_file(path), path.string());
}

ObservationSeries spikes_from_event_list(const std::string& text, double dt, double duration,
                                         std::vector<long>* neuron_ids) {
  if (!(dt > 0.0)) throw std::invalid_argument("event-list binning needs dt > 0");
  const CsvTable t = parse_csv(text, "event list");
  if (t.header != std::vector<std::string>{"neuron_id", "time_s"}) {
    throw std::invalid_argument("event list: header must be neuron_id,time_s");
  }
  std::set<long> ids;
  double last = 0.0;
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    const double id = t.values(r, 0);
    if (id != std::floor(id)) throw std::invalid_argument("event list row " + std::to_string(r + 2) + ": neuron_id must be an integer");
    if (!(t.values(r, 1) >= 0.0)) throw std::invalid_argument("event list row " + std::to_string(r + 2) + ": time_s must be >= 0");
    ids.insert(static_cast<long>(id));
    last = std::max(last, t.values(r, 1));
  }
  const double end = duration > 0.0 ? duration : last;
  const int K = std::max(1, static_cast<int>(std::ceil(end / dt - 1e-9)));
  std::map<long, int> column;
  for (long id : ids) column.emplace(id, static_cast<int>(column.size()));
  ObservationSeries obs{ObsKind::spikes, Matrix::Zero(K, static_cast<Eigen::Index>(ids.size())), dt, 0.0};
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    const double time = t.values(r, 1);
    if (duration > 0.0 && time > duration) continue;
    // Bin k covers (k dt, (k + 1) dt]; t = 0 goes to the first bin.
    int k = static_cast<int>(std::ceil(time / dt - 1e-9)) - 1;
    k = std::clamp(k, 0, K - 1);
    obs.data(k, column.at(static_cast<long>(t.values(r, 0)))) += 1.0;
  }
  if (neuron_ids) neuron_ids->assign(ids.begin(), ids.end());
  return obs;
}

std::string latent_path_to_csv(const LatentPath& path, const TimeGrid& grid) {
  const int D = static_cast<int>(path.x.cols());
  std::vector<std::string> header{"t"};
  for (int d = 0; d < D; ++d) header.push_back("x" + std::to_string(d + 1));
  for (int d = 0; d < D; ++d) header.push_back("y" + std::to_string(d + 1));
  Matrix values(path.x.rows(), 2 * D + 1);
  for (Eigen::Index k = 0; k < path.x.rows(); ++k) {
    values(k, 0) = grid.time(static_cast<int>(k));
    values.row(k).segment(1, D) = path.x.row(k);
    values.row(k).tail(D) = path.y.row(k);
  }
  return table_to_csv(header, values);
}

std::string summary_to_csv(const PathSummary& s, const TimeGrid& grid) {
  const int D = static_cast<int>(s.mean.cols());
  std::vector<std::string> header{"t"};
  for (const char* p : {"mean_", "lo_", "hi_"}) {
    for (int d = 0; d < D; ++d) header.push_back(p + std::to_string(d + 1));
  }
  Matrix values(s.mean.rows(), 3 * D + 1);
  for (Eigen::Index k = 0; k < s.mean.rows(); ++k) {
    values(k, 0) = grid.time(static_cast<int>(k));
    values.row(k).segment(1, D) = s.mean.row(k);
    values.row(k).segment(1 + D, D) = s.lo.row(k);
    values.row(k).segment(1 + 2 * D, D) = s.hi.row(k);
  }
  return table_to_csv(header, values);
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::string out = "n,seconds,method\n";
  for (const auto& r : rows) out += std::to_string(r.n) + "," + format_double(r.seconds) + "," + r.method + "\n";
  return out;
}

}  // namespace hsde
