#include "iboed/io/records.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace iboed::io {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::string& where) {
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto res = std::from_chars(cell.data(), end, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != end) {
    throw RecordError(where + ": '" + cell + "' is not a number");
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RecordError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(n);
    if (line.empty()) throw RecordError(where + ": empty line");
    if (line.front() == '#') {
      if (have_header) throw RecordError(where + ": comment after header");
      const auto body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw RecordError(where + ": meta line must be '# key=value'");
      t.meta[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    if (!have_header) {
      t.header = split(line, ',');
      std::set<std::string> unique(t.header.begin(), t.header.end());
      if (unique.size() != t.header.size() || unique.count("") != 0) {
        throw RecordError(where + ": header has empty or duplicate columns");
      }
      have_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != t.header.size()) {
      throw RecordError(where + ": " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, where));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw RecordError(source + ": missing header");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

std::string to_csv(const CsvTable& t) {
  std::string out;
  for (const auto& [k, v] : t.meta) out += "# " + k + "=" + v + "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_number(row[i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::string> kMetricsColumns = {"step",       "q_loss",      "policy_loss", "critic_loss",
                                                  "eval_bound", "eval_stderr", "wall_clock"};

MetricsWriter::MetricsWriter(std::filesystem::path path, std::string config_hash) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    const auto existing = read_metrics(path_);
    if (existing.config_hash != config_hash) {
      throw RecordError(path_.string() + ": existing metrics were written with config hash " + existing.config_hash +
                        ", not " + config_hash);
    }
    return;
  }
  CsvTable header;
  header.meta["config_hash"] = config_hash;
  header.header = kMetricsColumns;
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw RecordError("cannot write " + path_.string());
  out << to_csv(header);
}

void MetricsWriter::append(const rl::MetricsRow& r) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw RecordError("cannot append to " + path_.string());
  out << r.step << ',' << format_number(r.q_loss) << ',' << format_number(r.policy_loss) << ','
      << format_number(r.critic_loss) << ',' << format_number(r.eval_bound) << ',' << format_number(r.eval_stderr)
      << ',' << format_number(r.wall_clock) << '\n';
  out.flush();
}

MetricsFile read_metrics(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  if (t.header != kMetricsColumns) throw RecordError(path.string() + ": not a metrics file (unexpected columns)");
  auto it = t.meta.find("config_hash");
  if (it == t.meta.end()) throw RecordError(path.string() + ": missing config_hash");
  MetricsFile f{it->second, {}};
  for (const auto& row : t.rows) {
    if (row[0] != std::floor(row[0])) throw RecordError(path.string() + ": non-integer step");
    f.rows.push_back(rl::MetricsRow{static_cast<std::int64_t>(row[0]), row[1], row[2], row[3], row[4], row[5], row[6]});
  }
  return f;
}

CsvTable posterior_table(const est::WeightedSamples& s, const Vector& theta0, const std::string& config_hash) {
  CsvTable t;
  t.meta["config_hash"] = config_hash;
  std::string truth;
  for (Eigen::Index i = 0; i < theta0.size(); ++i) truth += (i ? " " : "") + format_number(theta0[i]);
  t.meta["theta0"] = truth;
  for (Eigen::Index j = 0; j < s.thetas.cols(); ++j) t.header.push_back("theta_" + std::to_string(j));
  t.header.emplace_back("weight");
  for (Eigen::Index i = 0; i < s.thetas.rows(); ++i) {
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(s.thetas.cols()) + 1);
    for (Eigen::Index j = 0; j < s.thetas.cols(); ++j) row.push_back(s.thetas(i, j));
    row.push_back(s.weights[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

EvalReport make_report(const est::BoundEstimate& e, const std::string& model, const std::string& checkpoint,
                       const std::string& config_hash, std::uint64_t seed) {
  return EvalReport{est::to_string(e.kind), e.value,       e.std_error,   e.num_contrastive, e.num_rollouts,
                    model,                  checkpoint,    utc_timestamp(), config_hash,     seed};
}

namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_number(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw RecordError(std::string("report field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

std::string to_json(const EvalReport& r) {
  json j = {{"bound", r.bound},
            {"value", number_or_null(r.value)},
            {"std_error", number_or_null(r.std_error)},
            {"num_contrastive", r.num_contrastive},
            {"num_rollouts", r.num_rollouts},
            {"model", r.model},
            {"checkpoint", r.checkpoint},
            {"timestamp", r.timestamp},
            {"config_hash", r.config_hash},
            {"seed", r.seed}};
  return j.dump();
}

EvalReport parse_report(const std::string& text) {
  static const std::set<std::string> keys = {"bound", "value",      "std_error", "num_contrastive", "num_rollouts",
                                             "model", "checkpoint", "timestamp", "config_hash",     "seed"};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw RecordError(std::string("malformed report JSON: ") + e.what());
  }
  if (!j.is_object()) throw RecordError("report must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (keys.count(k) == 0) throw RecordError("unknown report field '" + k + "'");
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw RecordError("report is missing field '" + k + "'");
  }
  try {
    EvalReport r;
    r.bound = j.at("bound").get<std::string>();
    est::parse_bound_kind(r.bound);
    r.value = read_number(j, "value");
    r.std_error = read_number(j, "std_error");
    r.num_contrastive = j.at("num_contrastive").get<int>();
    r.num_rollouts = j.at("num_rollouts").get<int>();
    r.model = j.at("model").get<std::string>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw RecordError(std::string("mistyped report field: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw RecordError(e.what());
  }
}

void append_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw RecordError("cannot append to " + path.string());
  out << to_json(report) << '\n';
}

std::vector<EvalReport> read_reports(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<EvalReport> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    try {
      out.push_back(parse_report(line));
    } catch (const RecordError& e) {
      throw RecordError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace iboed::io
