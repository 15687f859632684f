#pragma once

#include "iboed/est/bounds.hpp"
#include "iboed/est/posterior.hpp"
#include "iboed/rl/trainer.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace iboed::io {

class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric CSV: leading "# key=value" comment lines, one header line, then rows
// of finite or nan/inf values. The strict reader rejects ragged rows, empty
// cells and anything that is not a number.
struct CsvTable {
  std::map<std::string, std::string> meta;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::string format_number(double v);
CsvTable parse_csv(const std::string& text, const std::string& source = "<csv>");
CsvTable read_csv(const std::filesystem::path& path);
std::string to_csv(const CsvTable& table);

// Metrics CSV: step, q_loss, policy_loss, critic_loss, eval_bound, eval_stderr, wall_clock.
extern const std::vector<std::string> kMetricsColumns;

// Appends to `path`, writing the meta/header block first when the file is new
// or empty. A non-empty file must already carry the same header and hash.
class MetricsWriter {
 public:
  MetricsWriter(std::filesystem::path path, std::string config_hash);
  void append(const rl::MetricsRow& row);
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct MetricsFile {
  std::string config_hash;
  std::vector<rl::MetricsRow> rows;
};
MetricsFile read_metrics(const std::filesystem::path& path);

// Posterior samples: theta_0 .. theta_{d-1}, weight; meta carries the
// config hash and the ground-truth theta.
CsvTable posterior_table(const est::WeightedSamples& samples, const Vector& theta0, const std::string& config_hash);

struct EvalReport {
  std::string bound;
  double value = 0.0;
  double std_error = 0.0;
  int num_contrastive = 0;
  int num_rollouts = 0;
  std::string model;
  std::string checkpoint;  // "random" for the baseline policy
  std::string timestamp;   // UTC, ISO 8601
  std::string config_hash;
  std::uint64_t seed = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport make_report(const est::BoundEstimate& estimate, const std::string& model, const std::string& checkpoint,
                       const std::string& config_hash, std::uint64_t seed);
std::string utc_timestamp();

// One compact JSON object (no trailing newline). Reports files hold one per line.
std::string to_json(const EvalReport& report);
// Rejects missing, extra or mistyped fields.
EvalReport parse_report(const std::string& json);
void append_report(const std::filesystem::path& path, const EvalReport& report);
std::vector<EvalReport> read_reports(const std::filesystem::path& path);

}  // namespace iboed::io
