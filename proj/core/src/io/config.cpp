#include "iboed/io/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <variant>
#include <vector>

namespace iboed::io {

ConfigError::ConfigError(const std::string& source, int line, std::string key, const std::string& message)
    : std::invalid_argument(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                            (key.empty() ? std::string() : "key '" + key + "': ") + message),
      line_(line),
      key_(std::move(key)) {}

RunConfig default_config(const std::string& model) {
  RunConfig c;
  c.model = model;
  const auto m = sim::make_model(model, {});
  if (model == "location_finding") {
    c.trainer.horizon = 10;
    c.trainer.updates_per_timestep = 10;
  } else if (model == "cartpole") {
    c.trainer.horizon = 5;
    c.trainer.updates_per_timestep = 8;
  } else if (model == "linear_gaussian") {
    c.trainer.horizon = 1;
    c.trainer.updates_per_timestep = 8;
  } else {
    c.trainer.horizon = 10;
    c.trainer.updates_per_timestep = 8;
  }
  if (!m->has_likelihood()) {
    c.trainer.eval_bound = est::BoundKind::InfoNce;
    c.estimator.bound = est::BoundKind::InfoNce;
  }
  c.output_dir = "runs/" + model;
  return c;
}

namespace {

using Value = std::variant<double, bool, std::string, std::vector<double>>;

struct Entry {
  std::string section;
  std::string key;
  Value value;
  int line = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

bool parse_number(std::string text, double& out) {
  text.erase(std::remove(text.begin(), text.end(), '_'), text.end());
  if (!text.empty() && text.front() == '+') text.erase(0, 1);
  const auto* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

// Parses a value starting at text[pos]; leaves pos after it.
Value parse_value(const std::string& text, const std::function<void(const std::string&)>& fail) {
  if (text.empty()) fail("missing value");
  if (text.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < text.size(); ++i) {
      if (text[i] == '\\' && i + 1 < text.size()) {
        out += text[++i];
      } else if (text[i] == '"') {
        break;
      } else {
        out += text[i];
      }
    }
    if (i >= text.size()) fail("unterminated string");
    if (!trim(std::string_view(text).substr(i + 1)).empty()) fail("unexpected text after string");
    return out;
  }
  if (text.front() == '[') {
    if (text.back() != ']') fail("unterminated list");
    std::vector<double> out;
    std::stringstream ss(text.substr(1, text.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) {
        if (ss.eof() && !out.empty()) break;  // trailing comma
        if (ss.eof()) break;
        fail("empty list element");
      }
      double v = 0.0;
      if (!parse_number(item, v)) fail("list element '" + item + "' is not a number");
      out.push_back(v);
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  double v = 0.0;
  if (!parse_number(text, v)) fail("cannot parse value '" + text + "'");
  return v;
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (c == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

// ---------------------------------------------------------------------------
// Typed accessors; each throws std::string with the reason.

// Config numbers are doubles, so integers are exact only up to 2^53 - 1.
constexpr double kMaxExactInteger = 9007199254740991.0;

double as_double(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw std::string("expected a number");
}

std::int64_t as_int64(const Value& v) {
  const double d = as_double(v);
  if (d != std::floor(d) || std::abs(d) > kMaxExactInteger) throw std::string("expected an integer");
  return static_cast<std::int64_t>(d);
}

int as_int(const Value& v) {
  const auto i = as_int64(v);
  if (i > std::numeric_limits<int>::max() || i < std::numeric_limits<int>::min()) {
    throw std::string("integer out of range");
  }
  return static_cast<int>(i);
}

bool as_bool(const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw std::string("expected true or false");
}

const std::string& as_string(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw std::string("expected a quoted string");
}

std::vector<int> as_int_list(const Value& v) {
  const auto* l = std::get_if<std::vector<double>>(&v);
  if (l == nullptr) throw std::string("expected a list of integers");
  std::vector<int> out;
  for (double d : *l) out.push_back(as_int(Value(d)));
  return out;
}

std::string int_list(const std::vector<int>& xs) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + std::to_string(xs[i]);
  return out + "]";
}

template <typename Fn>
auto enum_from(const Value& v, Fn parse) {
  try {
    return parse(as_string(v));
  } catch (const std::invalid_argument& e) {
    throw std::string(e.what());
  }
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const Value&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define IBOED_DOUBLE(sec, name, member)                                                  \
  Field {                                                                                \
    sec, name, [](RunConfig& c, const Value& v) { c.member = as_double(v); },            \
        [](const RunConfig& c) { return format_double(c.member); }                       \
  }
#define IBOED_INT(sec, name, member)                                                     \
  Field {                                                                                \
    sec, name, [](RunConfig& c, const Value& v) { c.member = as_int(v); },               \
        [](const RunConfig& c) { return std::to_string(c.member); }                      \
  }
#define IBOED_INT64(sec, name, member)                                                   \
  Field {                                                                                \
    sec, name, [](RunConfig& c, const Value& v) { c.member = as_int64(v); },             \
        [](const RunConfig& c) { return std::to_string(c.member); }                      \
  }
#define IBOED_INTS(sec, name, member)                                                    \
  Field {                                                                                \
    sec, name, [](RunConfig& c, const Value& v) { c.member = as_int_list(v); },          \
        [](const RunConfig& c) { return int_list(c.member); }                            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"", "seed",
            [](RunConfig& c, const Value& v) {
              const auto s = as_int64(v);
              if (s < 0) throw std::string("must be >= 0");
              c.trainer.seed = static_cast<std::uint64_t>(s);
            },
            [](const RunConfig& c) { return std::to_string(c.trainer.seed); }},
      Field{"", "reward",
            [](RunConfig& c, const Value& v) { c.trainer.reward = enum_from(v, est::parse_reward_kind); },
            [](const RunConfig& c) { return quote(est::to_string(c.trainer.reward)); }},
      Field{"", "output_dir", [](RunConfig& c, const Value& v) { c.output_dir = as_string(v); },
            [](const RunConfig& c) { return quote(c.output_dir); }},

      IBOED_DOUBLE("trainer", "learning_rate", trainer.learning_rate),
      IBOED_INT("trainer", "batch_size", trainer.batch_size),
      IBOED_INTS("trainer", "hidden", trainer.hidden),
      IBOED_INT("trainer", "updates_per_timestep", trainer.updates_per_timestep),
      IBOED_INT("trainer", "policy_update_frequency", trainer.policy_update_frequency),
      IBOED_DOUBLE("trainer", "policy_noise", trainer.policy_noise),
      IBOED_DOUBLE("trainer", "noise_clip", trainer.noise_clip),
      IBOED_DOUBLE("trainer", "exploration_noise", trainer.exploration_noise),
      IBOED_DOUBLE("trainer", "gamma", trainer.gamma),
      IBOED_DOUBLE("trainer", "tau", trainer.tau),
      IBOED_INT("trainer", "replay_capacity", trainer.replay_capacity),
      IBOED_INT("trainer", "parallel_envs", trainer.parallel_envs),
      IBOED_INT("trainer", "horizon", trainer.horizon),
      IBOED_INT("trainer", "num_contrastive", trainer.num_contrastive),
      IBOED_INT64("trainer", "initial_random_timesteps", trainer.initial_random_timesteps),
      IBOED_INT64("trainer", "total_timesteps", trainer.total_timesteps),
      IBOED_INT64("trainer", "eval_every", trainer.eval_every),
      IBOED_INT("trainer", "eval_rollouts", trainer.eval_rollouts),
      IBOED_INT("trainer", "eval_contrastive", trainer.eval_contrastive),
      Field{"trainer", "eval_bound",
            [](RunConfig& c, const Value& v) { c.trainer.eval_bound = enum_from(v, est::parse_bound_kind); },
            [](const RunConfig& c) { return quote(est::to_string(c.trainer.eval_bound)); }},
      Field{"trainer", "record_wall_clock",
            [](RunConfig& c, const Value& v) { c.trainer.record_wall_clock = as_bool(v); },
            [](const RunConfig& c) { return std::string(c.trainer.record_wall_clock ? "true" : "false"); }},

      Field{"critic", "encoder",
            [](RunConfig& c, const Value& v) {
              c.trainer.critic.encoder = enum_from(v, critic::parse_history_encoder);
            },
            [](const RunConfig& c) { return quote(critic::to_string(c.trainer.critic.encoder)); }},
      IBOED_INT("critic", "embed_dim", trainer.critic.embed_dim),
      IBOED_INTS("critic", "pair_hidden", trainer.critic.pair_hidden),
      IBOED_INTS("critic", "attention_hidden", trainer.critic.attention_hidden),
      IBOED_INT("critic", "lstm_hidden", trainer.critic.lstm_hidden),
      IBOED_INTS("critic", "theta_hidden", trainer.critic.theta_hidden),
      IBOED_DOUBLE("critic", "learning_rate", trainer.critic_learning_rate),
      IBOED_DOUBLE("critic", "tau", trainer.critic_tau),
      IBOED_INT("critic", "updates_per_iteration", trainer.critic_updates_per_iteration),
      IBOED_INT("critic", "batch_size", trainer.critic_batch_size),

      Field{"estimator", "bound",
            [](RunConfig& c, const Value& v) { c.estimator.bound = enum_from(v, est::parse_bound_kind); },
            [](const RunConfig& c) { return quote(est::to_string(c.estimator.bound)); }},
      IBOED_INT("estimator", "num_contrastive", estimator.num_contrastive),
      IBOED_INT("estimator", "rollouts", estimator.rollouts),
  };
  return table;
}

#undef IBOED_DOUBLE
#undef IBOED_INT
#undef IBOED_INT64
#undef IBOED_INTS

const char* kSections[] = {"", "model", "trainer", "critic", "estimator"};

// Maps a TrainerConfig::validate() key to its config-file key.
std::string file_key(const std::string& key) {
  static const std::map<std::string, std::string> renames = {
      {"critic_learning_rate", "critic.learning_rate"},
      {"critic_tau", "critic.tau"},
      {"critic_updates_per_iteration", "critic.updates_per_iteration"},
      {"critic_batch_size", "critic.batch_size"},
      {"seed", "seed"},
  };
  if (auto it = renames.find(key); it != renames.end()) return it->second;
  if (key.rfind("critic.", 0) == 0) return key;
  return "trainer." + key;
}

void validate_impl(const RunConfig& c, const std::string& source, const std::map<std::string, int>& lines) {
  const auto line_of = [&](const std::string& key) {
    auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  };
  std::unique_ptr<sim::Model> model;
  try {
    model = sim::make_model(c.model, c.model_options);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, line_of("model.name"), "model", e.what());
  }
  try {
    c.trainer.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    const std::string key = file_key(msg.substr(0, colon));
    throw ConfigError(source, line_of(key), key, trim(msg.substr(colon + 1)));
  }
  if (static_cast<double>(c.trainer.seed) > kMaxExactInteger) {
    throw ConfigError(source, line_of("seed"), "seed", "must be <= 9007199254740991");
  }
  if (c.estimator.num_contrastive < 1) {
    throw ConfigError(source, line_of("estimator.num_contrastive"), "estimator.num_contrastive", "must be >= 1");
  }
  if (c.estimator.rollouts < 2) {
    throw ConfigError(source, line_of("estimator.rollouts"), "estimator.rollouts", "must be >= 2");
  }
  const auto needs_likelihood = [](est::BoundKind k) { return k != est::BoundKind::InfoNce; };
  if (!model->has_likelihood()) {
    if (needs_likelihood(c.estimator.bound)) {
      throw ConfigError(source, line_of("estimator.bound"), "estimator.bound",
                        std::string(est::to_string(c.estimator.bound)) + " needs a likelihood; model " + c.model +
                            " is likelihood-free (use infonce)");
    }
    if (needs_likelihood(c.trainer.eval_bound)) {
      throw ConfigError(source, line_of("trainer.eval_bound"), "trainer.eval_bound",
                        std::string(est::to_string(c.trainer.eval_bound)) + " needs a likelihood; model " +
                            c.model + " is likelihood-free (use infonce)");
    }
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& source) {
  std::vector<Entry> entries;
  std::string section;
  std::vector<std::string> seen_sections;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, "", "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(std::begin(kSections) + 1, std::end(kSections), section) == std::end(kSections)) {
        throw ConfigError(source, line_no, section, "unknown section");
      }
      if (std::find(seen_sections.begin(), seen_sections.end(), section) != seen_sections.end()) {
        throw ConfigError(source, line_no, section, "duplicate section");
      }
      seen_sections.push_back(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    if (key.empty()) throw ConfigError(source, line_no, "", "missing key");
    for (const auto& e : entries) {
      if (e.section == section && e.key == key) throw ConfigError(source, line_no, full, "duplicate key");
    }
    Value v = parse_value(trim(line.substr(eq + 1)),
                          [&](const std::string& msg) { throw ConfigError(source, line_no, full, msg); });
    entries.push_back(Entry{section, key, std::move(v), line_no});
  }

  std::string model = "location_finding";
  std::map<std::string, int> lines;
  for (const auto& e : entries) {
    lines[e.section.empty() ? e.key : e.section + "." + e.key] = e.line;
    if (e.section == "model" && e.key == "name") {
      const auto* s = std::get_if<std::string>(&e.value);
      if (s == nullptr) throw ConfigError(source, e.line, "model.name", "expected a quoted string");
      const auto names = sim::registered_models();
      if (std::find(names.begin(), names.end(), *s) == names.end()) {
        throw ConfigError(source, e.line, "model.name", "unknown model '" + *s + "'");
      }
      model = *s;
    }
  }

  RunConfig config = default_config(model);
  const auto option_keys = sim::model_option_keys(model);
  for (const auto& e : entries) {
    const std::string full = e.section.empty() ? e.key : e.section + "." + e.key;
    if (e.section == "model") {
      if (e.key == "name") continue;
      if (std::find(option_keys.begin(), option_keys.end(), e.key) == option_keys.end()) {
        throw ConfigError(source, e.line, full, "unknown option for model " + model);
      }
      const auto* d = std::get_if<double>(&e.value);
      if (d == nullptr) throw ConfigError(source, e.line, full, "expected a number");
      config.model_options[e.key] = *d;
      continue;
    }
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return e.section == f.section && e.key == f.key; });
    if (it == table.end()) throw ConfigError(source, e.line, full, "unknown key");
    try {
      it->set(config, e.value);
    } catch (const std::string& msg) {
      throw ConfigError(source, e.line, full, msg);
    }
  }
  validate_impl(config, source, lines);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate(const RunConfig& config) { validate_impl(config, "<config>", {}); }

std::string to_toml(const RunConfig& c) {
  std::string out;
  std::string current = "";
  for (const char* section : kSections) {
    if (*section != '\0') out += std::string("\n[") + section + "]\n";
    if (std::string(section) == "model") {
      out += "name = " + quote(c.model) + "\n";
      for (const auto& [k, v] : c.model_options) out += k + " = " + format_double(v) + "\n";
      continue;
    }
    for (const auto& f : fields()) {
      if (std::string(f.section) == section) out += std::string(f.key) + " = " + f.get(c) + "\n";
    }
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_toml(config))));
  return buf;
}

}  // namespace iboed::io
