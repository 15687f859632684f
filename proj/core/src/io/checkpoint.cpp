#include "iboed/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace iboed::io {

const Matrix& Checkpoint::array(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw CheckpointError("checkpoint has no array '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = texts.find(name);
  if (it == texts.end()) throw CheckpointError("checkpoint has no text entry '" + name + "'");
  return it->second;
}

namespace {

enum : std::uint8_t { kArray = 0, kText = 1 };

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) { put(out, std::bit_cast<std::uint64_t>(d)); }

void put_bytes(std::string& out, std::string_view s) { out.append(s.data(), s.size()); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string_view take(std::uint64_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void add_params(Checkpoint& c, const std::string& prefix, const nn::ParameterList& params) {
  for (std::size_t i = 0; i < params.size(); ++i) c.arrays[prefix + "/" + std::to_string(i)] = params[i].value();
}

void add_adam(Checkpoint& c, const std::string& prefix, const nn::AdamState& s) {
  for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
    c.arrays[prefix + "/m/" + std::to_string(i)] = s.first_moment[i];
    c.arrays[prefix + "/v/" + std::to_string(i)] = s.second_moment[i];
  }
  c.texts[prefix + "/step"] = std::to_string(s.step);
}

void check_shape(const std::string& name, const Matrix& have, const Matrix& want) {
  if (have.rows() != want.rows() || have.cols() != want.cols()) {
    throw CheckpointError("checkpoint array '" + name + "' has shape " + shape_str(have.rows(), have.cols()) +
                          ", network expects " + shape_str(want.rows(), want.cols()));
  }
}

void load_params(const Checkpoint& c, const std::string& prefix, nn::ParameterList params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = prefix + "/" + std::to_string(i);
    const Matrix& m = c.array(name);
    check_shape(name, m, params[i].value());
    params[i].mutable_value() = m;
  }
  if (c.arrays.count(prefix + "/" + std::to_string(params.size())) != 0) {
    throw CheckpointError("checkpoint has more '" + prefix + "' arrays than the network");
  }
}

std::int64_t parse_int(const Checkpoint& c, const std::string& name) {
  const std::string& s = c.text(name);
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw CheckpointError("checkpoint entry '" + name + "' is not an integer");
  return v;
}

void load_adam(const Checkpoint& c, const std::string& prefix, nn::AdamState& s) {
  for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
    const std::string m = prefix + "/m/" + std::to_string(i), v = prefix + "/v/" + std::to_string(i);
    check_shape(m, c.array(m), s.first_moment[i]);
    check_shape(v, c.array(v), s.second_moment[i]);
    s.first_moment[i] = c.array(m);
    s.second_moment[i] = c.array(v);
  }
  s.step = parse_int(c, prefix + "/step");
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ckpt.arrays.size() + ckpt.texts.size());
  for (const auto& [name, m] : ckpt.arrays) {
    put<std::uint8_t>(out, kArray);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col) put_f64(out, m(r, col));
  }
  for (const auto& [name, text] : ckpt.texts) {
    put<std::uint8_t>(out, kText);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name);
    put<std::uint64_t>(out, text.size());
    put_bytes(out, text);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kCheckpointMagic)) != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto kind = in.get<std::uint8_t>();
    const std::string name(in.take(in.get<std::uint32_t>()));
    if (c.arrays.count(name) != 0 || c.texts.count(name) != 0) {
      throw CheckpointError("duplicate checkpoint entry '" + name + "'");
    }
    if (kind == kArray) {
      const auto rows = in.get<std::uint64_t>(), cols = in.get<std::uint64_t>();
      if (cols != 0 && rows > (bytes.size() / 8) / cols) throw CheckpointError("array '" + name + "' too large");
      Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = in.get_f64();
      c.arrays.emplace(name, std::move(m));
    } else if (kind == kText) {
      c.texts.emplace(name, std::string(in.take(in.get<std::uint64_t>())));
    } else {
      throw CheckpointError("unknown entry kind " + std::to_string(kind) + " for '" + name + "'");
    }
  }
  if (!in.done()) throw CheckpointError("trailing bytes after last checkpoint entry");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

Checkpoint snapshot(const rl::Trainer& trainer, const RunConfig& config) {
  Checkpoint c;
  const auto& a = trainer.agent();
  add_params(c, "actor", a.actor.parameters());
  add_params(c, "actor_target", a.actor_target.parameters());
  add_params(c, "q", a.q.parameters());
  add_params(c, "q_target", a.q_target.parameters());
  add_params(c, "critic", trainer.critic().parameters());
  add_params(c, "critic_target", trainer.target_critic().parameters());
  add_adam(c, "actor_opt", a.actor_opt);
  add_adam(c, "q_opt", a.q_opt);
  add_adam(c, "critic_opt", trainer.critic_optimizer());

  std::ostringstream rng;
  rng << trainer.rng();
  c.texts["format"] = "iboed-checkpoint/" + std::to_string(kCheckpointVersion);
  c.texts["config"] = to_toml(config);
  c.texts["config_hash"] = config_hash(config);
  c.texts["rng"] = rng.str();
  c.texts["env_steps"] = std::to_string(trainer.env_steps());
  c.texts["iterations"] = std::to_string(trainer.iterations());
  c.texts["next_trajectory_id"] = std::to_string(trainer.next_trajectory_id());
  c.texts["td3_updates"] = std::to_string(a.updates);
  return c;
}

void restore(rl::Trainer& trainer, const Checkpoint& c) {
  auto& a = trainer.agent();
  load_params(c, "actor", a.actor.parameters());
  load_params(c, "actor_target", a.actor_target.parameters());
  load_params(c, "q", a.q.parameters());
  load_params(c, "q_target", a.q_target.parameters());
  load_params(c, "critic", trainer.critic().parameters());
  load_params(c, "critic_target", trainer.target_critic().parameters());
  load_adam(c, "actor_opt", a.actor_opt);
  load_adam(c, "q_opt", a.q_opt);
  load_adam(c, "critic_opt", trainer.critic_optimizer());

  std::istringstream rng(c.text("rng"));
  rng >> trainer.rng();
  if (!rng) throw CheckpointError("checkpoint RNG state is malformed");
  a.updates = parse_int(c, "td3_updates");
  trainer.restore_counters(parse_int(c, "env_steps"), parse_int(c, "iterations"),
                           parse_int(c, "next_trajectory_id"));
}

RunConfig checkpoint_config(const Checkpoint& ckpt) {
  RunConfig config = parse_config(ckpt.text("config"), "<checkpoint config>");
  if (config_hash(config) != ckpt.text("config_hash")) {
    throw CheckpointError("checkpoint config hash does not match its embedded config");
  }
  return config;
}

}  // namespace iboed::io
