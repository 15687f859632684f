#pragma once

#include "iboed/io/config.hpp"
#include "iboed/rl/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace iboed::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'I', 'B', 'O', 'E', 'D', 'C', 'K', '\0'};

// Layout (all integers and doubles little-endian):
//   magic[8] | u32 version | u64 entry count | entries
//   entry: u8 kind | u32 name length | name
//          kind 0 (array): u64 rows | u64 cols | rows*cols f64, row-major
//          kind 1 (text):  u64 length | bytes
struct Checkpoint {
  std::map<std::string, Matrix> arrays;
  std::map<std::string, std::string> texts;

  [[nodiscard]] const Matrix& array(const std::string& name) const;
  [[nodiscard]] const std::string& text(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

// Writes to a temporary sibling and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Every network and optimizer array, the config text and hash, the trainer
// RNG state and counters. The replay buffer is not included.
Checkpoint snapshot(const rl::Trainer& trainer, const RunConfig& config);
// Loads parameters, optimizer moments, RNG state and counters into a trainer
// built from the same config. Throws CheckpointError on any shape mismatch.
void restore(rl::Trainer& trainer, const Checkpoint& ckpt);

// The embedded config, parsed.
RunConfig checkpoint_config(const Checkpoint& ckpt);

}  // namespace iboed::io
