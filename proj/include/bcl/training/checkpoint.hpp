#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bcl/encoder.hpp"
#include "bcl/numerics/matrix.hpp"
#include "bcl/training/config.hpp"

namespace bcl {

struct EpochLog {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_bpr = 0.0;
  double loss_cl = 0.0;
  double wall_ms = 0.0;                   // not persisted in checkpoints
  std::optional<double> val_recall;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

nlohmann::json epoch_log_json(const EpochLog& log, bool with_wall_time = true);

// Trained model snapshot. Tensor values are already rounded to 32-bit floats
// so that the in-memory checkpoint and its file form are interchangeable.
struct Checkpoint {
  static constexpr std::uint8_t kVersion = 1;

  TrainConfig config;
  EncoderConfig encoder;
  std::map<std::string, Matrix> tensors;
  Matrix correlation;
  std::vector<EpochLog> log;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Layout: "BCL1", u8 version, u32 header length, JSON header (configs,
// tensor names and shapes, log summary), then every tensor in header order
// as little-endian 32-bit floats, then a u64 FNV-1a checksum of all preceding
// bytes.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source = "<checkpoint>");

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a of the serialized form.
std::uint64_t checkpoint_fingerprint(const Checkpoint& ckpt);

EncoderModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace bcl
