#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bcl {

// Purpose labels; one master seed is split into one stream per label so that
// changing how one stage consumes randomness never perturbs another stage.
enum class Stream : std::uint8_t {
  init,
  negatives,
  grouping,
  augmentation,
  clustering,
  datagen,
  batching,
  dropout,
};

std::string_view stream_name(Stream s) noexcept;

// Deterministic random stream keyed by (seed, label, substream).
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The distributions are written out here because the standard
// library's distributions are implementation-defined and would break
// cross-platform reproducibility.
class RngStream {
 public:
  RngStream(std::uint64_t seed, Stream label, std::uint64_t substream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  Stream label() const noexcept { return label_; }
  std::uint64_t substream() const noexcept { return substream_; }

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform();
  // (0, 1); never returns 0, safe under log.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream, e.g. one per bagging run or per user.
  RngStream fork(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  Stream label_;
  std::uint64_t substream_;
  std::mt19937_64 engine_;
};

}  // namespace bcl
