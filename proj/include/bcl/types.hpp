#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace bcl {

using SongId = std::uint32_t;
using UserId = std::uint32_t;

// One catalog entry: categorical attributes plus precomputed audio and lyric
// vectors. genre is generator ground truth and never reaches the model.
struct SongContent {
  SongId song_id = 0;
  std::vector<std::uint32_t> attrs;
  std::vector<double> audio;
  std::vector<double> lyric;
  std::optional<std::uint32_t> genre;

  friend bool operator==(const SongContent&, const SongContent&) = default;
};

// Undirected co-occurrence pair, canonical order song_i < song_j.
struct ScoredPair {
  SongId song_i = 0;
  SongId song_j = 0;
  double score = 0.0;

  friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

enum class Behavior : std::uint8_t { play, red_heart, songmark };

struct BehaviorEvent {
  UserId user_id = 0;
  SongId song_id = 0;
  std::int64_t timestamp = 0;
  Behavior behavior = Behavior::play;

  friend bool operator==(const BehaviorEvent&, const BehaviorEvent&) = default;
};

}  // namespace bcl
