#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bcl/cat/cat.hpp"
#include "bcl/encoder.hpp"
#include "bcl/retrieval/index.hpp"
#include "bcl/training/checkpoint.hpp"
#include "json.hpp"

namespace bcl {

struct MatchRequest {
  std::optional<std::string> id;  // echoed back when present
  SongContent content;            // song_id is ignored
  std::size_t k_songs = 50;
  std::size_t m_audiences = 100;
};

// {"id"?, "content": {"attrs", "audio", "lyric", "genre"?}, "k_songs"?, "m_audiences"?}
MatchRequest parse_match_request(const nlohmann::json& j);

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct MatchResponse {
  std::optional<std::string> id;
  std::vector<Ranked> retrieved;
  std::size_t pool_size = 0;
  std::size_t missing_embeddings = 0;
  std::size_t clusters = 0;  // K actually used
  cat::TargetSet targets;
  std::optional<std::string> reason;  // why targets are empty or reduced
  std::vector<StageTiming> timings;
};

// Wall-clock timings make responses differ run to run; leave them out when
// comparing or archiving responses.
nlohmann::json response_json(const MatchResponse& r, bool with_timings = true);

struct CatConfig {
  cat::BaggingOptions bagging;
  double recency_fraction = 0.25;
  std::optional<cat::RecencyWindow> window;  // overrides the fraction
  std::uint64_t seed = 42;
};

void to_json(nlohmann::json& j, const CatConfig& c);
void from_json(const nlohmann::json& j, CatConfig& c);

// Everything the online stage needs, loaded once.
class MatchContext {
 public:
  MatchContext(const Checkpoint& ckpt, SongPoolIndex index, std::vector<BehaviorEvent> events,
               io::UserEmbeddings users, CatConfig config);

  const SongPoolIndex& index() const noexcept { return index_; }
  const EncoderModel& model() const noexcept { return model_; }
  const CatConfig& config() const noexcept { return config_; }
  const cat::RecencyWindow& window() const noexcept { return window_; }

  MatchResponse run(const MatchRequest& request) const;

 private:
  EncoderModel model_;
  SongPoolIndex index_;
  std::vector<BehaviorEvent> events_;
  io::UserEmbeddings users_;
  CatConfig config_;
  cat::RecencyWindow window_;
};

// Audience targeting for an explicit set of seed songs (no encoding step).
MatchResponse run_targeting(const std::vector<SongId>& songs, std::size_t m,
                            const std::vector<BehaviorEvent>& events,
                            const io::UserEmbeddings& users, const CatConfig& config);

}  // namespace bcl
