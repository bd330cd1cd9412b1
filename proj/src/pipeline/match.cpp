#include "bcl/pipeline/match.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <type_traits>

#include "bcl/errors.hpp"

namespace bcl {
namespace {

using Clock = std::chrono::steady_clock;

// Runs fn as a named stage: records its wall time and tags failures with the
// stage name (keeping the error kind).
template <typename F>
auto stage(MatchResponse& resp, const char* name, F&& fn) {
  const auto t0 = Clock::now();
  auto record = [&] {
    resp.timings.push_back(
        {name, std::chrono::duration<double, std::milli>(Clock::now() - t0).count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto r = fn();
      record();
      return r;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("match stage '") + name + "': " + e.what());
  }
}

void run_cat(MatchResponse& resp, const std::vector<SongId>& songs, std::size_t m,
             std::span<const BehaviorEvent> events, const io::UserEmbeddings& users,
             const CatConfig& config, const cat::RecencyWindow& window) {
  resp.targets.m = m;
  const cat::CandidatePool pool = stage(resp, "pool", [&] {
    return cat::candidate_pool(events, songs, window, users);
  });
  resp.pool_size = pool.candidates.size();
  resp.missing_embeddings = pool.missing_embeddings;
  if (pool.candidates.empty()) {
    resp.targets.empty_pool = true;
    resp.targets.truncated = true;
    resp.reason = "empty_candidate_pool";
    return;
  }

  cat::BaggingOptions opts = config.bagging;
  const auto sub = static_cast<std::size_t>(
      std::ceil(opts.fraction * static_cast<double>(pool.candidates.size())));
  if (sub < opts.k) {
    opts.k = sub;
    resp.reason = "clusters_reduced_to_pool";
  }
  resp.clusters = opts.k;
  const std::vector<cat::WeakClassifier> classifiers = stage(resp, "cluster", [&] {
    return cat::bagged_centroids(cat::pool_matrix(pool.candidates), opts,
                                 RngStream(config.seed, Stream::clustering));
  });
  resp.targets = stage(resp, "target", [&] { return cat::target(pool.candidates, classifiers, m); });
}

}  // namespace

MatchRequest parse_match_request(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("match request must be a JSON object");
  MatchRequest r;
  try {
    if (j.contains("id")) {
      const auto& id = j.at("id");
      r.id = id.is_string() ? id.get<std::string>() : id.dump();
    }
    const auto& c = j.at("content");
    if (c.contains("song_id")) r.content.song_id = c.at("song_id").get<SongId>();
    r.content.attrs = c.at("attrs").get<std::vector<std::uint32_t>>();
    r.content.audio = c.at("audio").get<std::vector<double>>();
    r.content.lyric = c.at("lyric").get<std::vector<double>>();
    if (c.contains("genre") && !c.at("genre").is_null())
      r.content.genre = c.at("genre").get<std::uint32_t>();
    if (j.contains("k_songs")) r.k_songs = j.at("k_songs").get<std::size_t>();
    if (j.contains("m_audiences")) r.m_audiences = j.at("m_audiences").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("match request: ") + e.what());
  }
  if (r.k_songs == 0) throw ContractError("k_songs must be at least 1");
  if (r.m_audiences == 0) throw ContractError("m_audiences must be at least 1");
  return r;
}

nlohmann::json response_json(const MatchResponse& r, bool with_timings) {
  nlohmann::json j;
  if (r.id) j["id"] = *r.id;
  nlohmann::json songs = nlohmann::json::array();
  for (const auto& s : r.retrieved) songs.push_back({{"song_id", s.id}, {"score", s.score}});
  j["retrieved"] = songs;
  j["pool_size"] = r.pool_size;
  j["missing_embeddings"] = r.missing_embeddings;
  j["clusters"] = r.clusters;
  j["targets"] = cat::target_json(r.targets);
  j["targets_truncated"] = r.targets.truncated;
  j["reason"] = r.reason ? nlohmann::json(*r.reason) : nlohmann::json(nullptr);
  if (with_timings) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& s : r.timings) t[s.stage] = s.ms;
    j["timings_ms"] = t;
  }
  return j;
}

void to_json(nlohmann::json& j, const CatConfig& c) {
  j = {{"k", c.bagging.k},
       {"runs", c.bagging.runs},
       {"fraction", c.bagging.fraction},
       {"max_iters", c.bagging.max_iters},
       {"recency_fraction", c.recency_fraction},
       {"seed", c.seed}};
  if (c.window) j["window"] = {c.window->from, c.window->to};
}

void from_json(const nlohmann::json& j, CatConfig& c) {
  try {
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known{"k",  "runs",   "fraction", "max_iters",
                                               "recency_fraction", "seed", "window"};
      if (!known.count(key)) throw FormatError("unknown CAT config key '" + key + "'");
    }
    if (j.contains("k")) j.at("k").get_to(c.bagging.k);
    if (j.contains("runs")) j.at("runs").get_to(c.bagging.runs);
    if (j.contains("fraction")) j.at("fraction").get_to(c.bagging.fraction);
    if (j.contains("max_iters")) j.at("max_iters").get_to(c.bagging.max_iters);
    if (j.contains("recency_fraction")) j.at("recency_fraction").get_to(c.recency_fraction);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("window")) {
      const auto w = j.at("window").get<std::vector<std::int64_t>>();
      if (w.size() != 2) throw FormatError("CAT window must be [from, to]");
      c.window = cat::RecencyWindow{w[0], w[1]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("CAT config: ") + e.what());
  }
}

MatchContext::MatchContext(const Checkpoint& ckpt, SongPoolIndex index,
                           std::vector<BehaviorEvent> events, io::UserEmbeddings users,
                           CatConfig config)
    : model_(model_from_checkpoint(ckpt)),
      index_(std::move(index)),
      events_(std::move(events)),
      users_(std::move(users)),
      config_(std::move(config)) {
  const auto fp = checkpoint_fingerprint(ckpt);
  if (index_.fingerprint() != fp) {
    throw ContractError("index was built from a different checkpoint (index fingerprint " +
                        std::to_string(index_.fingerprint()) + ", checkpoint " +
                        std::to_string(fp) + ")");
  }
  if (index_.dim() != model_.config().rep_dim) {
    throw ContractError("index rows have " + std::to_string(index_.dim()) +
                        " dims, checkpoint representations " +
                        std::to_string(model_.config().rep_dim));
  }
  window_ = config_.window ? *config_.window : cat::default_window(events_, config_.recency_fraction);
}

MatchResponse MatchContext::run(const MatchRequest& request) const {
  MatchResponse resp;
  resp.id = request.id;
  const std::vector<double> rep = stage(resp, "encode", [&] {
    return encode(assemble_input(request.content, model_), model_);
  });
  const TopK top = stage(resp, "retrieve", [&] { return top_k(index_, rep, request.k_songs); });
  resp.retrieved = top.items;
  std::vector<SongId> songs;
  for (const auto& r : top.items) songs.push_back(r.id);
  run_cat(resp, songs, request.m_audiences, events_, users_, config_, window_);
  return resp;
}

MatchResponse run_targeting(const std::vector<SongId>& songs, std::size_t m,
                            const std::vector<BehaviorEvent>& events,
                            const io::UserEmbeddings& users, const CatConfig& config) {
  if (m == 0) throw ContractError("m must be at least 1");
  MatchResponse resp;
  const cat::RecencyWindow window =
      config.window ? *config.window : cat::default_window(events, config.recency_fraction);
  run_cat(resp, songs, m, events, users, config, window);
  return resp;
}

}  // namespace bcl
