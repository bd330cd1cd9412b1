#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bcl/io/formats.hpp"
#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/rng.hpp"
#include "bcl/types.hpp"
#include "json.hpp"

// Synthetic stand-in for a proprietary song-to-song interaction dataset:
// genre-structured song content, power-law popularity, simulated user
// behavior sequences, co-occurrence mining and a train/test split.
namespace bcl::datagen {

struct GenConfig {
  std::size_t n_songs = 2000;
  std::size_t n_users = 500;
  std::size_t n_genres = 5;
  std::size_t n_attributes = 7;
  std::size_t feature_dim = 32;
  std::size_t vocab_size = 24;          // per attribute field
  double popularity_exponent = 1.0;     // gamma
  std::size_t events_per_user = 100;
  std::size_t window = 3;               // co-occurrence window, in sequence positions
  double weight_play = 1.0;
  double weight_red_heart = 2.0;
  double weight_songmark = 2.0;
  double threshold = 2.0;
  double test_fraction = 0.1;
  double attribute_resample = 0.2;      // chance an attribute ignores the genre
  double content_jitter = 0.3;          // sigma of per-song Gaussian jitter
  double lyric_audio_coupling = 0.5;    // correlation of lyric jitter with audio jitter
  double taste_strength = 6.0;          // sharpness of the within-genre taste affinity
  std::size_t user_dim = 128;
  std::int64_t time_span = 90 * 24 * 60;  // ticks (minutes)
  std::uint64_t seed = 42;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

struct Catalog {
  std::vector<SongContent> songs;
  std::vector<double> popularity;       // normalized, proportional to rank^-gamma
  Matrix audio_centroids;               // genres x d
  Matrix lyric_centroids;
  Matrix taste_directions;              // songs x d, unit within-genre audio offsets
};

struct UserProfile {
  std::vector<double> genre_pref;       // sums to 1
  std::vector<double> taste;            // unit vector in R^d
};

Catalog generate_catalog(const GenConfig& cfg, RngStream& rng);

std::vector<UserProfile> generate_users(const GenConfig& cfg, RngStream& rng);

// Affinity-weighted sampling distribution of one user over the catalog:
// popularity x genre preference x exp(taste_strength * <taste, offset>).
std::vector<double> song_weights(const Catalog& catalog, const UserProfile& user,
                                 const GenConfig& cfg);

// events_per_user events for every user, each user's timestamps strictly
// increasing; output grouped by user in ascending id.
std::vector<BehaviorEvent> generate_behavior(const Catalog& catalog,
                                             const std::vector<UserProfile>& users,
                                             const GenConfig& cfg, RngStream& rng);

struct BehaviorWeights {
  double play = 1.0;
  double red_heart = 2.0;
  double songmark = 2.0;
  double of(Behavior b) const;
};

// For every pair of one user's events at most `window` positions apart with
// distinct songs, add weight(b1) * weight(b2) to the unordered pair. Events
// must be grouped by user with strictly increasing timestamps per user.
// Output sorted by (song_i, song_j).
std::vector<ScoredPair> mine_cooccurrence(const std::vector<BehaviorEvent>& events,
                                          std::size_t window, const BehaviorWeights& weights);

// Pairs with score >= threshold, sorted by descending score, ties by (i, j).
std::vector<ScoredPair> threshold_filter(const std::vector<ScoredPair>& pairs, double threshold);

struct Split {
  std::vector<ScoredPair> train;
  std::vector<ScoredPair> test;
  std::size_t dropped_test = 0;  // held-out pairs whose songs had no training pair
};

// Per-pair Bernoulli(test_fraction) split. A held-out pair survives only if
// at least one of its songs keeps a training pair.
Split split_pairs(const std::vector<ScoredPair>& pairs, double test_fraction, RngStream& rng);

struct DatasetStats {
  std::size_t songs = 0;
  std::size_t pairs = 0;
  double avg_pairs_per_song = 0.0;
  double density = 0.0;
};
DatasetStats dataset_stats(std::size_t n_songs, std::size_t n_pairs);
nlohmann::json stats_json(const DatasetStats& s);

// Gini coefficient of a non-negative sample.
double gini(std::vector<double> values);
// Number of pairs touching each song id in [0, n_songs).
std::vector<double> pair_counts(const std::vector<ScoredPair>& pairs, std::size_t n_songs);

// Lifts each user's genre preference into user_dim via a fixed Gaussian
// projection; the stand-in for audience embeddings served by a feature store.
io::UserEmbeddings user_embeddings(const std::vector<UserProfile>& users, const GenConfig& cfg,
                                   RngStream& rng);

struct World {
  GenConfig config;
  Catalog catalog;
  std::vector<UserProfile> users;
  io::UserEmbeddings embeddings;
  std::vector<BehaviorEvent> events;
  std::vector<ScoredPair> mined;
  std::vector<ScoredPair> positives;
  Split split;
  DatasetStats stats;
};

World generate_world(const GenConfig& cfg);

// Files written by write_world / read by the other stages.
namespace files {
inline constexpr const char* catalog = "catalog.jsonl";
inline constexpr const char* events = "events.tsv";
inline constexpr const char* pairs = "pairs.tsv";
inline constexpr const char* train = "train_pairs.tsv";
inline constexpr const char* test = "test_pairs.tsv";
inline constexpr const char* users = "users.tsv";
inline constexpr const char* stats = "stats.json";
inline constexpr const char* config = "gen_config.json";
}  // namespace files

void write_world(const World& world, const std::filesystem::path& dir);

}  // namespace bcl::datagen
