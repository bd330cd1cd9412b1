#include "bcl/datagen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "bcl/errors.hpp"

namespace bcl::datagen {

using nlohmann::json;

void GenConfig::validate() const {
  if (n_songs < 2 || n_users == 0 || n_genres == 0 || n_attributes == 0 || feature_dim == 0 ||
      vocab_size == 0 || events_per_user == 0 || user_dim == 0) {
    throw ContractError("gen config: counts must be at least 1 (n_songs at least 2)");
  }
  if (!(popularity_exponent > 0.0)) throw ContractError("gen config: gamma must be positive");
  if (!(threshold >= 0.0)) throw ContractError("gen config: threshold must be non-negative");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ContractError("gen config: test_fraction must lie in (0, 1)");
  if (!(attribute_resample >= 0.0 && attribute_resample <= 1.0))
    throw ContractError("gen config: attribute_resample must lie in [0, 1]");
  if (!(lyric_audio_coupling >= 0.0 && lyric_audio_coupling <= 1.0))
    throw ContractError("gen config: lyric_audio_coupling must lie in [0, 1]");
  if (time_span < static_cast<std::int64_t>(events_per_user))
    throw ContractError("gen config: time_span shorter than events_per_user");
}

void to_json(json& j, const GenConfig& c) {
  j = json{{"n_songs", c.n_songs},
           {"n_users", c.n_users},
           {"n_genres", c.n_genres},
           {"n_attributes", c.n_attributes},
           {"feature_dim", c.feature_dim},
           {"vocab_size", c.vocab_size},
           {"popularity_exponent", c.popularity_exponent},
           {"events_per_user", c.events_per_user},
           {"window", c.window},
           {"weight_play", c.weight_play},
           {"weight_red_heart", c.weight_red_heart},
           {"weight_songmark", c.weight_songmark},
           {"threshold", c.threshold},
           {"test_fraction", c.test_fraction},
           {"attribute_resample", c.attribute_resample},
           {"content_jitter", c.content_jitter},
           {"lyric_audio_coupling", c.lyric_audio_coupling},
           {"taste_strength", c.taste_strength},
           {"user_dim", c.user_dim},
           {"time_span", c.time_span},
           {"seed", c.seed}};
}

void from_json(const json& j, GenConfig& c) {
  const GenConfig d;
  c.n_songs = j.value("n_songs", d.n_songs);
  c.n_users = j.value("n_users", d.n_users);
  c.n_genres = j.value("n_genres", d.n_genres);
  c.n_attributes = j.value("n_attributes", d.n_attributes);
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.popularity_exponent = j.value("popularity_exponent", d.popularity_exponent);
  c.events_per_user = j.value("events_per_user", d.events_per_user);
  c.window = j.value("window", d.window);
  c.weight_play = j.value("weight_play", d.weight_play);
  c.weight_red_heart = j.value("weight_red_heart", d.weight_red_heart);
  c.weight_songmark = j.value("weight_songmark", d.weight_songmark);
  c.threshold = j.value("threshold", d.threshold);
  c.test_fraction = j.value("test_fraction", d.test_fraction);
  c.attribute_resample = j.value("attribute_resample", d.attribute_resample);
  c.content_jitter = j.value("content_jitter", d.content_jitter);
  c.lyric_audio_coupling = j.value("lyric_audio_coupling", d.lyric_audio_coupling);
  c.taste_strength = j.value("taste_strength", d.taste_strength);
  c.user_dim = j.value("user_dim", d.user_dim);
  c.time_span = j.value("time_span", d.time_span);
  c.seed = j.value("seed", d.seed);
}

Catalog generate_catalog(const GenConfig& cfg, RngStream& rng) {
  cfg.validate();
  const std::size_t d = cfg.feature_dim, g = cfg.n_genres;
  Catalog cat;
  cat.audio_centroids = Matrix(g, d);
  cat.lyric_centroids = Matrix(g, d);
  for (double& v : cat.audio_centroids.values()) v = rng.normal();
  for (double& v : cat.lyric_centroids.values()) v = rng.normal();

  // Genre-typical value of every attribute field.
  Matrix typical(g, cfg.n_attributes);
  for (double& v : typical.values()) v = static_cast<double>(rng.below(cfg.vocab_size));

  const double coupling = cfg.lyric_audio_coupling;
  const double independent = std::sqrt(1.0 - coupling * coupling);
  cat.taste_directions = Matrix(cfg.n_songs, d);
  cat.songs.resize(cfg.n_songs);
  for (std::size_t s = 0; s < cfg.n_songs; ++s) {
    SongContent& song = cat.songs[s];
    song.song_id = static_cast<SongId>(s);
    const std::size_t genre = static_cast<std::size_t>(rng.below(g));
    song.genre = static_cast<std::uint32_t>(genre);
    song.attrs.resize(cfg.n_attributes);
    for (std::size_t f = 0; f < cfg.n_attributes; ++f) {
      song.attrs[f] = rng.bernoulli(cfg.attribute_resample)
                          ? static_cast<std::uint32_t>(rng.below(cfg.vocab_size))
                          : static_cast<std::uint32_t>(typical(genre, f));
    }
    std::vector<double> z(d);
    double norm = 0.0;
    for (double& v : z) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    song.audio.resize(d);
    song.lyric.resize(d);
    for (std::size_t t = 0; t < d; ++t) {
      song.audio[t] = cat.audio_centroids(genre, t) + cfg.content_jitter * z[t];
      const double mixed = coupling * z[t] + independent * rng.normal();
      song.lyric[t] = cat.lyric_centroids(genre, t) + cfg.content_jitter * mixed;
      cat.taste_directions(s, t) = norm > 0.0 ? z[t] / norm : 0.0;
    }
  }

  // Popularity rank is a random permutation, weight ∝ rank^-gamma.
  std::vector<std::size_t> rank(cfg.n_songs);
  std::iota(rank.begin(), rank.end(), std::size_t{1});
  for (std::size_t i = cfg.n_songs; i > 1; --i) std::swap(rank[i - 1], rank[rng.below(i)]);
  cat.popularity.resize(cfg.n_songs);
  double total = 0.0;
  for (std::size_t s = 0; s < cfg.n_songs; ++s) {
    cat.popularity[s] = std::pow(static_cast<double>(rank[s]), -cfg.popularity_exponent);
    total += cat.popularity[s];
  }
  for (double& p : cat.popularity) p /= total;
  return cat;
}

std::vector<UserProfile> generate_users(const GenConfig& cfg, RngStream& rng) {
  const std::size_t g = cfg.n_genres, d = cfg.feature_dim;
  std::vector<UserProfile> users(cfg.n_users);
  for (auto& u : users) {
    u.genre_pref.assign(g, 0.05 / static_cast<double>(g));
    const std::size_t primary = static_cast<std::size_t>(rng.below(g));
    const std::size_t secondary = static_cast<std::size_t>(rng.below(g));
    u.genre_pref[primary] += 0.75;
    u.genre_pref[secondary] += 0.20;
    u.taste.resize(d);
    double norm = 0.0;
    for (double& v : u.taste) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : u.taste) v /= norm;
  }
  return users;
}

std::vector<double> song_weights(const Catalog& catalog, const UserProfile& user,
                                 const GenConfig& cfg) {
  std::vector<double> w(catalog.songs.size());
  for (std::size_t s = 0; s < w.size(); ++s) {
    double dot = 0.0;
    const auto dir = catalog.taste_directions.row(s);
    for (std::size_t t = 0; t < dir.size(); ++t) dot += dir[t] * user.taste[t];
    w[s] = catalog.popularity[s] * user.genre_pref[*catalog.songs[s].genre] *
           std::exp(cfg.taste_strength * dot);
  }
  return w;
}

std::vector<BehaviorEvent> generate_behavior(const Catalog& catalog,
                                             const std::vector<UserProfile>& users,
                                             const GenConfig& cfg, RngStream& rng) {
  const std::size_t per_user = cfg.events_per_user;
  std::vector<BehaviorEvent> events(users.size() * per_user);
  const std::int64_t mean_gap = std::max<std::int64_t>(
      1, cfg.time_span / static_cast<std::int64_t>(per_user + 1));
  const std::ptrdiff_t n_users = static_cast<std::ptrdiff_t>(users.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t uu = 0; uu < n_users; ++uu) {
    const std::size_t u = static_cast<std::size_t>(uu);
    RngStream local = rng.fork(u);
    const auto w = song_weights(catalog, users[u], cfg);
    std::vector<double> cumulative(w.size());
    std::partial_sum(w.begin(), w.end(), cumulative.begin());
    const double total = cumulative.back();

    std::int64_t t = static_cast<std::int64_t>(local.below(static_cast<std::uint64_t>(mean_gap)));
    for (std::size_t e = 0; e < per_user; ++e) {
      BehaviorEvent& ev = events[u * per_user + e];
      ev.user_id = static_cast<UserId>(u);
      const double x = local.uniform() * total;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
      if (it == cumulative.end()) --it;
      ev.song_id = static_cast<SongId>(it - cumulative.begin());
      const double b = local.uniform();
      ev.behavior = b < 0.85 ? Behavior::play : (b < 0.95 ? Behavior::red_heart : Behavior::songmark);
      t += 1 + static_cast<std::int64_t>(local.below(static_cast<std::uint64_t>(2 * mean_gap - 1)));
      ev.timestamp = t;
    }
  }
  return events;
}

double BehaviorWeights::of(Behavior b) const {
  switch (b) {
    case Behavior::play: return play;
    case Behavior::red_heart: return red_heart;
    case Behavior::songmark: return songmark;
  }
  return 0.0;
}

std::vector<ScoredPair> mine_cooccurrence(const std::vector<BehaviorEvent>& events,
                                          std::size_t window, const BehaviorWeights& weights) {
  std::map<std::pair<SongId, SongId>, double> score;
  std::size_t begin = 0;
  while (begin < events.size()) {
    std::size_t end = begin + 1;
    while (end < events.size() && events[end].user_id == events[begin].user_id) {
      if (events[end].timestamp <= events[end - 1].timestamp) {
        throw ContractError("mine_cooccurrence: events of user " +
                            std::to_string(events[end].user_id) +
                            " are not in strictly increasing timestamp order at row " +
                            std::to_string(end));
      }
      ++end;
    }
    for (std::size_t p = begin; p < end; ++p) {
      for (std::size_t q = p + 1; q < end && q - p <= window; ++q) {
        const SongId a = events[p].song_id, b = events[q].song_id;
        if (a == b) continue;
        score[{std::min(a, b), std::max(a, b)}] +=
            weights.of(events[p].behavior) * weights.of(events[q].behavior);
      }
    }
    begin = end;
  }
  std::vector<ScoredPair> out;
  out.reserve(score.size());
  for (const auto& [key, s] : score) out.push_back({key.first, key.second, s});
  return out;
}

std::vector<ScoredPair> threshold_filter(const std::vector<ScoredPair>& pairs, double threshold) {
  if (!(threshold >= 0.0)) throw ContractError("threshold_filter: threshold must be non-negative");
  std::vector<ScoredPair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [&](const ScoredPair& p) { return p.score >= threshold; });
  std::sort(out.begin(), out.end(), [](const ScoredPair& a, const ScoredPair& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.song_i != b.song_i) return a.song_i < b.song_i;
    return a.song_j < b.song_j;
  });
  return out;
}

Split split_pairs(const std::vector<ScoredPair>& pairs, double test_fraction, RngStream& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ContractError("split: test fraction must lie in (0, 1)");
  Split out;
  std::vector<ScoredPair> held;
  for (const auto& p : pairs) (rng.bernoulli(test_fraction) ? held : out.train).push_back(p);

  std::map<SongId, std::size_t> train_degree;
  for (const auto& p : out.train) {
    ++train_degree[p.song_i];
    ++train_degree[p.song_j];
  }
  for (const auto& p : held) {
    if (train_degree.count(p.song_i) != 0 || train_degree.count(p.song_j) != 0) {
      out.test.push_back(p);
    } else {
      ++out.dropped_test;
    }
  }
  return out;
}

DatasetStats dataset_stats(std::size_t n_songs, std::size_t n_pairs) {
  DatasetStats s;
  s.songs = n_songs;
  s.pairs = n_pairs;
  const double n = static_cast<double>(n_songs);
  s.avg_pairs_per_song = n_songs == 0 ? 0.0 : static_cast<double>(n_pairs) / n;
  s.density = n_songs == 0 ? 0.0 : static_cast<double>(n_pairs) / (n * n);
  return s;
}

json stats_json(const DatasetStats& s) {
  return json{{"songs", s.songs},
              {"pairs", s.pairs},
              {"avg_pairs_per_song", s.avg_pairs_per_song},
              {"density", s.density}};
}

double gini(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double cum = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    cum += values[i];
    weighted += static_cast<double>(i + 1) * values[i];
  }
  if (cum == 0.0) return 0.0;
  const double n = static_cast<double>(values.size());
  return (2.0 * weighted) / (n * cum) - (n + 1.0) / n;
}

std::vector<double> pair_counts(const std::vector<ScoredPair>& pairs, std::size_t n_songs) {
  std::vector<double> c(n_songs, 0.0);
  for (const auto& p : pairs) {
    if (p.song_i < n_songs) c[p.song_i] += 1.0;
    if (p.song_j < n_songs) c[p.song_j] += 1.0;
  }
  return c;
}

io::UserEmbeddings user_embeddings(const std::vector<UserProfile>& users, const GenConfig& cfg,
                                   RngStream& rng) {
  Matrix projection(cfg.n_genres, cfg.user_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.n_genres));
  for (double& v : projection.values()) v = rng.normal() * scale;
  io::UserEmbeddings out;
  out.values = Matrix(users.size(), cfg.user_dim);
  for (std::size_t u = 0; u < users.size(); ++u) {
    out.ids.push_back(static_cast<UserId>(u));
    out.row_of[static_cast<UserId>(u)] = u;
    for (std::size_t t = 0; t < cfg.user_dim; ++t) {
      double s = 0.0;
      for (std::size_t g = 0; g < cfg.n_genres; ++g) s += users[u].genre_pref[g] * projection(g, t);
      out.values(u, t) = s;
    }
  }
  return out;
}

World generate_world(const GenConfig& cfg) {
  cfg.validate();
  World w;
  w.config = cfg;
  RngStream catalog_rng(cfg.seed, Stream::datagen, 1);
  RngStream user_rng(cfg.seed, Stream::datagen, 2);
  RngStream event_rng(cfg.seed, Stream::datagen, 3);
  RngStream split_rng(cfg.seed, Stream::datagen, 4);
  RngStream embed_rng(cfg.seed, Stream::datagen, 5);

  w.catalog = generate_catalog(cfg, catalog_rng);
  w.users = generate_users(cfg, user_rng);
  w.embeddings = user_embeddings(w.users, cfg, embed_rng);
  w.events = generate_behavior(w.catalog, w.users, cfg, event_rng);
  w.mined = mine_cooccurrence(w.events, cfg.window,
                              {cfg.weight_play, cfg.weight_red_heart, cfg.weight_songmark});
  w.positives = threshold_filter(w.mined, cfg.threshold);
  w.split = split_pairs(w.positives, cfg.test_fraction, split_rng);
  w.stats = dataset_stats(cfg.n_songs, w.positives.size());
  return w;
}

void write_world(const World& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = io::open_output(dir / files::catalog);
    io::write_catalog(out, world.catalog.songs);
  }
  {
    auto out = io::open_output(dir / files::events);
    io::write_events(out, world.events);
  }
  {
    auto out = io::open_output(dir / files::pairs);
    io::write_pairs(out, world.positives);
  }
  {
    auto out = io::open_output(dir / files::train);
    io::write_pairs(out, world.split.train);
  }
  {
    auto out = io::open_output(dir / files::test);
    io::write_pairs(out, world.split.test);
  }
  {
    auto out = io::open_output(dir / files::users);
    io::write_user_embeddings(out, world.embeddings);
  }
  {
    auto out = io::open_output(dir / files::stats);
    json j = stats_json(world.stats);
    j["train_pairs"] = world.split.train.size();
    j["test_pairs"] = world.split.test.size();
    j["dropped_test_pairs"] = world.split.dropped_test;
    j["events"] = world.events.size();
    out << j.dump(2) << '\n';
  }
  {
    auto out = io::open_output(dir / files::config);
    out << json(world.config).dump(2) << '\n';
  }
}

}  // namespace bcl::datagen
