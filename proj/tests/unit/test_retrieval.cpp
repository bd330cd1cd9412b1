#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bcl/errors.hpp"
#include "bcl/retrieval/index.hpp"
#include "bcl/training/trainer.hpp"
#include "support/helpers.hpp"
#include "support/world.hpp"

using namespace bcl;
using testing_support::random_matrix;

namespace {

SongPoolIndex toy_index(std::vector<std::vector<double>> rows) {
  std::vector<SongId> ids;
  Matrix reps(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ids.push_back(static_cast<SongId>(r));
    std::copy(rows[r].begin(), rows[r].end(), reps.row(r).begin());
  }
  return SongPoolIndex(ids, reps, 0);
}

std::vector<SongContent> genre_catalog(std::vector<std::uint32_t> genres) {
  std::vector<SongContent> out;
  for (std::size_t i = 0; i < genres.size(); ++i) {
    SongContent s;
    s.song_id = i;
    s.genre = genres[i];
    out.push_back(s);
  }
  return out;
}

std::vector<SongId> ids_of(const TopK& t) {
  std::vector<SongId> out;
  for (const auto& r : t.items) out.push_back(r.id);
  return out;
}

const Checkpoint& small_checkpoint() {
  static const Checkpoint c = [] {
    TrainConfig cfg = testing_support::small_train_config();
    cfg.epochs = 1;
    const auto& w = testing_support::small_world();
    return train(cfg, w.catalog.songs, w.split.train);
  }();
  return c;
}

}  // namespace

TEST(TopK, ToyExample) {
  SongPoolIndex idx = toy_index({{1, 0}, {0.9, 0}, {0, 1}});
  std::vector<double> q{1, 0};
  TopK t = top_k(idx, q, 1);
  ASSERT_EQ(t.items.size(), 1u);
  EXPECT_EQ(t.items[0].id, 0u);
  EXPECT_EQ(t.items[0].score, 1.0);
  EXPECT_FALSE(t.truncated);
  std::vector<SongId> ex{0};
  EXPECT_EQ(ids_of(top_k(idx, q, 3, ex)), (std::vector<SongId>{1, 2}));
  EXPECT_TRUE(top_k(idx, q, 3, ex).truncated);
  EXPECT_THROW(top_k(idx, q, 0), ContractError);
  std::vector<double> wide{1, 0, 0};
  EXPECT_THROW(top_k(idx, wide, 1), DimensionError);
}

TEST(TopK, TiesByAscendingId) {
  SongPoolIndex idx = toy_index({{1, 0}, {0, 1}, {1, 0}, {0.5, 0}});
  std::vector<double> q{1, 0};
  EXPECT_EQ(ids_of(top_k(idx, q, 4)), (std::vector<SongId>{0, 2, 3, 1}));
}

TEST(TopK, MatchesNaiveSort) {
  std::mt19937_64 gen(1);
  std::vector<SongId> ids;
  for (SongId i = 0; i < 300; ++i) ids.push_back(3 * i + 1);
  Matrix reps = random_matrix(300, 12, gen);
  for (double& v : reps.values()) v = static_cast<float>(v);
  SongPoolIndex idx(ids, reps, 0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix q = random_matrix(1, 12, gen);
    std::vector<std::pair<std::uint32_t, double>> scored;
    for (std::size_t r = 0; r < 300; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 12; ++c) s += reps(r, c) * q(0, c);
      scored.emplace_back(static_cast<std::uint32_t>(ids[r]), s);
    }
    const std::size_t k = trial == 0 ? 300 : 1 + static_cast<std::size_t>(gen() % 60);
    auto naive = oracle::naive_top_k(scored, k);
    TopK got = top_k(idx, q.row(0), k);
    ASSERT_EQ(got.items.size(), naive.size());
    for (std::size_t i = 0; i < naive.size(); ++i) {
      EXPECT_EQ(got.items[i].id, naive[i].first);
      EXPECT_EQ(got.items[i].score, naive[i].second);
    }
  }
}

TEST(Metrics, RecallExamples) {
  std::vector<SongId> ranked{1, 2, 3, 4};
  EXPECT_EQ(recall_at_k(ranked, std::vector<SongId>{1, 9}, 4), 0.5);
  EXPECT_EQ(recall_at_k(ranked, std::vector<SongId>{2, 4}, 4), 1.0);
  EXPECT_EQ(recall_at_k(ranked, std::vector<SongId>{7, 8}, 4), 0.0);
  EXPECT_EQ(recall_at_k(ranked, std::vector<SongId>{4}, 3), 0.0);
  EXPECT_THROW(recall_at_k(ranked, std::vector<SongId>{}, 4), ContractError);
}

TEST(Metrics, NdcgExamples) {
  std::vector<SongId> ranked{1, 2, 3, 4};
  EXPECT_EQ(ndcg_at_k(ranked, std::vector<SongId>{1}, 50), 1.0);
  EXPECT_EQ(ndcg_at_k(ranked, std::vector<SongId>{3}, 50), 0.5);
  EXPECT_EQ(ndcg_at_k(ranked, std::vector<SongId>{1, 2}, 50), 1.0);
  EXPECT_NEAR(ndcg_at_k(ranked, std::vector<SongId>{2, 9}, 50),
              (1.0 / std::log2(3.0)) / (1.0 + 1.0 / std::log2(3.0)), 1e-15);
  EXPECT_THROW(ndcg_at_k(ranked, std::vector<SongId>{}, 4), ContractError);
}

// NDCG normalizes by the ideal DCG of min(|truth|, k) hits, so it is only
// monotone once k covers the whole truth set.
TEST(Metrics, MonotoneInK) {
  std::mt19937_64 gen(2);
  std::vector<SongId> ranked(40);
  for (SongId i = 0; i < 40; ++i) ranked[i] = i;
  for (int trial = 0; trial < 50; ++trial) {
    std::shuffle(ranked.begin(), ranked.end(), gen);
    std::vector<SongId> truth{static_cast<SongId>(gen() % 40), static_cast<SongId>(gen() % 40), 3};
    double r = 0.0, n = 0.0;
    for (std::size_t k = 1; k <= 40; ++k) {
      EXPECT_GE(recall_at_k(ranked, truth, k), r);
      if (k > 3) EXPECT_GE(ndcg_at_k(ranked, truth, k) + 1e-15, n);
      r = recall_at_k(ranked, truth, k);
      n = ndcg_at_k(ranked, truth, k);
    }
  }
}

TEST(Evaluate, FiveSongHandInstance) {
  SongPoolIndex idx = toy_index({{1, 0}, {0.75, 0.25}, {0.5, 0.5}, {0.25, 0.75}, {-1, 0}});
  auto catalog = genre_catalog({0, 0, 1, 1, 1});
  std::vector<ScoredPair> train{{0, 1, 3}};
  std::vector<ScoredPair> test{{0, 3, 3}, {2, 4, 3}};
  EvalReport r = evaluate(idx, catalog, train, test, 3);
  // Rankings: q0 -> 2,3,4 (hit at 2); q2 -> 0,1,3 (miss); q3 -> 2,1,0 (hit
  // at 3); q4 -> 3,2,1 (hit at 2).
  const double g2 = 1.0 / std::log2(3.0);
  EXPECT_EQ(r.queries, 4u);
  EXPECT_DOUBLE_EQ(r.recall, 0.75);
  EXPECT_DOUBLE_EQ(r.ndcg, (g2 + 0.0 + 0.5 + g2) / 4.0);
  EXPECT_DOUBLE_EQ(r.random_recall, (1.0 + 0.75 + 0.75 + 0.75) / 4.0);
  ASSERT_EQ(r.per_genre.size(), 2u);
  EXPECT_EQ(r.per_genre.at(0).queries, 1u);
  EXPECT_DOUBLE_EQ(r.per_genre.at(0).recall, 1.0);
  EXPECT_DOUBLE_EQ(r.per_genre.at(1).recall, 2.0 / 3.0);
  EXPECT_EQ(r.tail.queries, 1u);
  EXPECT_EQ(r.tail.recall, 0.0);
  EXPECT_EQ(r.tail_max_degree, 0u);
  auto j = report_json(r);
  for (const char* key : {"recall_at_k", "ndcg_at_k", "random_recall_at_k", "per_genre", "tail"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Evaluate, AdversarialGroundTruth) {
  // Both ends of the held-out pair rank each other last.
  std::vector<std::vector<double>> rows{{1, 0}};
  for (int i = 1; i < 99; ++i) rows.push_back({1.0 + i, 1.0 + i});
  rows.push_back({0, 1});
  SongPoolIndex idx = toy_index(rows);
  std::vector<ScoredPair> test{{0, 98 + 1, 2}};
  std::vector<ScoredPair> train{{0, 5, 2}};
  EXPECT_EQ(evaluate(idx, genre_catalog(std::vector<std::uint32_t>(100, 0)), train, test, 50).recall,
            0.0);
}

TEST(Evaluate, MasksQueryAndTrainingPartners) {
  // Query and training partners outscore everything; the held-out partner
  // comes next, so it is ranked first only if the others are masked.
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 60; ++i) rows.push_back({0.01 * i, 0});
  rows[10] = {10, 0};
  rows[11] = {9, 0};
  rows[12] = {8, 0};
  rows[13] = {7, 0};
  SongPoolIndex idx = toy_index(rows);
  std::vector<ScoredPair> train{{10, 11, 2}, {12, 10, 2}};
  std::vector<ScoredPair> test{{10, 13, 2}};
  EvalReport r = evaluate(idx, genre_catalog(std::vector<std::uint32_t>(60, 0)), train, test, 1);
  // Both 10 and 13 are queries; 13's best candidates are 10 then 11.
  EXPECT_EQ(r.queries, 2u);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
}

TEST(Evaluate, RandomRepresentationsNearChance) {
  std::mt19937_64 gen(3);
  std::vector<SongId> ids(2000);
  for (SongId i = 0; i < 2000; ++i) ids[i] = i;
  SongPoolIndex idx(ids, random_matrix(2000, 16, gen), 0);
  std::vector<ScoredPair> test;
  for (SongId i = 0; i < 1000; ++i) test.push_back({i, i + 1000, 2});
  EvalReport r = evaluate(idx, genre_catalog(std::vector<std::uint32_t>(2000, 0)), {}, test, 50);
  EXPECT_EQ(r.queries, 2000u);
  EXPECT_NEAR(r.recall, 50.0 / 1999.0, 0.01);
  EXPECT_NEAR(r.random_recall, 50.0 / 1999.0, 1e-12);
}

TEST(Evaluate, MissingSongsListed) {
  SongPoolIndex idx = toy_index({{1, 0}, {0, 1}});
  std::vector<ScoredPair> test{{0, 7, 2}, {1, 9, 2}};
  try {
    evaluate(idx, genre_catalog({0, 0}), {}, test, 5);
    FAIL() << "accepted test songs outside the index";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("7, 9"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, AgreesWithDirectRecomputation) {
  const auto& w = testing_support::small_world();
  SongPoolIndex idx = build_index(small_checkpoint(), w.catalog.songs);
  EvalReport r = evaluate(idx, w.catalog.songs, w.split.train, w.split.test, 10);
  PositiveSets train(w.split.train), test(w.split.test);
  double sum = 0.0;
  std::size_t n = 0;
  for (SongId q : idx.ids()) {
    if (test.degree(q) == 0) continue;
    std::vector<SongId> ex(train.partners(q).begin(), train.partners(q).end());
    ex.push_back(q);
    std::vector<std::pair<std::uint32_t, double>> scored;
    for (SongId c : idx.ids()) {
      if (std::find(ex.begin(), ex.end(), c) != ex.end()) continue;
      double s = 0.0;
      for (std::size_t t = 0; t < idx.dim(); ++t) s += idx.rep(q)[t] * idx.rep(c)[t];
      scored.emplace_back(static_cast<std::uint32_t>(c), s);
    }
    auto top = oracle::naive_top_k(scored, 10);
    std::vector<SongId> ranked;
    for (const auto& [id, s] : top) {
      ASSERT_EQ(std::find(ex.begin(), ex.end(), id), ex.end());
      ranked.push_back(id);
    }
    sum += recall_at_k(ranked, test.partners(q), 10);
    ++n;
  }
  EXPECT_EQ(r.queries, n);
  EXPECT_NEAR(r.recall, sum / static_cast<double>(n), 1e-12);
}

// ---------------------------------------------------------------------------
// building and persistence

TEST(Index, BuildShapeAndDeterminism) {
  const auto& w = testing_support::small_world();
  SongPoolIndex a = build_index(small_checkpoint(), w.catalog.songs);
  EXPECT_EQ(a.size(), w.catalog.songs.size());
  EXPECT_EQ(a.dim(), small_checkpoint().encoder.rep_dim);
  EXPECT_EQ(a.fingerprint(), checkpoint_fingerprint(small_checkpoint()));
  SongPoolIndex b = build_index(small_checkpoint(), w.catalog.songs);
  EXPECT_EQ(serialize_index(a), serialize_index(b));

  auto shuffled = w.catalog.songs;
  std::mt19937_64 gen(4);
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  EXPECT_EQ(build_index(small_checkpoint(), shuffled), a);

  // Representations equal a direct encode of each song.
  EncoderModel model = model_from_checkpoint(small_checkpoint());
  const auto& s = w.catalog.songs[17];
  auto rep = encode(assemble_input(s, model), model);
  for (std::size_t t = 0; t < rep.size(); ++t)
    EXPECT_EQ(a.rep(s.song_id)[t], static_cast<double>(static_cast<float>(rep[t])));
  EXPECT_THROW(a.rep(999999), LookupError);
}

TEST(Index, IncompatibleCatalogRejected) {
  auto songs = testing_support::small_world().catalog.songs;
  songs[3].audio.push_back(0.0);
  EXPECT_THROW(build_index(small_checkpoint(), songs), ContractError);
}

TEST(Index, FileRoundTripAndCorruption) {
  const auto& w = testing_support::small_world();
  SongPoolIndex idx = build_index(small_checkpoint(), w.catalog.songs);
  const std::string bytes = serialize_index(idx);
  EXPECT_EQ(deserialize_index(bytes), idx);
  const auto path = std::filesystem::temp_directory_path() / "bcl_index_roundtrip.bin";
  save_index(idx, path.string());
  EXPECT_EQ(serialize_index(load_index(path.string())), bytes);
  std::filesystem::remove(path);

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() - 3})
    EXPECT_THROW(deserialize_index(std::string_view(bytes).substr(0, cut)), FormatError);
  std::string foreign = bytes;
  foreign[2] = '?';
  EXPECT_THROW(deserialize_index(foreign), FormatError);
  // Claimed count far beyond the payload must be rejected before allocating.
  std::string huge = bytes;
  for (int i = 7; i < 15; ++i) huge[i] = '\x7f';
  EXPECT_THROW(deserialize_index(huge), FormatError);
}

TEST(Index, CheckpointReloadGivesIdenticalMetrics) {
  const auto& w = testing_support::small_world();
  const Checkpoint reloaded = deserialize_checkpoint(serialize_checkpoint(small_checkpoint()));
  auto a = report_json(evaluate(build_index(small_checkpoint(), w.catalog.songs), w.catalog.songs,
                                w.split.train, w.split.test));
  auto b = report_json(
      evaluate(build_index(reloaded, w.catalog.songs), w.catalog.songs, w.split.train, w.split.test));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Export, RowsAndGenres) {
  const auto& w = testing_support::small_world();
  SongPoolIndex idx = build_index(small_checkpoint(), w.catalog.songs);
  std::ostringstream a, b;
  export_representations(a, idx, w.catalog.songs);
  export_representations(b, idx, w.catalog.songs);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    SongId id;
    std::uint32_t genre;
    fields >> id >> genre;
    EXPECT_EQ(genre, *w.catalog.songs[id].genre);
    std::size_t values = 0;
    double v;
    while (fields >> v) ++values;
    EXPECT_EQ(values, idx.dim());
    ++rows;
  }
  EXPECT_EQ(rows, w.catalog.songs.size());
}
