#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcl/numerics/matrix.hpp"
#include "bcl/training/checkpoint.hpp"
#include "bcl/types.hpp"
#include "json.hpp"

namespace bcl {

// Encoded song pool. Rows follow ids in ascending order; values are rounded
// to 32-bit floats so a built index and its file form are identical.
class SongPoolIndex {
 public:
  SongPoolIndex() = default;
  SongPoolIndex(std::vector<SongId> ids, Matrix reps, std::uint64_t fingerprint);

  const std::vector<SongId>& ids() const noexcept { return ids_; }
  const Matrix& reps() const noexcept { return reps_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return reps_.cols(); }

  std::optional<std::size_t> row_of(SongId id) const;
  std::span<const double> rep(SongId id) const;  // LookupError if absent

  friend bool operator==(const SongPoolIndex&, const SongPoolIndex&) = default;

 private:
  std::vector<SongId> ids_;
  Matrix reps_;
  std::uint64_t fingerprint_ = 0;
};

SongPoolIndex build_index(const Checkpoint& ckpt, const std::vector<SongContent>& catalog);

struct Ranked {
  SongId id = 0;
  double score = 0.0;
  friend bool operator==(const Ranked&, const Ranked&) = default;
};

struct TopK {
  std::vector<Ranked> items;
  bool truncated = false;  // fewer than k candidates were available
};

// Dot-product scores, descending, ties by ascending id.
TopK top_k(const SongPoolIndex& index, std::span<const double> query, std::size_t k,
           std::span<const SongId> exclude = {});

double recall_at_k(std::span<const SongId> ranked, std::span<const SongId> truth, std::size_t k);
double ndcg_at_k(std::span<const SongId> ranked, std::span<const SongId> truth, std::size_t k);

struct SliceMetrics {
  std::size_t queries = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct EvalReport {
  std::size_t k = 50;
  std::size_t queries = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double random_recall = 0.0;  // expected recall of a uniformly random ranking
  std::map<std::uint32_t, SliceMetrics> per_genre;
  SliceMetrics tail;           // bottom quartile of queries by training degree
  std::size_t tail_max_degree = 0;
};

nlohmann::json report_json(const EvalReport& report);

// Every song with a held-out partner is a query; candidates are the whole
// pool minus the query and its training partners.
EvalReport evaluate(const SongPoolIndex& index, const std::vector<SongContent>& catalog,
                    std::span<const ScoredPair> train_pairs, std::span<const ScoredPair> test_pairs,
                    std::size_t k = 50);

// Layout: "BCLIDX1", u64 count, u32 dim, u64 fingerprint, count u32 ids,
// then count * dim little-endian 32-bit floats, then a u64 FNV-1a checksum
// of all preceding bytes.
std::string serialize_index(const SongPoolIndex& index);
SongPoolIndex deserialize_index(std::string_view bytes, const std::string& source = "<index>");
void save_index(const SongPoolIndex& index, const std::string& path);
SongPoolIndex load_index(const std::string& path);

// Rows "song_id\tgenre\tr_1 .. r_dr" in id order.
void export_representations(std::ostream& out, const SongPoolIndex& index,
                            const std::vector<SongContent>& catalog);

}  // namespace bcl
