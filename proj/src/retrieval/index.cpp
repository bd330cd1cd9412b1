#include "bcl/retrieval/index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "bcl/errors.hpp"
#include "bcl/io/binary.hpp"
#include "bcl/numerics/kernels.hpp"
#include "bcl/training/bpr.hpp"

namespace bcl {
namespace {

constexpr std::string_view kMagic = "BCLIDX1";

bool ranks_before(const Ranked& a, const Ranked& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::vector<SongId> unique_sorted(std::span<const SongId> ids) {
  std::vector<SongId> v(ids.begin(), ids.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::string format_float(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  return std::string(buf, r.ptr);
}

}  // namespace

SongPoolIndex::SongPoolIndex(std::vector<SongId> ids, Matrix reps, std::uint64_t fingerprint)
    : ids_(std::move(ids)), reps_(std::move(reps)), fingerprint_(fingerprint) {
  if (ids_.size() != reps_.rows()) {
    throw DimensionError("index has " + std::to_string(ids_.size()) + " ids but " +
                         std::to_string(reps_.rows()) + " rows");
  }
  for (std::size_t i = 1; i < ids_.size(); ++i) {
    if (ids_[i - 1] >= ids_[i]) throw ContractError("index ids must be strictly ascending");
  }
}

std::optional<std::size_t> SongPoolIndex::row_of(SongId id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

std::span<const double> SongPoolIndex::rep(SongId id) const {
  auto r = row_of(id);
  if (!r) throw LookupError("song " + std::to_string(id) + " is not in the index");
  return reps_.row(*r);
}

SongPoolIndex build_index(const Checkpoint& ckpt, const std::vector<SongContent>& catalog) {
  const EncoderModel model = model_from_checkpoint(ckpt);
  std::vector<SongContent> songs = catalog;
  std::sort(songs.begin(), songs.end(),
            [](const SongContent& a, const SongContent& b) { return a.song_id < b.song_id; });
  std::vector<SongId> ids;
  ids.reserve(songs.size());
  for (const auto& s : songs) {
    try {
      validate_content(s, model.config());
    } catch (const Error& e) {
      throw ContractError("catalog does not fit the checkpoint: " + std::string(e.what()));
    }
    if (!ids.empty() && ids.back() == s.song_id)
      throw ContractError("duplicate song id " + std::to_string(s.song_id) + " in catalog");
    ids.push_back(s.song_id);
  }
  Matrix reps = encode_contents(songs, model);
  for (double& v : reps.values()) v = static_cast<double>(static_cast<float>(v));
  return SongPoolIndex(std::move(ids), std::move(reps), checkpoint_fingerprint(ckpt));
}

TopK top_k(const SongPoolIndex& index, std::span<const double> query, std::size_t k,
           std::span<const SongId> exclude) {
  if (k == 0) throw ContractError("top_k: k must be at least 1");
  if (query.size() != index.dim()) {
    throw DimensionError("top_k: query has " + std::to_string(query.size()) +
                         " values, index rows have " + std::to_string(index.dim()));
  }
  const std::vector<SongId> skip = unique_sorted(exclude);
  std::vector<double> scores(index.size());
  kernels::dot_scores(index.reps(), query, scores);

  std::vector<Ranked> cand;
  cand.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const SongId id = index.ids()[i];
    if (std::binary_search(skip.begin(), skip.end(), id)) continue;
    cand.push_back({id, scores[i]});
  }
  TopK out;
  out.truncated = cand.size() < k;
  const std::size_t take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                    ranks_before);
  cand.resize(take);
  out.items = std::move(cand);
  return out;
}

double recall_at_k(std::span<const SongId> ranked, std::span<const SongId> truth, std::size_t k) {
  const std::vector<SongId> gt = unique_sorted(truth);
  if (gt.empty()) throw ContractError("recall_at_k: empty ground truth");
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t p = 0; p < n; ++p) hits += std::binary_search(gt.begin(), gt.end(), ranked[p]);
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double ndcg_at_k(std::span<const SongId> ranked, std::span<const SongId> truth, std::size_t k) {
  const std::vector<SongId> gt = unique_sorted(truth);
  if (gt.empty()) throw ContractError("ndcg_at_k: empty ground truth");
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t p = 0; p < n; ++p) {
    if (std::binary_search(gt.begin(), gt.end(), ranked[p]))
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t p = 0; p < std::min(k, gt.size()); ++p)
    ideal += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return ideal > 0.0 ? dcg / ideal : 0.0;
}

nlohmann::json report_json(const EvalReport& r) {
  auto slice = [](const SliceMetrics& s) {
    return nlohmann::json{{"queries", s.queries}, {"recall", s.recall}, {"ndcg", s.ndcg}};
  };
  nlohmann::json genres = nlohmann::json::object();
  for (const auto& [g, s] : r.per_genre) genres[std::to_string(g)] = slice(s);
  nlohmann::json tail = slice(r.tail);
  tail["max_train_degree"] = r.tail_max_degree;
  return {{"k", r.k},
          {"queries", r.queries},
          {"recall_at_k", r.recall},
          {"ndcg_at_k", r.ndcg},
          {"random_recall_at_k", r.random_recall},
          {"per_genre", genres},
          {"tail", tail}};
}

EvalReport evaluate(const SongPoolIndex& index, const std::vector<SongContent>& catalog,
                    std::span<const ScoredPair> train_pairs, std::span<const ScoredPair> test_pairs,
                    std::size_t k) {
  if (k == 0) throw ContractError("evaluate: k must be at least 1");
  std::vector<SongId> missing;
  for (const auto& p : test_pairs) {
    for (SongId s : {p.song_i, p.song_j})
      if (!index.row_of(s)) missing.push_back(s);
  }
  if (!missing.empty()) {
    missing = unique_sorted(missing);
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i)
      list += (i ? ", " : "") + std::to_string(missing[i]);
    if (missing.size() > 20) list += ", ...";
    throw ContractError(std::to_string(missing.size()) +
                        " test songs are missing from the index: " + list);
  }

  const PositiveSets train(train_pairs);
  const PositiveSets test(test_pairs);
  std::vector<SongId> queries;
  for (SongId id : index.ids())
    if (test.degree(id) > 0) queries.push_back(id);

  EvalReport report;
  report.k = k;
  report.queries = queries.size();
  if (queries.empty()) return report;

  std::vector<double> recall(queries.size()), ndcg(queries.size()), random(queries.size());
  const long long nq = static_cast<long long>(queries.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long long qi = 0; qi < nq; ++qi) {
    const SongId q = queries[static_cast<std::size_t>(qi)];
    std::vector<SongId> exclude(train.partners(q).begin(), train.partners(q).end());
    exclude.push_back(q);
    const TopK top = top_k(index, index.rep(q), k, exclude);
    std::vector<SongId> ranked;
    ranked.reserve(top.items.size());
    for (const auto& r : top.items) ranked.push_back(r.id);
    std::size_t excluded_present = 0;
    for (SongId e : unique_sorted(exclude)) excluded_present += index.row_of(e).has_value();
    const double pool = static_cast<double>(index.size() - excluded_present);
    recall[qi] = recall_at_k(ranked, test.partners(q), k);
    ndcg[qi] = ndcg_at_k(ranked, test.partners(q), k);
    random[qi] = pool > 0 ? std::min(1.0, static_cast<double>(k) / pool) : 0.0;
  }

  std::unordered_map<SongId, std::optional<std::uint32_t>> genre;
  for (const auto& s : catalog) genre[s.song_id] = s.genre;

  for (std::size_t i = 0; i < queries.size(); ++i) {
    report.recall += recall[i];
    report.ndcg += ndcg[i];
    report.random_recall += random[i];
    auto it = genre.find(queries[i]);
    if (it != genre.end() && it->second) {
      auto& g = report.per_genre[*it->second];
      ++g.queries;
      g.recall += recall[i];
      g.ndcg += ndcg[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(queries.size());
  report.recall *= inv;
  report.ndcg *= inv;
  report.random_recall *= inv;
  for (auto& [_, g] : report.per_genre) {
    g.recall /= static_cast<double>(g.queries);
    g.ndcg /= static_cast<double>(g.queries);
  }

  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto da = train.degree(queries[a]), db = train.degree(queries[b]);
    return da != db ? da < db : queries[a] < queries[b];
  });
  const std::size_t tail_n = std::max<std::size_t>(1, queries.size() / 4);
  for (std::size_t t = 0; t < tail_n; ++t) {
    report.tail.recall += recall[order[t]];
    report.tail.ndcg += ndcg[order[t]];
  }
  report.tail.queries = tail_n;
  report.tail.recall /= static_cast<double>(tail_n);
  report.tail.ndcg /= static_cast<double>(tail_n);
  report.tail_max_degree = train.degree(queries[order[tail_n - 1]]);
  return report;
}

std::string serialize_index(const SongPoolIndex& index) {
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u64(index.size());
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u64(index.fingerprint());
  for (SongId id : index.ids()) w.u32(id);
  for (double v : index.reps().values()) w.f32(static_cast<float>(v));
  w.u64(io::fnv1a64(w.data()));
  return w.data();
}

SongPoolIndex deserialize_index(std::string_view bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
    r.fail("not an index file (bad magic)");
  r.bytes(kMagic.size());
  const std::uint64_t count = r.u64();
  const std::uint32_t dim = r.u32();
  const std::uint64_t fingerprint = r.u64();
  // Both sections must fit the remaining bytes before anything is allocated.
  const std::uint64_t per_row = 4ull + 4ull * dim;
  if (r.remaining() < 8 || count > (r.remaining() - 8) / per_row ||
      count * per_row != r.remaining() - 8) {
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header describes " +
           std::to_string(count) + " rows of dimension " + std::to_string(dim));
  }
  std::vector<SongId> ids(count);
  for (auto& id : ids) id = r.u32();
  for (std::size_t i = 1; i < ids.size(); ++i)
    if (ids[i - 1] >= ids[i]) r.fail("song ids are not strictly ascending");
  Matrix reps(count, dim);
  for (double& v : reps.values()) v = static_cast<double>(r.f32());
  if (r.u64() != io::fnv1a64(bytes.substr(0, bytes.size() - 8))) r.fail("checksum mismatch");
  return SongPoolIndex(std::move(ids), std::move(reps), fingerprint);
}

void save_index(const SongPoolIndex& index, const std::string& path) {
  io::write_file_bytes(path, serialize_index(index));
}

SongPoolIndex load_index(const std::string& path) {
  return deserialize_index(io::read_file_bytes(path), path);
}

void export_representations(std::ostream& out, const SongPoolIndex& index,
                            const std::vector<SongContent>& catalog) {
  std::unordered_map<SongId, std::optional<std::uint32_t>> genre;
  for (const auto& s : catalog) genre[s.song_id] = s.genre;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const SongId id = index.ids()[i];
    out << id << '\t';
    auto it = genre.find(id);
    if (it != genre.end() && it->second) out << *it->second;
    for (double v : index.reps().row(i)) out << '\t' << format_float(v);
    out << '\n';
  }
}

}  // namespace bcl
