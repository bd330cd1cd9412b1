#include "bcl/cat/cat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "bcl/errors.hpp"
#include "bcl/numerics/kernels.hpp"

namespace bcl::cat {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Categorical draw proportional to w; the total must be positive.
std::size_t draw(std::span<const double> w, double total, RngStream& rng) {
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

Matrix seed_centroids(const Matrix& points, std::size_t k, RngStream& rng) {
  const std::size_t n = points.rows();
  Matrix c(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t j = 0; j < k; ++j) {
    if (j > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      pick = total > 0.0 ? draw(d2, total, rng) : rng.below(n);
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), c.row(j).begin());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(points.row(i), c.row(j)));
  }
  return c;
}

// An empty cluster takes over the point farthest from its centroid among
// clusters that can spare one; the centroid moves onto that point. Since
// n >= k there is always a donor.
void repair_empty(const Matrix& points, std::vector<std::size_t>& assign,
                  std::vector<double>& dist2, Matrix& centroids) {
  const std::size_t k = centroids.rows(), n = points.rows();
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assign) ++sizes[a];
  for (std::size_t e = 0; e < k; ++e) {
    if (sizes[e] != 0) continue;
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (sizes[assign[i]] < 2) continue;
      if (best == n || dist2[i] > dist2[best]) best = i;
    }
    if (best == n) continue;
    --sizes[assign[best]];
    assign[best] = e;
    sizes[e] = 1;
    dist2[best] = 0.0;
    std::copy(points.row(best).begin(), points.row(best).end(), centroids.row(e).begin());
  }
}

// Means of the assigned points; clusters are never empty here.
Matrix update_centroids(const Matrix& points, const std::vector<std::size_t>& assign,
                        const Matrix& old) {
  const std::size_t k = old.rows(), d = points.cols();
  std::vector<std::size_t> sizes(k, 0);
  Matrix c(k, d);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    ++sizes[assign[i]];
    auto dst = c.row(assign[i]);
    auto x = points.row(i);
    for (std::size_t t = 0; t < d; ++t) dst[t] += x[t];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (sizes[j] == 0) {
      std::copy(old.row(j).begin(), old.row(j).end(), c.row(j).begin());
      continue;
    }
    const double inv = 1.0 / static_cast<double>(sizes[j]);
    for (double& v : c.row(j)) v *= inv;
  }
  return c;
}

}  // namespace

RecencyWindow default_window(std::span<const BehaviorEvent> events, double fraction) {
  if (events.empty()) return {};
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ContractError("recency fraction must lie in (0, 1]");
  auto [lo, hi] = std::minmax_element(
      events.begin(), events.end(),
      [](const BehaviorEvent& a, const BehaviorEvent& b) { return a.timestamp < b.timestamp; });
  const double span = static_cast<double>(hi->timestamp - lo->timestamp);
  const auto from = hi->timestamp - static_cast<std::int64_t>(std::floor(fraction * span));
  return {from, hi->timestamp};
}

CandidatePool candidate_pool(std::span<const BehaviorEvent> events,
                             std::span<const SongId> retrieved, const RecencyWindow& window,
                             const io::UserEmbeddings& embeddings) {
  const std::set<SongId> wanted(retrieved.begin(), retrieved.end());
  std::map<UserId, std::set<SongId>> hits;
  for (const auto& e : events) {
    if (e.behavior != Behavior::red_heart) continue;
    if (e.timestamp < window.from || e.timestamp > window.to) continue;
    if (!wanted.count(e.song_id)) continue;
    hits[e.user_id].insert(e.song_id);
  }
  CandidatePool pool;
  for (const auto& [user, songs] : hits) {
    auto it = embeddings.row_of.find(user);
    if (it == embeddings.row_of.end()) {
      ++pool.missing_embeddings;
      continue;
    }
    auto row = embeddings.values.row(it->second);
    pool.candidates.push_back({user, {row.begin(), row.end()}, {songs.begin(), songs.end()}});
  }
  return pool;
}

Matrix pool_matrix(const std::vector<AudienceCandidate>& pool) {
  if (pool.empty()) return {};
  const std::size_t d = pool.front().embedding.size();
  Matrix m(pool.size(), d);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].embedding.size() != d) {
      throw ContractError("user " + std::to_string(pool[i].user_id) + " has a " +
                          std::to_string(pool[i].embedding.size()) +
                          "-dim embedding, expected " + std::to_string(d));
    }
    std::copy(pool[i].embedding.begin(), pool[i].embedding.end(), m.row(i).begin());
  }
  return m;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, RngStream& rng) {
  const std::size_t n = points.rows();
  if (k == 0) throw ContractError("kmeans: K must be at least 1");
  if (n < k) {
    throw ContractError("kmeans: " + std::to_string(n) + " points cannot form " +
                        std::to_string(k) + " clusters");
  }
  if (!points.all_finite()) throw NumericError("kmeans: non-finite input");

  KMeansResult res;
  res.centroids = seed_centroids(points, k, rng);
  res.assignments.assign(n, 0);
  std::vector<double> dist2(n);
  auto assign_pass = [&](std::vector<std::size_t>& out) {
    kernels::nearest_centroids(points, res.centroids, out, dist2);
    repair_empty(points, out, dist2, res.centroids);
    double inertia = 0.0;
    for (double v : dist2) inertia += v;
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
  };
  assign_pass(res.assignments);

  std::vector<std::size_t> next(n);
  while (res.iterations < max_iters) {
    ++res.iterations;
    res.centroids = update_centroids(points, res.assignments, res.centroids);
    const auto before = res.assignments;
    assign_pass(next);
    res.assignments.swap(next);
    if (res.assignments == before) {
      res.converged = true;
      break;
    }
  }
  return res;
}

std::vector<WeakClassifier> bagged_centroids(const Matrix& points, const BaggingOptions& options,
                                             const RngStream& rng) {
  const std::size_t n = points.rows();
  if (options.runs == 0) throw ContractError("bagging needs at least one run");
  if (!(options.fraction > 0.0 && options.fraction <= 1.0))
    throw ContractError("bagging fraction must lie in (0, 1]");
  const auto sub = static_cast<std::size_t>(std::ceil(options.fraction * static_cast<double>(n)));
  if (sub < options.k || sub == 0) {
    throw ContractError("candidate pool of " + std::to_string(n) + " users gives subsamples of " +
                        std::to_string(sub) + ", fewer than K=" + std::to_string(options.k));
  }

  std::vector<std::vector<WeakClassifier>> per_run(options.runs);
  const long long runs = static_cast<long long>(options.runs);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long rr = 0; rr < runs; ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
    RngStream run_rng = rng.fork(options.identical_runs ? 0 : r);
    RngStream sub_rng = run_rng.fork(0);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < sub; ++i)
      std::swap(idx[i], idx[i + sub_rng.below(n - i)]);
    idx.resize(sub);
    std::sort(idx.begin(), idx.end());
    Matrix sample(sub, points.cols());
    for (std::size_t i = 0; i < sub; ++i)
      std::copy(points.row(idx[i]).begin(), points.row(idx[i]).end(), sample.row(i).begin());

    const KMeansResult km = kmeans(sample, options.k, options.max_iters, run_rng);
    std::vector<std::size_t> sizes(options.k, 0);
    for (std::size_t a : km.assignments) ++sizes[a];
    for (std::size_t c = 0; c < options.k; ++c) {
      auto row = km.centroids.row(c);
      per_run[r].push_back({{row.begin(), row.end()},
                            static_cast<double>(sizes[c]) / static_cast<double>(sub),
                            r});
    }
  }
  std::vector<WeakClassifier> out;
  for (auto& run : per_run) out.insert(out.end(), run.begin(), run.end());
  return out;
}

std::vector<ScoredUser> score_audiences(const std::vector<AudienceCandidate>& pool,
                                        std::span<const WeakClassifier> classifiers) {
  if (classifiers.empty()) throw ContractError("score_audiences: no classifiers");
  const std::size_t d = classifiers.front().centroid.size();
  std::map<std::size_t, std::vector<const WeakClassifier*>> runs;
  for (const auto& c : classifiers) {
    if (c.centroid.size() != d) throw ContractError("score_audiences: centroid widths differ");
    runs[c.run].push_back(&c);
  }
  const double b = static_cast<double>(runs.size());

  std::vector<ScoredUser> out;
  out.reserve(pool.size());
  std::vector<double> per_run;
  for (const auto& u : pool) {
    if (u.embedding.size() != d) {
      throw ContractError("user " + std::to_string(u.user_id) + " embedding has " +
                          std::to_string(u.embedding.size()) + " dims, centroids have " +
                          std::to_string(d));
    }
    per_run.clear();
    for (const auto& [_, members] : runs) {
      double s = 0.0;
      for (const WeakClassifier* c : members) s += c->weight * cosine(u.embedding, c->centroid);
      per_run.push_back(s);
    }
    // Mean written as first + mean deviation: identical runs give the
    // single-run score exactly.
    double dev = 0.0;
    for (std::size_t r = 1; r < per_run.size(); ++r) dev += per_run[r] - per_run[0];
    out.push_back({u.user_id, per_run[0] + dev / b});
  }
  return out;
}

TargetSet target(const std::vector<AudienceCandidate>& pool,
                 std::span<const WeakClassifier> classifiers, std::size_t m) {
  if (m == 0) throw ContractError("target: m must be at least 1");
  TargetSet t;
  t.m = m;
  if (pool.empty()) {
    t.empty_pool = true;
    t.truncated = true;
    return t;
  }
  std::vector<ScoredUser> scored = score_audiences(pool, classifiers);
  const std::size_t take = std::min(m, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), [](const ScoredUser& a, const ScoredUser& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.user_id < b.user_id;
                    });
  scored.resize(take);
  t.users = std::move(scored);
  t.truncated = take < m;
  return t;
}

nlohmann::json target_json(const TargetSet& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& u : t.users) arr.push_back({{"user_id", u.user_id}, {"score", u.score}});
  return arr;
}

}  // namespace bcl::cat
