#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bcl/io/formats.hpp"
#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/rng.hpp"
#include "bcl/types.hpp"
#include "json.hpp"

namespace bcl::cat {

struct AudienceCandidate {
  UserId user_id = 0;
  std::vector<double> embedding;
  std::vector<SongId> sources;  // retrieved songs the user red-hearted, ascending

  friend bool operator==(const AudienceCandidate&, const AudienceCandidate&) = default;
};

// Inclusive timestamp range.
struct RecencyWindow {
  std::int64_t from = 0;
  std::int64_t to = 0;
};

// The last `fraction` of the span between the first and last event.
RecencyWindow default_window(std::span<const BehaviorEvent> events, double fraction = 0.25);

struct CandidatePool {
  std::vector<AudienceCandidate> candidates;  // ascending user id
  std::size_t missing_embeddings = 0;         // eligible users skipped for lack of an embedding
};

CandidatePool candidate_pool(std::span<const BehaviorEvent> events,
                             std::span<const SongId> retrieved, const RecencyWindow& window,
                             const io::UserEmbeddings& embeddings);

Matrix pool_matrix(const std::vector<AudienceCandidate>& pool);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Matrix centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every assignment pass
  std::size_t iterations = 0;
  bool converged = false;               // stopped at an assignment fixpoint
};

// k-means++ seeding followed by Lloyd iterations.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, RngStream& rng);

struct WeakClassifier {
  std::vector<double> centroid;
  double weight = 0.0;  // cluster size / subsample size
  std::size_t run = 0;

  friend bool operator==(const WeakClassifier&, const WeakClassifier&) = default;
};

struct BaggingOptions {
  std::size_t k = 8;
  std::size_t runs = 4;
  double fraction = 0.8;
  std::size_t max_iters = 50;
  bool identical_runs = false;  // every run reuses run 0's subsample and seed
};

// Run r clusters a subsample with rng.fork(r) (drawing the subsample from a
// child of that stream), so runs=1 with fraction=1 is kmeans(points, k,
// max_iters, rng.fork(0)).
std::vector<WeakClassifier> bagged_centroids(const Matrix& points, const BaggingOptions& options,
                                             const RngStream& rng);

struct ScoredUser {
  UserId user_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredUser&, const ScoredUser&) = default;
};

// Mean over runs of sum_c weight_c * cosine(embedding, centroid_c), in pool
// order.
std::vector<ScoredUser> score_audiences(const std::vector<AudienceCandidate>& pool,
                                        std::span<const WeakClassifier> classifiers);

struct TargetSet {
  std::vector<ScoredUser> users;
  std::size_t m = 0;
  bool truncated = false;   // fewer than m candidates
  bool empty_pool = false;
};

TargetSet target(const std::vector<AudienceCandidate>& pool,
                 std::span<const WeakClassifier> classifiers, std::size_t m);

nlohmann::json target_json(const TargetSet& t);

}  // namespace bcl::cat
