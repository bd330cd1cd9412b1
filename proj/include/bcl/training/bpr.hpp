#pragma once

#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/param_store.hpp"
#include "bcl/numerics/rng.hpp"
#include "bcl/types.hpp"

namespace bcl {

struct BprResult {
  double loss = 0.0;
  Matrix grad_query;
  Matrix grad_positive;
  Matrix grad_negative;
};

// Mean over the batch of -log sigmoid(<r_i, r_j> - <r_i, r_k>).
BprResult bpr_loss(const Matrix& query, const Matrix& positive, const Matrix& negative);

// L = bpr + lambda1 * cl + lambda2 * ||theta||^2.
double multitask_loss(double bpr, double cl, const ParamStore& params, double lambda1,
                      double lambda2);

struct TrainTriple {
  SongId query = 0;
  SongId positive = 0;
  SongId negative = 0;

  friend bool operator==(const TrainTriple&, const TrainTriple&) = default;
};

// Undirected positive sets, sorted for lookup.
class PositiveSets {
 public:
  PositiveSets() = default;
  explicit PositiveSets(std::span<const ScoredPair> pairs);

  bool linked(SongId a, SongId b) const;
  std::size_t degree(SongId a) const;
  std::span<const SongId> partners(SongId a) const;

 private:
  std::unordered_map<SongId, std::vector<SongId>> sets_;
};

// For every directed positive (i, j), `count` negatives drawn uniformly from
// catalog_ids, rejecting i itself and every positive partner of i.
std::vector<TrainTriple> sample_negatives(std::span<const std::pair<SongId, SongId>> positives,
                                          const PositiveSets& sets,
                                          std::span<const SongId> catalog_ids, std::size_t count,
                                          RngStream& rng);

}  // namespace bcl
