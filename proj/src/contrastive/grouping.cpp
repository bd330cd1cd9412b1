#include "bcl/contrastive/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bcl/errors.hpp"

namespace bcl {

std::vector<std::size_t> gumbel_top_n(std::span<const double> weights, std::size_t exclude,
                                      std::size_t n, RngStream& rng) {
  struct Candidate {
    double score;
    std::size_t index;
  };
  std::vector<Candidate> cand;
  cand.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (i == exclude) continue;
    const double w = std::max(weights[i], kCorrelationFloor);
    const double u = rng.uniform_open();
    cand.push_back({std::log(w) - std::log(-std::log(u)), i});
  }
  if (n > cand.size()) {
    throw ContractError("gumbel_top_n: asked for " + std::to_string(n) + " of " +
                        std::to_string(cand.size()) + " candidates");
  }
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(n), cand.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return a.score != b.score ? a.score > b.score : a.index < b.index;
                    });
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) picks[i] = cand[i].index;
  return picks;
}

AugmentedGroupPair sample_groups_from_seed(const Matrix& correlation, std::size_t seed_feature,
                                           RngStream& rng) {
  const std::size_t k = correlation.rows();
  if (k < 2) throw ContractError("sample_groups: need at least 2 features, got " + std::to_string(k));
  if (correlation.cols() != k) {
    throw DimensionError("sample_groups: correlation matrix " + correlation.shape_string());
  }
  if (seed_feature >= k) throw ContractError("sample_groups: seed feature out of range");

  AugmentedGroupPair pair;
  pair.seed_feature = seed_feature;
  pair.group_a.push_back(seed_feature);
  const auto picks =
      gumbel_top_n(correlation.row(seed_feature), seed_feature, correlated_pick_count(k), rng);
  pair.group_a.insert(pair.group_a.end(), picks.begin(), picks.end());

  std::vector<bool> in_a(k, false);
  for (std::size_t f : pair.group_a) in_a[f] = true;
  for (std::size_t f = 0; f < k; ++f)
    if (!in_a[f]) pair.group_b.push_back(f);
  return pair;
}

AugmentedGroupPair sample_groups(const Matrix& correlation, RngStream& rng) {
  const std::size_t k = correlation.rows();
  if (k < 2) throw ContractError("sample_groups: need at least 2 features, got " + std::to_string(k));
  const std::size_t seed = static_cast<std::size_t>(rng.below(k));
  return sample_groups_from_seed(correlation, seed, rng);
}

}  // namespace bcl
