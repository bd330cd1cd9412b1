#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/rng.hpp"

namespace bcl {

// Two complementary feature groups for one training step. group_a holds the
// seed feature first, then the correlated picks in selection order;
// group_b holds the remaining features in ascending order.
struct AugmentedGroupPair {
  std::size_t seed_feature = 0;
  std::vector<std::size_t> group_a;
  std::vector<std::size_t> group_b;
};

// Correlated features drawn around the seed: floor((k - 1) / 2).
constexpr std::size_t correlated_pick_count(std::size_t k) { return k < 1 ? 0 : (k - 1) / 2; }

// Correlation entries are floored here before the log so a zero entry is
// representable but practically never selected.
inline constexpr double kCorrelationFloor = 1e-12;

// Gumbel-top-n: one Gumbel perturbation log w_i - log(-log u_i) per
// candidate i != exclude (drawn in ascending i), n largest returned in
// descending perturbed score. Equivalent to n sequential categorical draws
// without replacement with probabilities proportional to w.
std::vector<std::size_t> gumbel_top_n(std::span<const double> weights, std::size_t exclude,
                                      std::size_t n, RngStream& rng);

AugmentedGroupPair sample_groups(const Matrix& correlation, RngStream& rng);
AugmentedGroupPair sample_groups_from_seed(const Matrix& correlation, std::size_t seed_feature,
                                           RngStream& rng);

}  // namespace bcl
