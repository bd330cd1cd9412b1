#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bcl/contrastive/grouping.hpp"
#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/rng.hpp"

namespace bcl {

enum class AugmentKind { random_mask, span_mask, uniform_noise };

const char* augment_kind_name(AugmentKind kind) noexcept;

struct AugmentationOp {
  AugmentKind kind = AugmentKind::random_mask;
  double ratio = 0.3;  // masking ratio, mask kinds only
  double noise = 0.05; // noise magnitude, uniform_noise only
};

// Augmented copy of a k x d stack: values = stack * keep + offset
// (elementwise). keep is 0 where a mask overwrote the input, offset holds the
// added noise.
struct AugmentedView {
  Matrix values;
  Matrix keep;
  Matrix offset;
};

// floor(ratio * d).
std::size_t masked_count(double ratio, std::size_t d);

// Each grouped row gets exactly floor(ratio * d) distinct coordinates zeroed.
AugmentedView random_mask(const Matrix& stack, std::span<const std::size_t> group, double ratio,
                          RngStream& rng);
// Each grouped row gets [start, start + L) zeroed, L = floor(ratio * d),
// start uniform in [0, d - L].
AugmentedView span_mask(const Matrix& stack, std::span<const std::size_t> group, double ratio,
                        RngStream& rng);
// Each grouped row gets U(-noise, noise) added elementwise.
AugmentedView uniform_noise(const Matrix& stack, std::span<const std::size_t> group, double noise,
                            RngStream& rng);

AugmentedView apply_augmentation(const Matrix& stack, std::span<const std::size_t> group,
                                 const AugmentationOp& op, RngStream& rng);

struct ViewConfig {
  double ratio = 0.3;
  double noise = 0.05;
  std::vector<AugmentKind> kinds{AugmentKind::random_mask, AugmentKind::span_mask,
                                 AugmentKind::uniform_noise};
};

struct ViewPair {
  AugmentedView first;
  AugmentedView second;
  AugmentKind first_kind = AugmentKind::random_mask;
  AugmentKind second_kind = AugmentKind::random_mask;
};

// Two operator kinds drawn independently (with replacement) from
// config.kinds; the first view perturbs group_a only, the second group_b.
ViewPair make_views(const Matrix& stack, const AugmentedGroupPair& groups, const ViewConfig& config,
                    RngStream& rng);

}  // namespace bcl
