#include "bcl/contrastive/augment.hpp"

#include <cmath>
#include <numeric>

#include "bcl/errors.hpp"

namespace bcl {
namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ContractError("masking ratio " + std::to_string(ratio) + " outside [0, 1]");
}

void check_group(const Matrix& stack, std::span<const std::size_t> group) {
  for (std::size_t f : group) {
    if (f >= stack.rows()) {
      throw DimensionError("augmentation group index " + std::to_string(f) + " outside stack " +
                           stack.shape_string());
    }
  }
}

AugmentedView start_view(const Matrix& stack) {
  return {stack, Matrix(stack.rows(), stack.cols(), 1.0), Matrix(stack.rows(), stack.cols(), 0.0)};
}

}  // namespace

const char* augment_kind_name(AugmentKind kind) noexcept {
  switch (kind) {
    case AugmentKind::random_mask: return "random_mask";
    case AugmentKind::span_mask: return "span_mask";
    case AugmentKind::uniform_noise: return "uniform_noise";
  }
  return "unknown";
}

std::size_t masked_count(double ratio, std::size_t d) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(d)));
}

AugmentedView random_mask(const Matrix& stack, std::span<const std::size_t> group, double ratio,
                          RngStream& rng) {
  check_ratio(ratio);
  check_group(stack, group);
  AugmentedView view = start_view(stack);
  const std::size_t d = stack.cols();
  const std::size_t count = masked_count(ratio, d);
  std::vector<std::size_t> pos(d);
  for (std::size_t f : group) {
    // Partial Fisher-Yates: the first `count` slots are a uniform sample
    // without replacement.
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(d - i));
      std::swap(pos[i], pos[j]);
      view.values(f, pos[i]) = 0.0;
      view.keep(f, pos[i]) = 0.0;
    }
  }
  return view;
}

AugmentedView span_mask(const Matrix& stack, std::span<const std::size_t> group, double ratio,
                        RngStream& rng) {
  check_ratio(ratio);
  check_group(stack, group);
  AugmentedView view = start_view(stack);
  const std::size_t d = stack.cols();
  const std::size_t len = masked_count(ratio, d);
  for (std::size_t f : group) {
    const std::size_t start = static_cast<std::size_t>(rng.below(d - len + 1));
    for (std::size_t t = start; t < start + len; ++t) {
      view.values(f, t) = 0.0;
      view.keep(f, t) = 0.0;
    }
  }
  return view;
}

AugmentedView uniform_noise(const Matrix& stack, std::span<const std::size_t> group, double noise,
                            RngStream& rng) {
  if (!(noise >= 0.0)) throw ContractError("noise magnitude must be non-negative");
  check_group(stack, group);
  AugmentedView view = start_view(stack);
  for (std::size_t f : group) {
    for (std::size_t t = 0; t < stack.cols(); ++t) {
      const double e = rng.uniform(-noise, noise);
      view.values(f, t) += e;
      view.offset(f, t) = e;
    }
  }
  return view;
}

AugmentedView apply_augmentation(const Matrix& stack, std::span<const std::size_t> group,
                                 const AugmentationOp& op, RngStream& rng) {
  switch (op.kind) {
    case AugmentKind::random_mask: return random_mask(stack, group, op.ratio, rng);
    case AugmentKind::span_mask: return span_mask(stack, group, op.ratio, rng);
    case AugmentKind::uniform_noise: return uniform_noise(stack, group, op.noise, rng);
  }
  throw ContractError("unknown augmentation kind");
}

ViewPair make_views(const Matrix& stack, const AugmentedGroupPair& groups, const ViewConfig& config,
                    RngStream& rng) {
  if (config.kinds.empty()) throw ContractError("make_views: no augmentation kinds enabled");
  if (groups.group_a.size() + groups.group_b.size() != stack.rows()) {
    throw DimensionError("make_views: groups cover " +
                         std::to_string(groups.group_a.size() + groups.group_b.size()) +
                         " features, stack has " + std::to_string(stack.rows()));
  }
  ViewPair out;
  out.first_kind = config.kinds[rng.below(config.kinds.size())];
  out.second_kind = config.kinds[rng.below(config.kinds.size())];
  out.first = apply_augmentation(stack, groups.group_a,
                                 {out.first_kind, config.ratio, config.noise}, rng);
  out.second = apply_augmentation(stack, groups.group_b,
                                  {out.second_kind, config.ratio, config.noise}, rng);
  return out;
}

}  // namespace bcl
