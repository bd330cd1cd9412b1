#pragma once

#include <cstdint>
#include <string>

#include "bcl/encoder.hpp"
#include "json.hpp"

namespace bcl {

// Training variants: the full method and the baseline configurations it is
// compared against.
enum class Ablation {
  full_bcl,               // BPR + bootstrapped correlated-group contrastive loss
  base,                   // BPR only
  feature_dropout,        // BPR with whole feature rows dropped at rate `ratio`
  static_corr_mask_only,  // correlation computed once, mask operators only
};

const char* ablation_name(Ablation a) noexcept;
Ablation parse_ablation(const std::string& s);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size_bpr = 256;
  std::size_t batch_size_cl = 256;  // N
  double lambda1 = 0.01;            // contrastive weight
  double lambda2 = 1e-4;            // L2 weight
  double tau = 0.2;
  double ratio = 0.3;               // masking / dropout ratio
  double noise = 0.05;              // uniform-noise magnitude
  double alpha = 0.9;               // correlation EMA factor
  std::size_t refresh_interval = 100;
  std::size_t epochs = 30;
  std::size_t negatives_per_positive = 1;
  bool include_positive_in_denominator = false;
  Ablation ablation = Ablation::full_bcl;
  std::uint64_t seed = 42;
  std::size_t hidden1 = 256;
  std::size_t hidden2 = 128;
  std::size_t rep_dim = 128;
  std::size_t proj_hidden = 128;
  std::size_t proj_dim = 64;
  bool proj_hidden_layer = true;

  void validate() const;
  // lambda1 as applied: zero whenever the contrastive path is disabled.
  double effective_lambda1() const;
  bool contrastive_enabled() const { return effective_lambda1() > 0.0; }
  bool bootstrapping_enabled() const { return ablation == Ablation::full_bcl; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace bcl
