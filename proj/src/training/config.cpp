#include "bcl/training/config.hpp"

#include <cmath>
#include <set>

#include "bcl/errors.hpp"

namespace bcl {

const char* ablation_name(Ablation a) noexcept {
  switch (a) {
    case Ablation::full_bcl: return "full_bcl";
    case Ablation::base: return "base";
    case Ablation::feature_dropout: return "feature_dropout";
    case Ablation::static_corr_mask_only: return "static_corr_mask_only";
  }
  return "unknown";
}

Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::full_bcl, Ablation::base, Ablation::feature_dropout,
                     Ablation::static_corr_mask_only}) {
    if (s == ablation_name(a)) return a;
  }
  throw ContractError("unknown ablation '" + s +
                      "' (expected full_bcl, base, feature_dropout or static_corr_mask_only)");
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ContractError(std::string(name) + " must be positive");
  };
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ContractError(std::string(name) + " must be non-negative");
  };
  auto count = [](std::size_t v, const char* name) {
    if (v == 0) throw ContractError(std::string(name) + " must be at least 1");
  };
  positive(lr, "lr");
  count(batch_size_bpr, "batch_size_bpr");
  count(batch_size_cl, "batch_size_cl");
  nonneg(lambda1, "lambda1");
  nonneg(lambda2, "lambda2");
  positive(tau, "tau");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ContractError("ratio must lie in [0, 1]");
  nonneg(noise, "noise");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  count(refresh_interval, "refresh_interval");
  count(epochs, "epochs");
  count(negatives_per_positive, "negatives_per_positive");
  if (contrastive_enabled() && batch_size_cl < 2)
    throw ContractError("batch_size_cl must be at least 2 for the contrastive loss");
  count(hidden1, "hidden1");
  count(hidden2, "hidden2");
  count(rep_dim, "rep_dim");
  count(proj_dim, "proj_dim");
  if (proj_hidden_layer) count(proj_hidden, "proj_hidden");
}

double TrainConfig::effective_lambda1() const {
  switch (ablation) {
    case Ablation::base:
    case Ablation::feature_dropout: return 0.0;
    default: return lambda1;
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"lr", c.lr},
      {"batch_size_bpr", c.batch_size_bpr},
      {"batch_size_cl", c.batch_size_cl},
      {"lambda1", c.lambda1},
      {"lambda2", c.lambda2},
      {"tau", c.tau},
      {"ratio", c.ratio},
      {"noise", c.noise},
      {"alpha", c.alpha},
      {"refresh_interval", c.refresh_interval},
      {"epochs", c.epochs},
      {"negatives_per_positive", c.negatives_per_positive},
      {"include_positive_in_denominator", c.include_positive_in_denominator},
      {"ablation", ablation_name(c.ablation)},
      {"seed", c.seed},
      {"hidden1", c.hidden1},
      {"hidden2", c.hidden2},
      {"rep_dim", c.rep_dim},
      {"proj_hidden", c.proj_hidden},
      {"proj_dim", c.proj_dim},
      {"proj_hidden_layer", c.proj_hidden_layer},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw FormatError("train config must be a JSON object");
  static const std::set<std::string> known{
      "lr",     "batch_size_bpr", "batch_size_cl", "lambda1",
      "lambda2", "tau",           "ratio",         "noise",
      "alpha",  "refresh_interval", "epochs",      "negatives_per_positive",
      "include_positive_in_denominator", "ablation", "seed", "hidden1",
      "hidden2", "rep_dim", "proj_hidden", "proj_dim", "proj_hidden_layer"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw FormatError("unknown train config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("lr", c.lr);
    get("batch_size_bpr", c.batch_size_bpr);
    get("batch_size_cl", c.batch_size_cl);
    get("lambda1", c.lambda1);
    get("lambda2", c.lambda2);
    get("tau", c.tau);
    get("ratio", c.ratio);
    get("noise", c.noise);
    get("alpha", c.alpha);
    get("refresh_interval", c.refresh_interval);
    get("epochs", c.epochs);
    get("negatives_per_positive", c.negatives_per_positive);
    get("include_positive_in_denominator", c.include_positive_in_denominator);
    get("seed", c.seed);
    get("hidden1", c.hidden1);
    get("hidden2", c.hidden2);
    get("rep_dim", c.rep_dim);
    get("proj_hidden", c.proj_hidden);
    get("proj_dim", c.proj_dim);
    get("proj_hidden_layer", c.proj_hidden_layer);
    if (j.contains("ablation")) c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
}

}  // namespace bcl
