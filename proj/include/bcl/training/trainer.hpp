#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "bcl/contrastive/augment.hpp"
#include "bcl/contrastive/correlation.hpp"
#include "bcl/encoder.hpp"
#include "bcl/numerics/rng.hpp"
#include "bcl/training/bpr.hpp"
#include "bcl/training/checkpoint.hpp"
#include "bcl/training/config.hpp"

namespace bcl {

// Everything random about one optimization step, drawn up front so the
// objective is a deterministic function of the parameters.
struct PreparedStep {
  // BPR rows: queries, then positives, then negatives (3B songs).
  std::vector<const SongContent*> bpr_songs;
  Matrix bpr_keep;  // feature-dropout mask over flattened stacks, or empty

  // Contrastive rows: the N songs for the first view, then the same N songs
  // for the second view. Each view is clean * keep + offset.
  std::vector<const SongContent*> cl_songs;
  Matrix cl_keep;
  Matrix cl_offset;
  AugmentedGroupPair groups;
};

struct ObjectiveWeights {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double tau = 0.2;
  bool include_positive = false;
};

struct ObjectiveValue {
  double total = 0.0;
  double bpr = 0.0;
  double cl = 0.0;  // contrastive loss averaged over the N anchors
  double l2 = 0.0;  // ||theta||^2
};

// Multi-task objective and (optionally) its gradient on every tensor.
ObjectiveValue evaluate_objective(const EncoderModel& model, const PreparedStep& step,
                                  const ObjectiveWeights& weights, GradMap* grads);

struct StepRecord {
  ObjectiveValue loss;
  bool finite = true;
  bool refreshed_correlation = false;
};

// Single-owner training context.
class Trainer {
 public:
  Trainer(TrainConfig config, const std::vector<SongContent>& catalog,
          const std::vector<ScoredPair>& train_pairs);

  const TrainConfig& config() const noexcept { return config_; }
  const EncoderModel& model() const noexcept { return model_; }
  EncoderModel& model() noexcept { return model_; }
  const CorrelationMatrix& correlation() const noexcept { return correlation_; }
  std::uint64_t steps_taken() const noexcept { return steps_; }
  const PositiveSets& positives() const noexcept { return positives_; }

  // Draws the step's randomness (groups, views, dropout) for these batches.
  PreparedStep prepare(std::span<const TrainTriple> bpr_batch, std::span<const SongId> cl_batch);

  // One Adam update on the multi-task objective. A non-finite loss leaves
  // the parameters untouched and is reported in the record.
  StepRecord train_step(std::span<const TrainTriple> bpr_batch, std::span<const SongId> cl_batch);

  // One pass over the training pairs; throws NumericError after three
  // consecutive non-finite steps.
  EpochLog run_epoch(std::size_t epoch);

  // Uniform contrastive batch: the next N songs of a shuffled catalog
  // permutation (reshuffled when exhausted).
  std::vector<SongId> next_contrastive_batch();

  // Triples for one epoch: random orientation of every training pair, a
  // shuffled order and fresh negatives.
  std::vector<TrainTriple> epoch_triples();

  Checkpoint checkpoint(std::vector<EpochLog> log) const;

 private:
  const SongContent& song(SongId id) const;
  void refresh_correlation(std::span<const SongId> cl_batch, bool force);

  TrainConfig config_;
  const std::vector<SongContent>& catalog_;
  std::unordered_map<SongId, std::size_t> index_of_;
  std::vector<SongId> catalog_ids_;
  std::vector<ScoredPair> train_pairs_;
  PositiveSets positives_;
  EncoderModel model_;
  CorrelationMatrix correlation_;
  ViewConfig views_;

  RngStream negatives_rng_;
  RngStream batching_rng_;
  RngStream grouping_rng_;
  RngStream augmentation_rng_;
  RngStream dropout_rng_;

  std::vector<SongId> cl_order_;
  std::size_t cl_cursor_ = 0;
  std::uint64_t steps_ = 0;
  int consecutive_bad_ = 0;
};

EncoderConfig encoder_config_for(const TrainConfig& config, const std::vector<SongContent>& catalog);

using EpochCallback = std::function<void(const EpochLog&, const EncoderModel&)>;

// Full training run. on_epoch may fill EpochLog::val_recall before the log
// entry is stored.
Checkpoint train(const TrainConfig& config, const std::vector<SongContent>& catalog,
                 const std::vector<ScoredPair>& train_pairs,
                 const std::function<std::optional<double>(const EncoderModel&)>& validate = {},
                 const EpochCallback& on_epoch = {});

}  // namespace bcl
