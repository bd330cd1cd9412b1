#include "bcl/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "bcl/contrastive/info_nce.hpp"
#include "bcl/errors.hpp"
#include "bcl/numerics/adam.hpp"

namespace bcl {
namespace {

void hadamard_add(Matrix& x, const Matrix& keep, const Matrix& offset) {
  if (!keep.empty()) {
    require_same_shape(x, keep, "augmentation keep mask");
    auto xv = x.values();
    auto kv = keep.values();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] *= kv[i];
  }
  if (!offset.empty()) {
    require_same_shape(x, offset, "augmentation offset");
    auto xv = x.values();
    auto ov = offset.values();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += ov[i];
  }
}

Matrix rows_slice(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + (begin + count) * m.cols(), out.data());
  return out;
}

void put_rows(Matrix& dst, std::size_t begin, const Matrix& src) {
  std::copy(src.values().begin(), src.values().end(), dst.data() + begin * dst.cols());
}

// Flattens src into row r of dst.
void copy_row(Matrix& dst, std::size_t r, const Matrix& src) {
  std::copy(src.values().begin(), src.values().end(), dst.row(r).begin());
}

void scale(Matrix& m, double s) {
  for (double& v : m.values()) v *= s;
}

bool grads_finite(const GradMap& g) {
  return std::all_of(g.begin(), g.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

Matrix round_to_float(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace

EncoderConfig encoder_config_for(const TrainConfig& config,
                                 const std::vector<SongContent>& catalog) {
  if (catalog.empty()) throw ContractError("training needs a non-empty catalog");
  const SongContent& first = catalog.front();
  EncoderConfig ec;
  ec.vocab_sizes.assign(first.attrs.size(), 0);
  for (const auto& s : catalog) {
    if (s.attrs.size() != ec.vocab_sizes.size()) {
      throw DimensionError("song " + std::to_string(s.song_id) + " has " +
                           std::to_string(s.attrs.size()) + " attributes, expected " +
                           std::to_string(ec.vocab_sizes.size()));
    }
    for (std::size_t f = 0; f < s.attrs.size(); ++f)
      ec.vocab_sizes[f] = std::max<std::size_t>(ec.vocab_sizes[f], s.attrs[f] + 1);
  }
  ec.feature_dim = first.audio.size();
  ec.audio_dim = 0;
  ec.lyric_dim = first.lyric.size() == ec.feature_dim ? 0 : first.lyric.size();
  ec.hidden1 = config.hidden1;
  ec.hidden2 = config.hidden2;
  ec.rep_dim = config.rep_dim;
  ec.proj_hidden = config.proj_hidden;
  ec.proj_dim = config.proj_dim;
  ec.proj_hidden_layer = config.proj_hidden_layer;
  ec.validate();
  return ec;
}

ObjectiveValue evaluate_objective(const EncoderModel& model, const PreparedStep& step,
                                  const ObjectiveWeights& weights, GradMap* grads) {
  ObjectiveValue val;

  // Supervised part.
  const std::size_t b3 = step.bpr_songs.size();
  if (b3 == 0 || b3 % 3 != 0) throw ContractError("BPR batch must hold query/positive/negative rows");
  const std::size_t b = b3 / 3;
  {
    InputTrace in;
    NetTrace net;
    Matrix flat = assemble_flat(step.bpr_songs, model, grads ? &in : nullptr);
    hadamard_add(flat, step.bpr_keep, Matrix());
    Matrix reps = backbone_forward(flat, model, grads ? &net : nullptr);
    BprResult r = bpr_loss(rows_slice(reps, 0, b), rows_slice(reps, b, b), rows_slice(reps, 2 * b, b));
    val.bpr = r.loss;
    if (grads != nullptr) {
      Matrix d_rep(b3, reps.cols());
      put_rows(d_rep, 0, r.grad_query);
      put_rows(d_rep, b, r.grad_positive);
      put_rows(d_rep, 2 * b, r.grad_negative);
      Matrix d_flat = backbone_backward(net, d_rep, model, *grads);
      input_backward(in, d_flat, step.bpr_keep, model, *grads);
    }
  }

  // Contrastive part on two views of the uniform batch.
  if (weights.lambda1 > 0.0 && !step.cl_songs.empty()) {
    const std::size_t n2 = step.cl_songs.size();
    if (n2 % 2 != 0) throw ContractError("contrastive batch must hold two views per song");
    const std::size_t n = n2 / 2;
    InputTrace in;
    NetTrace net_f, net_g;
    Matrix flat = assemble_flat(step.cl_songs, model, grads ? &in : nullptr);
    hadamard_add(flat, step.cl_keep, step.cl_offset);
    Matrix reps = backbone_forward(flat, model, grads ? &net_f : nullptr);
    Matrix z = head_forward(reps, model, grads ? &net_g : nullptr);
    InfoNceResult r = info_nce(rows_slice(z, 0, n), rows_slice(z, n, n), weights.tau,
                               weights.include_positive, grads != nullptr);
    const double inv_n = 1.0 / static_cast<double>(n);
    val.cl = r.loss * inv_n;
    if (grads != nullptr) {
      Matrix d_z(n2, z.cols());
      put_rows(d_z, 0, r.grad_first);
      put_rows(d_z, n, r.grad_second);
      scale(d_z, weights.lambda1 * inv_n);
      Matrix d_rep = head_backward(net_g, d_z, model, *grads);
      Matrix d_flat = backbone_backward(net_f, d_rep, model, *grads);
      input_backward(in, d_flat, step.cl_keep, model, *grads);
    }
  }

  if (weights.lambda2 > 0.0) {
    val.l2 = model.params().squared_norm();
    if (grads != nullptr) {
      for (const auto& [name, w] : model.params().tensors()) {
        auto gv = grads->at(name).values();
        auto wv = w.values();
        for (std::size_t i = 0; i < wv.size(); ++i) gv[i] += 2.0 * weights.lambda2 * wv[i];
      }
    }
  }
  val.total = multitask_loss(val.bpr, val.cl, model.params(), weights.lambda1, weights.lambda2);
  return val;
}

Trainer::Trainer(TrainConfig config, const std::vector<SongContent>& catalog,
                 const std::vector<ScoredPair>& train_pairs)
    : config_(std::move(config)),
      catalog_(catalog),
      train_pairs_(train_pairs),
      positives_(train_pairs),
      model_([&] {
        config_.validate();
        RngStream init(config_.seed, Stream::init);
        return EncoderModel(encoder_config_for(config_, catalog), init);
      }()),
      negatives_rng_(config_.seed, Stream::negatives),
      batching_rng_(config_.seed, Stream::batching),
      grouping_rng_(config_.seed, Stream::grouping),
      augmentation_rng_(config_.seed, Stream::augmentation),
      dropout_rng_(config_.seed, Stream::dropout) {
  if (train_pairs_.empty()) throw ContractError("training needs at least one positive pair");
  for (std::size_t i = 0; i < catalog_.size(); ++i) {
    validate_content(catalog_[i], model_.config());
    if (!index_of_.emplace(catalog_[i].song_id, i).second)
      throw ContractError("duplicate song id " + std::to_string(catalog_[i].song_id) + " in catalog");
    catalog_ids_.push_back(catalog_[i].song_id);
  }
  std::sort(catalog_ids_.begin(), catalog_ids_.end());
  for (const auto& p : train_pairs_) {
    song(p.song_i);
    song(p.song_j);
  }
  views_.ratio = config_.ratio;
  views_.noise = config_.noise;
  if (config_.ablation == Ablation::static_corr_mask_only)
    views_.kinds = {AugmentKind::random_mask, AugmentKind::span_mask};
  if (config_.contrastive_enabled() && config_.batch_size_cl > catalog_.size()) {
    throw ContractError("batch_size_cl (" + std::to_string(config_.batch_size_cl) +
                        ") exceeds the catalog size (" + std::to_string(catalog_.size()) + ")");
  }
}

const SongContent& Trainer::song(SongId id) const {
  auto it = index_of_.find(id);
  if (it == index_of_.end())
    throw LookupError("song " + std::to_string(id) + " is not in the catalog");
  return catalog_[it->second];
}

std::vector<SongId> Trainer::next_contrastive_batch() {
  const std::size_t n = config_.batch_size_cl;
  if (cl_order_.size() - cl_cursor_ < n || cl_order_.empty()) {
    // A short remainder is dropped so no batch repeats a song.
    cl_order_ = catalog_ids_;
    for (std::size_t i = cl_order_.size(); i > 1; --i)
      std::swap(cl_order_[i - 1], cl_order_[batching_rng_.below(i)]);
    cl_cursor_ = 0;
  }
  std::vector<SongId> out(cl_order_.begin() + static_cast<std::ptrdiff_t>(cl_cursor_),
                          cl_order_.begin() + static_cast<std::ptrdiff_t>(cl_cursor_ + n));
  cl_cursor_ += n;
  return out;
}

std::vector<TrainTriple> Trainer::epoch_triples() {
  std::vector<std::pair<SongId, SongId>> directed;
  directed.reserve(train_pairs_.size());
  for (const auto& p : train_pairs_) {
    if (batching_rng_.bernoulli(0.5))
      directed.emplace_back(p.song_i, p.song_j);
    else
      directed.emplace_back(p.song_j, p.song_i);
  }
  for (std::size_t i = directed.size(); i > 1; --i)
    std::swap(directed[i - 1], directed[batching_rng_.below(i)]);
  return sample_negatives(directed, positives_, catalog_ids_, config_.negatives_per_positive,
                          negatives_rng_);
}

void Trainer::refresh_correlation(std::span<const SongId> cl_batch, bool force) {
  if (!force && correlation_.initialized) {
    if (!config_.bootstrapping_enabled()) return;
    if (steps_ == 0 || steps_ % config_.refresh_interval != 0) return;
  }
  std::vector<const SongContent*> songs;
  songs.reserve(cl_batch.size());
  for (SongId id : cl_batch) songs.push_back(&song(id));
  const Matrix flat = assemble_flat(songs, model_, nullptr);
  const std::size_t k = model_.config().num_features(), d = model_.config().feature_dim;
  std::vector<Matrix> stacks;
  stacks.reserve(songs.size());
  for (std::size_t i = 0; i < songs.size(); ++i) {
    auto row = flat.row(i);
    stacks.emplace_back(k, d, std::vector<double>(row.begin(), row.end()));
  }
  correlation_ = ema_update(correlation_, correlation_snapshot(stacks), config_.alpha, steps_);
}

PreparedStep Trainer::prepare(std::span<const TrainTriple> bpr_batch,
                              std::span<const SongId> cl_batch) {
  if (bpr_batch.empty()) throw ContractError("train step needs a non-empty BPR batch");
  PreparedStep step;
  const std::size_t b = bpr_batch.size();
  step.bpr_songs.resize(3 * b);
  for (std::size_t r = 0; r < b; ++r) {
    step.bpr_songs[r] = &song(bpr_batch[r].query);
    step.bpr_songs[b + r] = &song(bpr_batch[r].positive);
    step.bpr_songs[2 * b + r] = &song(bpr_batch[r].negative);
  }
  const std::size_t k = model_.config().num_features(), d = model_.config().feature_dim;

  if (config_.ablation == Ablation::feature_dropout) {
    step.bpr_keep = Matrix(3 * b, k * d, 1.0);
    for (std::size_t r = 0; r < 3 * b; ++r) {
      for (std::size_t f = 0; f < k; ++f) {
        if (!dropout_rng_.bernoulli(config_.ratio)) continue;
        for (std::size_t t = 0; t < d; ++t) step.bpr_keep(r, f * d + t) = 0.0;
      }
    }
  }

  if (config_.contrastive_enabled() && !cl_batch.empty()) {
    if (cl_batch.size() < 2) throw ContractError("contrastive batch needs at least 2 songs");
    if (!correlation_.initialized) throw ContractError("correlation matrix not initialized");
    const std::size_t n = cl_batch.size();
    step.groups = sample_groups(correlation_.values, grouping_rng_);
    step.cl_songs.resize(2 * n);
    step.cl_keep = Matrix(2 * n, k * d);
    step.cl_offset = Matrix(2 * n, k * d);
    // Views are built on a zero stack: the masks and noise do not depend on
    // the values, and keep/offset rebuild the view for any parameters.
    const Matrix zero(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      step.cl_songs[i] = step.cl_songs[n + i] = &song(cl_batch[i]);
      ViewPair v = make_views(zero, step.groups, views_, augmentation_rng_);
      copy_row(step.cl_keep, i, v.first.keep);
      copy_row(step.cl_keep, n + i, v.second.keep);
      copy_row(step.cl_offset, i, v.first.offset);
      copy_row(step.cl_offset, n + i, v.second.offset);
    }
  }
  return step;
}

StepRecord Trainer::train_step(std::span<const TrainTriple> bpr_batch,
                               std::span<const SongId> cl_batch) {
  StepRecord rec;
  const bool cl = config_.contrastive_enabled() && !cl_batch.empty();
  if (cl) {
    const bool was = correlation_.initialized;
    const auto before = correlation_.last_refresh_step;
    refresh_correlation(cl_batch, !correlation_.initialized);
    rec.refreshed_correlation = !was || correlation_.last_refresh_step != before;
  }
  PreparedStep step = prepare(bpr_batch, cl_batch);
  ObjectiveWeights w{config_.effective_lambda1(), config_.lambda2, config_.tau,
                     config_.include_positive_in_denominator};
  GradMap grads = model_.params().zero_grads();
  rec.loss = evaluate_objective(model_, step, w, &grads);
  rec.finite = std::isfinite(rec.loss.total) && grads_finite(grads);
  ++steps_;
  if (!rec.finite) {
    if (++consecutive_bad_ >= 3) {
      throw NumericError("training diverged: 3 consecutive non-finite steps (last at step " +
                         std::to_string(steps_) + ", loss " + std::to_string(rec.loss.total) +
                         "); parameters kept from the last finite step");
    }
    return rec;
  }
  consecutive_bad_ = 0;
  adam_step(model_.params(), grads, AdamOptions{config_.lr});
  return rec;
}

EpochLog Trainer::run_epoch(std::size_t epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<TrainTriple> triples = epoch_triples();
  EpochLog log;
  log.epoch = epoch;
  std::size_t counted = 0;
  for (std::size_t start = 0; start < triples.size(); start += config_.batch_size_bpr) {
    const std::size_t len = std::min(config_.batch_size_bpr, triples.size() - start);
    std::vector<SongId> cl_batch;
    if (config_.contrastive_enabled()) cl_batch = next_contrastive_batch();
    StepRecord rec = train_step(std::span(triples).subspan(start, len), cl_batch);
    if (!rec.finite) continue;
    log.loss_total += rec.loss.total;
    log.loss_bpr += rec.loss.bpr;
    log.loss_cl += rec.loss.cl;
    ++counted;
  }
  if (counted > 0) {
    const double inv = 1.0 / static_cast<double>(counted);
    log.loss_total *= inv;
    log.loss_bpr *= inv;
    log.loss_cl *= inv;
  }
  log.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

Checkpoint Trainer::checkpoint(std::vector<EpochLog> log) const {
  Checkpoint c;
  c.config = config_;
  c.encoder = model_.config();
  for (const auto& [name, m] : model_.params().tensors()) c.tensors.emplace(name, round_to_float(m));
  if (correlation_.initialized) c.correlation = round_to_float(correlation_.values);
  c.log = std::move(log);
  return c;
}

Checkpoint train(const TrainConfig& config, const std::vector<SongContent>& catalog,
                 const std::vector<ScoredPair>& train_pairs,
                 const std::function<std::optional<double>(const EncoderModel&)>& validate,
                 const EpochCallback& on_epoch) {
  Trainer trainer(config, catalog, train_pairs);
  std::vector<EpochLog> logs;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    EpochLog log = trainer.run_epoch(e);
    if (validate) log.val_recall = validate(trainer.model());
    if (on_epoch) on_epoch(log, trainer.model());
    logs.push_back(log);
  }
  return trainer.checkpoint(std::move(logs));
}

}  // namespace bcl
