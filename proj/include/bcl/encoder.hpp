#pragma once

#include <span>
#include <string>
#include <vector>

#include "bcl/numerics/dense.hpp"
#include "bcl/numerics/matrix.hpp"
#include "bcl/numerics/param_store.hpp"
#include "bcl/numerics/rng.hpp"
#include "bcl/types.hpp"
#include "json.hpp"

namespace bcl {

// Shapes of the content encoder. The backbone consumes the k x d feature
// stack flattened row-major (feature 0 first), so input_dim = k * d.
struct EncoderConfig {
  std::vector<std::size_t> vocab_sizes;  // one per attribute field (n_a entries)
  std::size_t feature_dim = 128;         // d
  std::size_t audio_dim = 0;             // source width; 0 means d (no adapter)
  std::size_t lyric_dim = 0;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 256;
  std::size_t rep_dim = 128;             // d_r
  std::size_t proj_hidden = 128;
  std::size_t proj_dim = 64;             // d_z
  bool proj_hidden_layer = true;         // false: single-matrix head d_r -> d_z

  std::size_t num_attributes() const { return vocab_sizes.size(); }
  std::size_t num_features() const { return vocab_sizes.size() + 2; }
  std::size_t input_dim() const { return num_features() * feature_dim; }
  std::size_t audio_width() const { return audio_dim == 0 ? feature_dim : audio_dim; }
  std::size_t lyric_width() const { return lyric_dim == 0 ? feature_dim : lyric_dim; }
  bool has_audio_adapter() const { return audio_width() != feature_dim; }
  bool has_lyric_adapter() const { return lyric_width() != feature_dim; }

  void validate() const;
  std::vector<std::string> feature_names() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// x = [a_1 .. a_{n_a}, audio, lyric] as a k x d matrix.
struct FeatureStack {
  SongId song_id = 0;
  Matrix rows;
};

namespace param_names {
std::string embedding(std::size_t field);
std::string backbone_weight(std::size_t layer);
std::string backbone_bias(std::size_t layer);
std::string head_weight(std::size_t layer);
std::string head_bias(std::size_t layer);
inline constexpr const char* audio_adapter_weight = "adapter.audio.w";
inline constexpr const char* audio_adapter_bias = "adapter.audio.b";
inline constexpr const char* lyric_adapter_weight = "adapter.lyric.w";
inline constexpr const char* lyric_adapter_bias = "adapter.lyric.b";
}  // namespace param_names

// Embedding tables, the three-layer backbone f and the projection head g.
// Biases are stored as 1 x n matrices so every tensor lives in one store.
class EncoderModel {
 public:
  // Xavier-uniform weights and embeddings, zero biases.
  EncoderModel(EncoderConfig config, RngStream& init_rng);
  // Adopts existing tensors after checking every expected name and shape.
  EncoderModel(EncoderConfig config, ParamStore params);

  const EncoderConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  std::size_t head_layers() const { return config_.proj_hidden_layer ? 2 : 1; }

 private:
  EncoderConfig config_;
  ParamStore params_;
};

void validate_content(const SongContent& content, const EncoderConfig& config);

FeatureStack assemble_input(const SongContent& content, const EncoderModel& model);
std::vector<double> encode(const FeatureStack& stack, const EncoderModel& model);
std::vector<double> project(std::span<const double> rep, const EncoderModel& model);
Matrix encode_batch(std::span<const FeatureStack> stacks, const EncoderModel& model);
Matrix project_batch(const Matrix& reps, const EncoderModel& model);

// Representations for many songs at once (assemble + flatten + backbone).
Matrix encode_contents(std::span<const SongContent> songs, const EncoderModel& model);

// ---------------------------------------------------------------------------
// Differentiable passes used by training.

struct InputTrace {
  std::vector<const SongContent*> songs;
  DenseCache audio_adapter;
  DenseCache lyric_adapter;
};

struct NetTrace {
  std::vector<DenseCache> layers;
};

// N x (k * d) matrix of flattened, unaugmented stacks.
Matrix assemble_flat(std::span<const SongContent* const> songs, const EncoderModel& model,
                     InputTrace* trace);
Matrix backbone_forward(const Matrix& flat, const EncoderModel& model, NetTrace* trace);
Matrix head_forward(const Matrix& reps, const EncoderModel& model, NetTrace* trace);

// Accumulate parameter gradients into grads and return the gradient with
// respect to the layer input (empty when need_input_grad is false).
Matrix backbone_backward(const NetTrace& trace, const Matrix& d_rep, const EncoderModel& model,
                         GradMap& grads, bool need_input_grad = true);
Matrix head_backward(const NetTrace& trace, const Matrix& d_z, const EncoderModel& model,
                     GradMap& grads);
// Scatter d_flat into embedding rows (and adapters). keep, when non-empty,
// is a 0/1 matrix of the same shape: masked coordinates pass no gradient.
void input_backward(const InputTrace& trace, const Matrix& d_flat, const Matrix& keep,
                    const EncoderModel& model, GradMap& grads);

}  // namespace bcl
