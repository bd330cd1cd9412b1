#include "bcl/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "bcl/errors.hpp"

namespace bcl {
namespace param_names {
std::string embedding(std::size_t field) { return "emb." + std::to_string(field); }
std::string backbone_weight(std::size_t layer) { return "backbone." + std::to_string(layer) + ".w"; }
std::string backbone_bias(std::size_t layer) { return "backbone." + std::to_string(layer) + ".b"; }
std::string head_weight(std::size_t layer) { return "head." + std::to_string(layer) + ".w"; }
std::string head_bias(std::size_t layer) { return "head." + std::to_string(layer) + ".b"; }
}  // namespace param_names

namespace {

struct LayerShape {
  std::string weight;
  std::string bias;
  std::size_t in;
  std::size_t out;
  Activation act;
};

std::vector<LayerShape> backbone_shapes(const EncoderConfig& c) {
  return {
      {param_names::backbone_weight(0), param_names::backbone_bias(0), c.input_dim(), c.hidden1,
       Activation::relu},
      {param_names::backbone_weight(1), param_names::backbone_bias(1), c.hidden1, c.hidden2,
       Activation::relu},
      {param_names::backbone_weight(2), param_names::backbone_bias(2), c.hidden2, c.rep_dim,
       Activation::identity},
  };
}

std::vector<LayerShape> head_shapes(const EncoderConfig& c) {
  if (!c.proj_hidden_layer) {
    return {{param_names::head_weight(0), param_names::head_bias(0), c.rep_dim, c.proj_dim,
             Activation::identity}};
  }
  return {
      {param_names::head_weight(0), param_names::head_bias(0), c.rep_dim, c.proj_hidden,
       Activation::relu},
      {param_names::head_weight(1), param_names::head_bias(1), c.proj_hidden, c.proj_dim,
       Activation::identity},
  };
}

struct TensorShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  bool bias = false;
};

std::vector<TensorShape> expected_tensors(const EncoderConfig& c) {
  std::vector<TensorShape> out;
  for (std::size_t f = 0; f < c.num_attributes(); ++f)
    out.push_back({param_names::embedding(f), c.vocab_sizes[f], c.feature_dim});
  if (c.has_audio_adapter()) {
    out.push_back({param_names::audio_adapter_weight, c.audio_width(), c.feature_dim});
    out.push_back({param_names::audio_adapter_bias, 1, c.feature_dim, true});
  }
  if (c.has_lyric_adapter()) {
    out.push_back({param_names::lyric_adapter_weight, c.lyric_width(), c.feature_dim});
    out.push_back({param_names::lyric_adapter_bias, 1, c.feature_dim, true});
  }
  for (const auto& l : backbone_shapes(c)) {
    out.push_back({l.weight, l.in, l.out});
    out.push_back({l.bias, 1, l.out, true});
  }
  for (const auto& l : head_shapes(c)) {
    out.push_back({l.weight, l.in, l.out});
    out.push_back({l.bias, 1, l.out, true});
  }
  return out;
}

void add_into(Matrix& dst, const Matrix& src) {
  require_same_shape(dst, src, "gradient accumulation");
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void add_into(Matrix& dst, std::span<const double> src) {
  if (dst.size() != src.size()) throw DimensionError("bias gradient length mismatch");
  auto d = dst.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

Matrix run_layers(const std::vector<LayerShape>& shapes, const Matrix& input,
                  const EncoderModel& model, NetTrace* trace) {
  if (trace != nullptr) trace->layers.assign(shapes.size(), {});
  Matrix x = input;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    x = dense_forward(model.params().at(s.weight), model.params().at(s.bias).values(), x, s.act,
                      trace != nullptr ? &trace->layers[i] : nullptr);
  }
  return x;
}

Matrix back_layers(const std::vector<LayerShape>& shapes, const NetTrace& trace,
                   const Matrix& upstream, const EncoderModel& model, GradMap& grads,
                   bool need_input_grad) {
  if (trace.layers.size() != shapes.size()) {
    throw DimensionError("backward: trace holds " + std::to_string(trace.layers.size()) +
                         " layers, expected " + std::to_string(shapes.size()));
  }
  Matrix g = upstream;
  for (std::size_t i = shapes.size(); i-- > 0;) {
    const auto& s = shapes[i];
    const bool want_input = i > 0 || need_input_grad;
    DenseGrads dg = dense_backward(model.params().at(s.weight), trace.layers[i], g, want_input);
    add_into(grads.at(s.weight), dg.weights);
    add_into(grads.at(s.bias), dg.bias);
    g = std::move(dg.input);
  }
  return g;
}

Matrix gather_rows(std::span<const SongContent* const> songs, bool audio, std::size_t width) {
  Matrix m(songs.size(), width);
  for (std::size_t i = 0; i < songs.size(); ++i) {
    const auto& v = audio ? songs[i]->audio : songs[i]->lyric;
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_sizes.empty()) throw ContractError("encoder config: at least one attribute field");
  for (std::size_t v : vocab_sizes)
    if (v == 0) throw ContractError("encoder config: attribute vocabulary of size 0");
  if (feature_dim == 0 || hidden1 == 0 || hidden2 == 0 || rep_dim == 0 || proj_dim == 0 ||
      (proj_hidden_layer && proj_hidden == 0)) {
    throw ContractError("encoder config: every layer width must be positive");
  }
}

std::vector<std::string> EncoderConfig::feature_names() const {
  std::vector<std::string> names;
  for (std::size_t f = 0; f < num_attributes(); ++f) names.push_back("attr" + std::to_string(f));
  names.emplace_back("audio");
  names.emplace_back("lyric");
  return names;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"vocab_sizes", c.vocab_sizes},   {"feature_dim", c.feature_dim},
                     {"audio_dim", c.audio_dim},       {"lyric_dim", c.lyric_dim},
                     {"hidden1", c.hidden1},           {"hidden2", c.hidden2},
                     {"rep_dim", c.rep_dim},           {"proj_hidden", c.proj_hidden},
                     {"proj_dim", c.proj_dim},         {"proj_hidden_layer", c.proj_hidden_layer}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.vocab_sizes = j.value("vocab_sizes", d.vocab_sizes);
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.audio_dim = j.value("audio_dim", d.audio_dim);
  c.lyric_dim = j.value("lyric_dim", d.lyric_dim);
  c.hidden1 = j.value("hidden1", d.hidden1);
  c.hidden2 = j.value("hidden2", d.hidden2);
  c.rep_dim = j.value("rep_dim", d.rep_dim);
  c.proj_hidden = j.value("proj_hidden", d.proj_hidden);
  c.proj_dim = j.value("proj_dim", d.proj_dim);
  c.proj_hidden_layer = j.value("proj_hidden_layer", d.proj_hidden_layer);
}

EncoderModel::EncoderModel(EncoderConfig config, RngStream& init_rng) : config_(std::move(config)) {
  config_.validate();
  for (const auto& t : expected_tensors(config_)) {
    params_.add(t.name, t.bias ? Matrix(1, t.cols) : xavier_init(t.rows, t.cols, init_rng));
  }
}

EncoderModel::EncoderModel(EncoderConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto expected = expected_tensors(config_);
  for (const auto& t : expected) {
    if (!params_.contains(t.name)) throw LookupError("encoder: missing tensor '" + t.name + "'");
    const Matrix& m = params_.at(t.name);
    if (m.rows() != t.rows || m.cols() != t.cols) {
      throw DimensionError("encoder: tensor '" + t.name + "' has shape " + m.shape_string() +
                           ", expected " + std::to_string(t.rows) + "x" + std::to_string(t.cols));
    }
  }
  if (params_.tensors().size() != expected.size()) {
    throw ContractError("encoder: parameter store holds unexpected tensors");
  }
}

void validate_content(const SongContent& content, const EncoderConfig& config) {
  if (content.attrs.size() != config.num_attributes()) {
    throw DimensionError("song " + std::to_string(content.song_id) + ": " +
                         std::to_string(content.attrs.size()) + " attributes, expected " +
                         std::to_string(config.num_attributes()));
  }
  for (std::size_t f = 0; f < content.attrs.size(); ++f) {
    if (content.attrs[f] >= config.vocab_sizes[f]) {
      throw LookupError("song " + std::to_string(content.song_id) + ": attribute " +
                        std::to_string(f) + " id " + std::to_string(content.attrs[f]) +
                        " outside vocabulary of size " + std::to_string(config.vocab_sizes[f]));
    }
  }
  if (content.audio.size() != config.audio_width() || content.lyric.size() != config.lyric_width()) {
    throw DimensionError("song " + std::to_string(content.song_id) + ": audio/lyric widths " +
                         std::to_string(content.audio.size()) + "/" +
                         std::to_string(content.lyric.size()) + ", expected " +
                         std::to_string(config.audio_width()) + "/" +
                         std::to_string(config.lyric_width()));
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(content.audio) || !finite(content.lyric)) {
    throw ContractError("song " + std::to_string(content.song_id) + ": non-finite content vector");
  }
}

Matrix assemble_flat(std::span<const SongContent* const> songs, const EncoderModel& model,
                     InputTrace* trace) {
  const auto& c = model.config();
  const std::size_t d = c.feature_dim, n_a = c.num_attributes();
  for (const SongContent* s : songs) validate_content(*s, c);

  Matrix flat(songs.size(), c.input_dim());
  for (std::size_t i = 0; i < songs.size(); ++i) {
    auto row = flat.row(i);
    for (std::size_t f = 0; f < n_a; ++f) {
      auto emb = model.params().at(param_names::embedding(f)).row(songs[i]->attrs[f]);
      std::copy(emb.begin(), emb.end(), row.begin() + static_cast<std::ptrdiff_t>(f * d));
    }
  }

  auto place = [&](bool audio, bool adapter, const char* w, const char* b, DenseCache* cache) {
    const std::size_t slot = audio ? n_a : n_a + 1;
    Matrix src = gather_rows(songs, audio, audio ? c.audio_width() : c.lyric_width());
    if (adapter) {
      src = dense_forward(model.params().at(w), model.params().at(b).values(), src,
                          Activation::identity, cache);
    }
    for (std::size_t i = 0; i < songs.size(); ++i) {
      auto s = src.row(i);
      std::copy(s.begin(), s.end(), flat.row(i).begin() + static_cast<std::ptrdiff_t>(slot * d));
    }
  };
  place(true, c.has_audio_adapter(), param_names::audio_adapter_weight,
        param_names::audio_adapter_bias, trace ? &trace->audio_adapter : nullptr);
  place(false, c.has_lyric_adapter(), param_names::lyric_adapter_weight,
        param_names::lyric_adapter_bias, trace ? &trace->lyric_adapter : nullptr);

  if (trace != nullptr) trace->songs.assign(songs.begin(), songs.end());
  return flat;
}

Matrix backbone_forward(const Matrix& flat, const EncoderModel& model, NetTrace* trace) {
  if (flat.cols() != model.config().input_dim()) {
    throw DimensionError("backbone: input width " + std::to_string(flat.cols()) + ", expected " +
                         std::to_string(model.config().input_dim()));
  }
  return run_layers(backbone_shapes(model.config()), flat, model, trace);
}

Matrix head_forward(const Matrix& reps, const EncoderModel& model, NetTrace* trace) {
  if (reps.cols() != model.config().rep_dim) {
    throw DimensionError("projection head: input width " + std::to_string(reps.cols()) +
                         ", expected " + std::to_string(model.config().rep_dim));
  }
  return run_layers(head_shapes(model.config()), reps, model, trace);
}

Matrix backbone_backward(const NetTrace& trace, const Matrix& d_rep, const EncoderModel& model,
                         GradMap& grads, bool need_input_grad) {
  return back_layers(backbone_shapes(model.config()), trace, d_rep, model, grads, need_input_grad);
}

Matrix head_backward(const NetTrace& trace, const Matrix& d_z, const EncoderModel& model,
                     GradMap& grads) {
  return back_layers(head_shapes(model.config()), trace, d_z, model, grads, true);
}

void input_backward(const InputTrace& trace, const Matrix& d_flat, const Matrix& keep,
                    const EncoderModel& model, GradMap& grads) {
  const auto& c = model.config();
  const std::size_t d = c.feature_dim, n_a = c.num_attributes();
  if (d_flat.rows() != trace.songs.size() || d_flat.cols() != c.input_dim()) {
    throw DimensionError("input_backward: gradient " + d_flat.shape_string() + " for " +
                         std::to_string(trace.songs.size()) + " songs");
  }
  if (!keep.empty()) require_same_shape(keep, d_flat, "input_backward keep mask");

  auto gated = [&](std::size_t i, std::size_t col) {
    return keep.empty() ? d_flat(i, col) : d_flat(i, col) * keep(i, col);
  };

  for (std::size_t f = 0; f < n_a; ++f) {
    Matrix& g = grads.at(param_names::embedding(f));
    for (std::size_t i = 0; i < trace.songs.size(); ++i) {
      auto dst = g.row(trace.songs[i]->attrs[f]);
      for (std::size_t t = 0; t < d; ++t) dst[t] += gated(i, f * d + t);
    }
  }

  auto adapter = [&](bool audio, const DenseCache& cache, const char* w, const char* b) {
    const std::size_t slot = audio ? n_a : n_a + 1;
    Matrix up(trace.songs.size(), d);
    for (std::size_t i = 0; i < trace.songs.size(); ++i)
      for (std::size_t t = 0; t < d; ++t) up(i, t) = gated(i, slot * d + t);
    DenseGrads dg = dense_backward(model.params().at(w), cache, up, false);
    add_into(grads.at(w), dg.weights);
    add_into(grads.at(b), dg.bias);
  };
  if (c.has_audio_adapter())
    adapter(true, trace.audio_adapter, param_names::audio_adapter_weight,
            param_names::audio_adapter_bias);
  if (c.has_lyric_adapter())
    adapter(false, trace.lyric_adapter, param_names::lyric_adapter_weight,
            param_names::lyric_adapter_bias);
}

FeatureStack assemble_input(const SongContent& content, const EncoderModel& model) {
  const SongContent* ptr = &content;
  Matrix flat = assemble_flat(std::span<const SongContent* const>(&ptr, 1), model, nullptr);
  const auto& c = model.config();
  return {content.song_id, Matrix(c.num_features(), c.feature_dim,
                                  std::vector<double>(flat.values().begin(), flat.values().end()))};
}

std::vector<double> encode(const FeatureStack& stack, const EncoderModel& model) {
  Matrix r = encode_batch(std::span<const FeatureStack>(&stack, 1), model);
  return {r.values().begin(), r.values().end()};
}

std::vector<double> project(std::span<const double> rep, const EncoderModel& model) {
  if (rep.size() != model.config().rep_dim) {
    throw DimensionError("project: representation length " + std::to_string(rep.size()) +
                         ", expected " + std::to_string(model.config().rep_dim));
  }
  Matrix z = head_forward(Matrix::row_vector(rep), model, nullptr);
  return {z.values().begin(), z.values().end()};
}

Matrix encode_batch(std::span<const FeatureStack> stacks, const EncoderModel& model) {
  if (stacks.empty()) throw ContractError("encode_batch: empty batch");
  const auto& c = model.config();
  Matrix flat(stacks.size(), c.input_dim());
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const Matrix& s = stacks[i].rows;
    if (s.rows() != c.num_features() || s.cols() != c.feature_dim) {
      throw DimensionError("encode: stack " + s.shape_string() + ", expected " +
                           std::to_string(c.num_features()) + "x" + std::to_string(c.feature_dim));
    }
    std::copy(s.values().begin(), s.values().end(), flat.row(i).begin());
  }
  return backbone_forward(flat, model, nullptr);
}

Matrix project_batch(const Matrix& reps, const EncoderModel& model) {
  return head_forward(reps, model, nullptr);
}

Matrix encode_contents(std::span<const SongContent> songs, const EncoderModel& model) {
  if (songs.empty()) throw ContractError("encode_contents: empty batch");
  std::vector<const SongContent*> ptrs;
  ptrs.reserve(songs.size());
  for (const auto& s : songs) ptrs.push_back(&s);
  return backbone_forward(assemble_flat(ptrs, model, nullptr), model, nullptr);
}

}  // namespace bcl
