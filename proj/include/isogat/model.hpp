#pragma once

// End-to-end pooling model: optional learnable layer weighting, projection,
// cosine attention, K injective aggregation layers and layer fusion, trained
// with an additive-angular-margin softmax head. The same container also hosts
// the classical pooling baselines (projection + fixed pooling + the same head).

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "isogat/aggregation.hpp"
#include "isogat/baselines.hpp"
#include "isogat/binary_io.hpp"
#include "isogat/dataio.hpp"
#include "isogat/graph_attention.hpp"
#include "isogat/numerics.hpp"
#include "isogat/random.hpp"

namespace isogat {

enum class InputMode { kLastLayer, kAllLayers };

inline std::string_view to_string(InputMode mode) {
  return mode == InputMode::kLastLayer ? "last" : "all";
}

inline InputMode parse_input_mode(std::string_view s) {
  if (s == "last") return InputMode::kLastLayer;
  if (s == "all") return InputMode::kAllLayers;
  throw ConfigError("unknown input mode '" + std::string(s) + "' (expected last|all)");
}

/// Additive angular margin softmax head. Class rows are kept at unit norm.
struct AamParams {
  Matrix class_weights;  // C x D
  double scale = 30.0;
  double margin = 0.2;
};

struct ModelConfig {
  InputMode mode = InputMode::kLastLayer;
  std::size_t input_layers = 13;
  std::size_t input_dim = 0;
  std::optional<std::size_t> embed_dim;  // F'; defaults to input_dim
  std::size_t aggregation_layers = 1;    // K
  std::size_t hidden = 1024;
  double epsilon = 0.0;
  Activation activation = Activation::kRelu;
  double beta = 1.0;
  std::size_t classes = 2;
  double scale = 30.0;
  double margin = 0.2;
  std::optional<PoolingKind> baseline;  // unset: graph-attention pooling
  std::uint64_t pool_seed = 0;
  std::uint64_t seed = 0;
};

struct IsoGatModel {
  InputMode mode = InputMode::kLastLayer;
  std::size_t input_layers = 1;
  Vector layer_weights;  // d, all-layers mode only
  ProjectionParams projection;
  AttentionParams attention;
  std::vector<AggLayerParams> layers;
  FusionWeights fusion;
  AamParams aam;
  std::optional<PoolingKind> baseline;
  std::uint64_t pool_seed = 0;

  std::size_t input_dim() const { return projection.w.cols(); }
  std::size_t embed_dim() const { return projection.w.rows(); }
  std::size_t pooled_dim() const {
    return baseline ? isogat::pooled_dim(*baseline, embed_dim()) : embed_dim();
  }
  std::size_t classes() const { return aam.class_weights.rows(); }
};

inline void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) n += m(r, c) * m(r, c);
    n = std::sqrt(n);
    if (n < kZeroNorm) continue;
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) /= n;
  }
}

inline IsoGatModel init_model(const ModelConfig& cfg) {
  if (cfg.input_dim == 0) throw ConfigError("model input dim must be positive");
  if (cfg.classes < 2) throw ConfigError("at least two classes are required");
  if (!cfg.baseline && cfg.aggregation_layers == 0)
    throw ConfigError("at least one aggregation layer (K >= 1) is required");
  if (cfg.mode == InputMode::kAllLayers && cfg.input_layers == 0)
    throw ConfigError("all-layers mode needs at least one input layer");

  Rng rng(cfg.seed, StreamTag::kParamInit);
  IsoGatModel m;
  m.mode = cfg.mode;
  m.input_layers = cfg.input_layers;
  if (cfg.mode == InputMode::kAllLayers)
    m.layer_weights.assign(cfg.input_layers, 1.0 / static_cast<double>(cfg.input_layers));
  const std::size_t embed = cfg.embed_dim.value_or(cfg.input_dim);
  m.projection = ProjectionParams::init(embed, cfg.input_dim, rng);
  m.baseline = cfg.baseline;
  m.pool_seed = cfg.pool_seed;
  if (!cfg.baseline) {
    m.attention.beta = cfg.beta;
    for (std::size_t k = 0; k < cfg.aggregation_layers; ++k) {
      AggLayerParams layer{MlpParams::init(embed, cfg.hidden, rng), cfg.epsilon};
      layer.mlp.activation = cfg.activation;
      m.layers.push_back(std::move(layer));
    }
    m.fusion = FusionWeights::ones(cfg.aggregation_layers);
  }
  m.aam.scale = cfg.scale;
  m.aam.margin = cfg.margin;
  m.aam.class_weights = Matrix(cfg.classes, m.pooled_dim());
  for (double& v : m.aam.class_weights.values()) v = rng.normal();
  normalize_rows(m.aam.class_weights);
  return m;
}

/// Every learnable tensor of a model, in file order. `trainable` is false for
/// the fixed epsilon hyperparameters.
template <class Model>
auto parameter_tensors(Model& model) {
  using Span = std::conditional_t<std::is_const_v<Model>, std::span<const double>,
                                  std::span<double>>;
  struct Ref {
    std::string name;
    Span values;
    std::vector<std::uint64_t> dims;
    bool trainable;
  };
  std::vector<Ref> out;
  auto vec = [&](std::string name, auto& v, bool trainable = true) {
    out.push_back({std::move(name), Span(v), {v.size()}, trainable});
  };
  auto mat = [&](std::string name, auto& m) {
    out.push_back({std::move(name), m.values(), {m.rows(), m.cols()}, true});
  };
  auto scalar = [&](std::string name, auto& x, bool trainable) {
    out.push_back({std::move(name), Span(&x, 1), {}, trainable});
  };
  if (model.mode == InputMode::kAllLayers) vec("layer_weights", model.layer_weights);
  mat("projection.w", model.projection.w);
  vec("projection.o", model.projection.o);
  if (!model.baseline) {
    scalar("attention.beta", model.attention.beta, true);
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
      auto& layer = model.layers[k];
      const std::string p = "agg." + std::to_string(k + 1) + ".";
      scalar(p + "epsilon", layer.epsilon, false);
      mat(p + "mlp.w1", layer.mlp.w1);
      vec(p + "mlp.b1", layer.mlp.b1);
      mat(p + "mlp.w2", layer.mlp.w2);
      vec(p + "mlp.b2", layer.mlp.b2);
    }
    vec("fusion.u", model.fusion.u);
    vec("fusion.v", model.fusion.v);
  }
  mat("aam.class_weights", model.aam.class_weights);
  return out;
}

/// Same structure as `model`, every parameter zero. Used for gradients and
/// optimizer moments.
inline IsoGatModel zeros_like(const IsoGatModel& model) {
  IsoGatModel z = model;
  for (auto& t : parameter_tensors(z))
    for (double& v : t.values) v = 0.0;
  return z;
}

inline Vector flatten_parameters(const IsoGatModel& model) {
  Vector out;
  for (const auto& t : parameter_tensors(model)) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

inline void assign_parameters(IsoGatModel& model, std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto& t : parameter_tensors(model)) {
    if (pos + t.values.size() > flat.size()) throw ShapeError("assign_parameters: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t.values.size(), t.values.begin());
    pos += t.values.size();
  }
  if (pos != flat.size()) throw ShapeError("assign_parameters: vector too long");
}

inline double layer_weight_normalizer(std::span<const double> d) {
  double s = 0.0;
  for (double x : d) s += x;
  return s;
}

/// x_i = (d^T 1)^-1 sum_l d_l r_{i,l}: one weight vector shared by every frame.
inline Matrix combine_layers(const EmbeddingSequence& seq, std::span<const double> d) {
  if (seq.layers != d.size())
    throw ShapeError("combine_layers: sequence has " + std::to_string(seq.layers) +
                     " layers, model expects " + std::to_string(d.size()));
  const double total = layer_weight_normalizer(d);
  if (std::abs(total) < kNormalizerGuard)
    throw DegenerateWeightsError("combine_layers: layer weights sum to zero");
  Matrix x(seq.dim, seq.frames);
  for (std::size_t l = 0; l < seq.layers; ++l) {
    const double w = d[l] / total;
    for (std::size_t i = 0; i < seq.frames; ++i)
      for (std::size_t f = 0; f < seq.dim; ++f) x(f, i) += w * seq.at(l, i, f);
  }
  return x;
}

/// Gradient of <upstream, combine_layers(seq, d)> with respect to d.
inline Vector combine_layers_backward(const EmbeddingSequence& seq, std::span<const double> d,
                                      const Matrix& upstream) {
  const Matrix x = combine_layers(seq, d);
  const double total = layer_weight_normalizer(d);
  Vector g(d.size(), 0.0);
  for (std::size_t l = 0; l < seq.layers; ++l) {
    double s = 0.0;
    for (std::size_t i = 0; i < seq.frames; ++i)
      for (std::size_t f = 0; f < seq.dim; ++f) s += (seq.at(l, i, f) - x(f, i)) * upstream(f, i);
    g[l] = s / total;
  }
  return g;
}

/// Frame matrix fed to the projection for a given model.
inline Matrix model_input(const EmbeddingSequence& seq, const IsoGatModel& model) {
  if (seq.frames == 0) throw DomainError("utterance has no frames");
  if (seq.dim != model.input_dim())
    throw ShapeError("utterance '" + seq.utterance_id + "' has feature dim " +
                     std::to_string(seq.dim) + ", model expects " +
                     std::to_string(model.input_dim()));
  if (model.mode == InputMode::kAllLayers) return combine_layers(seq, model.layer_weights);
  return seq.layer(seq.layers - 1);
}

struct EmbedResult {
  Vector z;
  Matrix x;  // combined input frames, F x N
  AggregationTrace trace;
  Adjacency adjacency;
};

/// Deterministic forward pass. `random_seed` overrides the stored seed of a
/// random-pooling baseline (training draws a fresh frame per crop).
inline EmbedResult embed_utterance(const EmbeddingSequence& seq, const IsoGatModel& model,
                                   std::optional<std::uint64_t> random_seed = std::nullopt) {
  EmbedResult r;
  r.x = model_input(seq, model);
  r.trace.h.push_back(project_vertices(r.x, model.projection));
  const Matrix& h0 = r.trace.h.front();
  if (model.baseline) {
    std::optional<std::uint64_t> seed;
    if (*model.baseline == PoolingKind::kRandom) seed = random_seed.value_or(model.pool_seed);
    r.z = pool_classical(h0, *model.baseline, seed);
    return r;
  }
  r.adjacency = build_adjacency(h0, model.attention);
  for (const auto& layer : model.layers) {
    InjectiveStep step = aggregate_injective(r.trace.h.back(), r.adjacency, layer);
    r.trace.m.push_back(std::move(step.m));
    r.trace.pre.push_back(std::move(step.pre));
    r.trace.h.push_back(std::move(step.h));
  }
  r.z = fuse_layers(r.trace, model.fusion);
  return r;
}

/// Gradient of <dz, z> with respect to every model parameter (head excluded,
/// its entries stay zero).
inline IsoGatModel embed_backward(const EmbeddingSequence& seq, const IsoGatModel& model,
                                  const EmbedResult& fwd, std::span<const double> dz,
                                  std::optional<std::uint64_t> random_seed = std::nullopt) {
  IsoGatModel g = zeros_like(model);
  const Matrix& h0 = fwd.trace.h.front();
  Matrix d_h0;
  if (model.baseline) {
    std::optional<std::uint64_t> seed;
    if (*model.baseline == PoolingKind::kRandom) seed = random_seed.value_or(model.pool_seed);
    d_h0 = pool_classical_backward(h0, *model.baseline, dz, seed);
  } else {
    FusionGrads fg = fuse_layers_backward(fwd.trace, model.fusion, dz);
    g.fusion.u = fg.u;
    g.fusion.v = fg.v;
    Matrix d_adj(h0.cols(), h0.cols());
    for (std::size_t k = model.layers.size(); k-- > 0;) {
      const InjectiveGrads lg =
          aggregate_injective_backward(fwd.trace.h[k], fwd.adjacency, model.layers[k],
                                       fwd.trace.m[k], fwd.trace.pre[k], fg.h[k + 1], fg.m[k]);
      fg.h[k] += lg.h_prev;
      d_adj += lg.adjacency;
      auto& gl = g.layers[k];
      gl.mlp.w1 = lg.mlp.w1;
      gl.mlp.b1 = lg.mlp.b1;
      gl.mlp.w2 = lg.mlp.w2;
      gl.mlp.b2 = lg.mlp.b2;
      gl.epsilon = lg.epsilon;
    }
    const AdjacencyGrads ag = adjacency_gradients(h0, model.attention, d_adj);
    g.attention.beta = ag.beta;
    d_h0 = fg.h[0] + ag.h0;
  }
  const ProjectionGrads pg = project_vertices_backward(fwd.x, model.projection, d_h0);
  g.projection.w = pg.w;
  g.projection.o = pg.o;
  if (model.mode == InputMode::kAllLayers)
    g.layer_weights = combine_layers_backward(seq, model.layer_weights, pg.x);
  return g;
}

struct AamResult {
  double loss = 0.0;
  Vector dz;
  Matrix d_class_weights;
  Vector cosines;
};

/// Target logit s cos(theta_y + m) while theta_y + m <= pi, otherwise the
/// linearized s (cos theta_y - m sin m). Other logits are s cos theta_j.
inline double margin_cosine(double c, double margin, double* derivative = nullptr) {
  c = std::clamp(c, -1.0, 1.0);
  if (c > std::cos(std::numbers::pi - margin)) {
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    if (derivative)
      *derivative = std::cos(margin) + c * std::sin(margin) / std::max(s, kZeroNorm);
    return c * std::cos(margin) - s * std::sin(margin);
  }
  if (derivative) *derivative = 1.0;
  return c - margin * std::sin(margin);
}

inline AamResult aam_softmax_loss(std::span<const double> z, std::size_t label,
                                  const AamParams& p) {
  const Matrix& w = p.class_weights;
  if (label >= w.rows())
    throw DomainError("aam_softmax_loss: label " + std::to_string(label) + " outside " +
                      std::to_string(w.rows()) + " classes");
  if (z.size() != w.cols())
    throw ShapeError("aam_softmax_loss: embedding dim " + std::to_string(z.size()) +
                     " vs class weights " + w.shape());
  const double z_norm = norm2(z);
  if (z_norm < kZeroNorm) throw DomainError("aam_softmax_loss: zero embedding");

  const std::size_t classes = w.rows();
  AamResult r;
  r.cosines.resize(classes);
  Vector w_norm(classes);
  Vector logits(classes);
  double d_target = 1.0;
  for (std::size_t j = 0; j < classes; ++j) {
    std::span<const double> row = w.values().subspan(j * w.cols(), w.cols());
    w_norm[j] = norm2(row);
    r.cosines[j] = cosine_similarity(z, row);
    logits[j] = p.scale * (j == label ? margin_cosine(r.cosines[j], p.margin, &d_target)
                                      : r.cosines[j]);
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - peak);
  r.loss = peak + std::log(total) - logits[label];

  r.dz.assign(z.size(), 0.0);
  r.d_class_weights = Matrix(classes, w.cols());
  for (std::size_t j = 0; j < classes; ++j) {
    const double prob = std::exp(logits[j] - peak) / total;
    double d_cos = p.scale * (prob - (j == label ? 1.0 : 0.0));
    if (j == label) d_cos *= d_target;
    if (d_cos == 0.0 || w_norm[j] < kZeroNorm) continue;
    const double c = r.cosines[j];
    for (std::size_t f = 0; f < z.size(); ++f) {
      const double zh = z[f] / z_norm;
      const double wh = w(j, f) / w_norm[j];
      r.dz[f] += d_cos * (wh - c * zh) / z_norm;
      r.d_class_weights(j, f) = d_cos * (zh - c * wh) / w_norm[j];
    }
  }
  return r;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool learn_epsilon = false;
};

struct AdamState {
  IsoGatModel m;
  IsoGatModel v;
  std::uint64_t step = 0;

  static AdamState for_model(const IsoGatModel& model) {
    return {zeros_like(model), zeros_like(model), 0};
  }
};

/// Rescales weights so their mean is 1 when their sum has collapsed to zero.
inline void guard_normalizer(std::span<double> current, std::span<const double> previous,
                             double total) {
  if (std::abs(total) >= kNormalizerGuard) return;
  std::copy(previous.begin(), previous.end(), current.begin());
  double mean = 0.0;
  for (double x : current) mean += x;
  mean /= static_cast<double>(current.size());
  for (double& x : current) x /= mean;
}

/// One bias-corrected Adam update. AAM class rows that moved are renormalized.
inline void adam_step(IsoGatModel& params, const IsoGatModel& grads, AdamState& state,
                      const AdamConfig& cfg) {
  auto p = parameter_tensors(params);
  auto g = parameter_tensors(grads);
  auto m = parameter_tensors(state.m);
  auto v = parameter_tensors(state.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw ShapeError("adam_step: gradient/state structure differs from parameters");
  const IsoGatModel before = params;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  std::vector<bool> class_row_moved(params.aam.class_weights.rows(), false);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k].values.size() != p[k].values.size())
      throw ShapeError("adam_step: tensor '" + p[k].name + "' has mismatched gradient");
    if (!p[k].trainable && !(cfg.learn_epsilon && p[k].name.ends_with("epsilon"))) continue;
    const bool is_head = p[k].name == "aam.class_weights";
    const std::size_t cols = params.aam.class_weights.cols();
    for (std::size_t i = 0; i < p[k].values.size(); ++i) {
      const double gi = g[k].values[i];
      m[k].values[i] = cfg.beta1 * m[k].values[i] + (1.0 - cfg.beta1) * gi;
      v[k].values[i] = cfg.beta2 * v[k].values[i] + (1.0 - cfg.beta2) * gi * gi;
      const double update = cfg.lr * (m[k].values[i] / c1) /
                            (std::sqrt(v[k].values[i] / c2) + cfg.eps);
      if (update == 0.0) continue;
      p[k].values[i] -= update;
      if (is_head) class_row_moved[i / cols] = true;
    }
  }
  Matrix& cw = params.aam.class_weights;
  for (std::size_t r = 0; r < cw.rows(); ++r) {
    if (!class_row_moved[r]) continue;
    double n = 0.0;
    for (std::size_t c = 0; c < cw.cols(); ++c) n += cw(r, c) * cw(r, c);
    n = std::sqrt(n);
    if (n < kZeroNorm) continue;
    for (std::size_t c = 0; c < cw.cols(); ++c) cw(r, c) /= n;
  }
  if (params.mode == InputMode::kAllLayers)
    guard_normalizer(params.layer_weights, before.layer_weights,
                     layer_weight_normalizer(params.layer_weights));
  if (!params.baseline) {
    if (std::abs(params.fusion.normalizer()) < kNormalizerGuard) {
      params.fusion = before.fusion;
      const double mean = params.fusion.normalizer() /
                          static_cast<double>(params.fusion.u.size() + params.fusion.v.size());
      for (double& x : params.fusion.u) x /= mean;
      for (double& x : params.fusion.v) x /= mean;
    }
  }
}

// Model file: "IGAT" | u32 version=1 | u32 tensor count | tensors, each
// u32 name_len | name | u32 rank | u64 dims[rank] | f64 payload (row-major).
// Configuration values travel as rank-0 "config.*" / "aam.*" tensors.

inline constexpr std::string_view kModelMagic = "IGAT";
inline constexpr std::uint32_t kModelVersion = 1;

struct StoredTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  Vector values;
  std::uint64_t offset = 0;
};

inline std::vector<StoredTensor> model_file_tensors(const IsoGatModel& model) {
  std::vector<StoredTensor> out;
  auto meta = [&](std::string name, double value) { out.push_back({std::move(name), {}, {value}}); };
  meta("config.mode", model.mode == InputMode::kAllLayers ? 1.0 : 0.0);
  meta("config.input_layers", static_cast<double>(model.input_layers));
  meta("config.pooling", model.baseline ? 1.0 + static_cast<double>(*model.baseline) : 0.0);
  meta("config.pool_seed", static_cast<double>(model.pool_seed));
  meta("config.activation",
       !model.layers.empty() && model.layers.front().mlp.activation == Activation::kIdentity ? 1.0
                                                                                             : 0.0);
  meta("aam.scale", model.aam.scale);
  meta("aam.margin", model.aam.margin);
  for (const auto& t : parameter_tensors(model))
    out.push_back({t.name, t.dims, Vector(t.values.begin(), t.values.end())});
  return out;
}

inline ByteWriter encode_model(const IsoGatModel& model) {
  const auto tensors = model_file_tensors(model);
  ByteWriter w;
  w.raw(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.string(t.name);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  return w;
}

inline void save_model(const IsoGatModel& model, const std::string& path) {
  encode_model(model).save(path);
}

inline IsoGatModel decode_model(ByteReader& r) {
  if (r.raw(4, "magic") != kModelMagic) throw FormatError("bad model magic", 0);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kModelVersion)
    throw FormatError("unsupported model version " + std::to_string(version), version_at);
  const std::uint32_t count = r.u32("tensor count");
  std::map<std::string, StoredTensor> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.offset = r.offset();
    t.name = r.string("tensor name");
    const std::uint32_t rank = r.u32("rank of tensor '" + t.name + "'");
    if (rank > 2) throw FormatError("tensor '" + t.name + "' has unsupported rank", t.offset);
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u64("dims of tensor '" + t.name + "'"));
      if (t.dims.back() > (std::uint64_t{1} << 32))
        throw FormatError("tensor '" + t.name + "' has an implausible dimension", t.offset);
      elements *= t.dims.back();
    }
    r.need(elements * 8, "payload of tensor '" + t.name + "'");
    t.values.resize(elements);
    for (double& v : t.values) v = r.f64("payload");
    if (!stored.emplace(t.name, t).second)
      throw FormatError("duplicate tensor '" + t.name + "'", t.offset);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last tensor", r.offset());
  const std::uint64_t end = r.offset();

  auto find = [&](const std::string& name) -> const StoredTensor& {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("model file lacks tensor '" + name + "'", end);
    return it->second;
  };
  auto scalar = [&](const std::string& name) {
    const StoredTensor& t = find(name);
    if (!t.dims.empty()) throw FormatError("tensor '" + name + "' must be a scalar", t.offset);
    return t.values.front();
  };

  // Rebuild the skeleton from the stored dimensions, then fill and validate.
  IsoGatModel m;
  m.mode = scalar("config.mode") == 1.0 ? InputMode::kAllLayers : InputMode::kLastLayer;
  m.input_layers = static_cast<std::size_t>(scalar("config.input_layers"));
  const double pooling = scalar("config.pooling");
  if (pooling < 0.0 || pooling > 8.0 || pooling != std::floor(pooling))
    throw FormatError("invalid pooling code", find("config.pooling").offset);
  if (pooling > 0.0) m.baseline = static_cast<PoolingKind>(static_cast<int>(pooling) - 1);
  m.pool_seed = static_cast<std::uint64_t>(scalar("config.pool_seed"));
  const Activation act =
      scalar("config.activation") == 1.0 ? Activation::kIdentity : Activation::kRelu;
  m.aam.scale = scalar("aam.scale");
  m.aam.margin = scalar("aam.margin");

  const StoredTensor& w = find("projection.w");
  if (w.dims.size() != 2) throw FormatError("projection.w must be a matrix", w.offset);
  const std::size_t embed = w.dims[0];
  const std::size_t input = w.dims[1];
  m.projection = {Matrix(embed, input), Vector(embed)};
  if (m.mode == InputMode::kAllLayers) m.layer_weights.assign(m.input_layers, 0.0);
  if (!m.baseline) {
    std::size_t k = 0;
    while (stored.count("agg." + std::to_string(k + 1) + ".mlp.w1")) ++k;
    if (k == 0) throw FormatError("model file has no aggregation layers", end);
    for (std::size_t i = 0; i < k; ++i) {
      const StoredTensor& w1 = find("agg." + std::to_string(i + 1) + ".mlp.w1");
      if (w1.dims.size() != 2) throw FormatError("MLP weights must be matrices", w1.offset);
      const std::size_t hidden = w1.dims[0];
      MlpParams mlp{Matrix(hidden, embed), Vector(hidden), Matrix(embed, hidden), Vector(embed),
                    act};
      m.layers.push_back({std::move(mlp), 0.0});
    }
    m.fusion = FusionWeights::ones(k);
  }
  const StoredTensor& cw = find("aam.class_weights");
  if (cw.dims.size() != 2) throw FormatError("aam.class_weights must be a matrix", cw.offset);
  m.aam.class_weights = Matrix(cw.dims[0], m.pooled_dim());

  std::size_t expected = 7;
  for (auto& t : parameter_tensors(m)) {
    const StoredTensor& s = find(t.name);
    if (s.dims != t.dims)
      throw FormatError("dimension manifest mismatch for tensor '" + t.name + "'", s.offset);
    std::copy(s.values.begin(), s.values.end(), t.values.begin());
    ++expected;
  }
  if (expected != stored.size()) throw FormatError("model file has unexpected tensors", end);
  return m;
}

inline IsoGatModel load_model(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  return decode_model(r);
}

}  // namespace isogat
