#pragma once

// Random instance generators and gradient-check drivers shared by the unit
// tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "isogat/isogat.hpp"

namespace isogat::testing {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline EmbeddingSequence random_sequence(Rng& rng, std::size_t layers, std::size_t frames,
                                         std::size_t dim, std::string id = "utt") {
  EmbeddingSequence seq(std::move(id), layers, frames, dim);
  for (double& v : seq.values) v = rng.normal();
  return seq;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

inline double frobenius_inner(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

/// Smallest distance between a median order statistic and the neighbor that
/// could swap with it, over every row of `states`.
inline double median_margin(const Matrix& states) {
  double margin = INFINITY;
  const std::size_t n = states.cols();
  for (std::size_t r = 0; r < states.rows(); ++r) {
    std::vector<double> row(states.values().begin() + static_cast<std::ptrdiff_t>(r * n),
                            states.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    std::sort(row.begin(), row.end());
    auto gap = [&](std::size_t a, std::size_t b) {
      if (b < n) margin = std::min(margin, row[b] - row[a]);
    };
    if (n % 2 == 1) {
      if (n / 2 >= 1) gap(n / 2 - 1, n / 2);
      gap(n / 2, n / 2 + 1);
    } else {
      if (n / 2 >= 2) gap(n / 2 - 2, n / 2 - 1);
      gap(n / 2, n / 2 + 1);
    }
  }
  return margin;
}

inline double kink_margin(const Matrix& pre) {
  double margin = INFINITY;
  for (double v : pre.values()) margin = std::min(margin, std::abs(v));
  return margin;
}

/// True when a forward pass stays at least `margin` away from ReLU kinks and
/// median ties.
inline bool away_from_kinks(const IsoGatModel& model, const EmbedResult& fwd, double margin) {
  if (model.baseline) return true;
  for (const auto& h : fwd.trace.h)
    if (median_margin(h) < margin) return false;
  for (const auto& m : fwd.trace.m)
    if (median_margin(m) < margin) return false;
  for (std::size_t k = 0; k < fwd.trace.pre.size(); ++k)
    if (model.layers[k].mlp.activation == Activation::kRelu && kink_margin(fwd.trace.pre[k]) < margin)
      return false;
  return true;
}

/// Small random all-layers model with perturbed (non-unit) fusion weights,
/// random beta and epsilon so that every parameter carries gradient.
inline IsoGatModel random_toy_model(Rng& rng, std::size_t layers, std::size_t dim,
                                    std::size_t hidden, std::size_t classes, std::size_t k = 1,
                                    InputMode mode = InputMode::kAllLayers) {
  ModelConfig cfg;
  cfg.mode = mode;
  cfg.input_layers = layers;
  cfg.input_dim = dim;
  cfg.aggregation_layers = k;
  cfg.hidden = hidden;
  cfg.classes = classes;
  cfg.seed = rng.next_u64();
  IsoGatModel m = init_model(cfg);
  for (double& d : m.layer_weights) d = 0.5 + rng.uniform();
  m.attention.beta = rng.uniform(-2.0, 3.0);
  for (auto& l : m.layers) {
    l.epsilon = rng.uniform(-0.5, 0.5);
    for (double& b : l.mlp.b1) b = 0.3 * rng.normal();
    for (double& b : l.mlp.b2) b = 0.3 * rng.normal();
  }
  for (double& u : m.fusion.u) u = 0.5 + rng.uniform();
  for (double& v : m.fusion.v) v = 0.5 + rng.uniform();
  return m;
}

inline double model_loss(const IsoGatModel& model, const EmbeddingSequence& seq,
                         std::size_t label) {
  return aam_softmax_loss(embed_utterance(seq, model).z, label, model.aam).loss;
}

inline IsoGatModel model_loss_grad(const IsoGatModel& model, const EmbeddingSequence& seq,
                                   std::size_t label) {
  return sample_loss_and_grad(seq, label, model, std::nullopt).grads;
}

/// Central-difference check of the full loss gradient, every parameter
/// including epsilon.
inline GradCheckReport check_full_model(const IsoGatModel& model, const EmbeddingSequence& seq,
                                        std::size_t label) {
  const Vector point = flatten_parameters(model);
  const Vector analytic = flatten_parameters(model_loss_grad(model, seq, label));
  IsoGatModel probe = model;
  return finite_difference_check(
      "full model loss",
      [&](std::span<const double> p) {
        assign_parameters(probe, p);
        return model_loss(probe, seq, label);
      },
      analytic, point);
}

struct SuiteResult {
  std::string name;
  std::size_t points = 0;
  std::size_t skipped = 0;
  double max_error = 0.0;
};

inline Vector concat(std::initializer_list<std::span<const double>> parts) {
  Vector out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// Layer weights d: objective <R, combine_layers(seq, d)>.
inline SuiteResult layer_weight_suite(std::size_t points, std::uint64_t seed) {
  SuiteResult res{"layer weights (d)"};
  Rng rng(seed);
  while (res.points < points) {
    const std::size_t layers = 2 + rng.index(4);
    const EmbeddingSequence seq = random_sequence(rng, layers, 3 + rng.index(4), 2 + rng.index(3));
    const Matrix up = random_matrix(rng, seq.dim, seq.frames);
    Vector d(layers);
    for (double& x : d) x = 0.5 + rng.uniform();
    const Vector analytic = combine_layers_backward(seq, d, up);
    const auto rep = finite_difference_check(
        res.name, [&](std::span<const double> p) { return frobenius_inner(up, combine_layers(seq, p)); },
        analytic, d);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// Projection W, o (and the input frames).
inline SuiteResult projection_suite(std::size_t points, std::uint64_t seed) {
  SuiteResult res{"projection (W, o)"};
  Rng rng(seed);
  while (res.points < points) {
    const std::size_t f = 2 + rng.index(4), fo = 2 + rng.index(4), n = 2 + rng.index(5);
    const Matrix x = random_matrix(rng, f, n);
    const ProjectionParams p{random_matrix(rng, fo, f), random_vector(rng, fo)};
    const Matrix up = random_matrix(rng, fo, n);
    const ProjectionGrads g = project_vertices_backward(x, p, up);
    const Vector point = concat({p.w.values(), p.o, x.values()});
    const Vector analytic = concat({g.w.values(), g.o, g.x.values()});
    const auto rep = finite_difference_check(
        res.name,
        [&](std::span<const double> v) {
          ProjectionParams q{Matrix(fo, f), Vector(fo)};
          Matrix xx(f, n);
          std::copy_n(v.begin(), fo * f, q.w.values().begin());
          std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(fo * f), fo, q.o.begin());
          std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(fo * f + fo), f * n,
                      xx.values().begin());
          return frobenius_inner(up, project_vertices(xx, q));
        },
        analytic, point);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// Attention temperature beta (and the layer-0 states).
inline SuiteResult attention_suite(std::size_t points, std::uint64_t seed) {
  SuiteResult res{"attention (beta)"};
  Rng rng(seed);
  while (res.points < points) {
    const std::size_t f = 2 + rng.index(4), n = 2 + rng.index(5);
    const Matrix h0 = random_matrix(rng, f, n);
    const double beta = rng.uniform(-3.0, 3.0);
    const Matrix up = random_matrix(rng, n, n);
    const AdjacencyGrads g = adjacency_gradients(h0, {beta}, up);
    Vector point = concat({h0.values()});
    point.push_back(beta);
    Vector analytic = concat({g.h0.values()});
    analytic.push_back(g.beta);
    const auto rep = finite_difference_check(
        res.name,
        [&](std::span<const double> v) {
          Matrix h(f, n);
          std::copy_n(v.begin(), f * n, h.values().begin());
          return frobenius_inner(up, build_adjacency(h, {v.back()}).a);
        },
        analytic, point);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// Injective aggregation: MLP weights, epsilon, incoming states and adjacency.
inline SuiteResult aggregation_suite(std::size_t points, std::uint64_t seed, double margin = 1e-3) {
  SuiteResult res{"injective aggregation (MLP, epsilon)"};
  Rng rng(seed);
  while (res.points < points) {
    const std::size_t f = 2 + rng.index(3), n = 2 + rng.index(4), hidden = 2 + rng.index(5);
    const Matrix h = random_matrix(rng, f, n);
    const Adjacency adj = build_adjacency(random_matrix(rng, f, n), {rng.uniform(-2.0, 2.0)});
    AggLayerParams p{MlpParams::init(f, hidden, rng), rng.uniform(-1.0, 1.0)};
    for (double& b : p.mlp.b1) b = 0.3 * rng.normal();
    for (double& b : p.mlp.b2) b = 0.3 * rng.normal();
    const InjectiveStep step = aggregate_injective(h, adj, p);
    if (kink_margin(step.pre) < margin) {
      ++res.skipped;
      continue;
    }
    const Matrix up_h = random_matrix(rng, f, n), up_m = random_matrix(rng, f, n);
    const InjectiveGrads g = aggregate_injective_backward(h, adj, p, step.m, step.pre, up_h, up_m);
    Vector point = concat({p.mlp.w1.values(), p.mlp.b1, p.mlp.w2.values(), p.mlp.b2,
                           h.values(), adj.a.values()});
    point.push_back(p.epsilon);
    Vector analytic = concat({g.mlp.w1.values(), g.mlp.b1, g.mlp.w2.values(), g.mlp.b2,
                              g.h_prev.values(), g.adjacency.values()});
    analytic.push_back(g.epsilon);
    const auto rep = finite_difference_check(
        res.name,
        [&](std::span<const double> v) {
          AggLayerParams q = p;
          Matrix hh(f, n);
          Adjacency aa{Matrix(n, n)};
          auto it = v.begin();
          auto take = [&](std::span<double> dst) {
            std::copy_n(it, dst.size(), dst.begin());
            it += static_cast<std::ptrdiff_t>(dst.size());
          };
          take(q.mlp.w1.values());
          take(q.mlp.b1);
          take(q.mlp.w2.values());
          take(q.mlp.b2);
          take(hh.values());
          take(aa.a.values());
          q.epsilon = v.back();
          const InjectiveStep s = aggregate_injective(hh, aa, q);
          return frobenius_inner(up_h, s.h) + frobenius_inner(up_m, s.m);
        },
        analytic, point);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// Fusion weights u, v (and every readout input).
inline SuiteResult fusion_suite(std::size_t points, std::uint64_t seed, double margin = 1e-3) {
  SuiteResult res{"layer fusion (u, v)"};
  Rng rng(seed);
  while (res.points < points) {
    const std::size_t f = 2 + rng.index(3), n = 1 + rng.index(6), k = 1 + rng.index(3);
    AggregationTrace trace;
    for (std::size_t i = 0; i <= k; ++i) trace.h.push_back(random_matrix(rng, f, n));
    for (std::size_t i = 0; i < k; ++i) trace.m.push_back(random_matrix(rng, f, n));
    bool tie = false;
    for (const auto& s : trace.h) tie |= median_margin(s) < margin;
    for (const auto& s : trace.m) tie |= median_margin(s) < margin;
    if (tie) {
      ++res.skipped;
      continue;
    }
    FusionWeights w{Vector(k + 1), Vector(k)};
    for (double& x : w.u) x = 0.2 + rng.uniform();
    for (double& x : w.v) x = 0.2 + rng.uniform();
    const Vector dz = random_vector(rng, f);
    const FusionGrads g = fuse_layers_backward(trace, w, dz);
    Vector point = concat({w.u, w.v});
    Vector analytic = concat({g.u, g.v});
    for (std::size_t i = 0; i <= k; ++i) {
      point = concat({point, trace.h[i].values()});
      analytic = concat({analytic, g.h[i].values()});
    }
    for (std::size_t i = 0; i < k; ++i) {
      point = concat({point, trace.m[i].values()});
      analytic = concat({analytic, g.m[i].values()});
    }
    const auto rep = finite_difference_check(
        res.name,
        [&](std::span<const double> v) {
          FusionWeights ww = w;
          AggregationTrace t = trace;
          auto it = v.begin();
          auto take = [&](std::span<double> dst) {
            std::copy_n(it, dst.size(), dst.begin());
            it += static_cast<std::ptrdiff_t>(dst.size());
          };
          take(ww.u);
          take(ww.v);
          for (auto& s : t.h) take(s.values());
          for (auto& s : t.m) take(s.values());
          return dot(dz, fuse_layers(t, ww));
        },
        analytic, point);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// AAM head: embedding and class weights.
inline SuiteResult aam_suite(std::size_t points, std::uint64_t seed) {
  SuiteResult res{"AAM softmax (z, class weights)"};
  Rng rng(seed);
  while (res.points < points) {
    const std::size_t d = 2 + rng.index(5), c = 2 + rng.index(4);
    AamParams p{random_matrix(rng, c, d), rng.uniform(1.0, 30.0), rng.uniform(0.0, 0.5)};
    const Vector z = random_vector(rng, d);
    const std::size_t label = rng.index(c);
    const AamResult r = aam_softmax_loss(z, label, p);
    // Keep away from the margin switch and from cos = +-1.
    const double cy = r.cosines[label];
    if (std::abs(cy - std::cos(std::numbers::pi - p.margin)) < 1e-3 || std::abs(cy) > 0.999) {
      ++res.skipped;
      continue;
    }
    const Vector point = concat({z, p.class_weights.values()});
    const Vector analytic = concat({r.dz, r.d_class_weights.values()});
    const auto rep = finite_difference_check(
        res.name,
        [&](std::span<const double> v) {
          AamParams q = p;
          std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(d), c * d,
                      q.class_weights.values().begin());
          return aam_softmax_loss(v.first(d), label, q).loss;
        },
        analytic, point);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// Composite loss through every stage on a 3-speaker, 4-frame toy instance.
inline SuiteResult full_model_suite(std::size_t points, std::uint64_t seed, double margin = 1e-3) {
  SuiteResult res{"full model loss (all stages)"};
  Rng rng(seed);
  while (res.points < points) {
    const IsoGatModel model = random_toy_model(rng, 3, 3, 4, 3);
    const EmbeddingSequence seq = random_sequence(rng, 3, 4, 3);
    const std::size_t label = rng.index(3);
    if (!away_from_kinks(model, embed_utterance(seq, model), margin)) {
      ++res.skipped;
      continue;
    }
    const auto rep = check_full_model(model, seq, label);
    res.max_error = std::max(res.max_error, rep.max_relative_error);
    ++res.points;
  }
  return res;
}

/// Theorem-1 style random instance: N in [2, 8], entries in [-5, 5] with the
/// first two distinct and nonzero, beta in [-3, 3].
struct CollisionInstance {
  Vector h_dot;
  double beta;
};

inline CollisionInstance random_collision_instance(Rng& rng) {
  CollisionInstance inst;
  const std::size_t n = 2 + rng.index(7);
  inst.h_dot.resize(n);
  do {
    for (double& v : inst.h_dot) v = rng.uniform(-5.0, 5.0);
  } while (inst.h_dot[0] == 0.0 || inst.h_dot[1] == 0.0 || inst.h_dot[0] == inst.h_dot[1]);
  inst.beta = rng.uniform(-3.0, 3.0);
  return inst;
}

/// Exhaustive EER: FAR/FRR by direct counting at every distinct score.
inline EerResult brute_force_eer(const std::vector<double>& genuine,
                                 const std::vector<double>& impostor) {
  std::vector<double> all = genuine;
  all.insert(all.end(), impostor.begin(), impostor.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<OperatingPoint> points;
  for (double t : all) {
    std::size_t accepted = 0, rejected = 0;
    for (double s : impostor) accepted += s >= t ? 1 : 0;
    for (double s : genuine) rejected += s < t ? 1 : 0;
    points.push_back({t, static_cast<double>(accepted) / static_cast<double>(impostor.size()),
                      static_cast<double>(rejected) / static_cast<double>(genuine.size())});
  }
  EerResult r = eer_from_operating_points(points);
  r.genuine_count = genuine.size();
  r.impostor_count = impostor.size();
  return r;
}

inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("isogat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace isogat::testing
