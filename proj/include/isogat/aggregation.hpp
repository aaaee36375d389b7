#pragma once

// Neighborhood aggregation over the attention graph, the mean+median readout,
// and the learnable fusion of every layer's readouts into one embedding.
//
// Two aggregators are provided. aggregate_plain is the attention-weighted
// mean, which can map different neighbor sets to the same state;
// build_theorem1_pair/verify_collision construct such a collision
// explicitly. aggregate_injective scales the self term by (1 + epsilon) and
// feeds the weighted sum through an MLP, GIN style.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "isogat/graph_attention.hpp"
#include "isogat/numerics.hpp"
#include "isogat/random.hpp"

namespace isogat {

/// Normalizers of learnable weighted averages must stay at least this far from zero.
inline constexpr double kNormalizerGuard = 1e-8;

enum class Activation { kRelu, kIdentity };

/// Two-layer perceptron W2 act(W1 m + b1) + b2 with a linear output layer.
struct MlpParams {
  Matrix w1;  // hidden x F'
  Vector b1;  // hidden
  Matrix w2;  // F' x hidden
  Vector b2;  // F'
  Activation activation = Activation::kRelu;

  std::size_t hidden() const { return w1.rows(); }
  std::size_t dim() const { return w1.cols(); }

  /// Fan-in uniform weights, zero biases.
  static MlpParams init(std::size_t dim, std::size_t hidden, Rng& rng) {
    if (hidden == 0) throw ConfigError("MLP hidden width must be >= 1");
    MlpParams p{Matrix(hidden, dim), Vector(hidden, 0.0), Matrix(dim, hidden), Vector(dim, 0.0)};
    const double b_in = 1.0 / std::sqrt(static_cast<double>(dim));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& v : p.w1.values()) v = rng.uniform(-b_in, b_in);
    for (double& v : p.w2.values()) v = rng.uniform(-b_hid, b_hid);
    return p;
  }

  /// f(m) = m for every m: square identity weights and no nonlinearity.
  static MlpParams identity(std::size_t dim) {
    return {Matrix::identity(dim), Vector(dim, 0.0), Matrix::identity(dim), Vector(dim, 0.0),
            Activation::kIdentity};
  }
};

struct AggLayerParams {
  MlpParams mlp;
  double epsilon = 0.0;
};

/// Fusion weights: u over H^(0..K), v over M^(1..K).
struct FusionWeights {
  Vector u;
  Vector v;

  static FusionWeights ones(std::size_t layers) {
    return {Vector(layers + 1, 1.0), Vector(layers, 1.0)};
  }

  double normalizer() const {
    double s = 0.0;
    for (double x : u) s += x;
    for (double x : v) s += x;
    return s;
  }
};

/// Hidden-state sets H^(0..K) and weighted-sum sets M^(1..K) of one forward
/// pass. `pre` keeps the MLP pre-activations for the backward pass.
struct AggregationTrace {
  std::vector<Matrix> h;
  std::vector<Matrix> m;
  std::vector<Matrix> pre;

  std::size_t layers() const { return m.size(); }
};

inline void check_adjacency_size(const Matrix& states, const Adjacency& adj, const char* op) {
  if (adj.n() != states.cols() || adj.a.cols() != states.cols())
    throw ShapeError(std::string(op) + ": adjacency " + adj.a.shape() + " for " +
                     std::to_string(states.cols()) + " vertices");
}

/// Column i is sum_j a(i,j) h_j, i.e. H A^T.
inline Matrix aggregate_plain(const Matrix& h_prev, const Adjacency& adj) {
  check_adjacency_size(h_prev, adj, "aggregate_plain");
  return matmul(h_prev, transpose(adj.a));
}

inline Matrix weighted_sum(const Matrix& h_prev, const Adjacency& adj, double epsilon) {
  check_adjacency_size(h_prev, adj, "aggregate_injective");
  Matrix m = aggregate_plain(h_prev, adj);
  if (epsilon != 0.0) {
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const double self = epsilon * adj(i, i);
      for (std::size_t r = 0; r < m.rows(); ++r) m(r, i) += self * h_prev(r, i);
    }
  }
  return m;
}

inline Matrix apply_activation(const Matrix& pre, Activation act) {
  return act == Activation::kRelu ? relu(pre) : pre;
}

struct InjectiveStep {
  Matrix h;    // f(M)
  Matrix m;    // weighted sums
  Matrix pre;  // W1 M + b1
};

/// m_i = (1 + eps) a(i,i) h_i + sum_{j != i} a(i,j) h_j, then h_i' = f(m_i).
inline InjectiveStep aggregate_injective(const Matrix& h_prev, const Adjacency& adj,
                                         const AggLayerParams& p) {
  if (p.mlp.dim() != h_prev.rows() || p.mlp.w2.rows() != h_prev.rows())
    throw ShapeError("aggregate_injective: MLP expects dim " + std::to_string(p.mlp.dim()) +
                     ", states have " + std::to_string(h_prev.rows()));
  InjectiveStep step;
  step.m = weighted_sum(h_prev, adj, p.epsilon);
  step.pre = matmul(p.mlp.w1, step.m);
  add_to_columns(step.pre, p.mlp.b1);
  step.h = matmul(p.mlp.w2, apply_activation(step.pre, p.mlp.activation));
  add_to_columns(step.h, p.mlp.b2);
  return step;
}

struct MlpGrads {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

struct InjectiveGrads {
  Matrix h_prev;
  Matrix adjacency;
  MlpGrads mlp;
  double epsilon = 0.0;
};

/// Backward of aggregate_injective. `d_h` flows into f(M); `d_m` is any
/// additional gradient arriving directly at M (from the M readout).
inline InjectiveGrads aggregate_injective_backward(const Matrix& h_prev, const Adjacency& adj,
                                                   const AggLayerParams& p, const Matrix& m,
                                                   const Matrix& pre, const Matrix& d_h,
                                                   const Matrix& d_m) {
  const MlpParams& mlp = p.mlp;
  InjectiveGrads g;
  const Matrix act = apply_activation(pre, mlp.activation);
  g.mlp.w2 = matmul(d_h, transpose(act));
  g.mlp.b2 = row_sums(d_h);
  Matrix d_pre = matmul(transpose(mlp.w2), d_h);
  if (mlp.activation == Activation::kRelu) {
    auto dp = d_pre.values();
    auto pv = pre.values();
    for (std::size_t i = 0; i < dp.size(); ++i)
      if (pv[i] <= 0.0) dp[i] = 0.0;
  }
  g.mlp.w1 = matmul(d_pre, transpose(m));
  g.mlp.b1 = row_sums(d_pre);
  const Matrix dm_total = matmul(transpose(mlp.w1), d_pre) + d_m;

  // M = H A^T + eps * H diag(a_ii)
  g.h_prev = matmul(dm_total, adj.a);
  g.adjacency = matmul(transpose(dm_total), h_prev);
  for (std::size_t i = 0; i < h_prev.cols(); ++i) {
    double self = 0.0;
    for (std::size_t r = 0; r < h_prev.rows(); ++r) self += dm_total(r, i) * h_prev(r, i);
    g.epsilon += adj(i, i) * self;
    g.adjacency(i, i) += p.epsilon * self;
    for (std::size_t r = 0; r < h_prev.rows(); ++r)
      g.h_prev(r, i) += p.epsilon * adj(i, i) * dm_total(r, i);
  }
  return g;
}

/// 1/2 (mean + elementwise median) over the columns.
inline Vector readout(const Matrix& states) {
  if (states.cols() == 0) throw DomainError("readout of an empty state set");
  Vector mean = column_mean(states);
  const Vector med = median_columns(states);
  for (std::size_t r = 0; r < mean.size(); ++r) mean[r] = 0.5 * (mean[r] + med[r]);
  return mean;
}

/// Median gradient goes to the selected order statistic(s) only.
inline Matrix readout_backward(const Matrix& states, std::span<const double> upstream) {
  std::vector<MedianPick> picks;
  median_columns(states, &picks);
  const double n = static_cast<double>(states.cols());
  Matrix out(states.rows(), states.cols());
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (std::size_t c = 0; c < states.cols(); ++c) out(r, c) = 0.5 * upstream[r] / n;
    if (picks[r].lo == picks[r].hi) {
      out(r, picks[r].lo) += 0.5 * upstream[r];
    } else {
      out(r, picks[r].lo) += 0.25 * upstream[r];
      out(r, picks[r].hi) += 0.25 * upstream[r];
    }
  }
  return out;
}

inline void check_fusion_shape(const AggregationTrace& trace, const FusionWeights& w) {
  if (trace.h.size() != trace.m.size() + 1)
    throw ShapeError("fuse_layers: trace has " + std::to_string(trace.h.size()) +
                     " H sets and " + std::to_string(trace.m.size()) + " M sets");
  if (w.u.size() != trace.h.size() || w.v.size() != trace.m.size())
    throw ShapeError("fuse_layers: fusion weights sized for " + std::to_string(w.v.size()) +
                     " layers, trace has " + std::to_string(trace.m.size()));
}

/// z = [sum_k u_k g(H^k) + sum_k v_k g(M^k)] / (sum u + sum v).
inline Vector fuse_layers(const AggregationTrace& trace, const FusionWeights& w) {
  check_fusion_shape(trace, w);
  const double total = w.normalizer();
  if (std::abs(total) < kNormalizerGuard)
    throw DegenerateWeightsError("fuse_layers: fusion weights sum to zero");
  Vector z(trace.h.front().rows(), 0.0);
  auto accumulate = [&](const Matrix& states, double weight) {
    const Vector r = readout(states);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += weight * r[i];
  };
  for (std::size_t k = 0; k < trace.h.size(); ++k) accumulate(trace.h[k], w.u[k]);
  for (std::size_t k = 0; k < trace.m.size(); ++k) accumulate(trace.m[k], w.v[k]);
  for (double& x : z) x /= total;
  return z;
}

struct FusionGrads {
  std::vector<Matrix> h;
  std::vector<Matrix> m;
  Vector u;
  Vector v;
};

inline FusionGrads fuse_layers_backward(const AggregationTrace& trace, const FusionWeights& w,
                                        std::span<const double> dz) {
  check_fusion_shape(trace, w);
  const double total = w.normalizer();
  if (std::abs(total) < kNormalizerGuard)
    throw DegenerateWeightsError("fuse_layers: fusion weights sum to zero");
  const Vector z = fuse_layers(trace, w);
  FusionGrads g;
  g.u.resize(w.u.size());
  g.v.resize(w.v.size());
  auto branch = [&](const Matrix& states, double weight, double& d_weight) {
    const Vector r = readout(states);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += (r[i] - z[i]) * dz[i];
    d_weight = s / total;
    Vector dr(dz.begin(), dz.end());
    for (double& x : dr) x *= weight / total;
    return readout_backward(states, dr);
  };
  for (std::size_t k = 0; k < trace.h.size(); ++k) g.h.push_back(branch(trace.h[k], w.u[k], g.u[k]));
  for (std::size_t k = 0; k < trace.m.size(); ++k) g.m.push_back(branch(trace.m[k], w.v[k], g.v[k]));
  return g;
}

/// Two distinct N-vertex state sets (states are N-dim one-hot-like vectors)
/// whose plain aggregation at vertex 1 both equal `h_dot`.
struct CollisionPair {
  Matrix check;
  Matrix hat;
};

inline CollisionPair build_theorem1_pair(std::span<const double> h_dot, double beta) {
  const std::size_t n = h_dot.size();
  if (n < 2) throw DomainError("collision construction needs N >= 2 vertices");
  if (!std::isfinite(beta)) throw DomainError("collision construction needs a finite beta");
  if (h_dot[0] == h_dot[1])
    throw DomainError("collision construction requires h_dot[0] != h_dot[1]");
  if (h_dot[0] == 0.0) throw DomainError("collision construction requires h_dot[0] != 0");
  if (h_dot[1] == 0.0) throw DomainError("collision construction requires h_dot[1] != 0");

  const double eb = std::exp(beta);
  const double denom = static_cast<double>(n - 1) + eb;
  CollisionPair pair{Matrix(n, n), Matrix(n, n)};
  pair.check(0, 0) = h_dot[0] / eb * denom;
  pair.hat(1, 0) = h_dot[1] / eb * denom;
  pair.hat(0, 1) = h_dot[0] * denom;
  for (std::size_t j = 1; j < n; ++j) pair.check(j, j) = h_dot[j] * denom;
  for (std::size_t j = 2; j < n; ++j) pair.hat(j, j) = h_dot[j] * denom;
  return pair;
}

struct CollisionReport {
  double plain_gap = 0.0;
  double injective_gap = 0.0;
  Vector plain_check;  // plain aggregate of `check` at vertex 1
  Vector plain_hat;
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Runs both aggregators on the pair at vertex 1 (identity MLP for the
/// injective one) and reports the infinity-norm distances.
inline CollisionReport verify_collision(const CollisionPair& pair, double beta, double epsilon) {
  const AttentionParams attn{beta};
  const Adjacency adj_check = build_adjacency(pair.check, attn);
  const Adjacency adj_hat = build_adjacency(pair.hat, attn);
  CollisionReport report;
  report.plain_check = aggregate_plain(pair.check, adj_check).col(0);
  report.plain_hat = aggregate_plain(pair.hat, adj_hat).col(0);
  report.plain_gap = max_abs_diff(report.plain_check, report.plain_hat);

  const AggLayerParams layer{MlpParams::identity(pair.check.rows()), epsilon};
  const Vector inj_check = aggregate_injective(pair.check, adj_check, layer).h.col(0);
  const Vector inj_hat = aggregate_injective(pair.hat, adj_hat, layer).h.col(0);
  report.injective_gap = max_abs_diff(inj_check, inj_hat);
  return report;
}

}  // namespace isogat
