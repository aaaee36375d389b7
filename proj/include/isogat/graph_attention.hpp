#pragma once

// Speaker-space projection of frame embeddings and the cosine-attention
// adjacency over the complete frame graph (self loops included).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "isogat/numerics.hpp"
#include "isogat/random.hpp"

namespace isogat {

/// Affine map x -> W x + o applied to every frame.
struct ProjectionParams {
  Matrix w;  // F' x F
  Vector o;  // F'

  /// Fan-in uniform initialization in +-1/sqrt(F), for both W and o.
  static ProjectionParams init(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
    ProjectionParams p{Matrix(out_dim, in_dim), Vector(out_dim)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : p.w.values()) v = rng.uniform(-bound, bound);
    for (double& v : p.o) v = rng.uniform(-bound, bound);
    return p;
  }
};

struct AttentionParams {
  double beta = 1.0;
};

/// Row-stochastic N x N attention matrix.
struct Adjacency {
  Matrix a;

  std::size_t n() const { return a.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return a(i, j); }
};

/// Column i of the result is W x_i + o (the layer-0 hidden states).
inline Matrix project_vertices(const Matrix& x, const ProjectionParams& p) {
  if (x.rows() != p.w.cols())
    throw ShapeError("project_vertices: frames have dim " + std::to_string(x.rows()) +
                     " but W is " + p.w.shape());
  if (p.o.size() != p.w.rows()) throw ShapeError("project_vertices: offset length != W rows");
  Matrix h = matmul(p.w, x);
  add_to_columns(h, p.o);
  return h;
}

struct ProjectionGrads {
  Matrix w;
  Vector o;
  Matrix x;
};

inline ProjectionGrads project_vertices_backward(const Matrix& x, const ProjectionParams& p,
                                                 const Matrix& upstream) {
  return {matmul(upstream, transpose(x)), row_sums(upstream), matmul(transpose(p.w), upstream)};
}

/// a(i,j) = exp(beta cos(h_i, h_j)) / sum_l exp(beta cos(h_i, h_l)).
inline Adjacency build_adjacency(const Matrix& h0, const AttentionParams& attn) {
  if (h0.cols() == 0) throw DomainError("build_adjacency: no vertices");
  return {row_softmax_scaled(cosine_matrix(h0) * attn.beta)};
}

struct AdjacencyGrads {
  Matrix h0;
  double beta = 0.0;
};

/// Backward pass of build_adjacency for upstream dL/dA.
inline AdjacencyGrads adjacency_gradients(const Matrix& h0, const AttentionParams& attn,
                                          const Matrix& upstream) {
  if (upstream.rows() != h0.cols() || upstream.cols() != h0.cols())
    throw ShapeError("adjacency_gradients: upstream " + upstream.shape() + " for " +
                     std::to_string(h0.cols()) + " vertices");
  const Matrix cos = cosine_matrix(h0);
  const Matrix probs = row_softmax_scaled(cos * attn.beta);
  const Matrix d_scores = row_softmax_backward(probs, upstream);
  AdjacencyGrads g;
  for (std::size_t i = 0; i < cos.size(); ++i) g.beta += d_scores.values()[i] * cos.values()[i];
  g.h0 = cosine_matrix_backward(h0, d_scores * attn.beta);
  return g;
}

/// CSV export: first line N, then N rows of N comma-separated values.
inline void write_adjacency_csv(const Adjacency& adj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.precision(17);
  out << adj.n() << '\n';
  for (std::size_t i = 0; i < adj.n(); ++i) {
    for (std::size_t j = 0; j < adj.n(); ++j) {
      if (j) out << ',';
      out << adj(i, j);
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

/// Binary 8-bit PGM heatmap, brightness round(255 a / max a).
inline void write_adjacency_pgm(const Adjacency& adj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  double peak = 0.0;
  for (double v : adj.a.values()) peak = std::max(peak, v);
  out << "P5\n" << adj.n() << ' ' << adj.n() << "\n255\n";
  for (double v : adj.a.values()) {
    const auto pixel = static_cast<std::uint8_t>(peak > 0.0 ? std::lround(255.0 * v / peak) : 0);
    out.put(static_cast<char>(pixel));
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace isogat
