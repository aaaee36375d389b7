#pragma once

// Dense 64-bit matrix arithmetic plus the handful of reductions the pooling
// pipeline is built from. Every function here is pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "isogat/errors.hpp"

namespace isogat {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ShapeError("ragged matrix initializer");
      values_.insert(values_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  /// Builds an F x N matrix whose columns are the given vectors.
  static Matrix from_columns(std::span<const Vector> columns) {
    if (columns.empty()) return {};
    Matrix m(columns.front().size(), columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) m.set_col(j, columns[j]);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Vector col(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_col(std::size_t c, std::span<const double> v) {
    if (v.size() != rows_) throw ShapeError("set_col: column length " + std::to_string(v.size()) +
                                            " != rows " + std::to_string(rows_));
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
  }

  std::string shape() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void require_same_shape(const Matrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw ShapeError(std::string("matrix ") + op + ": " + shape() + " vs " + o.shape());
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: lhs " + a.shape() + " incompatible with rhs " + b.shape());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("hadamard: " + a.shape() + " vs " + b.shape());
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("dot: length " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Adds `v` to every column of `m`.
inline void add_to_columns(Matrix& m, std::span<const double> v) {
  if (v.size() != m.rows()) throw ShapeError("column broadcast: vector length mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += v[r];
}

inline Vector row_sums(const Matrix& m) {
  Vector out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r] += m(r, c);
  return out;
}

inline Vector column_mean(const Matrix& m) {
  Vector out = row_sums(m);
  for (double& v : out) v /= static_cast<double>(m.cols());
  return out;
}

/// Row-wise softmax with per-row max subtraction. The caller folds any
/// temperature into `scores`.
inline Matrix row_softmax_scaled(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    double mx = scores(i, 0);
    for (std::size_t j = 1; j < scores.cols(); ++j) mx = std::max(mx, scores(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      out(i, j) = std::exp(scores(i, j) - mx);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < scores.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

/// Vector-Jacobian product of row_softmax_scaled given its output.
inline Matrix row_softmax_backward(const Matrix& probs, const Matrix& upstream) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) inner += probs(i, j) * upstream(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j)
      out(i, j) = probs(i, j) * (upstream(i, j) - inner);
  }
  return out;
}

inline constexpr double kZeroNorm = 1e-12;

/// Cosine of the angle between u and v; 0 when either vector has (near) zero norm.
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("cosine_similarity: length " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu < kZeroNorm || nv < kZeroNorm) return 0.0;
  return dot(u, v) / (nu * nv);
}

/// Unit-normalized copy of each column; zero-norm columns stay zero.
/// `norms` receives the original column norms.
inline Matrix normalize_columns(const Matrix& h, Vector* norms = nullptr) {
  Matrix out(h.rows(), h.cols());
  if (norms) norms->assign(h.cols(), 0.0);
  for (std::size_t j = 0; j < h.cols(); ++j) {
    double n = 0.0;
    for (std::size_t r = 0; r < h.rows(); ++r) n += h(r, j) * h(r, j);
    n = std::sqrt(n);
    if (norms) (*norms)[j] = n;
    if (n < kZeroNorm) continue;
    for (std::size_t r = 0; r < h.rows(); ++r) out(r, j) = h(r, j) / n;
  }
  return out;
}

/// Pairwise cosine matrix C(i,j) = cos(column i, column j).
inline Matrix cosine_matrix(const Matrix& h) {
  const Matrix unit = normalize_columns(h);
  Matrix c(h.cols(), h.cols());
  for (std::size_t i = 0; i < h.cols(); ++i) {
    for (std::size_t j = i; j < h.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < h.rows(); ++r) s += unit(r, i) * unit(r, j);
      c(i, j) = s;
      c(j, i) = s;
    }
  }
  return c;
}

/// Gradient of sum(upstream .* cosine_matrix(h)) with respect to h.
inline Matrix cosine_matrix_backward(const Matrix& h, const Matrix& upstream) {
  Vector norms;
  const Matrix unit = normalize_columns(h, &norms);
  const Matrix sym = upstream + transpose(upstream);
  const Matrix d_unit = matmul(unit, sym);
  Matrix out(h.rows(), h.cols());
  for (std::size_t j = 0; j < h.cols(); ++j) {
    if (norms[j] < kZeroNorm) continue;
    double radial = 0.0;
    for (std::size_t r = 0; r < h.rows(); ++r) radial += unit(r, j) * d_unit(r, j);
    for (std::size_t r = 0; r < h.rows(); ++r)
      out(r, j) = (d_unit(r, j) - unit(r, j) * radial) / norms[j];
  }
  return out;
}

/// Indices of the order statistics that define a median. For odd counts
/// `lo == hi`. Equal values are ordered by index, lowest first.
struct MedianPick {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline MedianPick median_pick(std::span<const double> values) {
  if (values.empty()) throw DomainError("median of an empty set");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const std::size_t n = values.size();
  if (n % 2 == 1) return {order[n / 2], order[n / 2]};
  return {order[n / 2 - 1], order[n / 2]};
}

inline double median_value(std::span<const double> values, MedianPick pick) {
  if (pick.lo == pick.hi) return values[pick.lo];
  return 0.5 * (values[pick.lo] + values[pick.hi]);
}

/// Per-dimension median of a set of equal-length vectors.
inline Vector elementwise_median(std::span<const Vector> vectors) {
  if (vectors.empty()) throw DomainError("elementwise_median: empty vector list");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors)
    if (v.size() != dim) throw ShapeError("elementwise_median: vectors differ in length");
  Vector out(dim);
  Vector column(vectors.size());
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < vectors.size(); ++i) column[i] = vectors[i][d];
    out[d] = median_value(column, median_pick(column));
  }
  return out;
}

/// Row-wise median over the columns of `m` (columns are set members).
inline Vector median_columns(const Matrix& m, std::vector<MedianPick>* picks = nullptr) {
  if (m.cols() == 0) throw DomainError("median of an empty set");
  Vector out(m.rows());
  if (picks) picks->resize(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::span<const double> row = m.values().subspan(r * m.cols(), m.cols());
    const MedianPick p = median_pick(row);
    out[r] = median_value(row, p);
    if (picks) (*picks)[r] = p;
  }
  return out;
}

inline Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = std::max(0.0, v);
  return out;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct GradCheckReport {
  std::string operation;
  double max_relative_error = 0.0;
  std::size_t probe_count = 0;
  std::size_t worst_index = 0;
};

/// Compares `analytic` with central differences of `f` at `point`, one probe
/// per coordinate. Relative error is |a - n| / max(1, |a|, |n|).
inline GradCheckReport finite_difference_check(
    std::string operation, const std::function<double(std::span<const double>)>& f,
    std::span<const double> analytic, std::span<const double> point, double step = 1e-5) {
  if (analytic.size() != point.size())
    throw ShapeError("finite_difference_check: gradient has " + std::to_string(analytic.size()) +
                     " entries, point has " + std::to_string(point.size()));
  if (!(step > 0.0)) throw DomainError("finite_difference_check: step must be positive");
  GradCheckReport report{std::move(operation), 0.0, point.size(), 0};
  Vector probe(point.begin(), point.end());
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = f(probe);
    probe[i] = point[i] - step;
    const double down = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError(report.operation + ": non-finite objective when probing coordinate " +
                         std::to_string(i));
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    const double err = std::abs(analytic[i] - numeric) / scale;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  return report;
}

}  // namespace isogat
