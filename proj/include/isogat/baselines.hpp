#pragma once

// Fixed temporal pooling functionals used as comparison baselines.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "isogat/numerics.hpp"
#include "isogat/random.hpp"

namespace isogat {

enum class PoolingKind { kMean, kMaximum, kRandom, kFirst, kMedian, kMiddle, kLast, kMeanStd };

inline constexpr std::string_view kPoolingNames[] = {"mean",   "maximum", "random", "first",
                                                     "median", "middle",  "last",   "mean_std"};

inline std::string_view to_string(PoolingKind kind) {
  return kPoolingNames[static_cast<int>(kind)];
}

inline PoolingKind parse_pooling_kind(std::string_view name) {
  for (int i = 0; i < 8; ++i)
    if (kPoolingNames[i] == name) return static_cast<PoolingKind>(i);
  throw ConfigError("unknown pooling method '" + std::string(name) + "'");
}

inline std::size_t pooled_dim(PoolingKind kind, std::size_t dim) {
  return kind == PoolingKind::kMeanStd ? 2 * dim : dim;
}

/// Column index for the selection functionals (0-based). `middle` is frame
/// floor(N/2) counted from 1, i.e. index max(floor(N/2), 1) - 1.
inline std::size_t selected_frame(PoolingKind kind, std::size_t frames,
                                  std::optional<std::uint64_t> seed) {
  switch (kind) {
    case PoolingKind::kFirst:
      return 0;
    case PoolingKind::kLast:
      return frames - 1;
    case PoolingKind::kMiddle:
      return std::max<std::size_t>(frames / 2, 1) - 1;
    case PoolingKind::kRandom: {
      if (!seed) throw ConfigError("random pooling requires an explicit seed");
      Rng rng(*seed, StreamTag::kRandomPool);
      return static_cast<std::size_t>(rng.index(frames));
    }
    default:
      throw ConfigError("pooling method '" + std::string(to_string(kind)) +
                        "' does not select a frame");
  }
}

inline bool is_selection(PoolingKind kind) {
  return kind == PoolingKind::kFirst || kind == PoolingKind::kLast ||
         kind == PoolingKind::kMiddle || kind == PoolingKind::kRandom;
}

/// Pools the F x N frame matrix into one vector (2F for mean_std).
inline Vector pool_classical(const Matrix& x, PoolingKind kind,
                             std::optional<std::uint64_t> seed = std::nullopt) {
  if (x.cols() == 0) throw DomainError("pool_classical: no frames");
  if (seed && kind != PoolingKind::kRandom)
    throw ConfigError("a seed is only meaningful for random pooling");
  const std::size_t f = x.rows();
  const std::size_t n = x.cols();
  switch (kind) {
    case PoolingKind::kMean:
      return column_mean(x);
    case PoolingKind::kMaximum: {
      Vector out(f);
      for (std::size_t r = 0; r < f; ++r) {
        out[r] = x(r, 0);
        for (std::size_t c = 1; c < n; ++c) out[r] = std::max(out[r], x(r, c));
      }
      return out;
    }
    case PoolingKind::kMedian:
      return median_columns(x);
    case PoolingKind::kMeanStd: {
      const Vector mean = column_mean(x);
      Vector out(2 * f);
      for (std::size_t r = 0; r < f; ++r) {
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (x(r, c) - mean[r]) * (x(r, c) - mean[r]);
        out[r] = mean[r];
        out[f + r] = std::sqrt(var / static_cast<double>(n));
      }
      return out;
    }
    default:
      return x.col(selected_frame(kind, n, seed));
  }
}

/// Gradient of <upstream, pool_classical(x)> with respect to x. Maximum and
/// median route to the selected frame (lowest index on ties).
inline Matrix pool_classical_backward(const Matrix& x, PoolingKind kind,
                                      std::span<const double> upstream,
                                      std::optional<std::uint64_t> seed = std::nullopt) {
  const std::size_t f = x.rows();
  const std::size_t n = x.cols();
  if (upstream.size() != pooled_dim(kind, f))
    throw ShapeError("pool_classical_backward: upstream length mismatch");
  Matrix out(f, n);
  switch (kind) {
    case PoolingKind::kMean:
      for (std::size_t r = 0; r < f; ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = upstream[r] / static_cast<double>(n);
      break;
    case PoolingKind::kMaximum:
      for (std::size_t r = 0; r < f; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < n; ++c)
          if (x(r, c) > x(r, best)) best = c;
        out(r, best) = upstream[r];
      }
      break;
    case PoolingKind::kMedian: {
      std::vector<MedianPick> picks;
      median_columns(x, &picks);
      for (std::size_t r = 0; r < f; ++r) {
        if (picks[r].lo == picks[r].hi) {
          out(r, picks[r].lo) = upstream[r];
        } else {
          out(r, picks[r].lo) += 0.5 * upstream[r];
          out(r, picks[r].hi) += 0.5 * upstream[r];
        }
      }
      break;
    }
    case PoolingKind::kMeanStd: {
      const Vector pooled = pool_classical(x, kind);
      const double nn = static_cast<double>(n);
      for (std::size_t r = 0; r < f; ++r) {
        const double mean = pooled[r];
        const double sd = pooled[f + r];
        for (std::size_t c = 0; c < n; ++c) {
          out(r, c) = upstream[r] / nn;
          if (sd > 0.0) out(r, c) += upstream[f + r] * (x(r, c) - mean) / (nn * sd);
        }
      }
      break;
    }
    default: {
      const std::size_t c = selected_frame(kind, n, seed);
      for (std::size_t r = 0; r < f; ++r) out(r, c) = upstream[r];
    }
  }
  return out;
}

}  // namespace isogat
