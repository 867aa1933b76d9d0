#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "daso/errors.hpp"

namespace daso {

/// Flat real-valued model state or gradient.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Bitwise (exact) equality.
  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

enum class QuantFormat { none, bf16, fp16 };

inline std::string_view to_string(QuantFormat fmt) {
  switch (fmt) {
    case QuantFormat::none: return "none";
    case QuantFormat::bf16: return "bf16";
    case QuantFormat::fp16: return "fp16";
  }
  return "none";
}

inline QuantFormat parse_quant_format(std::string_view s) {
  if (s == "none") return QuantFormat::none;
  if (s == "bf16") return QuantFormat::bf16;
  if (s == "fp16") return QuantFormat::fp16;
  throw ConfigError("unknown quantization format '" + std::string(s) + "'");
}

// Bytes per entry on the wire.
inline std::uint64_t wire_bytes_per_entry(QuantFormat fmt) {
  return fmt == QuantFormat::none ? 4 : 2;
}

namespace detail {

inline void require_same_length(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw ShapeError("length mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace detail

/// Elementwise mean, summed sequentially in list order.
inline ParamVector average(std::span<const ParamVector> vectors) {
  if (vectors.empty()) throw ArgumentError("average of an empty list");
  const ParamVector& first = vectors.front();
  ParamVector sum(first.size());
  for (const ParamVector& v : vectors) {
    detail::require_same_length(first, v);
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (double& x : sum) x /= n;
  return sum;
}

/// Merge of a local state with stale states received from the P group members:
///
///   (2 S local + sum_i globals_i) / (2 S + P)
///
/// S is the number of batches that elapsed while the exchange was in flight.
inline ParamVector weighted_stale_average(const ParamVector& local,
                                          std::span<const ParamVector> globals, int S) {
  if (S < 1) throw ArgumentError("weighted_stale_average requires S >= 1");
  if (globals.empty()) throw ArgumentError("weighted_stale_average requires P >= 1");
  for (const ParamVector& g : globals) detail::require_same_length(local, g);

  // Evaluated as local + sum_i (globals_i - local) / (2S + P): algebraically
  // the same, and exact when every input equals local.
  const double denom = 2.0 * S + static_cast<double>(globals.size());
  ParamVector out(local.size());
  for (std::size_t i = 0; i < local.size(); ++i) {
    double dev = 0.0;
    for (const ParamVector& g : globals) dev += g[i] - local[i];
    out[i] = local[i] + dev / denom;
  }
  return out;
}

// a * x + y
inline ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  detail::require_same_length(x, y);
  ParamVector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = a * x[i] + y[i];
  return out;
}

// ---------------------------------------------------------------------------
// 16-bit round trips

inline constexpr double kBf16MaxFinite = 0x1.fep127;  // 0x7f7f
inline constexpr double kFp16MaxFinite = 65504.0;

/// double -> float -> bfloat16 (round to nearest even on the low 16 bits)
/// -> double. Values past the bf16 range saturate to +-max finite.
inline double bf16_roundtrip(double x) {
  const float f = static_cast<float>(x);
  if (std::isinf(f)) return std::copysign(kBf16MaxFinite, x);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t lsb = (bits >> 16) & 1u;
  bits += 0x7fffu + lsb;
  bits &= 0xffff0000u;
  const float rounded = std::bit_cast<float>(bits);
  if (std::isinf(rounded)) return std::copysign(kBf16MaxFinite, x);
  return static_cast<double>(rounded);
}

/// double -> IEEE binary16 (round to nearest even, subnormals kept,
/// overflow saturating to +-65504) -> double.
inline double fp16_roundtrip(double x) {
  if (x == 0.0) return x;
  const double mag = std::fabs(x);
  int exp2 = 0;
  std::frexp(mag, &exp2);  // mag = m * 2^exp2, m in [0.5, 1)
  const int unbiased = std::max(exp2 - 1, -14);
  const double quantum = std::ldexp(1.0, unbiased - 10);
  double rounded = std::nearbyint(mag / quantum) * quantum;
  if (rounded > kFp16MaxFinite) rounded = kFp16MaxFinite;
  return std::copysign(rounded, x);
}

inline ParamVector quantize_roundtrip(const ParamVector& v, QuantFormat fmt) {
  for (double x : v) {
    if (std::isnan(x)) throw ArgumentError("quantize_roundtrip: NaN input");
    if (std::isinf(x)) throw ArgumentError("quantize_roundtrip: infinite input");
  }
  if (fmt == QuantFormat::none) return v;
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = fmt == QuantFormat::bf16 ? bf16_roundtrip(v[i]) : fp16_roundtrip(v[i]);
  }
  return out;
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  detail::require_same_length(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  detail::require_same_length(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace daso
