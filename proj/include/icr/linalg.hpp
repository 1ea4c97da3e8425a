#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "icr/errors.hpp"

namespace icr {

using RealVector = std::vector<double>;

// =====================================================================
//  Matrix: dense row-major f64 storage. The only numerical substrate.
// =====================================================================

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c) throw ShapeMismatch("Matrix::from_rows: value count != rows*cols");
    Matrix m;
    m.rows = r;
    m.cols = c;
    m.data = std::move(values);
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

inline std::string shape_str(const Matrix& m) {
  return "[" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + "]";
}

// C = A * B, ikj loop order so the inner loop streams over rows of B.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeMismatch("matmul: " + shape_str(a) + " * " + shape_str(b));
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

inline void add_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("add_inplace: " + shape_str(a) + " + " + shape_str(b));
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

inline void axpy_inplace(Matrix& a, double alpha, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("axpy_inplace: " + shape_str(a) + " += c*" + shape_str(b));
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += alpha * b.data[i];
}

inline void scale_inplace(Matrix& a, double alpha) {
  for (double& v : a.data) v *= alpha;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool all_finite(const RealVector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// =====================================================================
//  Vector ops
// =====================================================================

inline double dot(const double* u, const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += u[i] * v[i];
  return s;
}

inline double dot(const RealVector& u, const RealVector& v) {
  if (u.size() != v.size()) throw LengthMismatch("dot: length mismatch");
  return dot(u.data(), v.data(), u.size());
}

inline double l2_norm(const double* v, std::size_t n) { return std::sqrt(dot(v, v, n)); }

inline double l2_norm(const RealVector& v) { return l2_norm(v.data(), v.size()); }

constexpr double kZeroNormThreshold = 1e-12;

inline RealVector l2_normalize(const RealVector& v) {
  const double n = l2_norm(v);
  if (n < kZeroNormThreshold) throw ZeroNorm("l2_normalize: norm below 1e-12");
  RealVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline double cosine_similarity(const RealVector& u, const RealVector& v) {
  if (u.size() != v.size()) throw LengthMismatch("cosine_similarity: length mismatch");
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu < kZeroNormThreshold || nv < kZeroNormThreshold)
    throw ZeroNorm("cosine_similarity: zero-norm operand");
  return dot(u, v) / (nu * nv);
}

// Softmax with max-shift; invariant under adding a constant to all logits.
inline RealVector stable_softmax(const RealVector& logits) {
  if (logits.empty()) throw LengthMismatch("stable_softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  RealVector out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

inline double log_sum_exp(const double* v, std::size_t n) {
  const double m = *std::max_element(v, v + n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// =====================================================================
//  SeededRng: counter-based generator (SplitMix64).
//
//  state_{n+1} = state_n + 0x9e3779b97f4a7c15;  output = mix(state_{n+1})
//  where mix is the murmur-style finalizer below. Identical seed and call
//  sequence produce identical streams on every platform. Sub-streams are
//  derived from the *root* seed, never from the current counter.
// =====================================================================

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; consumes two draws, caches the second output.
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Unbiased uniform integer in [0, n) via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw LengthMismatch("SeededRng::next_below: n == 0");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  // Independent sub-stream keyed on the root seed and a stream id.
  SeededRng fork(std::uint64_t stream_id) const {
    return SeededRng(mix64(seed_ ^ mix64(stream_id + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, in draw order.
  std::vector<int> sample_distinct(int n, int k) {
    if (k > n) throw LengthMismatch("sample_distinct: k > n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const std::size_t j = static_cast<std::size_t>(next_below(static_cast<std::uint64_t>(n - i)));
      out.push_back(pool[j]);
      pool[j] = pool[static_cast<std::size_t>(n - 1 - i)];
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

inline Matrix random_gaussian_matrix(std::size_t r, std::size_t c, SeededRng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.next_gaussian();
  return m;
}

inline Matrix random_unit_rows(std::size_t r, std::size_t c, SeededRng& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    RealVector v(c);
    for (double& x : v) x = rng.next_gaussian();
    v = l2_normalize(v);
    std::copy(v.begin(), v.end(), m.row(i));
  }
  return m;
}

}  // namespace icr
