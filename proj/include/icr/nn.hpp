#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"

namespace icr {

using TokenSeq = std::vector<int>;

// =====================================================================
//  ParameterStore: named registry of trainable matrices + gradient
//  accumulators. Iteration order is sorted by name (std::map), so every
//  consumer (SGD, SWA, checkpointing, grad checks) is deterministic.
// =====================================================================

class ParameterStore {
 public:
  struct Entry {
    Matrix* param = nullptr;
    Matrix* grad = nullptr;
  };

  void add(const std::string& name, Matrix& param, Matrix& grad) {
    if (!param.same_shape(grad))
      throw ShapeMismatch("ParameterStore::add: param/grad shape mismatch for " + name);
    if (params_.count(name)) throw ConfigInvalid("ParameterStore::add: duplicate name " + name);
    params_[name] = Entry{&param, &grad};
  }

  // Non-trainable buffers (e.g. batch-norm running stats). Saved in
  // checkpoints, never touched by the optimizer or grad checks.
  void add_state(const std::string& name, Matrix& buffer) {
    if (state_.count(name)) throw ConfigInvalid("ParameterStore::add_state: duplicate name " + name);
    state_[name] = &buffer;
  }

  void zero_grads() {
    for (auto& [name, e] : params_) e.grad->fill(0.0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : params_) n += e.param->size();
    return n;
  }

  const std::map<std::string, Entry>& params() const { return params_; }
  const std::map<std::string, Matrix*>& state() const { return state_; }

 private:
  std::map<std::string, Entry> params_;
  std::map<std::string, Matrix*> state_;
};

// Weights: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline void init_uniform_fan_in(Matrix& m, std::size_t fan_in, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : m.data) v = rng.uniform(-bound, bound);
}

// Biases: uniform in [0, 1/sqrt(fan_in)). A negative bias on a
// desk-scale layer can leave its ReLU dead for every input in the batch;
// a non-negative one also keeps bias-carrying outputs away from exact
// zero ahead of the unit-sphere normalization.
inline void init_bias(Matrix& m, std::size_t fan_in, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : m.data) v = rng.uniform(0.0, bound);
}

// =====================================================================
//  Layers. Convention: inputs are [batch x in], weights [in x out],
//  forward caches whatever backward needs, backward returns the input
//  gradient and *accumulates* parameter gradients.
// =====================================================================

class Linear {
 public:
  Matrix W, b;
  Matrix gW, gb;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, SeededRng& rng, bool with_bias = true)
      : W(in, out), b(with_bias ? 1 : 0, with_bias ? out : 0),
        gW(in, out), gb(with_bias ? 1 : 0, with_bias ? out : 0),
        has_bias_(with_bias) {
    init_uniform_fan_in(W, in, rng);
    if (with_bias) init_bias(b, in, rng);
  }

  Matrix forward(const Matrix& x) {
    if (x.cols != W.rows)
      throw ShapeMismatch("Linear::forward: input " + shape_str(x) + " vs W " + shape_str(W));
    x_cache_ = x;
    has_cache_ = true;
    Matrix y = matmul(x, W);
    if (has_bias_)
      for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += b(0, j);
    return y;
  }

  Matrix backward(const Matrix& gy) {
    if (!has_cache_) throw NoForwardCache("Linear::backward before forward");
    if (gy.rows != x_cache_.rows || gy.cols != W.cols)
      throw ShapeMismatch("Linear::backward: upstream " + shape_str(gy));
    add_inplace(gW, matmul(transpose(x_cache_), gy));
    if (has_bias_)
      for (std::size_t i = 0; i < gy.rows; ++i)
        for (std::size_t j = 0; j < gy.cols; ++j) gb(0, j) += gy(i, j);
    has_cache_ = false;
    return matmul(gy, transpose(W));
  }

  void register_params(ParameterStore& ps, const std::string& prefix) {
    ps.add(prefix + ".W", W, gW);
    if (has_bias_) ps.add(prefix + ".b", b, gb);
  }

  std::size_t in_dim() const { return W.rows; }
  std::size_t out_dim() const { return W.cols; }

 private:
  Matrix x_cache_;
  bool has_cache_ = false;
  bool has_bias_ = true;
};

class ReLU {
 public:
  Matrix forward(const Matrix& x) {
    mask_ = x;
    has_cache_ = true;
    Matrix y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
  }

  Matrix backward(const Matrix& gy) {
    if (!has_cache_) throw NoForwardCache("ReLU::backward before forward");
    if (!gy.same_shape(mask_)) throw ShapeMismatch("ReLU::backward: upstream shape");
    Matrix gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (mask_.data[i] <= 0.0) gx.data[i] = 0.0;
    has_cache_ = false;
    return gx;
  }

 private:
  Matrix mask_;
  bool has_cache_ = false;
};

// Row-wise x / ||x||. Jacobian applied analytically in backward.
class L2NormalizeRows {
 public:
  Matrix forward(const Matrix& x) {
    y_ = x;
    norms_.assign(x.rows, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double n = l2_norm(x.row(i), x.cols);
      if (n < kZeroNormThreshold) throw ZeroNorm("L2NormalizeRows: zero-norm row");
      norms_[i] = n;
      for (std::size_t j = 0; j < x.cols; ++j) y_(i, j) = x(i, j) / n;
    }
    has_cache_ = true;
    return y_;
  }

  Matrix backward(const Matrix& gy) {
    if (!has_cache_) throw NoForwardCache("L2NormalizeRows::backward before forward");
    if (!gy.same_shape(y_)) throw ShapeMismatch("L2NormalizeRows::backward: upstream shape");
    Matrix gx(gy.rows, gy.cols);
    for (std::size_t i = 0; i < gy.rows; ++i) {
      const double gdoty = dot(gy.row(i), y_.row(i), gy.cols);
      for (std::size_t j = 0; j < gy.cols; ++j)
        gx(i, j) = (gy(i, j) - gdoty * y_(i, j)) / norms_[i];
    }
    has_cache_ = false;
    return gx;
  }

 private:
  Matrix y_;
  std::vector<double> norms_;
  bool has_cache_ = false;
};

// Two feed-forward layers with a ReLU in between; output normalized on
// the unit sphere. The normalization is part of the head's backward.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t in, std::size_t mid, std::size_t out, SeededRng& rng)
      : l1_(in, mid, rng), l2_(mid, out, rng) {}

  Matrix forward(const Matrix& x) {
    return norm_.forward(l2_.forward(relu_.forward(l1_.forward(x))));
  }

  Matrix backward(const Matrix& gy) {
    return l1_.backward(relu_.backward(l2_.backward(norm_.backward(gy))));
  }

  void register_params(ParameterStore& ps, const std::string& prefix) {
    l1_.register_params(ps, prefix + ".fc1");
    l2_.register_params(ps, prefix + ".fc2");
  }

  std::size_t out_dim() const { return l2_.out_dim(); }

 private:
  Linear l1_, l2_;
  ReLU relu_;
  L2NormalizeRows norm_;
};

// =====================================================================
//  Embeddings
// =====================================================================

class EmbeddingTable {
 public:
  Matrix weight, grad;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t vocab, std::size_t dim, SeededRng& rng)
      : weight(vocab, dim), grad(vocab, dim) {
    init_uniform_fan_in(weight, dim, rng);
  }

  const double* row(int token) const {
    check_token(token);
    return weight.row(static_cast<std::size_t>(token));
  }

  void accumulate_grad(int token, const double* g, double scale) {
    check_token(token);
    double* gr = grad.row(static_cast<std::size_t>(token));
    for (std::size_t j = 0; j < weight.cols; ++j) gr[j] += scale * g[j];
  }

  void register_params(ParameterStore& ps, const std::string& prefix) {
    ps.add(prefix + ".weight", weight, grad);
  }

  std::size_t vocab() const { return weight.rows; }
  std::size_t dim() const { return weight.cols; }

 private:
  void check_token(int token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= weight.rows)
      throw TokenOutOfRange("token id " + std::to_string(token) + " outside vocab of " +
                            std::to_string(weight.rows));
  }
};

// Mean of the looked-up embedding rows per sequence.
class EmbeddingMeanPool {
 public:
  EmbeddingMeanPool() = default;
  EmbeddingMeanPool(std::size_t vocab, std::size_t dim, SeededRng& rng) : table_(vocab, dim, rng) {}

  Matrix forward(const std::vector<TokenSeq>& batch) {
    Matrix y(batch.size(), table_.dim());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const TokenSeq& seq = batch[b];
      if (seq.empty()) throw EmptyCaption("EmbeddingMeanPool: empty token sequence");
      for (int tok : seq) {
        const double* e = table_.row(tok);
        for (std::size_t j = 0; j < table_.dim(); ++j) y(b, j) += e[j];
      }
      const double inv = 1.0 / static_cast<double>(seq.size());
      for (std::size_t j = 0; j < table_.dim(); ++j) y(b, j) *= inv;
    }
    tokens_cache_ = batch;
    has_cache_ = true;
    return y;
  }

  void backward(const Matrix& gy) {
    if (!has_cache_) throw NoForwardCache("EmbeddingMeanPool::backward before forward");
    if (gy.rows != tokens_cache_.size() || gy.cols != table_.dim())
      throw ShapeMismatch("EmbeddingMeanPool::backward: upstream shape");
    for (std::size_t b = 0; b < gy.rows; ++b) {
      const double inv = 1.0 / static_cast<double>(tokens_cache_[b].size());
      for (int tok : tokens_cache_[b]) table_.accumulate_grad(tok, gy.row(b), inv);
    }
    has_cache_ = false;
  }

  void register_params(ParameterStore& ps, const std::string& prefix) {
    table_.register_params(ps, prefix);
  }

  EmbeddingTable& table() { return table_; }
  const EmbeddingTable& table() const { return table_; }

 private:
  EmbeddingTable table_;
  std::vector<TokenSeq> tokens_cache_;
  bool has_cache_ = false;
};

// =====================================================================
//  BatchNorm1d. Batch statistics in training, running averages
//  (momentum 0.1, unbiased variance) at evaluation.
// =====================================================================

class BatchNorm1d {
 public:
  Matrix gamma, beta, ggamma, gbeta;
  Matrix running_mean, running_var;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t dim)
      : gamma(1, dim, 1.0), beta(1, dim, 0.0), ggamma(1, dim), gbeta(1, dim),
        running_mean(1, dim, 0.0), running_var(1, dim, 1.0) {}

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  Matrix forward(const Matrix& x) {
    if (x.cols != gamma.cols) throw ShapeMismatch("BatchNorm1d::forward: feature dim");
    const std::size_t B = x.rows, D = x.cols;
    Matrix y(B, D);
    if (training_) {
      if (B < 2) throw BatchTooSmall("BatchNorm1d: training mode needs batch size >= 2");
      mean_.assign(D, 0.0);
      var_.assign(D, 0.0);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) mean_[j] += x(i, j);
      for (double& m : mean_) m /= static_cast<double>(B);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) {
          const double c = x(i, j) - mean_[j];
          var_[j] += c * c;
        }
      for (double& v : var_) v /= static_cast<double>(B);
      invstd_.assign(D, 0.0);
      for (std::size_t j = 0; j < D; ++j) invstd_[j] = 1.0 / std::sqrt(var_[j] + kEps);
      xhat_ = Matrix(B, D);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) {
          xhat_(i, j) = (x(i, j) - mean_[j]) * invstd_[j];
          y(i, j) = gamma(0, j) * xhat_(i, j) + beta(0, j);
        }
      const double unbias = static_cast<double>(B) / static_cast<double>(B - 1);
      for (std::size_t j = 0; j < D; ++j) {
        running_mean(0, j) = (1.0 - kMomentum) * running_mean(0, j) + kMomentum * mean_[j];
        running_var(0, j) = (1.0 - kMomentum) * running_var(0, j) + kMomentum * var_[j] * unbias;
      }
      has_cache_ = true;
    } else {
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) {
          const double inv = 1.0 / std::sqrt(running_var(0, j) + kEps);
          y(i, j) = gamma(0, j) * (x(i, j) - running_mean(0, j)) * inv + beta(0, j);
        }
    }
    return y;
  }

  Matrix backward(const Matrix& gy) {
    if (!training_) throw NoForwardCache("BatchNorm1d::backward only defined in training mode");
    if (!has_cache_) throw NoForwardCache("BatchNorm1d::backward before forward");
    if (gy.rows != xhat_.rows || gy.cols != xhat_.cols)
      throw ShapeMismatch("BatchNorm1d::backward: upstream shape");
    const std::size_t B = gy.rows, D = gy.cols;
    const double invB = 1.0 / static_cast<double>(B);
    Matrix gx(B, D);
    for (std::size_t j = 0; j < D; ++j) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < B; ++i) {
        sum_g += gy(i, j);
        sum_gx += gy(i, j) * xhat_(i, j);
      }
      ggamma(0, j) += sum_gx;
      gbeta(0, j) += sum_g;
      const double g = gamma(0, j), inv = invstd_[j];
      for (std::size_t i = 0; i < B; ++i) {
        // dL/dx = gamma*invstd * (gy - mean(gy) - xhat*mean(gy*xhat))
        gx(i, j) = g * inv * (gy(i, j) - sum_g * invB - xhat_(i, j) * sum_gx * invB);
      }
    }
    has_cache_ = false;
    return gx;
  }

  void register_params(ParameterStore& ps, const std::string& prefix) {
    ps.add(prefix + ".gamma", gamma, ggamma);
    ps.add(prefix + ".beta", beta, gbeta);
    ps.add_state(prefix + ".running_mean", running_mean);
    ps.add_state(prefix + ".running_var", running_var);
  }

 private:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
  std::vector<double> mean_, var_, invstd_;
  Matrix xhat_;
  bool training_ = true;
  bool has_cache_ = false;
};

// =====================================================================
//  GRUCell. Single-step gated recurrence:
//
//    r  = sigmoid(x Wr + h Ur + br)
//    z  = sigmoid(x Wz + h Uz + bz)
//    a  = h Un + bnh
//    n  = tanh(x Wn + bnx + r * a)
//    h' = (1 - z) * n + z * h
//
//  Step caches form a LIFO stack: callers must pop (backward_step) in
//  exact reverse order of the pushes (forward_step).
// =====================================================================

class GRUCell {
 public:
  Matrix Wr, Wz, Wn, Ur, Uz, Un;
  Matrix br, bz, bnx, bnh;
  Matrix gWr, gWz, gWn, gUr, gUz, gUn;
  Matrix gbr, gbz, gbnx, gbnh;

  GRUCell() = default;
  GRUCell(std::size_t in, std::size_t hidden, SeededRng& rng)
      : Wr(in, hidden), Wz(in, hidden), Wn(in, hidden),
        Ur(hidden, hidden), Uz(hidden, hidden), Un(hidden, hidden),
        br(1, hidden), bz(1, hidden), bnx(1, hidden), bnh(1, hidden),
        gWr(in, hidden), gWz(in, hidden), gWn(in, hidden),
        gUr(hidden, hidden), gUz(hidden, hidden), gUn(hidden, hidden),
        gbr(1, hidden), gbz(1, hidden), gbnx(1, hidden), gbnh(1, hidden),
        in_(in), hidden_(hidden) {
    init_uniform_fan_in(Wr, in, rng);
    init_uniform_fan_in(Wz, in, rng);
    init_uniform_fan_in(Wn, in, rng);
    init_uniform_fan_in(Ur, hidden, rng);
    init_uniform_fan_in(Uz, hidden, rng);
    init_uniform_fan_in(Un, hidden, rng);
    init_bias(br, hidden, rng);
    init_bias(bz, hidden, rng);
    init_bias(bnx, hidden, rng);
    init_bias(bnh, hidden, rng);
  }

  Matrix forward_step(const Matrix& x, const Matrix& h_prev) {
    if (x.cols != in_ || h_prev.cols != hidden_ || x.rows != h_prev.rows)
      throw ShapeMismatch("GRUCell::forward_step: x " + shape_str(x) + " h " + shape_str(h_prev));
    Frame f;
    f.x = x;
    f.h_prev = h_prev;
    f.r = gate(x, h_prev, Wr, Ur, br, /*use_tanh=*/false);
    f.z = gate(x, h_prev, Wz, Uz, bz, /*use_tanh=*/false);
    f.a = matmul(h_prev, Un);
    for (std::size_t i = 0; i < f.a.rows; ++i)
      for (std::size_t j = 0; j < f.a.cols; ++j) f.a(i, j) += bnh(0, j);
    Matrix pre = matmul(x, Wn);
    for (std::size_t i = 0; i < pre.rows; ++i)
      for (std::size_t j = 0; j < pre.cols; ++j)
        pre(i, j) += bnx(0, j) + f.r(i, j) * f.a(i, j);
    f.n = pre;
    for (double& v : f.n.data) v = std::tanh(v);
    Matrix h(x.rows, hidden_);
    for (std::size_t i = 0; i < h.rows; ++i)
      for (std::size_t j = 0; j < h.cols; ++j)
        h(i, j) = (1.0 - f.z(i, j)) * f.n(i, j) + f.z(i, j) * h_prev(i, j);
    stack_.push_back(std::move(f));
    return h;
  }

  // Returns {grad wrt x, grad wrt h_prev}; accumulates parameter grads.
  std::pair<Matrix, Matrix> backward_step(const Matrix& gh) {
    if (stack_.empty()) throw NoForwardCache("GRUCell::backward_step with empty cache stack");
    Frame f = std::move(stack_.back());
    stack_.pop_back();
    if (!gh.same_shape(f.n)) throw ShapeMismatch("GRUCell::backward_step: upstream shape");
    const std::size_t B = gh.rows, H = hidden_;

    Matrix dn(B, H), dz(B, H), dh_prev(B, H);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < H; ++j) {
        dn(i, j) = gh(i, j) * (1.0 - f.z(i, j));
        dz(i, j) = gh(i, j) * (f.h_prev(i, j) - f.n(i, j));
        dh_prev(i, j) = gh(i, j) * f.z(i, j);
      }

    Matrix dpre_n(B, H), da(B, H), dr(B, H);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < H; ++j) {
        dpre_n(i, j) = dn(i, j) * (1.0 - f.n(i, j) * f.n(i, j));
        da(i, j) = dpre_n(i, j) * f.r(i, j);
        dr(i, j) = dpre_n(i, j) * f.a(i, j);
      }

    Matrix dpre_r(B, H), dpre_z(B, H);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < H; ++j) {
        dpre_r(i, j) = dr(i, j) * f.r(i, j) * (1.0 - f.r(i, j));
        dpre_z(i, j) = dz(i, j) * f.z(i, j) * (1.0 - f.z(i, j));
      }

    const Matrix xT = transpose(f.x);
    const Matrix hT = transpose(f.h_prev);
    add_inplace(gWn, matmul(xT, dpre_n));
    add_inplace(gUn, matmul(hT, da));
    add_inplace(gWr, matmul(xT, dpre_r));
    add_inplace(gUr, matmul(hT, dpre_r));
    add_inplace(gWz, matmul(xT, dpre_z));
    add_inplace(gUz, matmul(hT, dpre_z));
    accumulate_colsum(gbnx, dpre_n);
    accumulate_colsum(gbnh, da);
    accumulate_colsum(gbr, dpre_r);
    accumulate_colsum(gbz, dpre_z);

    Matrix gx = matmul(dpre_n, transpose(Wn));
    add_inplace(gx, matmul(dpre_r, transpose(Wr)));
    add_inplace(gx, matmul(dpre_z, transpose(Wz)));

    add_inplace(dh_prev, matmul(da, transpose(Un)));
    add_inplace(dh_prev, matmul(dpre_r, transpose(Ur)));
    add_inplace(dh_prev, matmul(dpre_z, transpose(Uz)));
    return {std::move(gx), std::move(dh_prev)};
  }

  void clear_cache() { stack_.clear(); }
  std::size_t cache_depth() const { return stack_.size(); }
  std::size_t in_dim() const { return in_; }
  std::size_t hidden_dim() const { return hidden_; }

  void register_params(ParameterStore& ps, const std::string& prefix) {
    ps.add(prefix + ".Wr", Wr, gWr);
    ps.add(prefix + ".Wz", Wz, gWz);
    ps.add(prefix + ".Wn", Wn, gWn);
    ps.add(prefix + ".Ur", Ur, gUr);
    ps.add(prefix + ".Uz", Uz, gUz);
    ps.add(prefix + ".Un", Un, gUn);
    ps.add(prefix + ".br", br, gbr);
    ps.add(prefix + ".bz", bz, gbz);
    ps.add(prefix + ".bnx", bnx, gbnx);
    ps.add(prefix + ".bnh", bnh, gbnh);
  }

 private:
  struct Frame {
    Matrix x, h_prev, r, z, n, a;
  };

  static Matrix gate(const Matrix& x, const Matrix& h, const Matrix& W, const Matrix& U,
                     const Matrix& bias, bool use_tanh) {
    Matrix g = matmul(x, W);
    add_inplace(g, matmul(h, U));
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) g(i, j) += bias(0, j);
    for (double& v : g.data) v = use_tanh ? std::tanh(v) : 1.0 / (1.0 + std::exp(-v));
    return g;
  }

  static void accumulate_colsum(Matrix& acc, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) acc(0, j) += m(i, j);
  }

  std::vector<Frame> stack_;
  std::size_t in_ = 0, hidden_ = 0;
};

}  // namespace icr
