#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/nn.hpp"

namespace icr {

// =====================================================================
//  Scalar objectives. All losses are pure functions of their inputs and
//  return analytic gradients w.r.t. those inputs. Reductions run in
//  index order so results are bitwise reproducible.
// =====================================================================

struct SimilarityBatch {
  const Matrix* queries = nullptr;
  const Matrix* candidates = nullptr;
  std::vector<int> positive_index;  // per query, index into candidates
  double tau = 0.05;
};

inline SimilarityBatch aligned_batch(const Matrix& queries, const Matrix& candidates, double tau) {
  SimilarityBatch b;
  b.queries = &queries;
  b.candidates = &candidates;
  b.positive_index.resize(queries.rows);
  std::iota(b.positive_index.begin(), b.positive_index.end(), 0);
  b.tau = tau;
  return b;
}

constexpr double kUnitNormTolerance = 1e-6;

inline void check_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double n = l2_norm(m.row(i), m.cols);
    if (std::abs(n - 1.0) > kUnitNormTolerance)
      throw NonUnitNorm(std::string(what) + ": row " + std::to_string(i) +
                        " deviates from unit norm by " + std::to_string(std::abs(n - 1.0)));
  }
}

inline void validate_similarity_batch(const SimilarityBatch& b) {
  const Matrix& q = *b.queries;
  const Matrix& c = *b.candidates;
  if (q.rows < 1) throw BatchTooSmall("SimilarityBatch: no queries");
  if (q.cols != c.cols) throw ShapeMismatch("SimilarityBatch: query/candidate dims differ");
  if (b.positive_index.size() != q.rows)
    throw ShapeMismatch("SimilarityBatch: positive index count != query count");
  for (int p : b.positive_index)
    if (p < 0 || static_cast<std::size_t>(p) >= c.rows)
      throw ShapeMismatch("SimilarityBatch: positive index out of range");
  if (b.tau <= 0.0) throw ConfigInvalid("SimilarityBatch: temperature must be positive");
  check_unit_rows(q, "SimilarityBatch queries");
  check_unit_rows(c, "SimilarityBatch candidates");
}

struct LossOutput {
  double value = 0.0;
  Matrix grad_queries;
  Matrix grad_candidates;
};

namespace detail {

// One InfoNCE direction; softmax runs over *all* candidates (positive
// included), loss is the mean over queries.
inline LossOutput infonce_one_direction(const SimilarityBatch& b) {
  const Matrix& q = *b.queries;
  const Matrix& c = *b.candidates;
  const std::size_t B = q.rows, N = c.rows, D = q.cols;
  const double inv_tau = 1.0 / b.tau;
  const double inv_B = 1.0 / static_cast<double>(B);

  LossOutput out;
  out.grad_queries = Matrix(B, D);
  out.grad_candidates = Matrix(N, D);

  std::vector<double> logits(N), probs(N);
  for (std::size_t i = 0; i < B; ++i) {
    const double* qi = q.row(i);
    for (std::size_t j = 0; j < N; ++j) logits[j] = dot(qi, c.row(j), D) * inv_tau;
    const double lse = log_sum_exp(logits.data(), N);
    const std::size_t pos = static_cast<std::size_t>(b.positive_index[i]);
    out.value += (lse - logits[pos]) * inv_B;
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      probs[j] = std::exp(logits[j] - m);
      z += probs[j];
    }
    for (std::size_t j = 0; j < N; ++j) probs[j] /= z;

    double* gq = out.grad_queries.row(i);
    for (std::size_t j = 0; j < N; ++j) {
      const double w = (probs[j] - (j == pos ? 1.0 : 0.0)) * inv_tau * inv_B;
      if (w == 0.0) continue;
      const double* cj = c.row(j);
      double* gc = out.grad_candidates.row(j);
      for (std::size_t d = 0; d < D; ++d) {
        gq[d] += w * cj[d];
        gc[d] += w * qi[d];
      }
    }
  }
  return out;
}

inline std::vector<int> invert_permutation(const std::vector<int>& p) {
  std::vector<int> inv(p.size(), -1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(p[i]);
    if (j >= p.size() || inv[j] != -1)
      throw ShapeMismatch("bidirectional loss requires positive_index to be a permutation");
    inv[j] = static_cast<int>(i);
  }
  return inv;
}

}  // namespace detail

// InfoNCE over in-batch candidates. With `bidirectional` the result is
// the mean of the query->candidate and candidate->query directions.
inline LossOutput infonce(const SimilarityBatch& b, bool bidirectional = false) {
  validate_similarity_batch(b);
  LossOutput fwd = detail::infonce_one_direction(b);
  if (!bidirectional) return fwd;

  SimilarityBatch rev;
  rev.queries = b.candidates;
  rev.candidates = b.queries;
  rev.positive_index = detail::invert_permutation(b.positive_index);
  rev.tau = b.tau;
  LossOutput bwd = detail::infonce_one_direction(rev);

  LossOutput out;
  out.value = 0.5 * (fwd.value + bwd.value);
  out.grad_queries = fwd.grad_queries;
  scale_inplace(out.grad_queries, 0.5);
  axpy_inplace(out.grad_queries, 0.5, bwd.grad_candidates);
  out.grad_candidates = fwd.grad_candidates;
  scale_inplace(out.grad_candidates, 0.5);
  axpy_inplace(out.grad_candidates, 0.5, bwd.grad_queries);
  return out;
}

// Closed-form InfoNCE gradients, assembled term by term:
//
//   dL/dq  = -[(1 - Z(q,v+)) v+ / tau - sum_neg Z(q,v-) v- / tau]
//   dL/dv+ = -(1 - Z(q,v+)) q / tau
//   dL/dv- = +Z(q,v-) q / tau
//
// scaled by 1/B to match the mean reduction of infonce(). The printed
// source equations carry the opposite sign (they are derivatives of the
// negated loss); this form is the one that agrees with finite
// differences on the loss as defined. Used as a test oracle against the
// backprop path.
struct ClosedFormGrads {
  Matrix grad_queries;
  Matrix grad_candidates;
};

inline ClosedFormGrads infonce_grad_closed_form(const SimilarityBatch& b) {
  validate_similarity_batch(b);
  const Matrix& q = *b.queries;
  const Matrix& c = *b.candidates;
  const std::size_t B = q.rows, N = c.rows, D = q.cols;
  const double inv_tau = 1.0 / b.tau;
  const double inv_B = 1.0 / static_cast<double>(B);

  ClosedFormGrads out;
  out.grad_queries = Matrix(B, D);
  out.grad_candidates = Matrix(N, D);

  std::vector<double> logits(N), z(N);
  for (std::size_t i = 0; i < B; ++i) {
    const double* qi = q.row(i);
    for (std::size_t j = 0; j < N; ++j) logits[j] = dot(qi, c.row(j), D) * inv_tau;
    const double m = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      z[j] = std::exp(logits[j] - m);
      denom += z[j];
    }
    for (std::size_t j = 0; j < N; ++j) z[j] /= denom;

    const std::size_t pos = static_cast<std::size_t>(b.positive_index[i]);
    double* gq = out.grad_queries.row(i);
    const double* vpos = c.row(pos);
    const double wpos = (1.0 - z[pos]) * inv_tau * inv_B;
    for (std::size_t d = 0; d < D; ++d) gq[d] -= wpos * vpos[d];
    double* gpos = out.grad_candidates.row(pos);
    for (std::size_t d = 0; d < D; ++d) gpos[d] -= wpos * qi[d];
    for (std::size_t j = 0; j < N; ++j) {
      if (j == pos) continue;
      const double wneg = z[j] * inv_tau * inv_B;
      const double* vj = c.row(j);
      double* gj = out.grad_candidates.row(j);
      for (std::size_t d = 0; d < D; ++d) {
        gq[d] += wneg * vj[d];
        gj[d] += wneg * qi[d];
      }
    }
  }
  return out;
}

// Triplet loss with in-batch hard-negative mining: per query the hinge
// against the single hardest negative (first index wins ties), summed
// over both retrieval directions, mean over the batch.
inline LossOutput triplet_hardest(const SimilarityBatch& b, double margin) {
  validate_similarity_batch(b);
  const Matrix& q = *b.queries;
  const Matrix& c = *b.candidates;
  if (q.rows < 2 || c.rows < 2)
    throw BatchTooSmall("triplet_hardest: a negative candidate must exist (B >= 2)");

  const std::size_t B = q.rows, D = q.cols;
  const double inv_B = 1.0 / static_cast<double>(B);
  const std::vector<int> inv = detail::invert_permutation(b.positive_index);

  LossOutput out;
  out.grad_queries = Matrix(q.rows, D);
  out.grad_candidates = Matrix(c.rows, D);

  auto one_direction = [&](const Matrix& qs, const Matrix& cs, const std::vector<int>& pos_of,
                           Matrix& gq, Matrix& gc) {
    std::vector<double> sims(cs.rows);
    for (std::size_t i = 0; i < qs.rows; ++i) {
      const double* qi = qs.row(i);
      for (std::size_t j = 0; j < cs.rows; ++j) sims[j] = dot(qi, cs.row(j), D);
      const std::size_t pos = static_cast<std::size_t>(pos_of[i]);
      std::size_t hardest = pos == 0 ? 1 : 0;
      for (std::size_t j = 0; j < cs.rows; ++j) {
        if (j == pos) continue;
        if (sims[j] > sims[hardest]) hardest = j;
      }
      const double hinge = margin + sims[hardest] - sims[pos];
      if (hinge <= 0.0) continue;
      out.value += hinge * inv_B;
      double* g = gq.row(i);
      const double* vh = cs.row(hardest);
      const double* vp = cs.row(pos);
      double* gh = gc.row(hardest);
      double* gp = gc.row(pos);
      for (std::size_t d = 0; d < D; ++d) {
        g[d] += (vh[d] - vp[d]) * inv_B;
        gh[d] += qi[d] * inv_B;
        gp[d] -= qi[d] * inv_B;
      }
    }
  };

  one_direction(q, c, b.positive_index, out.grad_queries, out.grad_candidates);
  one_direction(c, q, inv, out.grad_candidates, out.grad_queries);
  return out;
}

// Mean over rows of (1 - cos(pred, target)); value in [0, 2]. Both sides
// are normalized inside the loss, gradient flows to pred only.
inline LossOutput cosine_reconstruction(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target))
    throw ShapeMismatch("cosine_reconstruction: " + shape_str(pred) + " vs " + shape_str(target));
  const std::size_t B = pred.rows, D = pred.cols;
  const double inv_B = 1.0 / static_cast<double>(B);

  LossOutput out;
  out.grad_queries = Matrix(B, D);
  for (std::size_t i = 0; i < B; ++i) {
    const double* p = pred.row(i);
    const double* t = target.row(i);
    const double np = l2_norm(p, D);
    const double nt = l2_norm(t, D);
    if (np < kZeroNormThreshold || nt < kZeroNormThreshold)
      throw ZeroNorm("cosine_reconstruction: zero-norm row " + std::to_string(i));
    const double cos = dot(p, t, D) / (np * nt);
    out.value += (1.0 - cos) * inv_B;
    double* g = out.grad_queries.row(i);
    for (std::size_t d = 0; d < D; ++d)
      g[d] = -((t[d] / nt) - cos * (p[d] / np)) / np * inv_B;
  }
  return out;
}

// Negative log-likelihood of teacher-forced token predictions. Sum over
// positions within a caption, mean over the captions of the batch.
struct SeqLossOutput {
  double value = 0.0;
  std::vector<Matrix> grad_logits;  // one [len x vocab] matrix per caption
};

inline SeqLossOutput token_nll(const std::vector<Matrix>& logits,
                               const std::vector<TokenSeq>& targets) {
  if (logits.size() != targets.size())
    throw LengthMismatch("token_nll: batch size mismatch");
  const std::size_t B = logits.size();
  const double inv_B = 1.0 / static_cast<double>(B);

  SeqLossOutput out;
  out.grad_logits.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    const Matrix& l = logits[b];
    const TokenSeq& tgt = targets[b];
    if (l.rows != tgt.size())
      throw LengthMismatch("token_nll: caption " + std::to_string(b) +
                           " has " + std::to_string(l.rows) + " logit rows for " +
                           std::to_string(tgt.size()) + " targets");
    Matrix grad(l.rows, l.cols);
    for (std::size_t t = 0; t < l.rows; ++t) {
      const double* row = l.row(t);
      const int target = tgt[t];
      if (target < 0 || static_cast<std::size_t>(target) >= l.cols)
        throw TokenOutOfRange("token_nll: target token outside vocab");
      const double lse = log_sum_exp(row, l.cols);
      out.value += (lse - row[static_cast<std::size_t>(target)]) * inv_B;
      const double m = *std::max_element(row, row + l.cols);
      double z = 0.0;
      for (std::size_t j = 0; j < l.cols; ++j) z += std::exp(row[j] - m);
      for (std::size_t j = 0; j < l.cols; ++j) {
        double p = std::exp(row[j] - m) / z;
        grad(t, j) = (p - (static_cast<std::size_t>(target) == j ? 1.0 : 0.0)) * inv_B;
      }
    }
    out.grad_logits.push_back(std::move(grad));
  }
  return out;
}

// L_dual = L_con + beta * L_rec. Gradient weights: 1 on the contrastive
// path, beta on the reconstruction path.
inline double dual_objective(double l_con, double l_rec, double beta) {
  return l_con + beta * l_rec;
}

}  // namespace icr
