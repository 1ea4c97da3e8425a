#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/nn.hpp"

namespace icr {

// =====================================================================
//  LatentTargetDecoder: y~ = W3 relu(W2 relu(W1 z)), three bias-free
//  affine stages. Output is intentionally NOT normalized; the cosine
//  reconstruction loss normalizes both operands.
// =====================================================================

class LatentTargetDecoder {
 public:
  LatentTargetDecoder() = default;
  LatentTargetDecoder(std::size_t d_joint, std::size_t hidden, std::size_t d_target,
                      SeededRng& rng)
      : l1_(d_joint, hidden, rng, /*with_bias=*/false),
        l2_(hidden, hidden, rng, /*with_bias=*/false),
        l3_(hidden, d_target, rng, /*with_bias=*/false) {}

  Matrix forward(const Matrix& z) {
    return l3_.forward(relu2_.forward(l2_.forward(relu1_.forward(l1_.forward(z)))));
  }

  Matrix backward(const Matrix& gy) {
    return l1_.backward(relu1_.backward(l2_.backward(relu2_.backward(l3_.backward(gy)))));
  }

  void register_params(ParameterStore& ps, const std::string& prefix = "latent_decoder") {
    l1_.register_params(ps, prefix + ".W1");
    l2_.register_params(ps, prefix + ".W2");
    l3_.register_params(ps, prefix + ".W3");
  }

  std::size_t target_dim() const { return l3_.out_dim(); }

 private:
  Linear l1_, l2_, l3_;
  ReLU relu1_, relu2_;
};

// =====================================================================
//  InputTokenDecoder: teacher-forced single-layer GRU over the caption
//  tokens. The caption representation conditions the decoder through
//  the initial hidden state only; step t consumes the ground-truth
//  token t-1 (a dedicated begin-of-sequence embedding at t=1). Word
//  embeddings are trained from scratch and owned by the decoder.
// =====================================================================

class InputTokenDecoder {
 public:
  InputTokenDecoder() = default;
  InputTokenDecoder(std::size_t vocab, std::size_t d_joint, std::size_t d_embed,
                    std::size_t d_dec, SeededRng& rng)
      : embed_(vocab + 1, d_embed, rng),  // +1: BOS
        init_map_(d_joint, d_dec, rng),
        cell_(d_embed, d_dec, rng),
        out_map_(d_dec, vocab, rng),
        vocab_(vocab) {}

  int bos_token() const { return static_cast<int>(vocab_); }

  // Returns per-caption logits, [len x vocab] each. Hidden states of all
  // steps are stacked so the vocab projection runs as one matmul.
  std::vector<Matrix> forward(const Matrix& z, const std::vector<TokenSeq>& teacher) {
    if (teacher.size() != z.rows)
      throw ShapeMismatch("InputTokenDecoder: batch size mismatch");
    cell_.clear_cache();
    h0_ = init_map_.forward(z);
    teacher_cache_ = teacher;

    std::size_t total = 0;
    offsets_.assign(teacher.size(), 0);
    for (std::size_t b = 0; b < teacher.size(); ++b) {
      if (teacher[b].empty()) throw EmptyCaption("InputTokenDecoder: empty teacher sequence");
      offsets_[b] = total;
      total += teacher[b].size();
    }

    Matrix stacked(total, cell_.hidden_dim());
    for (std::size_t b = 0; b < teacher.size(); ++b) {
      const TokenSeq& seq = teacher[b];
      Matrix h(1, cell_.hidden_dim());
      std::copy(h0_.row(b), h0_.row(b) + h0_.cols, h.row(0));
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const int input_tok = t == 0 ? bos_token() : seq[t - 1];
        Matrix x(1, embed_.dim());
        const double* e = embed_.row(input_tok);
        std::copy(e, e + embed_.dim(), x.row(0));
        h = cell_.forward_step(x, h);
        std::copy(h.row(0), h.row(0) + h.cols, stacked.row(offsets_[b] + t));
      }
    }
    Matrix flat = out_map_.forward(stacked);
    std::vector<Matrix> logits;
    logits.reserve(teacher.size());
    for (std::size_t b = 0; b < teacher.size(); ++b) {
      Matrix rows(teacher[b].size(), static_cast<std::size_t>(vocab_));
      std::copy(flat.row(offsets_[b]), flat.row(offsets_[b]) + rows.size(), rows.data.begin());
      logits.push_back(std::move(rows));
    }
    return logits;
  }

  // grad_logits matches the forward output; returns grad w.r.t. z.
  Matrix backward(const std::vector<Matrix>& grad_logits) {
    if (grad_logits.size() != teacher_cache_.size())
      throw NoForwardCache("InputTokenDecoder::backward: batch mismatch with cached forward");
    std::size_t total = 0;
    for (const auto& g : grad_logits) total += g.rows;
    Matrix flat(total, static_cast<std::size_t>(vocab_));
    for (std::size_t b = 0; b < grad_logits.size(); ++b)
      std::copy(grad_logits[b].data.begin(), grad_logits[b].data.end(),
                flat.row(offsets_[b]));
    const Matrix gstacked = out_map_.backward(flat);

    Matrix gh0(h0_.rows, h0_.cols);
    for (std::size_t rb = teacher_cache_.size(); rb-- > 0;) {
      const TokenSeq& seq = teacher_cache_[rb];
      Matrix gh(1, cell_.hidden_dim());
      for (std::size_t t = seq.size(); t-- > 0;) {
        const double* gs = gstacked.row(offsets_[rb] + t);
        for (std::size_t j = 0; j < gh.cols; ++j) gh(0, j) += gs[j];
        auto [gx, gh_prev] = cell_.backward_step(gh);
        const int input_tok = t == 0 ? bos_token() : seq[t - 1];
        embed_.accumulate_grad(input_tok, gx.row(0), 1.0);
        gh = std::move(gh_prev);
      }
      for (std::size_t j = 0; j < gh0.cols; ++j) gh0(rb, j) = gh(0, j);
    }
    return init_map_.backward(gh0);
  }

  void register_params(ParameterStore& ps, const std::string& prefix = "input_decoder") {
    embed_.register_params(ps, prefix + ".embedding");
    init_map_.register_params(ps, prefix + ".init");
    cell_.register_params(ps, prefix + ".gru");
    out_map_.register_params(ps, prefix + ".out");
  }

 private:
  EmbeddingTable embed_;
  Linear init_map_;
  GRUCell cell_;
  Linear out_map_;
  Matrix h0_;
  std::vector<std::size_t> offsets_;  // row offset of each caption in the stacked states
  std::vector<TokenSeq> teacher_cache_;
  std::size_t vocab_ = 0;
};

// =====================================================================
//  TargetGenerator: frozen seeded random projection over the bag of
//  semantic tokens. Stands in for the general-purpose sentence encoder;
//  it never receives gradients and is identical across train and eval.
// =====================================================================

class TargetGenerator {
 public:
  TargetGenerator() = default;
  TargetGenerator(std::size_t d_target, std::size_t semantic_vocab, std::uint64_t seed)
      : seed_(seed) {
    SeededRng rng(seed);
    projection_ = random_gaussian_matrix(d_target, semantic_vocab, rng);
  }

  // y = l2_normalize(T * bag_of_tokens); duplicate tokens count with
  // multiplicity, order never matters.
  RealVector generate(const TokenSeq& semantic_tokens) const {
    if (semantic_tokens.empty()) throw EmptyCaption("TargetGenerator: no semantic tokens");
    RealVector bag(projection_.cols, 0.0);
    for (int tok : semantic_tokens) {
      if (tok < 0 || static_cast<std::size_t>(tok) >= projection_.cols)
        throw TokenOutOfRange("TargetGenerator: token outside semantic vocab");
      bag[static_cast<std::size_t>(tok)] += 1.0;
    }
    RealVector y(projection_.rows, 0.0);
    for (std::size_t i = 0; i < projection_.rows; ++i)
      y[i] = dot(projection_.row(i), bag.data(), bag.size());
    return l2_normalize(y);
  }

  const Matrix& projection() const { return projection_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t target_dim() const { return projection_.rows; }

 private:
  Matrix projection_;
  std::uint64_t seed_ = 0;
};

}  // namespace icr
