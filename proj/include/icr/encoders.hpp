#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/nn.hpp"

namespace icr {

// =====================================================================
//  The two encoders mapping each modality onto the shared unit sphere.
//  Optionally a BatchNorm1d sits after the projection head (triplet-loss
//  setup); its output is re-normalized so the unit-norm contract holds.
// =====================================================================

class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(std::size_t d_img, std::size_t hidden, std::size_t d_joint, SeededRng& rng,
               bool with_batchnorm = false)
      : backbone_(d_img, hidden, rng), head_(hidden, hidden, d_joint, rng), d_img_(d_img) {
    if (with_batchnorm) bn_.emplace(d_joint);
  }

  Matrix forward(const Matrix& features) {
    if (features.cols != d_img_)
      throw ShapeMismatch("ImageEncoder: expected " + std::to_string(d_img_) +
                          " image feature dims, got " + std::to_string(features.cols));
    Matrix z = head_.forward(relu_.forward(backbone_.forward(features)));
    if (bn_) z = postnorm_.forward(bn_->forward(z));
    return z;
  }

  Matrix backward(const Matrix& gz) {
    Matrix g = gz;
    if (bn_) g = bn_->backward(postnorm_.backward(g));
    return backbone_.backward(relu_.backward(head_.backward(g)));
  }

  void register_params(ParameterStore& ps, const std::string& prefix = "image_encoder") {
    backbone_.register_params(ps, prefix + ".backbone");
    head_.register_params(ps, prefix + ".head");
    if (bn_) bn_->register_params(ps, prefix + ".bn");
  }

  void set_training(bool training) {
    if (bn_) bn_->set_training(training);
  }

  std::size_t joint_dim() const { return head_.out_dim(); }

 private:
  Linear backbone_;
  ReLU relu_;
  ProjectionHead head_;
  std::optional<BatchNorm1d> bn_;
  L2NormalizeRows postnorm_;
  std::size_t d_img_ = 0;
};

enum class CaptionPooling { MeanPool, Gru };

class CaptionEncoder {
 public:
  CaptionEncoder() = default;
  CaptionEncoder(std::size_t vocab, std::size_t d_embed, std::size_t hidden, std::size_t d_joint,
                 CaptionPooling pooling, SeededRng& rng, bool with_batchnorm = false)
      : pooling_(pooling), vocab_(vocab) {
    if (pooling == CaptionPooling::MeanPool) {
      meanpool_ = EmbeddingMeanPool(vocab, d_embed, rng);
      head_ = ProjectionHead(d_embed, hidden, d_joint, rng);
    } else {
      table_ = EmbeddingTable(vocab, d_embed, rng);
      cell_ = GRUCell(d_embed, hidden, rng);
      head_ = ProjectionHead(hidden, hidden, d_joint, rng);
    }
    if (with_batchnorm) bn_.emplace(d_joint);
  }

  Matrix forward(const std::vector<TokenSeq>& tokens) {
    Matrix pooled = pooling_ == CaptionPooling::MeanPool ? meanpool_.forward(tokens)
                                                         : gru_forward(tokens);
    Matrix z = head_.forward(pooled);
    if (bn_) z = postnorm_.forward(bn_->forward(z));
    return z;
  }

  void backward(const Matrix& gz) {
    Matrix g = gz;
    if (bn_) g = bn_->backward(postnorm_.backward(g));
    Matrix gpooled = head_.backward(g);
    if (pooling_ == CaptionPooling::MeanPool)
      meanpool_.backward(gpooled);
    else
      gru_backward(gpooled);
  }

  void register_params(ParameterStore& ps, const std::string& prefix = "caption_encoder") {
    if (pooling_ == CaptionPooling::MeanPool) {
      meanpool_.register_params(ps, prefix + ".embedding");
    } else {
      table_.register_params(ps, prefix + ".embedding");
      cell_.register_params(ps, prefix + ".gru");
    }
    head_.register_params(ps, prefix + ".head");
    if (bn_) bn_->register_params(ps, prefix + ".bn");
  }

  void set_training(bool training) {
    if (bn_) bn_->set_training(training);
  }

  std::size_t vocab() const { return vocab_; }
  CaptionPooling pooling() const { return pooling_; }

 private:
  // Rows are processed independently; the final hidden state feeds the
  // head. Cache frames stack row-major, so backward walks rows in
  // reverse.
  Matrix gru_forward(const std::vector<TokenSeq>& tokens) {
    cell_.clear_cache();
    lengths_.clear();
    Matrix out(tokens.size(), cell_.hidden_dim());
    for (std::size_t b = 0; b < tokens.size(); ++b) {
      const TokenSeq& seq = tokens[b];
      if (seq.empty()) throw EmptyCaption("CaptionEncoder: empty token sequence");
      Matrix h(1, cell_.hidden_dim());
      for (int tok : seq) {
        Matrix x(1, table_.dim());
        const double* e = table_.row(tok);
        std::copy(e, e + table_.dim(), x.row(0));
        h = cell_.forward_step(x, h);
      }
      std::copy(h.row(0), h.row(0) + h.cols, out.row(b));
      lengths_.push_back(seq.size());
    }
    tokens_cache_ = tokens;
    return out;
  }

  void gru_backward(const Matrix& gpooled) {
    for (std::size_t rb = tokens_cache_.size(); rb-- > 0;) {
      Matrix gh(1, cell_.hidden_dim());
      std::copy(gpooled.row(rb), gpooled.row(rb) + gpooled.cols, gh.row(0));
      const TokenSeq& seq = tokens_cache_[rb];
      for (std::size_t t = seq.size(); t-- > 0;) {
        auto [gx, gh_prev] = cell_.backward_step(gh);
        table_.accumulate_grad(seq[t], gx.row(0), 1.0);
        gh = std::move(gh_prev);
      }
    }
  }

  CaptionPooling pooling_ = CaptionPooling::MeanPool;
  std::size_t vocab_ = 0;
  EmbeddingMeanPool meanpool_;
  EmbeddingTable table_;
  GRUCell cell_;
  ProjectionHead head_;
  std::optional<BatchNorm1d> bn_;
  L2NormalizeRows postnorm_;
  std::vector<TokenSeq> tokens_cache_;
  std::vector<std::size_t> lengths_;
};

}  // namespace icr
