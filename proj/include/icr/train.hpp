#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icr/checkpoint.hpp"
#include "icr/config.hpp"
#include "icr/constraint.hpp"
#include "icr/data.hpp"
#include "icr/decoders.hpp"
#include "icr/encoders.hpp"
#include "icr/errors.hpp"
#include "icr/eval.hpp"
#include "icr/losses.hpp"

namespace icr {

namespace fs = std::filesystem;

// =====================================================================
//  Model: the per-mode bundle of trainable components. Construction
//  order is fixed so identical seeds give identical initializations.
// =====================================================================

class Model {
 public:
  Model(const ExperimentConfig& config, int vocab_size) : config_(config), vocab_(vocab_size) {
    config_.finalize();
    SeededRng rng(config_.seeds.model);
    const DimsConfig& d = config_.dims;

    image_encoder_.emplace(d.d_img, d.hidden, d.d_joint, rng, config_.use_batchnorm);
    image_encoder_->register_params(params_, "image_encoder");

    if (!config_.is_target_mode()) {
      const CaptionPooling pooling = config_.caption_encoder == "gru" ? CaptionPooling::Gru
                                                                      : CaptionPooling::MeanPool;
      caption_encoder_.emplace(static_cast<std::size_t>(vocab_), d.d_embed, d.hidden, d.d_joint,
                               pooling, rng, config_.use_batchnorm);
      caption_encoder_->register_params(params_, "caption_encoder");
    }

    if (config_.uses_ltd()) {
      ltd_.emplace(d.d_joint, d.hidden, d.d_target, rng);
      ltd_->register_params(params_, "latent_decoder");
    }
    if (config_.uses_itd()) {
      itd_.emplace(static_cast<std::size_t>(vocab_), d.d_joint, d.d_embed, d.d_dec, rng);
      itd_->register_params(params_, "input_decoder");
    }
    if (config_.mode == Mode::FixedTargets) {
      SeededRng proj_rng = rng.fork(7001);
      target_projection_ = random_gaussian_matrix(d.d_target, d.d_joint, proj_rng);
      params_.add_state("target_projection", target_projection_);
    }
    if (config_.mode == Mode::FinetunedTargets) {
      target_head_.emplace(d.d_target, d.hidden, d.d_joint, rng);
      target_head_->register_params(head_params_, "target_head");
    }
  }

  const ExperimentConfig& config() const { return config_; }
  int vocab() const { return vocab_; }
  ParameterStore& params() { return params_; }
  ParameterStore& head_params() { return head_params_; }

  void set_training(bool training) {
    if (image_encoder_) image_encoder_->set_training(training);
    if (caption_encoder_) caption_encoder_->set_training(training);
  }

  Matrix encode_images(const Matrix& features) { return image_encoder_->forward(features); }

  Matrix image_backward(const Matrix& g) { return image_encoder_->backward(g); }

  Matrix encode_captions(const std::vector<TokenSeq>& tokens) {
    return caption_encoder_->forward(tokens);
  }

  void caption_backward(const Matrix& g) { caption_encoder_->backward(g); }

  // Caption-side representations in the target modes: the frozen
  // projection of the oracle targets, or the trainable two-layer head.
  Matrix target_representations(const Matrix& targets) {
    if (config_.mode == Mode::FixedTargets) {
      Matrix rep = matmul(targets, target_projection_);
      fixed_norm_.emplace();
      return fixed_norm_->forward(rep);
    }
    return target_head_->forward(targets);
  }

  void target_head_backward(const Matrix& g) { target_head_->backward(g); }

  LatentTargetDecoder& ltd() { return *ltd_; }
  InputTokenDecoder& itd() { return *itd_; }

 private:
  ExperimentConfig config_;
  int vocab_ = 0;
  std::optional<ImageEncoder> image_encoder_;
  std::optional<CaptionEncoder> caption_encoder_;
  std::optional<LatentTargetDecoder> ltd_;
  std::optional<InputTokenDecoder> itd_;
  std::optional<ProjectionHead> target_head_;
  std::optional<L2NormalizeRows> fixed_norm_;
  Matrix target_projection_;
  ParameterStore params_;
  ParameterStore head_params_;
};

// =====================================================================
//  Training
// =====================================================================

struct StepLog {
  long step = 0;
  double l_con = 0.0;
  std::optional<double> l_rec;
  std::optional<double> lambda;
  double lr = 0.0;
};

struct RunArtifacts {
  fs::path out_dir;
  MetricsReport metrics;
  std::vector<StepLog> steps;
  double duplicate_batch_fraction = 0.0;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline void write_steplog_csv(const std::vector<StepLog>& steps, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "step,l_con,l_rec,lambda,lr\n";
  for (const StepLog& s : steps) {
    out << s.step << ',' << fmt_double(s.l_con) << ','
        << (s.l_rec ? fmt_double(*s.l_rec) : std::string()) << ','
        << (s.lambda ? fmt_double(*s.lambda) : std::string()) << ',' << fmt_double(s.lr) << "\n";
  }
}

inline Matrix all_images(const Dataset& ds) {
  Matrix m(ds.samples.size(), static_cast<std::size_t>(ds.spec.d_img));
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    std::copy(ds.samples[i].image.begin(), ds.samples[i].image.end(), m.row(i));
  return m;
}

inline std::vector<TokenSeq> all_captions(const Dataset& ds) {
  std::vector<TokenSeq> out;
  for (const PairedSample& s : ds.samples)
    for (const TokenSeq& c : s.captions) out.push_back(c);
  return out;
}

inline Matrix all_targets(const Dataset& ds) {
  const std::size_t k = ds.samples.empty() ? 0 : ds.samples[0].targets.size();
  Matrix m(ds.samples.size() * k, static_cast<std::size_t>(ds.spec.d_target));
  std::size_t r = 0;
  for (const PairedSample& s : ds.samples)
    for (const RealVector& t : s.targets) {
      std::copy(t.begin(), t.end(), m.row(r));
      ++r;
    }
  return m;
}

}  // namespace detail

// Encodes the full test split and computes recall@{1,5,10} and
// r-precision for both directions, single- and multi-positive.
// Decoders are never invoked here.
inline MetricsReport evaluate_model(Model& model, const Dataset& test,
                                    const RelevanceAnnotations& annotations) {
  const ExperimentConfig& cfg = model.config();
  if (test.spec.d_img != cfg.dims.d_img || test.spec.d_target != cfg.dims.d_target)
    throw DimMismatch("evaluate: dataset dims do not match model config");
  model.set_training(false);

  const Matrix img_emb = model.encode_images(detail::all_images(test));
  Matrix cap_emb;
  if (cfg.is_target_mode())
    cap_emb = model.target_representations(detail::all_targets(test));
  else
    cap_emb = model.encode_captions(detail::all_captions(test));

  const int k = test.spec.k;
  const std::size_t n_img = test.samples.size();
  const std::size_t n_cap = cap_emb.rows;

  std::vector<std::vector<int>> i2t_single(n_img), t2i_single(n_cap);
  for (std::size_t i = 0; i < n_img; ++i)
    for (int c = 0; c < k; ++c) i2t_single[i].push_back(static_cast<int>(i) * k + c);
  for (std::size_t j = 0; j < n_cap; ++j)
    t2i_single[j].push_back(static_cast<int>(j) / k);

  if (annotations.i2t.size() != n_img || annotations.t2i.size() != n_cap)
    throw DimMismatch("evaluate: annotation sizes do not match the test split");

  const RankingMatrix i2t_rank = rank_candidates(img_emb, cap_emb);
  const RankingMatrix t2i_rank = rank_candidates(cap_emb, img_emb);

  MetricsReport report;
  report.i2t = direction_metrics(i2t_rank, i2t_single);
  report.t2i = direction_metrics(t2i_rank, t2i_single);
  report.i2t_multi = direction_metrics(i2t_rank, annotations.i2t);
  report.t2i_multi = direction_metrics(t2i_rank, annotations.t2i);
  report.recall_sum = report.i2t.r1 + report.i2t.r5 + report.i2t.r10 + report.t2i.r1 +
                      report.t2i.r5 + report.t2i.r10;
  report.recall_sum_multi = report.i2t_multi.r1 + report.i2t_multi.r5 + report.i2t_multi.r10 +
                            report.t2i_multi.r1 + report.t2i_multi.r5 + report.t2i_multi.r10;
  report.config_hash = config_hash(cfg);
  report.seed = cfg.seeds.model;
  model.set_training(true);
  return report;
}

// Runs the full training loop and writes every artifact (resolved
// config, step log, checkpoints, metrics) under out_dir.
inline RunArtifacts train_run(const ExperimentConfig& config_in, const Dataset& train,
                              const Dataset& test, const RelevanceAnnotations& annotations,
                              const fs::path& out_dir) {
  ExperimentConfig config = config_in;
  config.finalize();
  if (train.spec.d_img != config.dims.d_img || train.spec.d_target != config.dims.d_target)
    throw ConfigInvalid("train: dataset dims do not match config dims");
  const long pairs_per_epoch =
      static_cast<long>(train.samples.size()) * static_cast<long>(train.spec.k);
  if (config.loss == LossKind::Triplet && pairs_per_epoch % config.batch_size == 1)
    throw ConfigInvalid("train: triplet loss cannot take a trailing batch of size 1");

  fs::create_directories(out_dir);
  Model model(config, train.vocab_size);
  const std::string hash = config_hash(config);
  {
    std::ofstream cfg_out(out_dir / "config.json");
    cfg_out << json(config).dump(2) << "\n";
  }

  const long steps_per_epoch =
      (pairs_per_epoch + config.batch_size - 1) / config.batch_size;
  const long total_steps = steps_per_epoch * config.epochs;
  const std::vector<long> swa_steps = swa_absorb_steps(steps_per_epoch);

  LagrangeState lagrange = config.lambda;
  lagrange.eta = config.resolved_eta();
  SwaAccumulator swa_main, swa_head;
  SeededRng epoch_root(config.seeds.epoch);

  RunArtifacts artifacts;
  artifacts.out_dir = out_dir;
  long global_step = 0;
  long dup_batches = 0, n_batches = 0;

  model.set_training(true);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t eseed = epoch_root.fork(static_cast<std::uint64_t>(epoch)).seed();
    std::vector<PairedBatch> batches = epoch_batches(train, config.batch_size, eseed);
    for (long bi = 0; bi < static_cast<long>(batches.size()); ++bi, ++global_step) {
      const PairedBatch& batch = batches[static_cast<std::size_t>(bi)];
      const double lr = cosine_lr(global_step, total_steps, config.base_lr);
      {
        std::vector<std::int64_t> ids = batch.image_ids;
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) ++dup_batches;
        ++n_batches;
      }

      double l_con = 0.0;
      std::optional<double> l_rec;
      std::optional<double> lambda_logged;

      const auto abort_nonfinite = [&](double lc, std::optional<double> lr_rec) {
        json dump{{"step", global_step},
                  {"epoch", epoch},
                  {"l_con", lc},
                  {"l_rec", lr_rec ? json(*lr_rec) : json()},
                  {"lambda", config.is_lagrange() ? json(lagrange.lambda) : json()},
                  {"lr", lr}};
        std::ofstream d(out_dir / "diagnostic_dump.json");
        d << dump.dump(2) << "\n";
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(global_step) +
                            "; diagnostic dump written to " +
                            (out_dir / "diagnostic_dump.json").string());
      };

      if (config.mode == Mode::FixedTargets) {
        // Caption side frozen; image encoder matches the projected targets.
        const Matrix reps = model.target_representations(batch.targets);
        const Matrix z_img = model.encode_images(batch.images);
        LossOutput loss = cosine_reconstruction(z_img, reps);
        l_con = loss.value;
        if (!std::isfinite(l_con)) abort_nonfinite(l_con, l_rec);
        model.image_backward(loss.grad_queries);
      } else {
        const Matrix z_img = model.encode_images(batch.images);
        Matrix z_cap;
        if (config.mode == Mode::FinetunedTargets)
          z_cap = model.target_representations(batch.targets);
        else
          z_cap = model.encode_captions(batch.captions);

        const SimilarityBatch sim = aligned_batch(z_img, z_cap, config.tau);
        LossOutput con = config.loss == LossKind::Triplet
                             ? triplet_hardest(sim, config.margin)
                             : infonce(sim, /*bidirectional=*/true);
        l_con = con.value;

        Matrix dz_cap = con.grad_candidates;
        if (config.uses_ltd() || config.uses_itd()) {
          const double w_rec = config.is_lagrange() ? reconstruction_weight(lagrange)
                                                    : config.beta;
          if (config.uses_ltd()) {
            const Matrix pred = model.ltd().forward(z_cap);
            LossOutput rec = cosine_reconstruction(pred, batch.targets);
            l_rec = rec.value;
            Matrix dpred = rec.grad_queries;
            scale_inplace(dpred, w_rec);
            add_inplace(dz_cap, model.ltd().backward(dpred));
          } else {
            const std::vector<Matrix> logits = model.itd().forward(z_cap, batch.captions);
            SeqLossOutput rec = token_nll(logits, batch.captions);
            l_rec = rec.value;
            for (Matrix& g : rec.grad_logits) scale_inplace(g, w_rec);
            add_inplace(dz_cap, model.itd().backward(rec.grad_logits));
          }
        }
        if (!std::isfinite(l_con) || (l_rec && !std::isfinite(*l_rec)))
          abort_nonfinite(l_con, l_rec);

        if (config.mode == Mode::FinetunedTargets)
          model.target_head_backward(dz_cap);
        else
          model.caption_backward(dz_cap);
        model.image_backward(con.grad_queries);
      }

      sgd_step(model.params(), lr);
      if (config.mode == Mode::FinetunedTargets)
        sgd_step(model.head_params(), config.target_head_lr);

      if (config.is_lagrange()) {
        update_lambda(lagrange, *l_rec);
        lambda_logged = lagrange.lambda;
      }

      if (config.swa) {
        const long absorbs = std::count(swa_steps.begin(), swa_steps.end(), bi);
        for (long c = 0; c < absorbs; ++c) {
          swa_main.absorb(model.params());
          if (config.mode == Mode::FinetunedTargets) swa_head.absorb(model.head_params());
        }
      }

      artifacts.steps.push_back(StepLog{global_step, l_con, l_rec, lambda_logged, lr});
    }
  }

  artifacts.duplicate_batch_fraction =
      n_batches == 0 ? 0.0 : static_cast<double>(dup_batches) / static_cast<double>(n_batches);

  const json ck_config{{"experiment", json(config)}, {"vocab_size", train.vocab_size}};
  save_checkpoint(checkpoint_from_store(model.params(), config.seeds.model, hash, ck_config),
                  (out_dir / "checkpoint.bin").string());
  if (config.mode == Mode::FinetunedTargets)
    save_checkpoint(
        checkpoint_from_store(model.head_params(), config.seeds.model, hash, ck_config),
        (out_dir / "checkpoint_head.bin").string());

  if (config.swa) {
    const auto averaged = swa_main.finalize();
    for (const auto& [name, m] : averaged) *model.params().params().at(name).param = m;
    if (config.mode == Mode::FinetunedTargets) {
      const auto avg_head = swa_head.finalize();
      for (const auto& [name, m] : avg_head) *model.head_params().params().at(name).param = m;
    }
    save_checkpoint(checkpoint_from_store(model.params(), config.seeds.model, hash, ck_config),
                    (out_dir / "checkpoint_swa.bin").string());
  }

  detail::write_steplog_csv(artifacts.steps, out_dir / "steplog.csv");

  artifacts.metrics = evaluate_model(model, test, annotations);
  artifacts.metrics.metadata = json{{"mode", to_string(config.mode)},
                                    {"loss", to_string(config.loss)},
                                    {"duplicate_batch_fraction", artifacts.duplicate_batch_fraction},
                                    {"swa_checkpoints", config.swa ? swa_main.count() : 0},
                                    {"final_lambda",
                                     config.is_lagrange() ? json(lagrange.lambda) : json()}};
  {
    std::ofstream m(out_dir / "metrics.json");
    m << json(artifacts.metrics).dump(2) << "\n";
  }
  return artifacts;
}

// Rebuilds a model from a checkpoint and evaluates it.
inline MetricsReport evaluate_checkpoint(const std::string& checkpoint_path, const Dataset& test,
                                         const RelevanceAnnotations& annotations) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (!ck.config.contains("experiment"))
    throw ParseError("checkpoint has no embedded experiment config");
  ExperimentConfig cfg = ck.config["experiment"].get<ExperimentConfig>();
  const int vocab = ck.config.value("vocab_size", test.vocab_size);
  Model model(cfg, vocab);
  load_into_store(ck, model.params());
  if (cfg.mode == Mode::FinetunedTargets) {
    // The head group lives in a side-car checkpoint next to the main one.
    const fs::path head_path = fs::path(checkpoint_path).parent_path() / "checkpoint_head.bin";
    load_into_store(load_checkpoint(head_path.string()), model.head_params());
  }
  return evaluate_model(model, test, annotations);
}

}  // namespace icr
