#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "icr/constraint.hpp"
#include "icr/errors.hpp"

namespace icr {

using nlohmann::json;

// =====================================================================
//  Experiment configuration: one JSON document, every default
//  overridable. Modes cover the full experiment matrix: pure
//  contrastive baseline, input-space decoding and latent target
//  decoding (each as dual loss or Lagrangian constraint), plus the
//  fixed-target and fine-tuned-target setups.
// =====================================================================

enum class Mode {
  Baseline,
  ItdDual,
  ItdLagrange,
  LtdDual,
  LtdLagrange,
  FixedTargets,
  FinetunedTargets,
};

enum class LossKind { InfoNce, Triplet };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::ItdDual: return "itd_dual";
    case Mode::ItdLagrange: return "itd_lagrange";
    case Mode::LtdDual: return "ltd_dual";
    case Mode::LtdLagrange: return "ltd_lagrange";
    case Mode::FixedTargets: return "fixed_targets";
    case Mode::FinetunedTargets: return "finetuned_targets";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "baseline") return Mode::Baseline;
  if (s == "itd_dual") return Mode::ItdDual;
  if (s == "itd_lagrange") return Mode::ItdLagrange;
  if (s == "ltd_dual") return Mode::LtdDual;
  if (s == "ltd_lagrange") return Mode::LtdLagrange;
  if (s == "fixed_targets") return Mode::FixedTargets;
  if (s == "finetuned_targets") return Mode::FinetunedTargets;
  throw ConfigInvalid("unknown mode: " + s);
}

inline std::string to_string(LossKind l) {
  return l == LossKind::InfoNce ? "infonce" : "triplet";
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "infonce") return LossKind::InfoNce;
  if (s == "triplet") return LossKind::Triplet;
  throw ConfigInvalid("unknown loss: " + s);
}

struct DimsConfig {
  int d_img = 48;
  int d_embed = 32;
  int hidden = 64;
  int d_joint = 64;
  int d_target = 32;
  int d_dec = 64;
};

struct SeedsConfig {
  std::uint64_t model = 1;
  std::uint64_t epoch = 1;
};

struct ExperimentConfig {
  Mode mode = Mode::Baseline;
  LossKind loss = LossKind::InfoNce;
  double tau = 0.05;
  double beta = 1.0;
  double eta = -1.0;  // < 0: resolved per mode (0.2 latent, 6 input-space)
  double margin = 0.2;
  LagrangeState lambda;  // lambda/ascent defaults; eta is overwritten from the field above
  int epochs = 20;
  int batch_size = 128;
  double base_lr = 0.2;
  double target_head_lr = 2e-5;  // fine-tuned target head, fixed (no schedule)
  bool swa = true;
  bool use_batchnorm = false;  // forced on by the triplet loss
  std::string caption_encoder = "meanpool";  // "meanpool" | "gru"
  DimsConfig dims;
  SeedsConfig seeds;

  bool is_lagrange() const { return mode == Mode::ItdLagrange || mode == Mode::LtdLagrange; }
  bool is_dual() const { return mode == Mode::ItdDual || mode == Mode::LtdDual; }
  bool uses_itd() const { return mode == Mode::ItdDual || mode == Mode::ItdLagrange; }
  bool uses_ltd() const { return mode == Mode::LtdDual || mode == Mode::LtdLagrange; }
  bool is_target_mode() const {
    return mode == Mode::FixedTargets || mode == Mode::FinetunedTargets;
  }

  double resolved_eta() const {
    if (eta >= 0.0) return eta;
    return uses_itd() ? 6.0 : 0.2;
  }

  // Resolves derived fields and enforces the mode/loss matrix.
  void finalize() {
    if (loss == LossKind::Triplet) {
      // The triplet setup adds batch norm after the heads and disables SWA.
      use_batchnorm = true;
      if (swa) throw ConfigInvalid("triplet loss requires swa=false");
    }
    if (is_target_mode() && mode == Mode::FixedTargets && loss == LossKind::Triplet)
      throw ConfigInvalid("fixed_targets has no contrastive loss; use loss=infonce");
    if (caption_encoder != "meanpool" && caption_encoder != "gru")
      throw ConfigInvalid("caption_encoder must be 'meanpool' or 'gru'");
    if (tau <= 0.0) throw ConfigInvalid("tau must be positive");
    if (beta < 0.0) throw ConfigInvalid("beta must be >= 0");
    if (epochs < 1 || batch_size < 2) throw ConfigInvalid("epochs >= 1, batch_size >= 2 required");
    if (base_lr <= 0.0) throw ConfigInvalid("base_lr must be positive");
    lambda.eta = resolved_eta();
    if (lambda.eta <= 0.0) throw ConfigInvalid("eta must be positive");
    if (lambda.lambda_min > lambda.lambda_max)
      throw ConfigInvalid("lambda bounds inverted");
  }
};

inline void to_json(json& j, const DimsConfig& d) {
  j = json{{"d_img", d.d_img},     {"d_embed", d.d_embed}, {"hidden", d.hidden},
           {"d_joint", d.d_joint}, {"d_target", d.d_target}, {"d_dec", d.d_dec}};
}

inline void from_json(const json& j, DimsConfig& d) {
  DimsConfig def;
  d.d_img = j.value("d_img", def.d_img);
  d.d_embed = j.value("d_embed", def.d_embed);
  d.hidden = j.value("hidden", def.hidden);
  d.d_joint = j.value("d_joint", def.d_joint);
  d.d_target = j.value("d_target", def.d_target);
  d.d_dec = j.value("d_dec", def.d_dec);
}

inline void to_json(json& j, const SeedsConfig& s) {
  j = json{{"model", s.model}, {"epoch", s.epoch}};
}

inline void from_json(const json& j, SeedsConfig& s) {
  SeedsConfig def;
  s.model = j.value("model", def.model);
  s.epoch = j.value("epoch", def.epoch);
}

inline void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"loss", to_string(c.loss)},
           {"tau", c.tau},
           {"beta", c.beta},
           {"eta", c.resolved_eta()},
           {"margin", c.margin},
           {"lambda",
            {{"init", c.lambda.lambda},
             {"min", c.lambda.lambda_min},
             {"max", c.lambda.lambda_max},
             {"lr", c.lambda.ascent_lr},
             {"momentum", c.lambda.momentum},
             {"dampening", c.lambda.dampening}}},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"base_lr", c.base_lr},
           {"target_head_lr", c.target_head_lr},
           {"swa", c.swa},
           {"use_batchnorm", c.use_batchnorm},
           {"caption_encoder", c.caption_encoder},
           {"dims", c.dims},
           {"seeds", c.seeds}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  ExperimentConfig def;
  c.mode = mode_from_string(j.value("mode", to_string(def.mode)));
  c.loss = loss_from_string(j.value("loss", to_string(def.loss)));
  c.tau = j.value("tau", def.tau);
  c.beta = j.value("beta", def.beta);
  c.eta = j.value("eta", def.eta);
  c.margin = j.value("margin", def.margin);
  if (j.contains("lambda")) {
    const json& l = j["lambda"];
    c.lambda.lambda = l.value("init", def.lambda.lambda);
    c.lambda.lambda_min = l.value("min", def.lambda.lambda_min);
    c.lambda.lambda_max = l.value("max", def.lambda.lambda_max);
    c.lambda.ascent_lr = l.value("lr", def.lambda.ascent_lr);
    c.lambda.momentum = l.value("momentum", def.lambda.momentum);
    c.lambda.dampening = l.value("dampening", def.lambda.dampening);
  }
  c.epochs = j.value("epochs", def.epochs);
  c.batch_size = j.value("batch_size", def.batch_size);
  c.base_lr = j.value("base_lr", def.base_lr);
  c.target_head_lr = j.value("target_head_lr", def.target_head_lr);
  c.swa = j.value("swa", def.swa);
  c.use_batchnorm = j.value("use_batchnorm", def.use_batchnorm);
  c.caption_encoder = j.value("caption_encoder", def.caption_encoder);
  c.dims = j.value("dims", def.dims);
  c.seeds = j.value("seeds", def.seeds);
  c.finalize();
}

// FNV-1a over the canonical resolved dump; stable across platforms.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace icr
