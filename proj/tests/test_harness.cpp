#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "icr/icr.hpp"

using namespace icr;
namespace fs = std::filesystem;

namespace {

DatasetSpec tiny_spec() {
  DatasetSpec spec;
  spec.n_train = 24;
  spec.n_test = 10;
  spec.k = 3;
  spec.m_attr_vocab = 16;
  spec.s_attrs = 5;
  spec.tokens_per_caption = 3;
  spec.d_img = 12;
  spec.d_shortcut = 4;
  spec.d_target = 8;
  spec.overlap_threshold = 4;
  spec.seed = 7;
  return spec;
}

ExperimentConfig tiny_config(Mode mode) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.base_lr = 0.1;
  cfg.dims.d_img = 12;
  cfg.dims.d_embed = 6;
  cfg.dims.hidden = 8;
  cfg.dims.d_joint = 8;
  cfg.dims.d_target = 8;
  cfg.dims.d_dec = 8;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(Config, JsonRoundTripWithDefaults) {
  const json j = json::parse(R"({"mode": "ltd_lagrange"})");
  const ExperimentConfig cfg = j.get<ExperimentConfig>();
  EXPECT_EQ(cfg.mode, Mode::LtdLagrange);
  EXPECT_DOUBLE_EQ(cfg.tau, 0.05);
  EXPECT_DOUBLE_EQ(cfg.resolved_eta(), 0.2);
  EXPECT_DOUBLE_EQ(cfg.lambda.lambda, 1.0);
  EXPECT_DOUBLE_EQ(cfg.lambda.ascent_lr, 5e-3);
  EXPECT_DOUBLE_EQ(cfg.beta, 1.0);
  EXPECT_DOUBLE_EQ(cfg.margin, 0.2);
}

TEST(Config, ItdEtaDefaultsToSix) {
  const ExperimentConfig cfg = json::parse(R"({"mode": "itd_lagrange"})").get<ExperimentConfig>();
  EXPECT_DOUBLE_EQ(cfg.resolved_eta(), 6.0);
}

TEST(Config, TripletForcesBatchnormAndRejectsSwa) {
  const ExperimentConfig cfg =
      json::parse(R"({"mode": "baseline", "loss": "triplet", "swa": false})")
          .get<ExperimentConfig>();
  EXPECT_TRUE(cfg.use_batchnorm);
  EXPECT_THROW(json::parse(R"({"mode": "baseline", "loss": "triplet", "swa": true})")
                   .get<ExperimentConfig>(),
               ConfigInvalid);
}

TEST(Config, UnknownModeRejected) {
  EXPECT_THROW(json::parse(R"({"mode": "alchemy"})").get<ExperimentConfig>(), ConfigInvalid);
}

TEST(Config, HashDistinguishesConfigs) {
  ExperimentConfig a, b;
  b.tau = 0.07;
  EXPECT_EQ(config_hash(a), config_hash(a));
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(TrainRun, BaselineSmoke) {
  TempDir dir("icr_run_baseline");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::Baseline);
  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);

  EXPECT_TRUE(fs::exists(dir.path / "steplog.csv"));
  EXPECT_TRUE(fs::exists(dir.path / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir.path / "checkpoint_swa.bin"));
  EXPECT_TRUE(fs::exists(dir.path / "metrics.json"));
  EXPECT_TRUE(fs::exists(dir.path / "config.json"));

  const std::string log = slurp(dir.path / "steplog.csv");
  EXPECT_NE(log.find("step,l_con,l_rec,lambda,lr"), std::string::npos);
  // baseline: l_rec and lambda columns stay empty
  std::istringstream lines(log);
  std::string line;
  std::getline(lines, line);  // header
  std::getline(lines, line);
  std::stringstream fields(line);
  std::string step, lcon, lrec, lambda, lr;
  std::getline(fields, step, ',');
  std::getline(fields, lcon, ',');
  std::getline(fields, lrec, ',');
  std::getline(fields, lambda, ',');
  std::getline(fields, lr, ',');
  EXPECT_FALSE(lcon.empty());
  EXPECT_TRUE(lrec.empty());
  EXPECT_TRUE(lambda.empty());
  EXPECT_FALSE(lr.empty());

  // 24*3 = 72 pairs, batch 8 -> 9 steps/epoch, 2 epochs
  EXPECT_EQ(art.steps.size(), 18u);
}

TEST(TrainRun, DeterministicAcrossRepeats) {
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::LtdLagrange);
  TempDir d1("icr_det_1"), d2("icr_det_2");
  train_run(cfg, data.train, data.test, data.annotations, d1.path);
  train_run(cfg, data.train, data.test, data.annotations, d2.path);
  EXPECT_EQ(slurp(d1.path / "metrics.json"), slurp(d2.path / "metrics.json"));
  EXPECT_EQ(slurp(d1.path / "steplog.csv"), slurp(d2.path / "steplog.csv"));
  EXPECT_EQ(slurp(d1.path / "checkpoint.bin"), slurp(d2.path / "checkpoint.bin"));
}

TEST(TrainRun, LagrangeLogsLambdaColumn) {
  TempDir dir("icr_run_lag");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::LtdLagrange);
  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);
  for (const StepLog& s : art.steps) {
    ASSERT_TRUE(s.l_rec.has_value());
    ASSERT_TRUE(s.lambda.has_value());
  }
}

TEST(TrainRun, GenerousEtaDecaysLambdaToZeroAndActsLikeBaseline) {
  TempDir dir("icr_run_easy_eta");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::LtdLagrange);
  cfg.eta = 50.0;  // far above any reachable reconstruction loss
  cfg.lambda.ascent_lr = 0.5;  // reach the bound within this short run
  cfg.epochs = 3;
  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);
  // lambda hits the lower bound and stays: zero reconstruction weight
  bool reached_zero = false;
  for (const StepLog& s : art.steps) {
    if (*s.lambda == 0.0) reached_zero = true;
    if (reached_zero) EXPECT_DOUBLE_EQ(*s.lambda, 0.0);
  }
  EXPECT_TRUE(reached_zero);
}

TEST(TrainRun, TripletModeRuns) {
  TempDir dir("icr_run_triplet");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::LtdLagrange);
  cfg.loss = LossKind::Triplet;
  cfg.swa = false;
  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);
  EXPECT_EQ(art.steps.size(), 18u);
  EXPECT_FALSE(fs::exists(dir.path / "checkpoint_swa.bin"));
}

TEST(TrainRun, FixedTargetsFreezesCaptionSide) {
  TempDir dir("icr_run_fixed");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::FixedTargets);
  Model probe(cfg, data.train.vocab_size);
  for (const auto& [name, e] : probe.params().params())
    EXPECT_EQ(name.rfind("image_encoder", 0), 0u) << name;  // only the image side trains
  ASSERT_TRUE(probe.params().state().count("target_projection"));

  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);
  // the frozen projection is identical in the written checkpoint
  const Checkpoint ck = load_checkpoint((dir.path / "checkpoint.bin").string());
  EXPECT_EQ(ck.arrays.at("target_projection"),
            *probe.params().state().at("target_projection"));
  EXPECT_GT(art.metrics.recall_sum, 0.0);
}

TEST(TrainRun, FinetunedTargetsTrainsHeadAtOwnRate) {
  TempDir dir("icr_run_ft");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::FinetunedTargets);
  EXPECT_DOUBLE_EQ(cfg.target_head_lr, 2e-5);
  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);
  EXPECT_TRUE(fs::exists(dir.path / "checkpoint_head.bin"));
  EXPECT_GT(art.metrics.recall_sum, 0.0);
}

TEST(Evaluate, DeterministicAndMultiAtLeastSingle) {
  TempDir dir("icr_eval_det");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::Baseline);
  cfg.epochs = 1;
  train_run(cfg, data.train, data.test, data.annotations, dir.path);

  const MetricsReport a =
      evaluate_checkpoint((dir.path / "checkpoint_swa.bin").string(), data.test, data.annotations);
  const MetricsReport b =
      evaluate_checkpoint((dir.path / "checkpoint_swa.bin").string(), data.test, data.annotations);
  EXPECT_EQ(json(a).dump(), json(b).dump());

  // multi-positive relevance is a superset: recall can only improve
  EXPECT_GE(a.i2t_multi.r1, a.i2t.r1);
  EXPECT_GE(a.i2t_multi.r5, a.i2t.r5);
  EXPECT_GE(a.i2t_multi.r10, a.i2t.r10);
  EXPECT_GE(a.t2i_multi.r1, a.t2i.r1);
  EXPECT_GE(a.t2i_multi.r5, a.t2i.r5);
  EXPECT_GE(a.t2i_multi.r10, a.t2i.r10);
}

TEST(Evaluate, SwaCheckpointMatchesReportedMetrics) {
  TempDir dir("icr_eval_swa");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::LtdDual);
  const RunArtifacts art = train_run(cfg, data.train, data.test, data.annotations, dir.path);
  const MetricsReport re =
      evaluate_checkpoint((dir.path / "checkpoint_swa.bin").string(), data.test, data.annotations);
  EXPECT_DOUBLE_EQ(re.recall_sum, art.metrics.recall_sum);
  EXPECT_DOUBLE_EQ(re.i2t.r1, art.metrics.i2t.r1);
}

TEST(Evaluate, DimMismatchRejected) {
  TempDir dir("icr_eval_dim");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::Baseline);
  cfg.epochs = 1;
  train_run(cfg, data.train, data.test, data.annotations, dir.path);

  DatasetSpec other = tiny_spec();
  other.d_img = 16;
  const GeneratedData wrong = generate_dataset(other);
  EXPECT_THROW(evaluate_checkpoint((dir.path / "checkpoint_swa.bin").string(), wrong.test,
                                   wrong.annotations),
               DimMismatch);
}

TEST(TrainRun, MismatchedDimsRejected) {
  TempDir dir("icr_run_baddims");
  const GeneratedData data = generate_dataset(tiny_spec());
  ExperimentConfig cfg = tiny_config(Mode::Baseline);
  cfg.dims.d_img = 99;
  EXPECT_THROW(train_run(cfg, data.train, data.test, data.annotations, dir.path), ConfigInvalid);
}
