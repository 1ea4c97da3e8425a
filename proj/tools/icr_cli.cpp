// Command-line surface for the shortcut-reduction training framework:
//   gen-data    synthesize the paired-modality benchmark
//   train       run one training configuration
//   eval        evaluate a checkpoint on a test split
//   grad-check  finite-difference verification of every gradient path
//   sweep       serial parameter sweep, one run directory per value
//
// Exit codes: 0 success, 1 test/consistency failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icr/gradcheck_suite.hpp"
#include "icr/icr.hpp"

namespace fs = std::filesystem;
using icr::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw icr::IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw icr::ParseError(path + ": " + e.what());
  }
  return j;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  icr::DatasetSpec spec;
  if (!config_path.empty()) spec = read_json_file(config_path).get<icr::DatasetSpec>();
  spec.validate();
  const icr::GeneratedData data = icr::generate_dataset(spec);
  fs::create_directories(out_dir);
  icr::save_dataset(data.train, (fs::path(out_dir) / "train.jsonl").string());
  icr::save_dataset(data.test, (fs::path(out_dir) / "test.jsonl").string());
  icr::save_annotations(data.annotations, (fs::path(out_dir) / "annotations.json").string());
  std::cout << "wrote " << data.train.samples.size() << " train / " << data.test.samples.size()
            << " test samples to " << out_dir << "\n";
  if (data.shortcut_probe_accuracy) {
    std::cout << "shortcut probe accuracy (train): " << *data.shortcut_probe_accuracy << "\n";
    if (*data.shortcut_probe_accuracy < 0.99) {
      std::cerr << "error: shortcut channel too weak (probe < 0.99)\n";
      return 1;
    }
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  const icr::ExperimentConfig config = read_json_file(config_path).get<icr::ExperimentConfig>();
  const icr::Dataset train = icr::load_dataset((fs::path(data_dir) / "train.jsonl").string());
  const icr::Dataset test = icr::load_dataset((fs::path(data_dir) / "test.jsonl").string());
  const icr::RelevanceAnnotations ann =
      icr::load_annotations((fs::path(data_dir) / "annotations.json").string());

  std::cout << "mode=" << icr::to_string(config.mode) << " loss=" << icr::to_string(config.loss)
            << " epochs=" << config.epochs << " batch=" << config.batch_size
            << " optimizer=sgd+cosine (paper reference: AdamP, base lr 2e-4)\n";
  const icr::RunArtifacts artifacts = icr::train_run(config, train, test, ann, out_dir);
  std::cout << "duplicate-image batches: " << artifacts.duplicate_batch_fraction << "\n"
            << "recall sum (single-positive): " << artifacts.metrics.recall_sum << "\n"
            << "artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_file,
             const std::string& annotations, const std::string& out_file) {
  const icr::Dataset test = icr::load_dataset(data_file);
  const icr::RelevanceAnnotations ann = icr::load_annotations(annotations);
  const icr::MetricsReport report = icr::evaluate_checkpoint(checkpoint, test, ann);
  std::ofstream out(out_file);
  if (!out) throw icr::IoError("cannot open " + out_file);
  out << json(report).dump(2) << "\n";
  std::cout << "i2t r@1/5/10: " << report.i2t.r1 << " " << report.i2t.r5 << " " << report.i2t.r10
            << "  t2i r@1/5/10: " << report.t2i.r1 << " " << report.t2i.r5 << " "
            << report.t2i.r10 << "\n"
            << "report written to " << out_file << "\n";
  return 0;
}

int cmd_grad_check(std::uint64_t seed) {
  const bool ok = icr::run_gradcheck_suite(seed, 10, std::cout);
  return ok ? 0 : 1;
}

int cmd_sweep(const std::string& param, const std::string& values_csv,
              const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  json base = read_json_file(config_path);
  std::vector<double> values;
  std::stringstream ss(values_csv);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  if (values.empty()) throw icr::ConfigInvalid("sweep: no values given");

  const icr::Dataset train = icr::load_dataset((fs::path(data_dir) / "train.jsonl").string());
  const icr::Dataset test = icr::load_dataset((fs::path(data_dir) / "test.jsonl").string());
  const icr::RelevanceAnnotations ann =
      icr::load_annotations((fs::path(data_dir) / "annotations.json").string());

  for (double v : values) {
    json cfg_json = base;
    cfg_json[param] = v;
    icr::ExperimentConfig config;
    try {
      config = cfg_json.get<icr::ExperimentConfig>();
    } catch (const json::exception& e) {
      throw icr::ConfigInvalid("sweep: cannot set " + param + ": " + e.what());
    }
    std::ostringstream dir;
    dir << param << "_" << v;
    const fs::path run_dir = fs::path(out_dir) / dir.str();
    std::cout << "=== sweep " << param << " = " << v << " -> " << run_dir << "\n";
    const icr::RunArtifacts artifacts = icr::train_run(config, train, test, ann, run_dir);
    std::cout << "recall sum: " << artifacts.metrics.recall_sum << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-encoder contrastive retrieval with latent target decoding"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, checkpoint, data_file, annotations, out_file;
  std::string sweep_param, sweep_values;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic shortcut benchmark");
  gen->add_option("--config", config_path, "dataset spec JSON (defaults when omitted)");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one experiment configuration");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--data", data_dir, "directory with train.jsonl/test.jsonl/annotations.json")
      ->required();
  train->add_option("--out", out_dir, "run output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--data", data_file, "test split .jsonl")->required();
  ev->add_option("--annotations", annotations, "annotations JSON")->required();
  ev->add_option("--out", out_file, "metrics report output JSON")->required();

  auto* gc = app.add_subcommand("grad-check", "run the finite-difference gradient suite");
  gc->add_option("--seed", seed, "base seed");

  auto* sweep = app.add_subcommand("sweep", "serial sweep over one numeric config field");
  sweep->add_option("--param", sweep_param, "config field name, e.g. eta")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--config", config_path, "base experiment config JSON")->required();
  sweep->add_option("--data", data_dir, "dataset directory")->required();
  sweep->add_option("--out", out_dir, "sweep output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (ev->parsed()) return cmd_eval(checkpoint, data_file, annotations, out_file);
    if (gc->parsed()) return cmd_grad_check(seed);
    if (sweep->parsed()) return cmd_sweep(sweep_param, sweep_values, config_path, data_dir, out_dir);
  } catch (const icr::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
