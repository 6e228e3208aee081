#pragma once

// Executable surface behind the CLI: data generation, training, evaluation,
// expert-configuration ablations and the spatial-robustness protocol. Every
// command takes a JSON run config, honors its seed, and leaves a config echo
// in its output directory that reproduces the run bit-identically.

#include <cstdint>
#include <string>
#include <vector>

#include "msenet/model.hpp"
#include "msenet/synth.hpp"
#include "msenet/voc.hpp"

namespace msenet {

struct DatasetSpec {
  std::string name = "misaligned";
  SceneConfig scene;          // per-sequence seeds derive from run seed + name
  int train_sequences = 12;
  int test_sequences = 4;
};

struct AblationVariant {
  std::string name;
  ModelConfig model;  // full resolved model config for this variant
};

struct RunConfig {
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;

  std::string data_root = "data";
  std::string out_dir = "out";
  std::string checkpoint;       // input checkpoint for eval / robustness
  std::string dataset = "misaligned";  // which generated dataset to use

  ModelConfig model;

  std::string optimizer_kind = "sgd";
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 4;
  LossWeights loss_weights;

  std::vector<DatasetSpec> gen_datasets;

  std::vector<int> robustness_offsets = {3, 5, 8};

  std::vector<uint64_t> ablation_seeds = {1, 2, 3};
  std::vector<AblationVariant> ablation_variants;
  std::vector<std::pair<std::string, std::string>> ablation_pairs;

  int fps_warmup = 3;
  int fps_frames = 30;

  void validate() const;
};

RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);  // deterministic echo

// Subcommands. Results land under cfg.out_dir; every command writes
// config_echo.json first.
void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);
void cmd_robustness(const RunConfig& cfg);

// Full CLI: parses argv, dispatches, maps contract violations to exit code 1
// and I/O failures to exit code 2.
int run_cli(int argc, char** argv);

// Helpers shared with the acceptance suite.
struct EvalRunResult {
  double ap50 = 0, ap = 0, fps = 0;
};

// Inference + decode + NMS + metrics over one split of a loaded dataset.
EvalRunResult evaluate_split(MseNet<float>& model, const Dataset& ds,
                             const std::string& split, bool measure_throughput,
                             int fps_warmup, int fps_frames,
                             const std::string& csv_path,
                             const std::string& report_path);

uint64_t fnv1a64(const std::string& s);

}  // namespace msenet
