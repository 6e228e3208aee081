#include "msenet/harness.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>

#include "msenet/eval.hpp"
#include "msenet/train.hpp"
#include "msenet/voc.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace msenet {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// --- config parsing ---------------------------------------------------------

namespace {

ModelConfig model_from_json(const json& j, ModelConfig base) {
  ModelConfig m = std::move(base);
  if (j.contains("widths")) m.widths = j.at("widths").get<std::vector<int>>();
  m.n_bins = j.value("n_bins", m.n_bins);
  m.num_classes = j.value("num_classes", m.num_classes);
  if (j.contains("rgb_size")) {
    m.rgb_w = j.at("rgb_size").at(0).get<int>();
    m.rgb_h = j.at("rgb_size").at(1).get<int>();
  }
  if (j.contains("thermal_size")) {
    m.thermal_w = j.at("thermal_size").at(0).get<int>();
    m.thermal_h = j.at("thermal_size").at(1).get<int>();
  }
  m.nms_iou = j.value("nms_iou", m.nms_iou);
  m.conf_threshold = j.value("conf_threshold", m.conf_threshold);
  if (j.contains("experts")) {
    m.experts.clear();
    for (const auto& e : j.at("experts")) {
      ExpertConfig cfg;
      cfg.scale = e.at(0).get<double>();
      cfg.noise_sigma = e.size() > 1 ? e.at(1).get<double>() : 0.02;
      m.experts.push_back(cfg);
    }
  }
  m.use_mse = j.value("use_mse", m.use_mse);
  m.use_tiim = j.value("use_tiim", m.use_tiim);
  m.use_score_branch = j.value("use_score_branch", m.use_score_branch);
  m.use_anchor_noise = j.value("use_anchor_noise", m.use_anchor_noise);
  m.use_deformable = j.value("use_deformable", m.use_deformable);
  return m;
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["widths"] = m.widths;
  j["n_bins"] = m.n_bins;
  j["num_classes"] = m.num_classes;
  j["rgb_size"] = {m.rgb_w, m.rgb_h};
  j["thermal_size"] = {m.thermal_w, m.thermal_h};
  j["nms_iou"] = m.nms_iou;
  j["conf_threshold"] = m.conf_threshold;
  json experts = json::array();
  for (const auto& e : m.experts) experts.push_back({e.scale, e.noise_sigma});
  j["experts"] = experts;
  j["use_mse"] = m.use_mse;
  j["use_tiim"] = m.use_tiim;
  j["use_score_branch"] = m.use_score_branch;
  j["use_anchor_noise"] = m.use_anchor_noise;
  j["use_deformable"] = m.use_deformable;
  return j;
}

SceneConfig scene_from_json(const json& j, SceneConfig base) {
  SceneConfig s = std::move(base);
  if (j.contains("rgb_size")) {
    s.rgb_w = j.at("rgb_size").at(0).get<int>();
    s.rgb_h = j.at("rgb_size").at(1).get<int>();
  }
  if (j.contains("thermal_size")) {
    s.thermal_w = j.at("thermal_size").at(0).get<int>();
    s.thermal_h = j.at("thermal_size").at(1).get<int>();
  }
  s.modal_scale = j.value("modal_scale", s.modal_scale);
  if (j.contains("offset")) {
    s.modal_offset_x = j.at("offset").at(0).get<double>();
    s.modal_offset_y = j.at("offset").at(1).get<double>();
  }
  s.jitter_sigma = j.value("jitter_sigma", s.jitter_sigma);
  if (j.contains("objects")) {
    s.min_objects = j.at("objects").at(0).get<int>();
    s.max_objects = j.at("objects").at(1).get<int>();
  }
  s.min_size = j.value("min_size", s.min_size);
  s.max_size = j.value("max_size", s.max_size);
  s.max_speed = j.value("max_speed", s.max_speed);
  s.rgb_bg = j.value("rgb_bg", s.rgb_bg);
  s.rgb_noise_sigma = j.value("rgb_noise_sigma", s.rgb_noise_sigma);
  s.illumination = j.value("illumination", s.illumination);
  s.illumination_flicker = j.value("illumination_flicker", s.illumination_flicker);
  s.thermal_hot = j.value("thermal_hot", s.thermal_hot);
  s.thermal_bg = j.value("thermal_bg", s.thermal_bg);
  s.frames = j.value("frames", s.frames);
  return s;
}

json scene_to_json(const SceneConfig& s) {
  json j;
  j["rgb_size"] = {s.rgb_w, s.rgb_h};
  j["thermal_size"] = {s.thermal_w, s.thermal_h};
  j["modal_scale"] = s.modal_scale;
  j["offset"] = {s.modal_offset_x, s.modal_offset_y};
  j["jitter_sigma"] = s.jitter_sigma;
  j["objects"] = {s.min_objects, s.max_objects};
  j["min_size"] = s.min_size;
  j["max_size"] = s.max_size;
  j["max_speed"] = s.max_speed;
  j["rgb_bg"] = s.rgb_bg;
  j["rgb_noise_sigma"] = s.rgb_noise_sigma;
  j["illumination"] = s.illumination;
  j["illumination_flicker"] = s.illumination_flicker;
  j["thermal_hot"] = s.thermal_hot;
  j["thermal_bg"] = s.thermal_bg;
  j["frames"] = s.frames;
  return j;
}

std::vector<DatasetSpec> default_presets() {
  DatasetSpec misaligned;
  misaligned.name = "misaligned";
  misaligned.scene.modal_scale = 0.6;
  misaligned.scene.modal_offset_x = 4.0;
  misaligned.scene.modal_offset_y = -3.0;
  misaligned.scene.jitter_sigma = 0.5;

  DatasetSpec aligned;
  aligned.name = "aligned";
  aligned.scene.modal_scale = 1.0;
  aligned.scene.modal_offset_x = 0.0;
  aligned.scene.modal_offset_y = 0.0;
  aligned.scene.jitter_sigma = 0.0;
  return {misaligned, aligned};
}

}  // namespace

void RunConfig::validate() const {
  MSENET_REQUIRE(seed_set, "run config: seed is mandatory");
  MSENET_REQUIRE(threads >= 1, "run config: threads must be >= 1");
  MSENET_REQUIRE(lr > 0.0, "run config: lr must be > 0");
  MSENET_REQUIRE(optimizer_kind == "sgd", "run config: unknown optimizer '",
                 optimizer_kind, "'");
  MSENET_REQUIRE(epochs >= 1 && batch_size >= 1, "run config: bad train budget");
  model.validate();
  for (const auto& d : gen_datasets) d.scene.validate();
  for (const auto& v : ablation_variants) v.model.validate();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("cannot open config: ", path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    fail_io("config ", path, ": ", e.what());
  }

  RunConfig cfg;
  try {
    if (j.contains("seed")) {
      cfg.seed = j.at("seed").get<uint64_t>();
      cfg.seed_set = true;
    }
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      cfg.data_root = p.value("data_root", cfg.data_root);
      cfg.out_dir = p.value("out_dir", cfg.out_dir);
      cfg.checkpoint = p.value("checkpoint", cfg.checkpoint);
      cfg.dataset = p.value("dataset", cfg.dataset);
    }
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"), ModelConfig{});
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      cfg.optimizer_kind = o.value("kind", cfg.optimizer_kind);
      cfg.lr = o.value("lr", cfg.lr);
      cfg.momentum = o.value("momentum", cfg.momentum);
    }
    if (j.contains("train")) {
      cfg.epochs = j.at("train").value("epochs", cfg.epochs);
      cfg.batch_size = j.at("train").value("batch_size", cfg.batch_size);
    }
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      cfg.loss_weights.cls = w.value("cls", cfg.loss_weights.cls);
      cfg.loss_weights.box_ciou = w.value("ciou", cfg.loss_weights.box_ciou);
      cfg.loss_weights.dfl = w.value("dfl", cfg.loss_weights.dfl);
    }
    if (j.contains("gen") && j.at("gen").contains("datasets")) {
      for (const auto& d : j.at("gen").at("datasets")) {
        DatasetSpec spec;
        spec.name = d.value("name", spec.name);
        spec.scene = scene_from_json(d, SceneConfig{});
        spec.train_sequences = d.value("train_sequences", spec.train_sequences);
        spec.test_sequences = d.value("test_sequences", spec.test_sequences);
        cfg.gen_datasets.push_back(std::move(spec));
      }
    } else {
      cfg.gen_datasets = default_presets();
    }
    if (j.contains("robustness") && j.at("robustness").contains("offsets")) {
      cfg.robustness_offsets =
          j.at("robustness").at("offsets").get<std::vector<int>>();
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      if (a.contains("seeds"))
        cfg.ablation_seeds = a.at("seeds").get<std::vector<uint64_t>>();
      if (a.contains("variants")) {
        for (const auto& v : a.at("variants")) {
          AblationVariant var;
          var.name = v.at("name").get<std::string>();
          var.model = model_from_json(v, cfg.model);
          cfg.ablation_variants.push_back(std::move(var));
        }
      }
      if (a.contains("pairs")) {
        for (const auto& p : a.at("pairs")) {
          cfg.ablation_pairs.emplace_back(p.at(0).get<std::string>(),
                                          p.at(1).get<std::string>());
        }
      }
    }
    if (j.contains("eval")) {
      cfg.fps_warmup = j.at("eval").value("fps_warmup", cfg.fps_warmup);
      cfg.fps_frames = j.at("eval").value("fps_frames", cfg.fps_frames);
    }
  } catch (const json::exception& e) {
    fail_io("config ", path, ": ", e.what());
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["paths"] = {{"data_root", cfg.data_root},
                {"out_dir", cfg.out_dir},
                {"checkpoint", cfg.checkpoint},
                {"dataset", cfg.dataset}};
  j["model"] = model_to_json(cfg.model);
  j["optimizer"] = {{"kind", cfg.optimizer_kind}, {"lr", cfg.lr}, {"momentum", cfg.momentum}};
  j["train"] = {{"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}};
  j["loss_weights"] = {{"cls", cfg.loss_weights.cls},
                       {"ciou", cfg.loss_weights.box_ciou},
                       {"dfl", cfg.loss_weights.dfl}};
  json datasets = json::array();
  for (const auto& d : cfg.gen_datasets) {
    json dj = scene_to_json(d.scene);
    dj["name"] = d.name;
    dj["train_sequences"] = d.train_sequences;
    dj["test_sequences"] = d.test_sequences;
    datasets.push_back(dj);
  }
  j["gen"] = {{"datasets", datasets}};
  j["robustness"] = {{"offsets", cfg.robustness_offsets}};
  json variants = json::array();
  for (const auto& v : cfg.ablation_variants) {
    json vj = model_to_json(v.model);
    vj["name"] = v.name;
    variants.push_back(vj);
  }
  json pairs = json::array();
  for (const auto& [a, b] : cfg.ablation_pairs) pairs.push_back({a, b});
  j["ablation"] = {{"seeds", cfg.ablation_seeds},
                   {"variants", variants},
                   {"pairs", pairs}};
  j["eval"] = {{"fps_warmup", cfg.fps_warmup}, {"fps_frames", cfg.fps_frames}};
  return j.dump(2) + "\n";
}

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) fail_io("cannot open for writing: ", path);
  f << content;
  if (!f) fail_io("failed writing ", path);
}

void write_config_echo(const RunConfig& cfg, const std::string& dir,
                       const std::string& command) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_io("cannot create output dir ", dir, ": ", ec.message());
  json j = json::parse(run_config_to_json(cfg));
  j["command"] = command;
  write_text((fs::path(dir) / "config_echo.json").string(), j.dump(2) + "\n");
}

std::string arch_sidecar_path(const std::string& checkpoint) {
  return checkpoint + ".arch.json";
}

void save_model(MseNet<float>& model, const std::string& checkpoint) {
  model.params().save(checkpoint);
  write_text(arch_sidecar_path(checkpoint),
             model_to_json(model.config()).dump(2) + "\n");
}

MseNet<float> load_model(const ModelConfig& expected, const std::string& checkpoint) {
  const auto sidecar = arch_sidecar_path(checkpoint);
  std::ifstream f(sidecar);
  if (!f) fail_io("missing architecture sidecar: ", sidecar);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    fail_io("sidecar ", sidecar, ": ", e.what());
  }
  const ModelConfig stored = model_from_json(j, ModelConfig{});
  MSENET_REQUIRE(stored == expected,
                 "refusing to load ", checkpoint,
                 ": architecture sidecar does not match the run config");
  auto model = MseNet<float>::create(expected, 0);
  model.params().load(checkpoint);
  return model;
}

}  // namespace

EvalRunResult evaluate_split(MseNet<float>& model, const Dataset& ds,
                             const std::string& split, bool measure_throughput,
                             int fps_warmup, int fps_frames,
                             const std::string& csv_path,
                             const std::string& report_path) {
  const auto items = make_train_items(ds, split);
  MSENET_REQUIRE(!items.empty(), "evaluate_split: split '", split, "' is empty");

  std::vector<std::vector<Detection>> dets_per_frame;
  std::vector<std::vector<GtBox>> gts_per_frame;
  std::mt19937_64 rng(0);  // inference draws nothing from it
  for (const auto& item : items) {
    auto rgb = image_batch<float>({item.cur}, true);
    auto thermal = image_batch<float>({item.cur}, false);
    auto prev = image_batch<float>({item.prev}, true);
    auto raw = model.forward(rgb, thermal, prev, rng, false);
    dets_per_frame.push_back(nms(model.decode(raw)[0], model.config().nms_iou));
    gts_per_frame.push_back(item.cur->gts);
  }

  auto result = evaluate(dets_per_frame, gts_per_frame, model.config().num_classes);

  if (measure_throughput) {
    const int n = std::min<int>((int)items.size(), std::max(1, fps_frames));
    result.fps = measure_fps(
        [&](int i) {
          const auto& item = items[(size_t)(i % n)];
          auto rgb = image_batch<float>({item.cur}, true);
          auto thermal = image_batch<float>({item.cur}, false);
          auto prev = image_batch<float>({item.prev}, true);
          model.detect(rgb, thermal, prev);
        },
        fps_warmup, n);
  }

  if (!csv_path.empty()) write_eval_csv(csv_path, result, ds.class_names);
  if (!report_path.empty()) write_eval_report(report_path, result, ds.class_names);

  EvalRunResult out;
  out.ap50 = result.ap50;
  out.ap = result.ap_avg;
  out.fps = result.fps;
  return out;
}

// --- subcommands -------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg) {
  write_config_echo(cfg, cfg.out_dir, "gen-data");
  MSENET_REQUIRE(!cfg.gen_datasets.empty(), "gen-data: no datasets configured");
  for (const auto& spec : cfg.gen_datasets) {
    const fs::path root = fs::path(cfg.data_root) / spec.name;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) fail_io("cannot create ", root.string(), ": ", ec.message());

    std::vector<ManifestEntry> manifest;
    const int total = spec.train_sequences + spec.test_sequences;
    for (int i = 0; i < total; ++i) {
      SceneConfig scene = spec.scene;
      char id[16];
      std::snprintf(id, sizeof(id), "seq%03d", i);
      scene.sequence_id = id;
      scene.seed = cfg.seed * 1000003ULL + fnv1a64(spec.name) + (uint64_t)i;
      auto frames = gen_sequence(scene);
      write_sequence(root.string(), frames);
      manifest.push_back(
          {scene.sequence_id, scene.frames, i < spec.train_sequences ? "train" : "test"});
    }
    write_manifest(root.string(), manifest);

    json echo = scene_to_json(spec.scene);
    echo["name"] = spec.name;
    echo["train_sequences"] = spec.train_sequences;
    echo["test_sequences"] = spec.test_sequences;
    echo["base_seed"] = cfg.seed;
    write_text((root / "config_echo.json").string(), echo.dump(2) + "\n");
    std::cout << "gen-data: wrote " << total << " sequences under "
              << root.string() << "\n";
  }
}

void cmd_train(const RunConfig& cfg) {
  write_config_echo(cfg, cfg.out_dir, "train");
  const auto ds = load_dataset((fs::path(cfg.data_root) / cfg.dataset).string());
  const auto items = make_train_items(ds, "train");
  MSENET_REQUIRE((int)ds.class_names.size() == cfg.model.num_classes,
                 "train: dataset has ", ds.class_names.size(),
                 " classes, model expects ", cfg.model.num_classes);

  auto model = MseNet<float>::create(cfg.model, cfg.seed);
  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.lr = cfg.lr;
  opts.momentum = cfg.momentum;
  opts.weights = cfg.loss_weights;
  opts.seed = cfg.seed;

  std::ofstream log(fs::path(cfg.out_dir) / "train_log.jsonl");
  if (!log) fail_io("cannot open train log under ", cfg.out_dir);
  train_model<float>(model, items, opts, [&](const EpochStats& es) {
    json line = {{"epoch", es.epoch},     {"loss", es.loss},
                 {"cls", es.cls},         {"ciou", es.box_ciou},
                 {"dfl", es.dfl},         {"positives", es.positives},
                 {"seconds", es.seconds}};
    log << line.dump() << "\n";
    log.flush();
    std::cout << "epoch " << es.epoch << " loss " << es.loss << "\n";
  });

  const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  save_model(model, ckpt);
  std::cout << "train: checkpoint at " << ckpt << "\n";
}

void cmd_eval(const RunConfig& cfg) {
  write_config_echo(cfg, cfg.out_dir, "eval");
  MSENET_REQUIRE(!cfg.checkpoint.empty(), "eval: config must name a checkpoint");
  const auto ds = load_dataset((fs::path(cfg.data_root) / cfg.dataset).string());
  auto model = load_model(cfg.model, cfg.checkpoint);
  const auto res = evaluate_split(
      model, ds, "test", true, cfg.fps_warmup, cfg.fps_frames,
      (fs::path(cfg.out_dir) / "eval_ap.csv").string(),
      (fs::path(cfg.out_dir) / "eval_report.txt").string());
  char buf[128];
  std::snprintf(buf, sizeof(buf), "AP50=%.4f AP=%.4f FPS=%.2f\n", res.ap50,
                res.ap, res.fps);
  std::cout << buf;
}

void cmd_ablate(const RunConfig& cfg) {
  write_config_echo(cfg, cfg.out_dir, "ablate");
  MSENET_REQUIRE(!cfg.ablation_variants.empty(), "ablate: empty variant grid");
  const auto ds = load_dataset((fs::path(cfg.data_root) / cfg.dataset).string());
  const auto items = make_train_items(ds, "train");

  std::map<std::string, std::vector<double>> ap50_by_variant;
  std::ofstream csv(fs::path(cfg.out_dir) / "ablation_results.csv");
  if (!csv) fail_io("cannot open ablation_results.csv under ", cfg.out_dir);
  csv << "variant,ap50,ap,seed\n";
  char buf[160];
  for (const auto& variant : cfg.ablation_variants) {
    for (uint64_t seed : cfg.ablation_seeds) {
      auto model = MseNet<float>::create(variant.model, seed);
      TrainOptions opts;
      opts.epochs = cfg.epochs;
      opts.batch_size = cfg.batch_size;
      opts.lr = cfg.lr;
      opts.momentum = cfg.momentum;
      opts.weights = cfg.loss_weights;
      opts.seed = seed;
      train_model<float>(model, items, opts);

      const fs::path vdir =
          fs::path(cfg.out_dir) / variant.name / ("seed" + std::to_string(seed));
      std::error_code ec;
      fs::create_directories(vdir, ec);
      const auto res = evaluate_split(model, ds, "test", false, 0, 0,
                                      (vdir / "eval_ap.csv").string(),
                                      (vdir / "eval_report.txt").string());
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%llu\n", variant.name.c_str(),
                    res.ap50, res.ap, (unsigned long long)seed);
      csv << buf;
      csv.flush();
      ap50_by_variant[variant.name].push_back(res.ap50);
      std::cout << "ablate: " << variant.name << " seed " << seed << " AP50 "
                << res.ap50 << "\n";
    }
  }

  std::ofstream verdicts(fs::path(cfg.out_dir) / "ablation_verdicts.csv");
  if (!verdicts) fail_io("cannot open ablation_verdicts.csv under ", cfg.out_dir);
  verdicts << "lhs,rhs,lhs_mean_ap50,rhs_mean_ap50,verdict\n";
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / (double)v.size();
  };
  for (const auto& [lhs, rhs] : cfg.ablation_pairs) {
    MSENET_REQUIRE(ap50_by_variant.count(lhs) && ap50_by_variant.count(rhs),
                   "ablate: verdict pair (", lhs, ", ", rhs,
                   ") names unknown variants");
    const double ml = mean(ap50_by_variant[lhs]);
    const double mr = mean(ap50_by_variant[rhs]);
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%s\n", lhs.c_str(),
                  rhs.c_str(), ml, mr, ml > mr ? "confirmed" : "not-confirmed");
    verdicts << buf;
  }
}

void cmd_robustness(const RunConfig& cfg) {
  write_config_echo(cfg, cfg.out_dir, "robustness");
  MSENET_REQUIRE(!cfg.checkpoint.empty(),
                 "robustness: config must name a checkpoint");
  const auto ds = load_dataset((fs::path(cfg.data_root) / cfg.dataset).string());
  auto model = load_model(cfg.model, cfg.checkpoint);

  std::ofstream csv(fs::path(cfg.out_dir) / "robustness.csv");
  if (!csv) fail_io("cannot open robustness.csv under ", cfg.out_dir);
  csv << "modality,offset_px,ap50,ap\n";
  char buf[128];

  auto eval_ds = [&](const Dataset& data) {
    return evaluate_split(model, data, "test", false, 0, 0, "", "");
  };

  const auto base = eval_ds(ds);
  std::snprintf(buf, sizeof(buf), "none,0,%.6f,%.6f\n", base.ap50, base.ap);
  csv << buf;

  for (const auto& [modality, name] :
       {std::pair{Modality::Rgb, "rgb"}, std::pair{Modality::Thermal, "thermal"}}) {
    for (int offset : cfg.robustness_offsets) {
      Dataset shifted = ds;
      for (auto& seq : shifted.sequences) {
        if (seq.split != "test") continue;
        seq.frames = spatial_transform(seq.frames, modality, offset, 0, true);
      }
      const auto res = eval_ds(shifted);
      std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f\n", name, offset,
                    res.ap50, res.ap);
      csv << buf;
      csv.flush();
      std::cout << "robustness: " << name << " offset " << offset << " AP50 "
                << res.ap50 << "\n";
    }
  }
}

// --- CLI ---------------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"alignment-free RGBT video object detection workbench"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_given = false;
  };

  std::map<std::string, std::pair<CLI::App*, void (*)(const RunConfig&)>> commands;
  Args args;
  auto add_command = [&](const std::string& name, const std::string& desc,
                         void (*fn)(const RunConfig&)) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", args.config, "run config (JSON)")->required();
    sub->add_option("--out", args.out, "output directory override");
    sub->add_option("--seed", args.seed, "seed override")
        ->each([&](const std::string&) { args.seed_given = true; });
    commands[name] = {sub, fn};
  };
  add_command("gen-data", "generate synthetic RGBT datasets", &cmd_gen_data);
  add_command("train", "train a model on a generated dataset", &cmd_train);
  add_command("eval", "evaluate a checkpoint on the test split", &cmd_eval);
  add_command("ablate", "train and compare ablation variants", &cmd_ablate);
  add_command("robustness", "evaluate under spatial transforms", &cmd_robustness);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    auto cfg = load_run_config(args.config);
    if (args.seed_given) {
      cfg.seed = args.seed;
      cfg.seed_set = true;
    }
    if (!args.out.empty()) cfg.out_dir = args.out;
    cfg.validate();
#ifdef _OPENMP
    omp_set_num_threads(cfg.threads);
#endif
    for (const auto& [name, entry] : commands) {
      if (entry.first->parsed()) {
        entry.second(cfg);
        return 0;
      }
    }
    fail_contract("no subcommand parsed");
  } catch (const contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace msenet
