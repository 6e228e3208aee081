#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "msenet/nn_ops.hpp"
#include "msenet/synth.hpp"
#include "msenet/voc.hpp"

using msenet::BBox;
using msenet::Frame;
using msenet::FramePair;
using msenet::Modality;
using msenet::SceneConfig;

namespace {

SceneConfig clean_config() {
  SceneConfig cfg;
  cfg.rgb_noise_sigma = 0.0;
  cfg.illumination = 1.0;
  cfg.illumination_flicker = 0.0;
  cfg.jitter_sigma = 0.0;
  return cfg;
}

// intensity-weighted centroid of (value - background), thermal pixel coords
bool thermal_centroid(const FramePair& fp, double bg, double& cx, double& cy) {
  double sw = 0, sx = 0, sy = 0;
  for (int y = 0; y < fp.thermal_h; ++y) {
    for (int x = 0; x < fp.thermal_w; ++x) {
      const double w = std::max(0.0, (double)fp.thermal[(size_t)y * fp.thermal_w + x] - bg - 0.05);
      sw += w;
      sx += w * (x + 0.5);
      sy += w * (y + 0.5);
    }
  }
  if (sw <= 0) return false;
  cx = sx / sw;
  cy = sy / sw;
  return true;
}

}  // namespace

TEST_CASE("gen_sequence: same seed gives bit-identical sequences") {
  SceneConfig cfg;
  cfg.seed = 7;
  cfg.frames = 5;
  cfg.jitter_sigma = 0.5;
  auto a = msenet::gen_sequence(cfg);
  auto b = msenet::gen_sequence(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rgb == b[i].rgb);
    CHECK(a[i].thermal == b[i].thermal);
    REQUIRE(a[i].gts.size() == b[i].gts.size());
    for (size_t j = 0; j < a[i].gts.size(); ++j) {
      CHECK(a[i].gts[j].box.x == b[i].gts[j].box.x);
      CHECK(a[i].gts[j].class_id == b[i].gts[j].class_id);
    }
  }
}

TEST_CASE("gen_sequence: GT boxes intersect the frame and carry the RGB tag") {
  SceneConfig cfg;
  cfg.seed = 11;
  cfg.frames = 30;
  for (const auto& fp : msenet::gen_sequence(cfg)) {
    for (const auto& gt : fp.gts) {
      CHECK(gt.box.frame == Frame::RgbPx);
      CHECK(gt.box.x2() > 0);
      CHECK(gt.box.x1() < cfg.rgb_w);
      CHECK(gt.box.y2() > 0);
      CHECK(gt.box.y1() < cfg.rgb_h);
      CHECK(gt.box.w > 0);
      CHECK(gt.box.h > 0);
    }
  }
}

TEST_CASE("gen_sequence: aligned case maps thermal centroids onto RGB centroids") {
  auto cfg = clean_config();
  cfg.modal_scale = 1.0;
  cfg.modal_offset_x = 0;
  cfg.modal_offset_y = 0;
  cfg.min_objects = 1;
  cfg.max_objects = 1;
  cfg.frames = 1;
  const auto geo = cfg.geometry();
  int checked = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed + 100;
    auto seq = msenet::gen_sequence(cfg);
    double tx, ty;
    if (!thermal_centroid(seq[0], cfg.thermal_bg, tx, ty)) continue;
    const BBox centroid{tx, ty, 1, 1, Frame::ThermalPx};
    const BBox in_rgb = msenet::map_box(centroid, Frame::RgbPx, geo);
    const auto& gt = seq[0].gts[0].box;
    CHECK(std::abs(in_rgb.x - gt.x) <= 1.0 * geo.rgb_w / geo.thermal_w);
    CHECK(std::abs(in_rgb.y - gt.y) <= 1.0 * geo.rgb_h / geo.thermal_h);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("gen_sequence: objects inside the 0.6 window land within 1 thermal px") {
  auto cfg = clean_config();
  cfg.modal_scale = 0.6;
  cfg.modal_offset_x = 3;
  cfg.modal_offset_y = -2;
  cfg.min_objects = 1;
  cfg.max_objects = 1;
  cfg.frames = 1;
  const auto geo = cfg.geometry();
  const double win_w = cfg.modal_scale * cfg.rgb_w;
  const double win_h = cfg.modal_scale * cfg.rgb_h;
  const double wx = cfg.rgb_w / 2.0 + cfg.modal_offset_x;
  const double wy = cfg.rgb_h / 2.0 + cfg.modal_offset_y;
  int checked = 0;
  for (uint64_t seed = 0; seed < 200 && checked < 12; ++seed) {
    cfg.seed = 200 + seed;
    auto seq = msenet::gen_sequence(cfg);
    const auto& gt = seq[0].gts[0].box;
    // only fully-inside objects
    if (gt.x1() < wx - win_w / 2 || gt.x2() > wx + win_w / 2 ||
        gt.y1() < wy - win_h / 2 || gt.y2() > wy + win_h / 2)
      continue;
    double tx, ty;
    REQUIRE(thermal_centroid(seq[0], cfg.thermal_bg, tx, ty));
    const BBox mapped = msenet::map_box(gt, Frame::ThermalPx, geo);
    CHECK(std::abs(tx - mapped.x) <= 1.0);
    CHECK(std::abs(ty - mapped.y) <= 1.0);
    ++checked;
  }
  CHECK(checked >= 12);
}

TEST_CASE("gen_sequence: objects outside the 0.6 window leave no thermal trace") {
  auto cfg = clean_config();
  cfg.modal_scale = 0.6;
  cfg.modal_offset_x = 0;
  cfg.modal_offset_y = 0;
  cfg.frames = 1;
  const double win_w = cfg.modal_scale * cfg.rgb_w;
  const double win_h = cfg.modal_scale * cfg.rgb_h;
  const double wx = cfg.rgb_w / 2.0, wy = cfg.rgb_h / 2.0;
  const double win_x1 = wx - win_w / 2, win_y1 = wy - win_h / 2;

  int scenes_with_outside_objects = 0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    cfg.seed = 300 + seed;
    auto seq = msenet::gen_sequence(cfg);
    const auto& fp = seq[0];

    bool any_outside = false;
    for (const auto& gt : fp.gts) {
      const bool outside = gt.box.x2() < win_x1 || gt.box.x1() > win_x1 + win_w ||
                           gt.box.y2() < win_y1 || gt.box.y1() > win_y1 + win_h;
      any_outside = any_outside || outside;
    }
    if (any_outside) ++scenes_with_outside_objects;

    // every hot pixel must belong to an object that intersects the window
    for (int ty = 0; ty < fp.thermal_h; ++ty) {
      for (int tx = 0; tx < fp.thermal_w; ++tx) {
        const double v = fp.thermal[(size_t)ty * fp.thermal_w + tx];
        if (v < cfg.thermal_bg + 0.1) continue;
        const double rx = win_x1 + (tx + 0.5) * win_w / fp.thermal_w;
        const double ry = win_y1 + (ty + 0.5) * win_h / fp.thermal_h;
        bool claimed = false;
        for (const auto& gt : fp.gts) {
          const bool intersects_window =
              !(gt.box.x2() < win_x1 || gt.box.x1() > win_x1 + win_w ||
                gt.box.y2() < win_y1 || gt.box.y1() > win_y1 + win_h);
          if (!intersects_window) continue;
          if (rx >= gt.box.x1() - 1.5 && rx <= gt.box.x2() + 1.5 &&
              ry >= gt.box.y1() - 1.5 && ry <= gt.box.y2() + 1.5) {
            claimed = true;
            break;
          }
        }
        CHECK(claimed);
      }
    }
  }
  CHECK(scenes_with_outside_objects > 10);
}

TEST_CASE("scale-expert premise: the matching crop correlates best with thermal") {
  // thermal content is the centered 0.6 window of the world; the 0.6 crop of
  // the RGB view should explain it better than the full-frame crop
  auto cfg = clean_config();
  cfg.modal_scale = 0.6;
  cfg.modal_offset_x = 0;
  cfg.modal_offset_y = 0;
  cfg.illumination = 0.8;
  cfg.frames = 1;
  cfg.min_objects = 2;
  cfg.max_objects = 4;

  auto pearson = [](const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= (double)n;
    mb /= (double)n;
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
      cov += (a[i] - ma) * (b[i] - mb);
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb + 1e-12);
  };

  int wins = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    cfg.seed = 1000 + (uint64_t)trial;
    auto fp = msenet::gen_sequence(cfg)[0];

    // grayscale RGB as a single-channel tensor
    std::vector<double> gray((size_t)fp.rgb_h * fp.rgb_w);
    for (size_t i = 0; i < gray.size(); ++i) {
      gray[i] = (fp.rgb[i] + fp.rgb[gray.size() + i] + fp.rgb[2 * gray.size() + i]) / 3.0;
    }
    auto rgb_t = msenet::Tensor<double>::from_values({1, 1, fp.rgb_h, fp.rgb_w},
                                                     std::move(gray));
    std::vector<double> th(fp.thermal.begin(), fp.thermal.end());

    auto crop_vals = [&](double scale) {
      const BBox box{0.5, 0.5, scale, scale, Frame::Normalized};
      auto crop = msenet::crop_resize(rgb_t, box, fp.thermal_h, fp.thermal_w);
      return std::vector<double>(crop.values().begin(), crop.values().end());
    };
    const double r_match = pearson(crop_vals(0.6), th);
    const double r_full = pearson(crop_vals(1.0), th);
    if (r_match > r_full) ++wins;
  }
  CHECK(wins >= 90);
}

TEST_CASE("spatial_transform: zero offset is the identity") {
  SceneConfig cfg;
  cfg.seed = 5;
  cfg.frames = 2;
  auto seq = msenet::gen_sequence(cfg);
  auto moved = msenet::spatial_transform(seq, Modality::Rgb, 0, 0, true);
  for (size_t i = 0; i < seq.size(); ++i) {
    CHECK(moved[i].rgb == seq[i].rgb);
    CHECK(moved[i].thermal == seq[i].thermal);
  }
}

TEST_CASE("spatial_transform: circular shifts invert exactly") {
  SceneConfig cfg;
  cfg.seed = 6;
  cfg.frames = 2;
  auto seq = msenet::gen_sequence(cfg);
  auto there = msenet::spatial_transform(seq, Modality::Thermal, 5, 0, false);
  auto back = msenet::spatial_transform(there, Modality::Thermal, -5, 0, false);
  for (size_t i = 0; i < seq.size(); ++i) {
    CHECK(back[i].thermal == seq[i].thermal);
    // the untouched modality is bit-identical throughout
    CHECK(there[i].rgb == seq[i].rgb);
  }
}

TEST_CASE("spatial_transform: crop shift displaces pixels, annotations stay") {
  SceneConfig cfg;
  cfg.seed = 8;
  cfg.frames = 1;
  auto seq = msenet::gen_sequence(cfg);
  const int dx = 3;
  auto moved = msenet::spatial_transform(seq, Modality::Rgb, dx, 0, true);
  const auto& a = seq[0];
  const auto& b = moved[0];
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < a.rgb_h; ++y) {
      for (int x = 0; x + dx < a.rgb_w; ++x) {
        CHECK(b.rgb[(size_t)(c * a.rgb_h + y) * a.rgb_w + x + dx] ==
              a.rgb[(size_t)(c * a.rgb_h + y) * a.rgb_w + x]);
      }
      for (int x = 0; x < dx; ++x)
        CHECK(b.rgb[(size_t)(c * a.rgb_h + y) * a.rgb_w + x] == 0.0f);
    }
  }
  REQUIRE(b.gts.size() == a.gts.size());
  for (size_t i = 0; i < a.gts.size(); ++i) CHECK(b.gts[i].box.x == a.gts[i].box.x);
}

TEST_CASE("spatial_transform rejects offsets beyond the frame") {
  SceneConfig cfg;
  cfg.seed = 9;
  cfg.frames = 1;
  auto seq = msenet::gen_sequence(cfg);
  CHECK_THROWS_AS(msenet::spatial_transform(seq, Modality::Thermal, 64, 0, true),
                  msenet::contract_error);
}

// ---------------------------------------------------------------------------
// VOC annotations and the on-disk layout
// ---------------------------------------------------------------------------

TEST_CASE("voc: center format converts to integer corners") {
  FramePair fp;
  fp.sequence_id = "seq000";
  fp.rgb_w = 160;
  fp.rgb_h = 120;
  fp.gts.push_back({BBox{40, 40, 20, 10, Frame::RgbPx}, 0});
  auto ann = msenet::to_voc(fp);
  REQUIRE(ann.objects.size() == 1);
  CHECK(ann.objects[0].xmin == 30);
  CHECK(ann.objects[0].ymin == 35);
  CHECK(ann.objects[0].xmax == 50);
  CHECK(ann.objects[0].ymax == 45);
  CHECK(ann.objects[0].name == "block");
}

TEST_CASE("voc round trip is lossless, including empty frames") {
  const auto dir = std::filesystem::temp_directory_path() / "msenet_voc_test";
  std::filesystem::create_directories(dir);

  SceneConfig cfg;
  cfg.seed = 10;
  cfg.frames = 3;
  auto seq = msenet::gen_sequence(cfg);
  seq[1].gts.clear();  // exercise the empty-frame record

  for (const auto& fp : seq) {
    const auto path = dir / ("f" + std::to_string(fp.frame_index) + ".xml");
    auto ann = msenet::to_voc(fp);
    msenet::write_voc_xml(path.string(), ann);
    auto loaded = msenet::read_voc_xml(path.string());
    CHECK(loaded.folder == ann.folder);
    CHECK(loaded.filename == ann.filename);
    CHECK(loaded.width == ann.width);
    REQUIRE(loaded.objects.size() == ann.objects.size());
    for (size_t i = 0; i < ann.objects.size(); ++i) {
      CHECK(loaded.objects[i].name == ann.objects[i].name);
      CHECK(loaded.objects[i].xmin == ann.objects[i].xmin);
      CHECK(loaded.objects[i].ymin == ann.objects[i].ymin);
      CHECK(loaded.objects[i].xmax == ann.objects[i].xmax);
      CHECK(loaded.objects[i].ymax == ann.objects[i].ymax);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("voc parser reports file, line and field on malformed input") {
  const auto dir = std::filesystem::temp_directory_path() / "msenet_voc_bad";
  std::filesystem::create_directories(dir);
  const auto path = dir / "bad.xml";
  {
    std::ofstream f(path);
    f << "<annotation>\n  <folder>x</folder>\n  <filename>y</filename>\n"
      << "  <size>\n    <width>oops</width>\n";
  }
  try {
    msenet::read_voc_xml(path.string());
    FAIL("expected io_error");
  } catch (const msenet::io_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.xml") != std::string::npos);
    CHECK(msg.find(":5") != std::string::npos);
    CHECK(msg.find("width") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset: write, manifest, reload bit-identically") {
  const auto dir = std::filesystem::temp_directory_path() / "msenet_ds_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  std::vector<msenet::ManifestEntry> manifest;
  for (int s = 0; s < 2; ++s) {
    SceneConfig cfg;
    cfg.seed = 20 + (uint64_t)s;
    cfg.frames = 3;
    cfg.sequence_id = "seq00" + std::to_string(s);
    auto seq = msenet::gen_sequence(cfg);
    msenet::write_sequence(dir.string(), seq);
    manifest.push_back({cfg.sequence_id, cfg.frames, s == 0 ? "train" : "test"});
  }
  msenet::write_manifest(dir.string(), manifest);

  auto ds = msenet::load_dataset(dir.string());
  REQUIRE(ds.sequences.size() == 2);
  CHECK(ds.class_names == msenet::class_names());  // sorted order matches ids
  CHECK(ds.sequences[0].split == "train");
  CHECK(ds.sequences[1].split == "test");
  REQUIRE(ds.sequences[0].frames.size() == 3);

  // pixel data survives the 8-bit files exactly (values are pre-quantized)
  SceneConfig cfg;
  cfg.seed = 20;
  cfg.frames = 3;
  cfg.sequence_id = "seq000";
  auto orig = msenet::gen_sequence(cfg);
  for (int i = 0; i < 3; ++i) {
    CHECK(ds.sequences[0].frames[(size_t)i].rgb == orig[(size_t)i].rgb);
    CHECK(ds.sequences[0].frames[(size_t)i].thermal == orig[(size_t)i].thermal);
  }
  const auto train = ds.split_frames("train");
  CHECK(train.size() == 3);
  std::filesystem::remove_all(dir);
}
