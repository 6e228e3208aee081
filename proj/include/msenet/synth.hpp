#pragma once

// Deterministic generator of unaligned RGBT sequences with ground truth.
// A world of moving shapes renders twice: the RGB view sees the full canvas
// under dimmed, flickering illumination with pixel noise; the thermal view is
// the modal-scale (λ*) window of the RGB field of view, offset and optionally
// jittered per frame, rendered hot-on-dark and sampled at thermal resolution.
// Ground truth lives on RGB frames only.

#include <cstdint>
#include <string>
#include <vector>

#include "msenet/geometry.hpp"

namespace msenet {

struct SceneConfig {
  int rgb_w = 160, rgb_h = 120;
  int thermal_w = 64, thermal_h = 48;

  double modal_scale = 0.6;  // λ*: fraction of RGB FOV the thermal camera sees
  double modal_offset_x = 4.0, modal_offset_y = -3.0;  // RGB px from center
  double jitter_sigma = 0.0;  // per-frame Gaussian jitter of the window (px)

  int min_objects = 2, max_objects = 5;
  double min_size = 14.0, max_size = 34.0;  // object extent, RGB px
  double max_speed = 2.5;                   // px per frame, per axis

  double rgb_bg = 0.07;
  double rgb_noise_sigma = 0.02;
  double illumination = 0.35;          // mean brightness multiplier on objects
  double illumination_flicker = 0.15;  // per-frame sigma of the multiplier
  double thermal_hot = 0.9, thermal_bg = 0.04;

  int frames = 40;
  uint64_t seed = 1;
  std::string sequence_id = "seq000";

  void validate() const;

  FrameGeometry geometry() const {
    return FrameGeometry{(double)rgb_w,     (double)rgb_h, (double)thermal_w,
                         (double)thermal_h, modal_scale,   modal_offset_x,
                         modal_offset_y};
  }
};

// Class ids follow kClassNames order; the names sort alphabetically into the
// same order, so datasets reloaded from annotations keep the ids.
inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"block", "oval"};
  return names;
}

struct FramePair {
  std::vector<float> rgb;      // [3][rgb_h][rgb_w], values already 8-bit-quantized
  std::vector<float> thermal;  // [1][thermal_h][thermal_w]
  int rgb_w = 0, rgb_h = 0;
  int thermal_w = 0, thermal_h = 0;
  std::vector<GtBox> gts;  // RGB pixel frame
  int frame_index = 0;
  std::string sequence_id;
};

// Pure function of the config (including the seed): same config, bit-identical
// frames.
std::vector<FramePair> gen_sequence(const SceneConfig& cfg);

enum class Modality { Rgb, Thermal };

// Translates one modality of every frame by (dx, dy) pixels; the other
// modality and the annotations stay untouched. crop=false shifts circularly
// (exactly invertible); crop=true discards shifted-out content and zero-fills
// the vacated band, the crop-and-translate variant.
std::vector<FramePair> spatial_transform(const std::vector<FramePair>& seq,
                                         Modality which, int dx, int dy,
                                         bool crop);

}  // namespace msenet
