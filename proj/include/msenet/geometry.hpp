#pragma once

// Box algebra shared by the anchor generator, the losses, the decoder and the
// synthetic-data geometry. Boxes are center format (x, y, w, h) and carry
// their coordinate frame explicitly; cross-frame math without an explicit
// conversion is a contract violation.

#include <random>

#include "msenet/common.hpp"

namespace msenet {

enum class Frame { RgbPx, ThermalPx, Normalized };

const char* frame_name(Frame f);

struct BBox {
  double x = 0, y = 0;  // center
  double w = 0, h = 0;
  Frame frame = Frame::Normalized;

  double x1() const { return x - w / 2; }
  double y1() const { return y - h / 2; }
  double x2() const { return x + w / 2; }
  double y2() const { return y + h / 2; }
  double area() const { return w * h; }
};

// Ground-truth annotation: a box plus its class id.
struct GtBox {
  BBox box;
  int class_id = 0;
};

// One scale expert: perception scale and the anchor-noise magnitude, both in
// normalized feature units.
struct ExpertConfig {
  double scale = 1.0;        // λ in (0, 1]
  double noise_sigma = 0.0;  // >= 0

  void validate() const;
};

// Full feature extent in normalized units, the anchor base of every expert.
inline BBox full_feature_box() { return BBox{0.5, 0.5, 1.0, 1.0, Frame::Normalized}; }

// Anchor sizes after noise are clamped into this range (normalized units).
inline constexpr double kAnchorMinSize = 0.05;
inline constexpr double kAnchorMaxSize = 1.0;

// box = (x, y, λ·w + ε_w, λ·h + ε_h), ε ~ N(0, σ²), center preserved, sizes
// clamped to [kAnchorMinSize, kAnchorMaxSize]. Draws width noise first, then
// height noise. Total: clamping removes every failure mode.
BBox make_anchor(const BBox& feature_box, const ExpertConfig& cfg,
                 std::mt19937_64& rng);

// Intersection over union in [0, 1]; 0 when disjoint.
double iou(const BBox& a, const BBox& b);

// Complete IoU: iou − ρ²/c² − α·v with ρ the center distance, c the enclosing
// box diagonal, v the aspect-ratio term and α = v / ((1 − iou) + v).
double ciou(const BBox& a, const BBox& b);

// Registration between the RGB frame, the thermal frame and normalized
// units. The thermal camera sees the λ*-scaled window of the RGB field of
// view, centered at the RGB center plus modal offset (RGB pixels).
struct FrameGeometry {
  double rgb_w = 160, rgb_h = 120;
  double thermal_w = 64, thermal_h = 48;
  double modal_scale = 1.0;  // λ*
  double offset_x = 0, offset_y = 0;
};

// Affine map of center and size between frames; exact inverse (there-and-back
// is identity to well under 1e-9).
BBox map_box(const BBox& box, Frame to, const FrameGeometry& geo);

}  // namespace msenet
