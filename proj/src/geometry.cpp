#include "msenet/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace msenet {

const char* frame_name(Frame f) {
  switch (f) {
    case Frame::RgbPx:
      return "rgb_px";
    case Frame::ThermalPx:
      return "thermal_px";
    case Frame::Normalized:
      return "normalized";
  }
  fail_contract("map_box: unknown coordinate frame");
}

void ExpertConfig::validate() const {
  MSENET_REQUIRE(scale > 0.0 && scale <= 1.0, "expert scale must be in (0, 1], got ",
                 scale);
  MSENET_REQUIRE(noise_sigma >= 0.0, "expert noise_sigma must be >= 0, got ",
                 noise_sigma);
}

BBox make_anchor(const BBox& feature_box, const ExpertConfig& cfg,
                 std::mt19937_64& rng) {
  cfg.validate();
  double w = cfg.scale * feature_box.w;
  double h = cfg.scale * feature_box.h;
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    w += noise(rng);
    h += noise(rng);
  }
  w = std::clamp(w, kAnchorMinSize, kAnchorMaxSize);
  h = std::clamp(h, kAnchorMinSize, kAnchorMaxSize);
  return BBox{feature_box.x, feature_box.y, w, h, feature_box.frame};
}

namespace {
void require_same_frame(const BBox& a, const BBox& b, const char* op) {
  MSENET_REQUIRE(a.frame == b.frame, op, ": frame mismatch, ",
                 frame_name(a.frame), " vs ", frame_name(b.frame));
}
}  // namespace

double iou(const BBox& a, const BBox& b) {
  require_same_frame(a, b, "iou");
  const double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double ciou(const BBox& a, const BBox& b) {
  require_same_frame(a, b, "ciou");
  const double overlap = iou(a, b);
  const double rho2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double c2 = cw * cw + ch * ch;
  const double pi = 3.14159265358979323846;
  const double d = std::atan(a.w / a.h) - std::atan(b.w / b.h);
  const double v = 4.0 / (pi * pi) * d * d;
  double penalty = c2 > 0.0 ? rho2 / c2 : 0.0;
  if (v > 0.0) {
    const double alpha = v / ((1.0 - overlap) + v);
    penalty += alpha * v;
  }
  return overlap - penalty;
}

BBox map_box(const BBox& box, Frame to, const FrameGeometry& geo) {
  if (box.frame == to) return box;

  // Canonical frame: RGB pixels. Thermal window in RGB pixels:
  const double win_w = geo.modal_scale * geo.rgb_w;
  const double win_h = geo.modal_scale * geo.rgb_h;
  const double win_x1 = geo.rgb_w / 2 + geo.offset_x - win_w / 2;
  const double win_y1 = geo.rgb_h / 2 + geo.offset_y - win_h / 2;

  BBox rgb = box;
  switch (box.frame) {
    case Frame::RgbPx:
      break;
    case Frame::Normalized:
      rgb = BBox{box.x * geo.rgb_w, box.y * geo.rgb_h, box.w * geo.rgb_w,
                 box.h * geo.rgb_h, Frame::RgbPx};
      break;
    case Frame::ThermalPx:
      rgb = BBox{win_x1 + box.x * win_w / geo.thermal_w,
                 win_y1 + box.y * win_h / geo.thermal_h,
                 box.w * win_w / geo.thermal_w, box.h * win_h / geo.thermal_h,
                 Frame::RgbPx};
      break;
  }

  switch (to) {
    case Frame::RgbPx:
      return rgb;
    case Frame::Normalized:
      return BBox{rgb.x / geo.rgb_w, rgb.y / geo.rgb_h, rgb.w / geo.rgb_w,
                  rgb.h / geo.rgb_h, Frame::Normalized};
    case Frame::ThermalPx:
      return BBox{(rgb.x - win_x1) * geo.thermal_w / win_w,
                  (rgb.y - win_y1) * geo.thermal_h / win_h,
                  rgb.w * geo.thermal_w / win_w, rgb.h * geo.thermal_h / win_h,
                  Frame::ThermalPx};
  }
  fail_contract("map_box: unknown target frame");
}

}  // namespace msenet
