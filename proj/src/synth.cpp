#include "msenet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace msenet {

void SceneConfig::validate() const {
  MSENET_REQUIRE(rgb_w > 0 && rgb_h > 0 && thermal_w > 0 && thermal_h > 0,
                 "scene config: non-positive resolution");
  MSENET_REQUIRE(modal_scale > 0.0 && modal_scale <= 1.0,
                 "scene config: modal_scale must be in (0, 1], got ", modal_scale);
  MSENET_REQUIRE(jitter_sigma >= 0.0, "scene config: negative jitter");
  MSENET_REQUIRE(min_objects >= 0 && max_objects >= min_objects,
                 "scene config: bad object count range");
  MSENET_REQUIRE(min_size > 0 && max_size >= min_size, "scene config: bad sizes");
  MSENET_REQUIRE(max_size < std::min(rgb_w, rgb_h),
                 "scene config: objects must fit inside the frame");
  MSENET_REQUIRE(frames >= 1, "scene config: need at least one frame");
  MSENET_REQUIRE(!sequence_id.empty(), "scene config: empty sequence id");
}

namespace {

struct MovingObject {
  int class_id;        // 0 block, 1 oval
  double x, y;         // center, RGB px
  double w, h;
  double vx, vy;
  float color[3];      // unlit surface color
};

inline float quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return (float)(std::round(c * 255.0) / 255.0);
}

// Fraction of the pixel covered by the object, 2x2 supersampling.
double coverage(const MovingObject& o, double px, double py) {
  int hits = 0;
  for (int sy = 0; sy < 2; ++sy) {
    for (int sx = 0; sx < 2; ++sx) {
      const double x = px + 0.25 + 0.5 * sx;
      const double y = py + 0.25 + 0.5 * sy;
      const double dx = x - o.x, dy = y - o.y;
      bool inside;
      if (o.class_id == 0) {
        inside = std::abs(dx) <= o.w / 2 && std::abs(dy) <= o.h / 2;
      } else {
        const double nx = dx / (o.w / 2), ny = dy / (o.h / 2);
        inside = nx * nx + ny * ny <= 1.0;
      }
      hits += inside ? 1 : 0;
    }
  }
  return hits / 4.0;
}

void bounce(double& pos, double& vel, double half, double limit) {
  pos += vel;
  if (pos < half) {
    pos = half + (half - pos);
    vel = -vel;
  } else if (pos > limit - half) {
    pos = (limit - half) - (pos - (limit - half));
    vel = -vel;
  }
  pos = std::clamp(pos, half, limit - half);
}

}  // namespace

std::vector<FramePair> gen_sequence(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // objects first, in a fixed draw order
  std::uniform_int_distribution<int> count_dist(cfg.min_objects, cfg.max_objects);
  const int n_objects = count_dist(rng);
  std::vector<MovingObject> objects;
  for (int i = 0; i < n_objects; ++i) {
    MovingObject o;
    o.class_id = (int)(u01(rng) * 2.0) % 2;
    o.w = cfg.min_size + u01(rng) * (cfg.max_size - cfg.min_size);
    o.h = cfg.min_size + u01(rng) * (cfg.max_size - cfg.min_size);
    o.x = o.w / 2 + u01(rng) * (cfg.rgb_w - o.w);
    o.y = o.h / 2 + u01(rng) * (cfg.rgb_h - o.h);
    o.vx = (u01(rng) * 2.0 - 1.0) * cfg.max_speed;
    o.vy = (u01(rng) * 2.0 - 1.0) * cfg.max_speed;
    for (auto& c : o.color) c = (float)(0.55 + 0.40 * u01(rng));
    objects.push_back(o);
  }

  std::vector<FramePair> out;
  out.reserve((size_t)cfg.frames);
  const double win_w = cfg.modal_scale * cfg.rgb_w;
  const double win_h = cfg.modal_scale * cfg.rgb_h;

  for (int frame = 0; frame < cfg.frames; ++frame) {
    if (frame > 0) {
      for (auto& o : objects) {
        bounce(o.x, o.vx, o.w / 2, (double)cfg.rgb_w);
        bounce(o.y, o.vy, o.h / 2, (double)cfg.rgb_h);
      }
    }

    const double light =
        std::clamp(cfg.illumination + gauss(rng) * cfg.illumination_flicker,
                   0.05, 1.0);
    double wx = cfg.rgb_w / 2.0 + cfg.modal_offset_x;
    double wy = cfg.rgb_h / 2.0 + cfg.modal_offset_y;
    if (cfg.jitter_sigma > 0.0) {
      wx += gauss(rng) * cfg.jitter_sigma;
      wy += gauss(rng) * cfg.jitter_sigma;
    }
    // the window must stay inside the frame
    wx = std::clamp(wx, win_w / 2, cfg.rgb_w - win_w / 2);
    wy = std::clamp(wy, win_h / 2, cfg.rgb_h - win_h / 2);
    const double win_x1 = wx - win_w / 2;
    const double win_y1 = wy - win_h / 2;

    FramePair fp;
    fp.rgb_w = cfg.rgb_w;
    fp.rgb_h = cfg.rgb_h;
    fp.thermal_w = cfg.thermal_w;
    fp.thermal_h = cfg.thermal_h;
    fp.frame_index = frame;
    fp.sequence_id = cfg.sequence_id;

    // RGB view: full canvas, dim objects, pixel noise
    fp.rgb.resize((size_t)3 * cfg.rgb_h * cfg.rgb_w);
    for (int y = 0; y < cfg.rgb_h; ++y) {
      for (int x = 0; x < cfg.rgb_w; ++x) {
        double acc[3] = {cfg.rgb_bg, cfg.rgb_bg, cfg.rgb_bg};
        for (const auto& o : objects) {
          const double c = coverage(o, x, y);
          if (c <= 0.0) continue;
          for (int ch = 0; ch < 3; ++ch)
            acc[ch] = acc[ch] * (1.0 - c) + (double)o.color[ch] * light * c;
        }
        const double noise = gauss(rng) * cfg.rgb_noise_sigma;
        for (int ch = 0; ch < 3; ++ch) {
          fp.rgb[(size_t)(ch * cfg.rgb_h + y) * cfg.rgb_w + x] =
              quantize8(acc[ch] + noise);
        }
      }
    }

    // thermal view: hot objects inside the window, sampled at thermal res
    fp.thermal.resize((size_t)cfg.thermal_h * cfg.thermal_w);
    for (int ty = 0; ty < cfg.thermal_h; ++ty) {
      for (int tx = 0; tx < cfg.thermal_w; ++tx) {
        // thermal pixel center in RGB coordinates (minus the half pixel the
        // coverage sampler adds back)
        const double rx = win_x1 + (tx + 0.5) * win_w / cfg.thermal_w - 0.5;
        const double ry = win_y1 + (ty + 0.5) * win_h / cfg.thermal_h - 0.5;
        double v = cfg.thermal_bg;
        for (const auto& o : objects) {
          const double c = coverage(o, rx, ry);
          if (c <= 0.0) continue;
          v = v * (1.0 - c) + cfg.thermal_hot * c;
        }
        fp.thermal[(size_t)ty * cfg.thermal_w + tx] = quantize8(v);
      }
    }

    for (const auto& o : objects) {
      fp.gts.push_back(GtBox{BBox{o.x, o.y, o.w, o.h, Frame::RgbPx}, o.class_id});
    }
    out.push_back(std::move(fp));
  }
  return out;
}

namespace {

std::vector<float> shift_plane(const std::vector<float>& src, int c, int h, int w,
                               int dx, int dy, bool crop, float fill) {
  std::vector<float> dst((size_t)c * h * w, fill);
  for (int ch = 0; ch < c; ++ch) {
    const float* in = src.data() + (size_t)ch * h * w;
    float* out = dst.data() + (size_t)ch * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int sx = x - dx, sy = y - dy;
        if (crop) {
          if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;  // zero-fill
        } else {
          sx = ((sx % w) + w) % w;
          sy = ((sy % h) + h) % h;
        }
        out[(size_t)y * w + x] = in[(size_t)sy * w + sx];
      }
    }
  }
  return dst;
}

}  // namespace

std::vector<FramePair> spatial_transform(const std::vector<FramePair>& seq,
                                         Modality which, int dx, int dy,
                                         bool crop) {
  std::vector<FramePair> out = seq;
  for (auto& fp : out) {
    const int w = which == Modality::Rgb ? fp.rgb_w : fp.thermal_w;
    const int h = which == Modality::Rgb ? fp.rgb_h : fp.thermal_h;
    MSENET_REQUIRE(std::abs(dx) < w && std::abs(dy) < h,
                   "spatial_transform: offset (", dx, ", ", dy,
                   ") exceeds the ", w, "x", h, " frame");
    if (which == Modality::Rgb) {
      fp.rgb = shift_plane(fp.rgb, 3, fp.rgb_h, fp.rgb_w, dx, dy, crop, 0.0f);
    } else {
      fp.thermal =
          shift_plane(fp.thermal, 1, fp.thermal_h, fp.thermal_w, dx, dy, crop, 0.0f);
    }
    // annotations deliberately stay on the original RGB frames
  }
  return out;
}

}  // namespace msenet
