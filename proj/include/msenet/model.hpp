#pragma once

// MSENet-mini end to end: unshared RGB/thermal encoders, mixture-of-scale-
// experts fusion, temporal injection, and an anchor-free detection head with
// class logits plus four DFL distributions per cell.
//
// The three image inputs are the current RGB frame, the current thermal frame
// and the previous RGB frame. There is no previous-thermal input anywhere in
// the signature or the wiring.

#include <random>
#include <string>
#include <vector>

#include "msenet/detection.hpp"
#include "msenet/losses.hpp"
#include "msenet/mse.hpp"
#include "msenet/tiim.hpp"

namespace msenet {

struct ModelConfig {
  std::vector<int> widths = {8, 16, 32};  // encoder channels per stage
  int n_bins = 8;
  int num_classes = 2;
  int rgb_w = 160, rgb_h = 120;
  int thermal_w = 64, thermal_h = 48;
  double nms_iou = 0.5;
  double conf_threshold = 0.25;
  std::vector<ExpertConfig> experts = {{0.4, 0.02}, {0.6, 0.02}, {0.8, 0.02}};

  // ablation switches; all on for the full model
  bool use_mse = true;           // off: resize thermal features and add
  bool use_tiim = true;          // off: fused features go straight to the head
  bool use_score_branch = true;  // off: uniform expert weights
  bool use_anchor_noise = true;  // off: anchors are deterministic in training too
  bool use_deformable = true;    // off: plain conv in each expert

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    MSENET_REQUIRE(!widths.empty(), "model config: empty width list");
    MSENET_REQUIRE(num_classes >= 1, "model config: class count must be >= 1");
    MSENET_REQUIRE(n_bins >= 2, "model config: n_bins must be >= 2");
    MSENET_REQUIRE(rgb_w >= thermal_w && rgb_h >= thermal_h,
                   "model config: RGB resolution must be >= thermal per axis (",
                   rgb_w, "x", rgb_h, " vs ", thermal_w, "x", thermal_h, ")");
    MSENET_REQUIRE(!experts.empty(), "model config: empty expert list");
    for (const auto& e : experts) e.validate();
  }

  int head_channels() const { return num_classes + 4 * n_bins; }
};

inline bool operator==(const ExpertConfig& a, const ExpertConfig& b) {
  return a.scale == b.scale && a.noise_sigma == b.noise_sigma;
}

// Three stride-2 stages, one residual block per stage.
template <class Real>
struct Encoder {
  struct Stage {
    Conv2d<Real> down;
    Conv2d<Real> res1, res2;
  };
  std::vector<Stage> stages;

  Tensor<Real> operator()(const Tensor<Real>& image) const {
    auto x = image;
    for (const auto& s : stages) {
      x = silu(s.down(x));
      x = add(x, s.res2(silu(s.res1(x))));
    }
    return x;
  }
};

template <class Real>
Encoder<Real> make_encoder(ParamStore<Real>& ps, const std::string& path,
                           int in_channels, const std::vector<int>& widths,
                           std::mt19937_64& rng) {
  Encoder<Real> enc;
  int cin = in_channels;
  for (size_t i = 0; i < widths.size(); ++i) {
    const std::string stage = path + ".stage" + std::to_string(i + 1);
    typename Encoder<Real>::Stage s;
    s.down = make_conv(ps, stage + ".conv", cin, widths[i], 3, 2, 1, rng);
    s.res1 = make_conv(ps, stage + ".res.conv1", widths[i], widths[i], 3, 1, 1, rng);
    s.res2 = make_conv(ps, stage + ".res.conv2", widths[i], widths[i], 3, 1, 1, rng);
    cin = widths[i];
    enc.stages.push_back(std::move(s));
  }
  return enc;
}

inline int encoded_size(int px, int n_stages) {
  for (int i = 0; i < n_stages; ++i) px = conv_out_size(px, 3, 2, 1);
  return px;
}

template <class Real>
class MseNet {
 public:
  static MseNet create(const ModelConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    MseNet m;
    m.cfg_ = cfg;
    std::mt19937_64 rng(init_seed);
    const int c_f = cfg.widths.back();
    m.rgb_enc_ = make_encoder(m.params_, "encoder.rgb", 3, cfg.widths, rng);
    m.th_enc_ = make_encoder(m.params_, "encoder.thermal", 1, cfg.widths, rng);
    if (cfg.use_mse) {
      for (size_t i = 0; i < cfg.experts.size(); ++i) {
        m.experts_.push_back(make_scale_expert(
            m.params_, "mse.expert" + std::to_string(i), c_f, cfg.experts[i],
            cfg.use_deformable, rng));
      }
      if (cfg.use_score_branch) {
        m.router_ = make_router(m.params_, "mse.router", c_f, rng);
      } else {
        m.router_.enabled = false;
      }
    }
    if (cfg.use_tiim) m.tiim_ = make_tiim(m.params_, "tiim", c_f, rng);

    m.head_conv_ = make_conv(m.params_, "head.conv", c_f, c_f, 3, 1, 1, rng);
    // detection head output: low class confidence at init, flat distances
    {
      const double stddev = std::sqrt(2.0 / c_f);
      m.head_out_.w = m.params_.create_randn("head.out.weight",
                                             {cfg.head_channels(), c_f, 1, 1},
                                             rng, stddev);
      std::vector<Real> bias((size_t)cfg.head_channels(), Real(0));
      for (int c = 0; c < cfg.num_classes; ++c) bias[(size_t)c] = Real(-3);
      m.head_out_.b = m.params_.create("head.out.bias", {cfg.head_channels()},
                                       std::move(bias));
      m.head_out_.stride = 1;
      m.head_out_.pad = 0;
    }
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  int head_grid_h() const {
    return encoded_size(cfg_.use_mse ? cfg_.thermal_h : cfg_.rgb_h,
                        (int)cfg_.widths.size());
  }
  int head_grid_w() const {
    return encoded_size(cfg_.use_mse ? cfg_.thermal_w : cfg_.rgb_w,
                        (int)cfg_.widths.size());
  }

  Tensor<Real> encode_rgb(const Tensor<Real>& image) const { return rgb_enc_(image); }
  Tensor<Real> encode_thermal(const Tensor<Real>& image) const { return th_enc_(image); }

  // rgb_t/rgb_prev: [N, 3, rgb_h, rgb_w]; thermal_t: [N, 1, thermal_h,
  // thermal_w]. Returns head outputs [N, num_classes + 4*n_bins, gh, gw].
  // Anchor noise draws from rng only when training (and enabled).
  Tensor<Real> forward(const Tensor<Real>& rgb_t, const Tensor<Real>& thermal_t,
                       const Tensor<Real>& rgb_prev, std::mt19937_64& rng,
                       bool training) const {
    check_image(rgb_t, 3, cfg_.rgb_h, cfg_.rgb_w, "rgb");
    check_image(thermal_t, 1, cfg_.thermal_h, cfg_.thermal_w, "thermal");
    check_image(rgb_prev, 3, cfg_.rgb_h, cfg_.rgb_w, "previous rgb");
    MSENET_REQUIRE(rgb_t.dim(0) == thermal_t.dim(0) && rgb_t.dim(0) == rgb_prev.dim(0),
                   "forward: batch size mismatch");

    auto f_rgb = rgb_enc_(rgb_t);
    auto f_th = th_enc_(thermal_t);
    auto f_prev = rgb_enc_(rgb_prev);

    Tensor<Real> fused;
    if (cfg_.use_mse) {
      fused = mse_forward(f_rgb, f_th, experts_, router_, rng,
                          training && cfg_.use_anchor_noise)
                  .fused;
    } else {
      // additive fusion baseline: thermal features resized onto the RGB grid
      fused = add(f_rgb, crop_resize(f_th, full_feature_box(), f_rgb.dim(2),
                                     f_rgb.dim(3)));
    }
    if (cfg_.use_tiim) fused = tiim_forward(fused, f_prev, tiim_);

    return head_out_(silu(head_conv_(fused)));
  }

  // Raw head outputs -> thresholded detections per batch element (no NMS).
  std::vector<std::vector<Detection>> decode(const Tensor<Real>& raw) const {
    MSENET_REQUIRE(raw.ndim() == 4 && raw.dim(1) == cfg_.head_channels(),
                   "decode: unexpected head shape ", shape_str(raw.shape()));
    const int n = raw.dim(0), gh = raw.dim(2), gw = raw.dim(3);
    const int64_t stride = (int64_t)cfg_.head_channels() * gh * gw;
    std::vector<std::vector<Detection>> out;
    for (int i = 0; i < n; ++i) {
      std::vector<double> img(raw.values().begin() + i * stride,
                              raw.values().begin() + (i + 1) * stride);
      out.push_back(decode_head(img, cfg_.num_classes, cfg_.n_bins, gh, gw,
                                cfg_.rgb_w, cfg_.rgb_h, cfg_.conf_threshold));
    }
    return out;
  }

  std::vector<Detection> detect(const Tensor<Real>& rgb_t,
                                const Tensor<Real>& thermal_t,
                                const Tensor<Real>& rgb_prev) const {
    std::mt19937_64 rng(0);  // unused in inference: noise only draws in training
    auto raw = forward(rgb_t, thermal_t, rgb_prev, rng, false);
    return nms(decode(raw)[0], cfg_.nms_iou);
  }

 private:
  static void check_image(const Tensor<Real>& t, int c, int h, int w,
                          const char* which) {
    MSENET_REQUIRE(t.valid() && t.ndim() == 4, "forward: ", which,
                   " image must be NCHW");
    MSENET_REQUIRE(t.dim(1) == c && t.dim(2) == h && t.dim(3) == w,
                   "forward: ", which, " image must be [N, ", c, ", ", h, ", ",
                   w, "], got ", shape_str(t.shape()));
  }

  ModelConfig cfg_;
  ParamStore<Real> params_;
  Encoder<Real> rgb_enc_, th_enc_;
  std::vector<ScaleExpert<Real>> experts_;
  Router<Real> router_;
  Tiim<Real> tiim_;
  Conv2d<Real> head_conv_, head_out_;
};

// Targets for one image on this model's head grid.
template <class Real>
AssignedTargets model_targets(const MseNet<Real>& model,
                              const std::vector<GtBox>& gts) {
  const auto& cfg = model.config();
  return assign_targets(gts, cfg.rgb_w, cfg.rgb_h, model.head_grid_h(),
                        model.head_grid_w(), cfg.num_classes, cfg.n_bins);
}

}  // namespace msenet
