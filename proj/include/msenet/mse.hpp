#pragma once

// Mixture of scale experts. Each expert crops the RGB feature map at its
// perception scale (anchor jittered by Gaussian noise while training), fuses
// the crop with the thermal features through a 1x1 projection, and aligns the
// result with a deformable convolution whose offsets come from a
// zero-initialized predictor (so training starts at the plain-conv regime).
// A routing branch with one shared parameter set scores every expert against
// the RGB features and mixes the outputs with softmax weights.

#include <random>
#include <vector>

#include "msenet/layers.hpp"

namespace msenet {

inline constexpr int kDconvKernel = 3;

template <class Real>
struct ScaleExpert {
  ExpertConfig cfg;
  Conv2d<Real> fuse;         // 1x1, 2C -> C
  Conv2d<Real> offset_conv;  // 3x3, C -> 2*K*K, zero-initialized
  Conv2d<Real> dconv;        // 3x3, C -> C (deformable when enabled)
  bool use_deformable = true;
};

template <class Real>
ScaleExpert<Real> make_scale_expert(ParamStore<Real>& ps, const std::string& path,
                                    int channels, const ExpertConfig& cfg,
                                    bool use_deformable, std::mt19937_64& rng) {
  cfg.validate();
  ScaleExpert<Real> e;
  e.cfg = cfg;
  e.use_deformable = use_deformable;
  e.fuse = make_conv(ps, path + ".fuse", 2 * channels, channels, 1, 1, 0, rng);
  if (use_deformable) {
    e.offset_conv = make_conv(ps, path + ".offset", channels,
                              2 * kDconvKernel * kDconvKernel, kDconvKernel, 1,
                              1, rng, /*zero_weights=*/true);
  }
  e.dconv = make_conv(ps, path + ".dconv", channels, channels, kDconvKernel, 1, 1, rng);
  return e;
}

// Shared scoring branch: global average pool over the concatenated expert
// output and RGB features, then one linear layer to a scalar. One parameter
// set serves every expert. No bias: a bias shared across experts shifts all
// scores equally and softmax ignores it.
template <class Real>
struct Router {
  Tensor<Real> w;  // [2C, 1]
  bool enabled = true;  // disabled -> uniform expert weights, no parameters
};

template <class Real>
Router<Real> make_router(ParamStore<Real>& ps, const std::string& path,
                         int channels, std::mt19937_64& rng) {
  Router<Real> r;
  r.w = ps.create_randn(path + ".score.weight", {2 * channels, 1}, rng,
                        std::sqrt(1.0 / (2 * channels)));
  return r;
}

// One expert pass: anchor -> crop -> fuse with thermal -> deformable align.
// Anchor noise is drawn from rng only while training. Output matches the
// thermal grid (C x H_t x W_t).
template <class Real>
Tensor<Real> expert_forward(const Tensor<Real>& f_rgb,
                            const Tensor<Real>& f_thermal,
                            const ScaleExpert<Real>& expert,
                            std::mt19937_64& rng, bool training) {
  MSENET_REQUIRE(f_rgb.ndim() == 4 && f_thermal.ndim() == 4,
                 "expert_forward: need NCHW features");
  MSENET_REQUIRE(f_rgb.dim(0) == f_thermal.dim(0),
                 "expert_forward: batch mismatch ", f_rgb.dim(0), " vs ",
                 f_thermal.dim(0));
  MSENET_REQUIRE(f_rgb.dim(2) >= f_thermal.dim(2) && f_rgb.dim(3) >= f_thermal.dim(3),
                 "expert_forward: thermal grid ", f_thermal.dim(2), "x",
                 f_thermal.dim(3), " larger than RGB grid ", f_rgb.dim(2), "x",
                 f_rgb.dim(3));
  const int th = f_thermal.dim(2), tw = f_thermal.dim(3);

  ExpertConfig effective = expert.cfg;
  if (!training) effective.noise_sigma = 0.0;
  const BBox anchor = make_anchor(full_feature_box(), effective, rng);

  auto region = crop_resize(f_rgb, anchor, th, tw);
  auto merged = expert.fuse(concat_channels(region, f_thermal));
  if (expert.use_deformable) {
    auto offsets = expert.offset_conv(merged);
    return deformable_conv2d(merged, offsets, expert.dconv.w, expert.dconv.b, 1, 1);
  }
  return conv2d(merged, expert.dconv.w, expert.dconv.b, 1, 1);
}

template <class Real>
struct RoutedOutput {
  Tensor<Real> fused;
  Tensor<Real> weights;  // [N, n_experts], softmax per batch element
};

// Scores every expert output with the shared branch, softmaxes the scores per
// batch element, and mixes the outputs by the resulting weights.
template <class Real>
RoutedOutput<Real> route(const std::vector<Tensor<Real>>& expert_outputs,
                         const Tensor<Real>& f_rgb, const Router<Real>& router) {
  MSENET_REQUIRE(!expert_outputs.empty(), "route: empty expert list");
  const auto& shape = expert_outputs[0].shape();
  for (const auto& t : expert_outputs) {
    MSENET_REQUIRE(t.shape() == shape, "route: expert output shape mismatch ",
                   shape_str(t.shape()), " vs ", shape_str(shape));
  }
  const int n = shape[0];
  const int e = (int)expert_outputs.size();

  RoutedOutput<Real> out;
  if (router.enabled) {
    auto rgb_resized = crop_resize(f_rgb, full_feature_box(), shape[2], shape[3]);
    std::vector<Tensor<Real>> score_cols;
    score_cols.reserve(expert_outputs.size());
    for (const auto& eo : expert_outputs) {
      auto pooled = global_avg_pool(concat_channels(eo, rgb_resized));  // [N, 2C]
      auto score = matmul(pooled, router.w);                            // [N, 1]
      score_cols.push_back(reshape(score, {n}));
    }
    out.weights = softmax_lastdim(stack_columns(score_cols));
  } else {
    out.weights = Tensor<Real>::full({n, e}, Real(1) / Real(e));
  }

  out.fused = scale_rows(expert_outputs[0], select_column(out.weights, 0));
  for (int i = 1; i < e; ++i) {
    out.fused = add(out.fused,
                    scale_rows(expert_outputs[(size_t)i], select_column(out.weights, i)));
  }
  return out;
}

// Full module: every expert runs, then dynamic routing fuses the results.
template <class Real>
RoutedOutput<Real> mse_forward(const Tensor<Real>& f_rgb,
                               const Tensor<Real>& f_thermal,
                               const std::vector<ScaleExpert<Real>>& experts,
                               const Router<Real>& router, std::mt19937_64& rng,
                               bool training) {
  MSENET_REQUIRE(!experts.empty(), "mse_forward: empty expert list");
  std::vector<Tensor<Real>> outputs;
  outputs.reserve(experts.size());
  for (const auto& e : experts)
    outputs.push_back(expert_forward(f_rgb, f_thermal, e, rng, training));
  return route(outputs, f_rgb, router);
}

}  // namespace msenet
