#pragma once

// Differentiable NCHW ops on top of the compute kernels. The deformable
// convolution is composed from smaller differentiable pieces (offset-to-
// coordinate expansion, bilinear sampling, tap regrouping, a batched matmul
// against the kernel weights), so its gradients are exact by construction and
// its zero-offset case reduces to conv2d with the same summation order.

#include <cmath>

#include "msenet/geometry.hpp"
#include "msenet/tensor.hpp"

namespace msenet {

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// input [N,C,H,W], weight [O,C,K,K], bias [O]. Cross-correlation with zero
// padding, differentiable w.r.t. all three.
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weight,
                    const Tensor<Real>& bias, int stride, int pad) {
  MSENET_REQUIRE(input.ndim() == 4 && weight.ndim() == 4,
                 "conv2d: need NCHW input and OCKK weight, got ",
                 shape_str(input.shape()), " and ", shape_str(weight.shape()));
  MSENET_REQUIRE(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square");
  MSENET_REQUIRE(input.dim(1) == weight.dim(1), "conv2d: channel mismatch, input ",
                 shape_str(input.shape()), " vs weight ", shape_str(weight.shape()));
  MSENET_REQUIRE(bias.ndim() == 1 && bias.dim(0) == weight.dim(0),
                 "conv2d: bias must be [", weight.dim(0), "], got ",
                 shape_str(bias.shape()));
  MSENET_REQUIRE(stride >= 1 && pad >= 0, "conv2d: bad stride/pad ", stride, "/", pad);
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  const int oh = conv_out_size(h, k, stride, pad);
  const int ow = conv_out_size(w, k, stride, pad);
  MSENET_REQUIRE(oh > 0 && ow > 0, "conv2d: non-positive output size ", oh, "x", ow,
                 " from input ", shape_str(input.shape()), " kernel ", k,
                 " stride ", stride, " pad ", pad);

  std::vector<Real> out((size_t)n * cout * oh * ow);
  kernels::conv2d_forward(input.values().data(), weight.values().data(),
                          bias.values().data(), out.data(), n, cin, h, w, cout,
                          k, stride, pad, oh, ow);
  auto in_n = input.node();
  auto w_n = weight.node();
  auto b_n = bias.node();
  return detail::make_op<Real>(
      "conv2d", {n, cout, oh, ow}, std::move(out), {input, weight, bias},
      [in_n, w_n, b_n, n, cin, h, w, cout, k, stride, pad, oh,
       ow](TensorNode<Real>& self) {
        const Real* g = self.grad.data();
        if (in_n->requires_grad) {
          kernels::conv2d_backward_input(g, w_n->values.data(),
                                         detail::ensure_grad(*in_n), n, cin, h,
                                         w, cout, k, stride, pad, oh, ow);
        }
        if (w_n->requires_grad) {
          kernels::conv2d_backward_weight(g, in_n->values.data(),
                                          detail::ensure_grad(*w_n), n, cin, h,
                                          w, cout, k, stride, pad, oh, ow);
        }
        if (b_n->requires_grad) {
          kernels::conv2d_backward_bias(g, detail::ensure_grad(*b_n), n, cout,
                                        oh * ow);
        }
      });
}

// feature [N,C,H,W], coords [N,P,2] of (x, y) continuous pixel positions.
// Out-of-bounds positions read zero (only in-bounds corners contribute).
// Differentiable w.r.t. the feature values and the coordinates.
template <class Real>
Tensor<Real> bilinear_sample(const Tensor<Real>& feature,
                             const Tensor<Real>& coords) {
  MSENET_REQUIRE(feature.ndim() == 4, "bilinear_sample: feature must be NCHW, got ",
                 shape_str(feature.shape()));
  MSENET_REQUIRE(coords.ndim() == 3 && coords.dim(2) == 2,
                 "bilinear_sample: coords must be [N,P,2], got ",
                 shape_str(coords.shape()));
  MSENET_REQUIRE(coords.dim(0) == feature.dim(0),
                 "bilinear_sample: batch mismatch ", shape_str(feature.shape()),
                 " vs ", shape_str(coords.shape()));
  for (Real v : coords.values()) {
    MSENET_REQUIRE(std::isfinite((double)v),
                   "bilinear_sample: non-finite coordinate");
  }
  const int n = feature.dim(0), c = feature.dim(1), h = feature.dim(2),
            w = feature.dim(3), p = coords.dim(1);
  std::vector<Real> out((size_t)n * c * p);
  kernels::bilinear_forward(feature.values().data(), coords.values().data(),
                            out.data(), n, c, h, w, p);
  auto f_n = feature.node();
  auto c_n = coords.node();
  return detail::make_op<Real>(
      "bilinear_sample", {n, c, p}, std::move(out), {feature, coords},
      [f_n, c_n, n, c, h, w, p](TensorNode<Real>& self) {
        const Real* g = self.grad.data();
        if (f_n->requires_grad) {
          kernels::bilinear_backward_feature(g, c_n->values.data(),
                                             detail::ensure_grad(*f_n), n, c, h,
                                             w, p);
        }
        if (c_n->requires_grad) {
          kernels::bilinear_backward_coords(g, f_n->values.data(),
                                            c_n->values.data(),
                                            detail::ensure_grad(*c_n), n, c, h,
                                            w, p);
        }
      });
}

namespace detail {

// Sample grid spanning `box` (normalized feature coordinates, u=0 mapping to
// pixel 0 and u=1 to pixel dim-1). out_w == 1 samples the box center.
template <class Real>
std::vector<Real> crop_grid_coords(const BBox& box, int h, int w, int oh, int ow) {
  const double x1 = (box.x - box.w / 2) * (w - 1);
  const double x2 = (box.x + box.w / 2) * (w - 1);
  const double y1 = (box.y - box.h / 2) * (h - 1);
  const double y2 = (box.y + box.h / 2) * (h - 1);
  std::vector<Real> coords((size_t)oh * ow * 2);
  for (int i = 0; i < oh; ++i) {
    const double y = oh > 1 ? y1 + (y2 - y1) * i / (oh - 1) : (y1 + y2) / 2;
    for (int j = 0; j < ow; ++j) {
      const double x = ow > 1 ? x1 + (x2 - x1) * j / (ow - 1) : (x1 + x2) / 2;
      coords[(size_t)(i * ow + j) * 2] = (Real)x;
      coords[(size_t)(i * ow + j) * 2 + 1] = (Real)y;
    }
  }
  return coords;
}

}  // namespace detail

// Resamples the box region of the feature map onto an out_h x out_w grid.
// The box is in normalized feature coordinates; the full box (0.5,0.5,1,1)
// at the input size is the exact identity. Differentiable w.r.t. feature.
template <class Real>
Tensor<Real> crop_resize(const Tensor<Real>& feature, const BBox& box, int out_h,
                         int out_w) {
  MSENET_REQUIRE(feature.ndim() == 4, "crop_resize: feature must be NCHW");
  MSENET_REQUIRE(box.w > 0 && box.h > 0, "crop_resize: box size must be positive, got ",
                 box.w, "x", box.h);
  MSENET_REQUIRE(out_h > 0 && out_w > 0, "crop_resize: non-positive output size ",
                 out_h, "x", out_w);
  const int n = feature.dim(0), c = feature.dim(1), h = feature.dim(2),
            w = feature.dim(3);
  auto grid = detail::crop_grid_coords<Real>(box, h, w, out_h, out_w);
  std::vector<Real> coords;
  coords.reserve((size_t)n * grid.size());
  for (int ni = 0; ni < n; ++ni) coords.insert(coords.end(), grid.begin(), grid.end());
  auto coord_t =
      Tensor<Real>::from_values({n, out_h * out_w, 2}, std::move(coords), false);
  auto samples = bilinear_sample(feature, coord_t);
  return reshape(samples, {n, c, out_h, out_w});
}

namespace detail {

// offsets [N, 2*K*K, OH, OW] -> coords [N, K*K*OH*OW, 2]; sample point of tap
// t at output (oy, ox) is its regular grid position plus (dx, dy) read from
// offset channels (2t, 2t+1).
template <class Real>
Tensor<Real> dconv_coords(const Tensor<Real>& offsets, int k, int stride, int pad) {
  const int n = offsets.dim(0), kk = k * k, oh = offsets.dim(2), ow = offsets.dim(3);
  const int p = kk * oh * ow;
  const auto& ov = offsets.values();
  std::vector<Real> out((size_t)n * p * 2);
  for (int ni = 0; ni < n; ++ni) {
    for (int t = 0; t < kk; ++t) {
      const int ky = t / k, kx = t % k;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const int64_t pi = ((int64_t)t * oh + oy) * ow + ox;
          const Real dx = ov[(size_t)((((int64_t)ni * 2 * kk + 2 * t) * oh + oy) * ow + ox)];
          const Real dy = ov[(size_t)((((int64_t)ni * 2 * kk + 2 * t + 1) * oh + oy) * ow + ox)];
          out[(size_t)(((int64_t)ni * p + pi) * 2)] = Real(ox * stride + kx - pad) + dx;
          out[(size_t)(((int64_t)ni * p + pi) * 2 + 1)] = Real(oy * stride + ky - pad) + dy;
        }
      }
    }
  }
  auto o_n = offsets.node();
  return make_op<Real>(
      "dconv_coords", {n, p, 2}, std::move(out), {offsets},
      [o_n, n, k, kk, oh, ow, p](TensorNode<Real>& self) {
        Real* go = ensure_grad(*o_n);
        for (int ni = 0; ni < n; ++ni) {
          for (int t = 0; t < kk; ++t) {
            for (int oy = 0; oy < oh; ++oy) {
              for (int ox = 0; ox < ow; ++ox) {
                const int64_t pi = ((int64_t)t * oh + oy) * ow + ox;
                go[(((int64_t)ni * 2 * kk + 2 * t) * oh + oy) * ow + ox] +=
                    self.grad[(size_t)(((int64_t)ni * p + pi) * 2)];
                go[(((int64_t)ni * 2 * kk + 2 * t + 1) * oh + oy) * ow + ox] +=
                    self.grad[(size_t)(((int64_t)ni * p + pi) * 2 + 1)];
              }
            }
          }
        }
      });
}

// [N, C, KK*P] -> [N, C*KK, P]. The sample index from dconv_coords is
// tap-major, so the flat layouts coincide and this is a pure reshape; the
// resulting weight matmul then runs over (c, ky, kx) in ascending order, the
// same order conv2d accumulates in.
template <class Real>
Tensor<Real> regroup_taps(const Tensor<Real>& samples, int c, int kk, int p) {
  return reshape(samples, {samples.dim(0), c * kk, p});
}

// cols [N, M, P] x weight [O, M] + bias [O] -> [N, O, P]. Accumulation per
// output element runs over M in ascending order with the bias as the initial
// value, matching conv2d_forward.
template <class Real>
Tensor<Real> weight_matmul(const Tensor<Real>& cols, const Tensor<Real>& weight,
                           const Tensor<Real>& bias) {
  const int n = cols.dim(0), m = cols.dim(1), p = cols.dim(2);
  const int o = weight.dim(0);
  MSENET_REQUIRE(weight.dim(1) == m, "weight_matmul: weight [", o, ",",
                 weight.dim(1), "] does not match cols ", shape_str(cols.shape()));
  std::vector<Real> out((size_t)n * o * p);
  for (int ni = 0; ni < n; ++ni) {
    Real* dst = out.data() + (int64_t)ni * o * p;
    for (int oi = 0; oi < o; ++oi)
      for (int pi = 0; pi < p; ++pi) dst[(int64_t)oi * p + pi] = bias.values()[(size_t)oi];
    kernels::matmul_nn(weight.values().data(),
                       cols.values().data() + (int64_t)ni * m * p, dst, o, m, p,
                       true);
  }
  auto c_n = cols.node();
  auto w_n = weight.node();
  auto b_n = bias.node();
  return make_op<Real>(
      "weight_matmul", {n, o, p}, std::move(out), {cols, weight, bias},
      [c_n, w_n, b_n, n, m, p, o](TensorNode<Real>& self) {
        for (int ni = 0; ni < n; ++ni) {
          const Real* g = self.grad.data() + (int64_t)ni * o * p;
          if (c_n->requires_grad) {
            kernels::matmul_tn(w_n->values.data(), g,
                               ensure_grad(*c_n) + (int64_t)ni * m * p, m, o, p,
                               true);
          }
          if (w_n->requires_grad) {
            kernels::matmul_nt(g, c_n->values.data() + (int64_t)ni * m * p,
                               ensure_grad(*w_n), o, p, m, true);
          }
        }
        if (b_n->requires_grad) {
          kernels::conv2d_backward_bias(self.grad.data(), ensure_grad(*b_n), n,
                                        o, p);
        }
      });
}

}  // namespace detail

// Deformable convolution: each kernel tap samples the input at its regular
// position plus a learned continuous offset, then taps combine with the
// kernel weights exactly as in conv2d. offsets is [N, 2*K*K, OH, OW] with
// (dx, dy) of tap t in channels (2t, 2t+1). Differentiable w.r.t. input,
// offsets, weight and bias. With all offsets zero this is conv2d.
template <class Real>
Tensor<Real> deformable_conv2d(const Tensor<Real>& input,
                               const Tensor<Real>& offsets,
                               const Tensor<Real>& weight,
                               const Tensor<Real>& bias, int stride, int pad) {
  MSENET_REQUIRE(input.ndim() == 4 && offsets.ndim() == 4 && weight.ndim() == 4,
                 "deformable_conv2d: need NCHW input/offsets and OCKK weight");
  const int k = weight.dim(2);
  MSENET_REQUIRE(weight.dim(3) == k, "deformable_conv2d: kernel must be square");
  MSENET_REQUIRE(input.dim(1) == weight.dim(1),
                 "deformable_conv2d: channel mismatch, input ",
                 shape_str(input.shape()), " vs weight ",
                 shape_str(weight.shape()));
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = conv_out_size(h, k, stride, pad);
  const int ow = conv_out_size(w, k, stride, pad);
  MSENET_REQUIRE(oh > 0 && ow > 0, "deformable_conv2d: non-positive output size");
  MSENET_REQUIRE(offsets.dim(1) == 2 * k * k,
                 "deformable_conv2d: offset channels must be 2*K*K = ", 2 * k * k,
                 ", got ", offsets.dim(1));
  MSENET_REQUIRE(offsets.dim(0) == n && offsets.dim(2) == oh && offsets.dim(3) == ow,
                 "deformable_conv2d: offsets must be [", n, ",", 2 * k * k, ",",
                 oh, ",", ow, "], got ", shape_str(offsets.shape()));

  const int kk = k * k;
  const int p = oh * ow;
  auto coords = detail::dconv_coords(offsets, k, stride, pad);
  auto samples = bilinear_sample(input, coords);       // [N, C, KK*P]
  auto cols = detail::regroup_taps(samples, cin, kk, p);  // [N, C*KK, P]
  auto wflat = reshape(weight, {weight.dim(0), cin * kk});
  auto out = detail::weight_matmul(cols, wflat, bias);  // [N, O, P]
  return reshape(out, {n, weight.dim(0), oh, ow});
}

}  // namespace msenet
