#pragma once

// Temporal information injection. Two skip-connected branches (per-position
// MLP followed by a 3x3 conv) process the current fused features and the
// previous frame's RGB features; the branches join by element-wise
// multiplication and a final per-position linear map. The module never sees
// a previous thermal frame.

#include <random>

#include "msenet/layers.hpp"

namespace msenet {

template <class Real>
struct Tiim {
  Conv2d<Real> mlp_a1, mlp_a2;  // 1x1, per-position linear pair (branch a)
  Conv2d<Real> conv_a;          // 3x3, spatial structure (branch a)
  Conv2d<Real> mlp_b1, mlp_b2;
  Conv2d<Real> conv_b;
  Conv2d<Real> out_linear;      // 1x1 per-position map after the join
};

template <class Real>
Tiim<Real> make_tiim(ParamStore<Real>& ps, const std::string& path, int channels,
                     std::mt19937_64& rng) {
  Tiim<Real> t;
  t.mlp_a1 = make_conv(ps, path + ".branch_a.mlp1", channels, channels, 1, 1, 0, rng);
  t.mlp_a2 = make_conv(ps, path + ".branch_a.mlp2", channels, channels, 1, 1, 0, rng);
  t.conv_a = make_conv(ps, path + ".branch_a.conv", channels, channels, 3, 1, 1, rng);
  t.mlp_b1 = make_conv(ps, path + ".branch_b.mlp1", channels, channels, 1, 1, 0, rng);
  t.mlp_b2 = make_conv(ps, path + ".branch_b.mlp2", channels, channels, 1, 1, 0, rng);
  t.conv_b = make_conv(ps, path + ".branch_b.conv", channels, channels, 3, 1, 1, rng);
  t.out_linear = make_conv(ps, path + ".out", channels, channels, 1, 1, 0, rng);
  return t;
}

// branch_a = f + conv_a(mlp_a(f)); branch_b = r + conv_b(mlp_b(r)) with r the
// previous-frame features resized to f's grid; output = out_linear(a ⊙ b).
// Output shape equals f_fusion's shape.
template <class Real>
Tensor<Real> tiim_forward(const Tensor<Real>& f_fusion,
                          const Tensor<Real>& f_rgb_prev, const Tiim<Real>& t) {
  MSENET_REQUIRE(f_fusion.ndim() == 4 && f_rgb_prev.ndim() == 4,
                 "tiim_forward: need NCHW features");
  MSENET_REQUIRE(f_fusion.dim(0) == f_rgb_prev.dim(0),
                 "tiim_forward: batch mismatch");
  MSENET_REQUIRE(f_fusion.dim(1) == f_rgb_prev.dim(1),
                 "tiim_forward: channel mismatch after projection, ",
                 f_fusion.dim(1), " vs ", f_rgb_prev.dim(1));
  auto r = crop_resize(f_rgb_prev, full_feature_box(), f_fusion.dim(2),
                       f_fusion.dim(3));
  auto mlp = [](const Conv2d<Real>& m1, const Conv2d<Real>& m2,
                const Tensor<Real>& x) { return m2(silu(m1(x))); };
  auto branch_a = add(f_fusion, t.conv_a(mlp(t.mlp_a1, t.mlp_a2, f_fusion)));
  auto branch_b = add(r, t.conv_b(mlp(t.mlp_b1, t.mlp_b2, r)));
  return t.out_linear(mul(branch_a, branch_b));
}

}  // namespace msenet
