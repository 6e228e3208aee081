#pragma once

#include <random>
#include <string>

#include "msenet/nn_ops.hpp"
#include "msenet/params.hpp"

namespace msenet {

template <class Real>
struct Conv2d {
  Tensor<Real> w, b;
  int stride = 1, pad = 0;

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    return conv2d(x, w, b, stride, pad);
  }
};

// Registers <path>.weight / <path>.bias. Weights are He-normal over fan-in
// (or zero for offset predictors), biases constant.
template <class Real>
Conv2d<Real> make_conv(ParamStore<Real>& ps, const std::string& path, int cin,
                       int cout, int k, int stride, int pad,
                       std::mt19937_64& rng, bool zero_weights = false,
                       double bias_value = 0.0) {
  Conv2d<Real> layer;
  layer.stride = stride;
  layer.pad = pad;
  if (zero_weights) {
    layer.w = ps.create_const(path + ".weight", {cout, cin, k, k}, Real(0));
  } else {
    const double stddev = std::sqrt(2.0 / (cin * k * k));
    layer.w = ps.create_randn(path + ".weight", {cout, cin, k, k}, rng, stddev);
  }
  layer.b = ps.create_const(path + ".bias", {cout}, (Real)bias_value);
  return layer;
}

}  // namespace msenet
