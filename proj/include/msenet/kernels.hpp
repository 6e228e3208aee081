#pragma once

// Compute kernels behind the tensor ops. Heavy loops are OpenMP-parallel over
// independent output elements (or over output planes each owned by a single
// thread), so results are bit-identical for any thread count: every element's
// reduction runs in the same fixed serial order no matter who computes it.
//
// msenet::refk holds plain nested-loop serial versions of the same kernels.
// They are the comparison baseline for tests and for the kernel benchmark and
// are intentionally written in the most obvious way possible.

#include <cstdint>

namespace msenet::kernels {

// out[n,o,oy,ox] = bias[o] + sum_{c,ky,kx} in[n,c,oy*s+ky-p,ox*s+kx-p] * w[o,c,ky,kx]
// Zero padding outside the input. bias may be null.
template <class Real>
void conv2d_forward(const Real* in, const Real* w, const Real* bias, Real* out,
                    int n, int cin, int h, int win, int cout, int k, int stride,
                    int pad, int oh, int ow);

template <class Real>
void conv2d_backward_input(const Real* gout, const Real* w, Real* gin, int n,
                           int cin, int h, int win, int cout, int k, int stride,
                           int pad, int oh, int ow);

template <class Real>
void conv2d_backward_weight(const Real* gout, const Real* in, Real* gw, int n,
                            int cin, int h, int win, int cout, int k,
                            int stride, int pad, int oh, int ow);

template <class Real>
void conv2d_backward_bias(const Real* gout, Real* gb, int n, int cout, int ohw);

// Bilinear sampling with zero padding: a sample at (x, y) reads the four
// surrounding grid values; corners outside [0,w-1]x[0,h-1] contribute zero.
// coords is [n][p][2] as (x, y); out is [n][c][p].
template <class Real>
void bilinear_forward(const Real* feat, const Real* coords, Real* out, int n,
                      int c, int h, int w, int p);

// Scatter of upstream gradients into the feature map. Parallel over (n, c)
// planes; each plane is written by exactly one thread.
template <class Real>
void bilinear_backward_feature(const Real* gout, const Real* coords, Real* gfeat,
                               int n, int c, int h, int w, int p);

// d(out)/d(coords); gcoords is [n][p][2], gathered over channels.
template <class Real>
void bilinear_backward_coords(const Real* gout, const Real* feat,
                              const Real* coords, Real* gcoords, int n, int c,
                              int h, int w, int p);

// Row-major matmul helpers used by the expert kernels and linear layers.
// out[m][q] = init(or 0) + sum_k a[m][k] * b[k][q]
template <class Real>
void matmul_nn(const Real* a, const Real* b, Real* out, int m, int k, int q,
               bool accumulate);

// out[m][q] += sum_k a[k][m] * b[k][q]   (a transposed)
template <class Real>
void matmul_tn(const Real* a, const Real* b, Real* out, int m, int k, int q,
               bool accumulate);

// out[m][q] += sum_k a[m][k] * b[q][k]   (b transposed)
template <class Real>
void matmul_nt(const Real* a, const Real* b, Real* out, int m, int k, int q,
               bool accumulate);

}  // namespace msenet::kernels

namespace msenet::refk {

// Six plain nested loops, the reference the fast path is checked against.
template <class Real>
void conv2d_forward_naive(const Real* in, const Real* w, const Real* bias,
                          Real* out, int n, int cin, int h, int win, int cout,
                          int k, int stride, int pad, int oh, int ow);

template <class Real>
Real bilinear_at_naive(const Real* plane, int h, int w, Real x, Real y);

template <class Real>
void bilinear_forward_naive(const Real* feat, const Real* coords, Real* out,
                            int n, int c, int h, int w, int p);

// Direct per-tap sampling form of the deformable convolution: every kernel
// tap samples at its regular position plus the learned (dx, dy) offset.
// offsets is [n][2*k*k][oh][ow], channel 2t = dx, 2t+1 = dy of tap t.
template <class Real>
void deformable_conv2d_forward_naive(const Real* in, const Real* offsets,
                                     const Real* w, const Real* bias, Real* out,
                                     int n, int cin, int h, int win, int cout,
                                     int k, int stride, int pad, int oh, int ow);

template <class Real>
void matmul_naive(const Real* a, const Real* b, Real* out, int m, int k, int q);

}  // namespace msenet::refk
