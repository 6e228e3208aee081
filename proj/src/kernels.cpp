#include "msenet/kernels.hpp"

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msenet::kernels {

namespace {

// Valid output range [lo, hi) for which ix = ox*stride + k_off lies in [0, n).
inline void valid_range(int k_off, int stride, int n, int ow, int& lo, int& hi) {
  int a = -k_off;  // ix >= 0  ->  ox*stride >= -k_off
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  int b = n - 1 - k_off;  // ix <= n-1
  hi = b < 0 ? 0 : b / stride + 1;
  if (lo > ow) lo = ow;
  if (hi > ow) hi = ow;
}

}  // namespace

template <class Real>
void conv2d_forward(const Real* in, const Real* w, const Real* bias, Real* out,
                    int n, int cin, int h, int win, int cout, int k, int stride,
                    int pad, int oh, int ow) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int o = 0; o < cout; ++o) {
      Real* plane = out + ((int64_t)ni * cout + o) * oh * ow;
      const Real b = bias ? bias[o] : Real(0);
      for (int i = 0; i < oh * ow; ++i) plane[i] = b;
      for (int c = 0; c < cin; ++c) {
        const Real* in_plane = in + ((int64_t)ni * cin + c) * h * win;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const Real wv = w[(((int64_t)o * cin + c) * k + ky) * k + kx];
            int lo, hi;
            valid_range(kx - pad, stride, win, ow, lo, hi);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              const Real* in_row = in_plane + (int64_t)iy * win + kx - pad;
              Real* out_row = plane + (int64_t)oy * ow;
              for (int ox = lo; ox < hi; ++ox) {
                out_row[ox] += wv * in_row[ox * stride];
              }
            }
          }
        }
      }
    }
  }
}

template <class Real>
void conv2d_backward_input(const Real* gout, const Real* w, Real* gin, int n,
                           int cin, int h, int win, int cout, int k, int stride,
                           int pad, int oh, int ow) {
  // Each (n, c) input plane is owned by one thread; scatter within it is safe.
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int c = 0; c < cin; ++c) {
      Real* gplane = gin + ((int64_t)ni * cin + c) * h * win;
      for (int o = 0; o < cout; ++o) {
        const Real* gout_plane = gout + ((int64_t)ni * cout + o) * oh * ow;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const Real wv = w[(((int64_t)o * cin + c) * k + ky) * k + kx];
            int lo, hi;
            valid_range(kx - pad, stride, win, ow, lo, hi);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              Real* grow = gplane + (int64_t)iy * win + kx - pad;
              const Real* gout_row = gout_plane + (int64_t)oy * ow;
              for (int ox = lo; ox < hi; ++ox) {
                grow[ox * stride] += wv * gout_row[ox];
              }
            }
          }
        }
      }
    }
  }
}

template <class Real>
void conv2d_backward_weight(const Real* gout, const Real* in, Real* gw, int n,
                            int cin, int h, int win, int cout, int k,
                            int stride, int pad, int oh, int ow) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int o = 0; o < cout; ++o) {
    for (int c = 0; c < cin; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          // four-lane accumulation; the lane split is fixed, so the summation
          // order is fixed too
          Real acc[4] = {0, 0, 0, 0};
          int lo, hi;
          valid_range(kx - pad, stride, win, ow, lo, hi);
          for (int ni = 0; ni < n; ++ni) {
            const Real* in_plane = in + ((int64_t)ni * cin + c) * h * win;
            const Real* gout_plane = gout + ((int64_t)ni * cout + o) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              const Real* in_row = in_plane + (int64_t)iy * win + kx - pad;
              const Real* gout_row = gout_plane + (int64_t)oy * ow;
              int ox = lo;
              for (; ox + 4 <= hi; ox += 4) {
                acc[0] += gout_row[ox] * in_row[ox * stride];
                acc[1] += gout_row[ox + 1] * in_row[(ox + 1) * stride];
                acc[2] += gout_row[ox + 2] * in_row[(ox + 2) * stride];
                acc[3] += gout_row[ox + 3] * in_row[(ox + 3) * stride];
              }
              for (; ox < hi; ++ox) acc[0] += gout_row[ox] * in_row[ox * stride];
            }
          }
          gw[(((int64_t)o * cin + c) * k + ky) * k + kx] +=
              (acc[0] + acc[1]) + (acc[2] + acc[3]);
        }
      }
    }
  }
}

template <class Real>
void conv2d_backward_bias(const Real* gout, Real* gb, int n, int cout,
                          int ohw) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < cout; ++o) {
    Real acc = 0;
    for (int ni = 0; ni < n; ++ni) {
      const Real* row = gout + ((int64_t)ni * cout + o) * ohw;
      for (int i = 0; i < ohw; ++i) acc += row[i];
    }
    gb[o] += acc;
  }
}

namespace {

// Corner data for one bilinear sample. Out-of-bounds corners get index -1.
template <class Real>
struct Corners {
  int idx[4];
  Real wgt[4];
  Real fx, fy;
  int x0, y0;
};

template <class Real>
inline Corners<Real> corners_at(Real x, Real y, int h, int w) {
  Corners<Real> c;
  const Real fx0 = std::floor(x);
  const Real fy0 = std::floor(y);
  const int x0 = (int)fx0;
  const int y0 = (int)fy0;
  const Real fx = x - fx0;
  const Real fy = y - fy0;
  c.fx = fx;
  c.fy = fy;
  c.x0 = x0;
  c.y0 = y0;
  const int xs[2] = {x0, x0 + 1};
  const int ys[2] = {y0, y0 + 1};
  const Real wx[2] = {Real(1) - fx, fx};
  const Real wy[2] = {Real(1) - fy, fy};
  int t = 0;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const bool inb = xs[i] >= 0 && xs[i] < w && ys[j] >= 0 && ys[j] < h;
      c.idx[t] = inb ? ys[j] * w + xs[i] : -1;
      c.wgt[t] = wy[j] * wx[i];
      ++t;
    }
  }
  return c;
}

}  // namespace

template <class Real>
void bilinear_forward(const Real* feat, const Real* coords, Real* out, int n,
                      int c, int h, int w, int p) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const Real* plane = feat + ((int64_t)ni * c + ci) * h * w;
      const Real* co = coords + (int64_t)ni * p * 2;
      Real* dst = out + ((int64_t)ni * c + ci) * p;
      for (int pi = 0; pi < p; ++pi) {
        const auto cr = corners_at(co[pi * 2], co[pi * 2 + 1], h, w);
        Real v = 0;
        for (int t = 0; t < 4; ++t) {
          if (cr.idx[t] >= 0) v += cr.wgt[t] * plane[cr.idx[t]];
        }
        dst[pi] = v;
      }
    }
  }
}

template <class Real>
void bilinear_backward_feature(const Real* gout, const Real* coords, Real* gfeat,
                               int n, int c, int h, int w, int p) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      Real* gplane = gfeat + ((int64_t)ni * c + ci) * h * w;
      const Real* co = coords + (int64_t)ni * p * 2;
      const Real* g = gout + ((int64_t)ni * c + ci) * p;
      for (int pi = 0; pi < p; ++pi) {
        const auto cr = corners_at(co[pi * 2], co[pi * 2 + 1], h, w);
        for (int t = 0; t < 4; ++t) {
          if (cr.idx[t] >= 0) gplane[cr.idx[t]] += cr.wgt[t] * g[pi];
        }
      }
    }
  }
}

template <class Real>
void bilinear_backward_coords(const Real* gout, const Real* feat,
                              const Real* coords, Real* gcoords, int n, int c,
                              int h, int w, int p) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int pi = 0; pi < p; ++pi) {
      const Real* co = coords + (int64_t)ni * p * 2;
      const auto cr = corners_at(co[pi * 2], co[pi * 2 + 1], h, w);
      // d(sample)/dx and /dy per channel, with zero for out-of-bounds corners.
      Real gx = 0, gy = 0;
      for (int ci = 0; ci < c; ++ci) {
        const Real* plane = feat + ((int64_t)ni * c + ci) * h * w;
        Real v[4];
        for (int t = 0; t < 4; ++t) v[t] = cr.idx[t] >= 0 ? plane[cr.idx[t]] : Real(0);
        const Real g = gout[((int64_t)ni * c + ci) * p + pi];
        const Real dvdx = (Real(1) - cr.fy) * (v[1] - v[0]) + cr.fy * (v[3] - v[2]);
        const Real dvdy = (Real(1) - cr.fx) * (v[2] - v[0]) + cr.fx * (v[3] - v[1]);
        gx += g * dvdx;
        gy += g * dvdy;
      }
      gcoords[((int64_t)ni * p + pi) * 2] += gx;
      gcoords[((int64_t)ni * p + pi) * 2 + 1] += gy;
    }
  }
}

template <class Real>
void matmul_nn(const Real* a, const Real* b, Real* out, int m, int k, int q,
               bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    Real* row = out + (int64_t)i * q;
    if (!accumulate) {
      for (int j = 0; j < q; ++j) row[j] = 0;
    }
    for (int kk = 0; kk < k; ++kk) {
      const Real av = a[(int64_t)i * k + kk];
      const Real* brow = b + (int64_t)kk * q;
      for (int j = 0; j < q; ++j) row[j] += av * brow[j];
    }
  }
}

template <class Real>
void matmul_tn(const Real* a, const Real* b, Real* out, int m, int k, int q,
               bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    Real* row = out + (int64_t)i * q;
    if (!accumulate) {
      for (int j = 0; j < q; ++j) row[j] = 0;
    }
    for (int kk = 0; kk < k; ++kk) {
      const Real av = a[(int64_t)kk * m + i];
      const Real* brow = b + (int64_t)kk * q;
      for (int j = 0; j < q; ++j) row[j] += av * brow[j];
    }
  }
}

template <class Real>
void matmul_nt(const Real* a, const Real* b, Real* out, int m, int k, int q,
               bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + (int64_t)i * k;
    Real* row = out + (int64_t)i * q;
    for (int j = 0; j < q; ++j) {
      const Real* brow = b + (int64_t)j * k;
      Real acc[4] = {0, 0, 0, 0};
      int kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        acc[0] += arow[kk] * brow[kk];
        acc[1] += arow[kk + 1] * brow[kk + 1];
        acc[2] += arow[kk + 2] * brow[kk + 2];
        acc[3] += arow[kk + 3] * brow[kk + 3];
      }
      for (; kk < k; ++kk) acc[0] += arow[kk] * brow[kk];
      const Real sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
      if (accumulate) {
        row[j] += sum;
      } else {
        row[j] = sum;
      }
    }
  }
}

#define MSENET_INSTANTIATE_KERNELS(Real)                                        \
  template void conv2d_forward<Real>(const Real*, const Real*, const Real*,    \
                                     Real*, int, int, int, int, int, int, int, \
                                     int, int, int);                           \
  template void conv2d_backward_input<Real>(const Real*, const Real*, Real*,   \
                                            int, int, int, int, int, int, int, \
                                            int, int, int);                    \
  template void conv2d_backward_weight<Real>(const Real*, const Real*, Real*,  \
                                             int, int, int, int, int, int,     \
                                             int, int, int, int);              \
  template void conv2d_backward_bias<Real>(const Real*, Real*, int, int, int); \
  template void bilinear_forward<Real>(const Real*, const Real*, Real*, int,   \
                                       int, int, int, int);                    \
  template void bilinear_backward_feature<Real>(const Real*, const Real*,      \
                                                Real*, int, int, int, int,     \
                                                int);                          \
  template void bilinear_backward_coords<Real>(const Real*, const Real*,       \
                                               const Real*, Real*, int, int,   \
                                               int, int, int);                 \
  template void matmul_nn<Real>(const Real*, const Real*, Real*, int, int,     \
                                int, bool);                                    \
  template void matmul_tn<Real>(const Real*, const Real*, Real*, int, int,     \
                                int, bool);                                    \
  template void matmul_nt<Real>(const Real*, const Real*, Real*, int, int,     \
                                int, bool);

MSENET_INSTANTIATE_KERNELS(float)
MSENET_INSTANTIATE_KERNELS(double)

}  // namespace msenet::kernels

namespace msenet::refk {

template <class Real>
void conv2d_forward_naive(const Real* in, const Real* w, const Real* bias,
                          Real* out, int n, int cin, int h, int win, int cout,
                          int k, int stride, int pad, int oh, int ow) {
  for (int ni = 0; ni < n; ++ni) {
    for (int o = 0; o < cout; ++o) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          Real acc = bias ? bias[o] : Real(0);
          for (int c = 0; c < cin; ++c) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= win) continue;
                acc += in[(((int64_t)ni * cin + c) * h + iy) * win + ix] *
                       w[(((int64_t)o * cin + c) * k + ky) * k + kx];
              }
            }
          }
          out[(((int64_t)ni * cout + o) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

template <class Real>
Real bilinear_at_naive(const Real* plane, int h, int w, Real x, Real y) {
  const int x0 = (int)std::floor(x);
  const int y0 = (int)std::floor(y);
  const Real fx = x - std::floor(x);
  const Real fy = y - std::floor(y);
  auto at = [&](int yy, int xx) -> Real {
    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return Real(0);
    return plane[yy * w + xx];
  };
  return (Real(1) - fy) * ((Real(1) - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((Real(1) - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

template <class Real>
void bilinear_forward_naive(const Real* feat, const Real* coords, Real* out,
                            int n, int c, int h, int w, int p) {
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int pi = 0; pi < p; ++pi) {
        const Real x = coords[((int64_t)ni * p + pi) * 2];
        const Real y = coords[((int64_t)ni * p + pi) * 2 + 1];
        out[((int64_t)ni * c + ci) * p + pi] =
            bilinear_at_naive(feat + ((int64_t)ni * c + ci) * h * w, h, w, x, y);
      }
    }
  }
}

template <class Real>
void deformable_conv2d_forward_naive(const Real* in, const Real* offsets,
                                     const Real* w, const Real* bias, Real* out,
                                     int n, int cin, int h, int win, int cout,
                                     int k, int stride, int pad, int oh,
                                     int ow) {
  const int kk = k * k;
  for (int ni = 0; ni < n; ++ni) {
    for (int o = 0; o < cout; ++o) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          Real acc = bias ? bias[o] : Real(0);
          for (int c = 0; c < cin; ++c) {
            const Real* plane = in + ((int64_t)ni * cin + c) * h * win;
            for (int t = 0; t < kk; ++t) {
              const int ky = t / k;
              const int kx = t % k;
              const Real dx =
                  offsets[(((int64_t)ni * 2 * kk + 2 * t) * oh + oy) * ow + ox];
              const Real dy =
                  offsets[(((int64_t)ni * 2 * kk + 2 * t + 1) * oh + oy) * ow +
                          ox];
              const Real x = Real(ox * stride + kx - pad) + dx;
              const Real y = Real(oy * stride + ky - pad) + dy;
              acc += w[(((int64_t)o * cin + c) * k + ky) * k + kx] *
                     bilinear_at_naive(plane, h, win, x, y);
            }
          }
          out[(((int64_t)ni * cout + o) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

template <class Real>
void matmul_naive(const Real* a, const Real* b, Real* out, int m, int k,
                  int q) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < q; ++j) {
      Real acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += a[(int64_t)i * k + kk] * b[(int64_t)kk * q + j];
      out[(int64_t)i * q + j] = acc;
    }
  }
}

#define MSENET_INSTANTIATE_REFK(Real)                                          \
  template void conv2d_forward_naive<Real>(const Real*, const Real*,           \
                                           const Real*, Real*, int, int, int,  \
                                           int, int, int, int, int, int, int); \
  template Real bilinear_at_naive<Real>(const Real*, int, int, Real, Real);    \
  template void bilinear_forward_naive<Real>(const Real*, const Real*, Real*,  \
                                             int, int, int, int, int);         \
  template void deformable_conv2d_forward_naive<Real>(                         \
      const Real*, const Real*, const Real*, const Real*, Real*, int, int,     \
      int, int, int, int, int, int, int, int);                                 \
  template void matmul_naive<Real>(const Real*, const Real*, Real*, int, int,  \
                                   int);

MSENET_INSTANTIATE_REFK(float)
MSENET_INSTANTIATE_REFK(double)

}  // namespace msenet::refk
