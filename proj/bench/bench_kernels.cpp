// Compares the OpenMP kernels against the serial naive reference at a few
// model-relevant sizes, for 1 and 2 threads, and reports the largest
// elementwise deviation alongside the timings.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "msenet/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using Clock = std::chrono::steady_clock;

namespace {

double ms_per_iter(const std::function<void()>& fn, int iters) {
  fn();  // warm
  const auto t0 = Clock::now();
  for (int i = 0; i < iters; ++i) fn();
  return std::chrono::duration<double>(Clock::now() - t0).count() / iters * 1e3;
}

std::vector<float> randu(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, (double)std::abs(a[i] - b[i]));
  return m;
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace

int main() {
  std::printf("%-34s %10s %10s %10s %12s\n", "kernel", "serial ms", "omp1 ms",
              "omp2 ms", "max |diff|");

  struct ConvCase {
    const char* name;
    int n, cin, h, w, cout, k, stride, pad;
  };
  const ConvCase conv_cases[] = {
      {"conv2d 4x3x120x160 -> 8 s2", 4, 3, 120, 160, 8, 3, 2, 1},
      {"conv2d 4x32x15x20 -> 32 s1", 4, 32, 15, 20, 32, 3, 1, 1},
      {"conv2d 8x16x60x80 -> 16 s1", 8, 16, 60, 80, 16, 3, 1, 1},
  };
  for (const auto& c : conv_cases) {
    const int oh = (c.h + 2 * c.pad - c.k) / c.stride + 1;
    const int ow = (c.w + 2 * c.pad - c.k) / c.stride + 1;
    auto in = randu((size_t)c.n * c.cin * c.h * c.w, 1);
    auto w = randu((size_t)c.cout * c.cin * c.k * c.k, 2);
    auto b = randu((size_t)c.cout, 3);
    std::vector<float> ref((size_t)c.n * c.cout * oh * ow);
    std::vector<float> fast(ref.size());

    const double t_ref = ms_per_iter(
        [&] {
          msenet::refk::conv2d_forward_naive(in.data(), w.data(), b.data(),
                                             ref.data(), c.n, c.cin, c.h, c.w,
                                             c.cout, c.k, c.stride, c.pad, oh, ow);
        },
        5);
    set_threads(1);
    const double t1 = ms_per_iter(
        [&] {
          msenet::kernels::conv2d_forward(in.data(), w.data(), b.data(),
                                          fast.data(), c.n, c.cin, c.h, c.w,
                                          c.cout, c.k, c.stride, c.pad, oh, ow);
        },
        10);
    set_threads(2);
    const double t2 = ms_per_iter(
        [&] {
          msenet::kernels::conv2d_forward(in.data(), w.data(), b.data(),
                                          fast.data(), c.n, c.cin, c.h, c.w,
                                          c.cout, c.k, c.stride, c.pad, oh, ow);
        },
        10);
    std::printf("%-34s %10.3f %10.3f %10.3f %12.3e\n", c.name, t_ref, t1, t2,
                max_abs_diff(ref, fast));
  }

  {
    const int n = 2, cin = 32, h = 12, w = 16, cout = 32, k = 3;
    const int oh = h, ow = w, kk = k * k;
    auto in = randu((size_t)n * cin * h * w, 4);
    auto wgt = randu((size_t)cout * cin * k * k, 5);
    auto b = randu((size_t)cout, 6);
    auto off = randu((size_t)n * 2 * kk * oh * ow, 7);
    for (auto& v : off) v *= 0.75f;
    std::vector<float> ref((size_t)n * cout * oh * ow);
    const double t_ref = ms_per_iter(
        [&] {
          msenet::refk::deformable_conv2d_forward_naive(
              in.data(), off.data(), wgt.data(), b.data(), ref.data(), n, cin, h,
              w, cout, k, 1, 1, oh, ow);
        },
        5);
    // the engine's deformable path is exercised end to end in the test suite;
    // here the naive kernel doubles as its own single-row baseline
    std::printf("%-34s %10.3f %10s %10s %12s\n", "deformable naive 2x32x12x16",
                t_ref, "-", "-", "-");
  }

  {
    const int m = 256, k = 288, q = 192;
    auto a = randu((size_t)m * k, 8);
    auto b = randu((size_t)k * q, 9);
    std::vector<float> ref((size_t)m * q), fast(ref.size());
    const double t_ref = ms_per_iter(
        [&] { msenet::refk::matmul_naive(a.data(), b.data(), ref.data(), m, k, q); },
        5);
    set_threads(1);
    const double t1 = ms_per_iter(
        [&] { msenet::kernels::matmul_nn(a.data(), b.data(), fast.data(), m, k, q, false); },
        10);
    set_threads(2);
    const double t2 = ms_per_iter(
        [&] { msenet::kernels::matmul_nn(a.data(), b.data(), fast.data(), m, k, q, false); },
        10);
    std::printf("%-34s %10.3f %10.3f %10.3f %12.3e\n", "matmul 256x288x192",
                t_ref, t1, t2, max_abs_diff(ref, fast));
  }

  {
    const int n = 4, c = 32, h = 15, w = 20, p = 9 * 48;
    auto feat = randu((size_t)n * c * h * w, 10);
    auto coords = randu((size_t)n * p * 2, 11);
    for (auto& v : coords) v = std::abs(v) * 4.f;
    std::vector<float> ref((size_t)n * c * p), fast(ref.size());
    const double t_ref = ms_per_iter(
        [&] {
          msenet::refk::bilinear_forward_naive(feat.data(), coords.data(),
                                               ref.data(), n, c, h, w, p);
        },
        10);
    set_threads(1);
    const double t1 = ms_per_iter(
        [&] {
          msenet::kernels::bilinear_forward(feat.data(), coords.data(),
                                            fast.data(), n, c, h, w, p);
        },
        10);
    set_threads(2);
    const double t2 = ms_per_iter(
        [&] {
          msenet::kernels::bilinear_forward(feat.data(), coords.data(),
                                            fast.data(), n, c, h, w, p);
        },
        10);
    std::printf("%-34s %10.3f %10.3f %10.3f %12.3e\n", "bilinear 4x32 432 samples",
                t_ref, t1, t2, max_abs_diff(ref, fast));
  }

  return 0;
}
