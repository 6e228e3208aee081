#include <doctest.h>

#include <cmath>
#include <random>

#include "msenet/geometry.hpp"

using msenet::BBox;
using msenet::ExpertConfig;
using msenet::Frame;
using msenet::FrameGeometry;

TEST_CASE("make_anchor: lambda=1 / sigma=0 is the identity box") {
  std::mt19937_64 rng(1);
  auto a = msenet::make_anchor(msenet::full_feature_box(), {1.0, 0.0}, rng);
  CHECK(a.x == 0.5);
  CHECK(a.y == 0.5);
  CHECK(a.w == 1.0);
  CHECK(a.h == 1.0);
}

TEST_CASE("make_anchor: lambda=0.8 scales sides, area ratio 0.64") {
  std::mt19937_64 rng(2);
  auto a = msenet::make_anchor(msenet::full_feature_box(), {0.8, 0.0}, rng);
  CHECK(a.x == 0.5);
  CHECK(a.w == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(a.h == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::abs(a.area() - 0.64) < 1e-12);
}

TEST_CASE("make_anchor: noise statistics over 10000 draws") {
  std::mt19937_64 rng(3);
  const ExpertConfig cfg{0.6, 0.02};
  double sum = 0, sum_sq = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto a = msenet::make_anchor(msenet::full_feature_box(), cfg, rng);
    sum += a.w;
    sum_sq += a.w * a.w;
    CHECK(a.w > 0.0);
    CHECK(a.w <= 1.0);
    CHECK(a.h > 0.0);
    CHECK(a.h <= 1.0);
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(mean > 0.596);
  CHECK(mean < 0.604);
  CHECK(stddev > 0.018);
  CHECK(stddev < 0.022);
}

TEST_CASE("make_anchor clamps noisy sizes into (0, 1]") {
  std::mt19937_64 rng(4);
  const ExpertConfig cfg{1.0, 0.5};  // huge noise to force clamping
  for (int i = 0; i < 2000; ++i) {
    auto a = msenet::make_anchor(msenet::full_feature_box(), cfg, rng);
    CHECK(a.w >= msenet::kAnchorMinSize);
    CHECK(a.w <= 1.0);
    CHECK(a.h >= msenet::kAnchorMinSize);
    CHECK(a.h <= 1.0);
  }
}

TEST_CASE("iou basics") {
  const BBox a{2, 3, 4, 2, Frame::RgbPx};
  CHECK(msenet::iou(a, a) == doctest::Approx(1.0));
  const BBox far_box{50, 50, 2, 2, Frame::RgbPx};
  CHECK(msenet::iou(a, far_box) == doctest::Approx(0.0));
}

TEST_CASE("iou of unit squares offset by (0.5, 0.5) is 1/7") {
  const BBox a{0, 0, 1, 1, Frame::RgbPx};
  const BBox b{0.5, 0.5, 1, 1, Frame::RgbPx};
  CHECK(std::abs(msenet::iou(a, b) - 1.0 / 7) < 1e-12);
}

TEST_CASE("iou rejects mixed frames") {
  const BBox a{0, 0, 1, 1, Frame::RgbPx};
  const BBox b{0, 0, 1, 1, Frame::ThermalPx};
  CHECK_THROWS_AS(msenet::iou(a, b), msenet::contract_error);
}

TEST_CASE("ciou: identical boxes score 1") {
  const BBox a{5, 7, 3, 2, Frame::RgbPx};
  CHECK(msenet::ciou(a, a) == doctest::Approx(1.0));
}

TEST_CASE("ciou equals iou for concentric equal-aspect boxes") {
  const BBox a{0, 0, 1, 1, Frame::RgbPx};
  const BBox b{0, 0, 0.5, 0.5, Frame::RgbPx};
  CHECK(msenet::ciou(a, b) == doctest::Approx(msenet::iou(a, b)).epsilon(1e-12));
}

TEST_CASE("ciou of offset unit squares is 2/63") {
  const BBox a{0, 0, 1, 1, Frame::RgbPx};
  const BBox b{0.5, 0.5, 1, 1, Frame::RgbPx};
  CHECK(std::abs(msenet::ciou(a, b) - 2.0 / 63) < 1e-12);
}

TEST_CASE("ciou is bounded above by iou; equality iff centered equal-aspect") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-4, 4), size(0.3, 5);
  for (int i = 0; i < 500; ++i) {
    const BBox a{pos(rng), pos(rng), size(rng), size(rng), Frame::RgbPx};
    const BBox b{pos(rng), pos(rng), size(rng), size(rng), Frame::RgbPx};
    const double v_iou = msenet::iou(a, b);
    const double v_ciou = msenet::ciou(a, b);
    CHECK(v_ciou <= v_iou + 1e-12);
    CHECK(v_iou >= 0.0);
    CHECK(v_iou <= 1.0);
    CHECK(msenet::iou(a, b) == doctest::Approx(msenet::iou(b, a)));
  }
  // equality case: same center, same aspect ratio
  const BBox a{1, 2, 2, 4, Frame::RgbPx};
  const BBox b{1, 2, 1, 2, Frame::RgbPx};
  CHECK(msenet::ciou(a, b) == doctest::Approx(msenet::iou(a, b)).epsilon(1e-12));
}

TEST_CASE("map_box: same frame is untouched") {
  const FrameGeometry geo{160, 120, 64, 48, 0.6, 3, -2};
  const BBox a{10, 20, 5, 5, Frame::RgbPx};
  const BBox m = msenet::map_box(a, Frame::RgbPx, geo);
  CHECK(m.x == a.x);
  CHECK(m.w == a.w);
}

TEST_CASE("map_box: full RGB frame maps to the unit normalized box") {
  const FrameGeometry geo{160, 120, 64, 48, 0.6, 0, 0};
  const BBox full{80, 60, 160, 120, Frame::RgbPx};
  const BBox n = msenet::map_box(full, Frame::Normalized, geo);
  CHECK(n.x == doctest::Approx(0.5));
  CHECK(n.y == doctest::Approx(0.5));
  CHECK(n.w == doctest::Approx(1.0));
  CHECK(n.h == doctest::Approx(1.0));
}

TEST_CASE("map_box round trip rgb -> thermal -> rgb within 1e-9") {
  const FrameGeometry geo{160, 120, 64, 48, 0.6, 3, -2};
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(5, 150), size(2, 40);
  for (int i = 0; i < 200; ++i) {
    const BBox a{pos(rng), pos(rng) * 0.7, size(rng), size(rng), Frame::RgbPx};
    const BBox t = msenet::map_box(a, Frame::ThermalPx, geo);
    const BBox back = msenet::map_box(t, Frame::RgbPx, geo);
    CHECK(std::abs(back.x - a.x) < 1e-9);
    CHECK(std::abs(back.y - a.y) < 1e-9);
    CHECK(std::abs(back.w - a.w) < 1e-9);
    CHECK(std::abs(back.h - a.h) < 1e-9);
  }
}

TEST_CASE("map_box round trips through normalized too") {
  const FrameGeometry geo{160, 120, 64, 48, 0.85, -5, 4};
  const BBox a{33.25, 71.5, 12.75, 9.5, Frame::RgbPx};
  const BBox n = msenet::map_box(a, Frame::Normalized, geo);
  const BBox back = msenet::map_box(n, Frame::RgbPx, geo);
  CHECK(std::abs(back.x - a.x) < 1e-9);
  CHECK(std::abs(back.h - a.h) < 1e-9);
}

TEST_CASE("expert config validation") {
  const ExpertConfig zero_scale{0.0, 0.0};
  const ExpertConfig big_scale{1.2, 0.0};
  const ExpertConfig neg_noise{0.5, -0.1};
  const ExpertConfig ok{0.5, 0.02};
  CHECK_THROWS_AS(zero_scale.validate(), msenet::contract_error);
  CHECK_THROWS_AS(big_scale.validate(), msenet::contract_error);
  CHECK_THROWS_AS(neg_noise.validate(), msenet::contract_error);
  CHECK_NOTHROW(ok.validate());
}
