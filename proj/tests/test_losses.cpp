#include <doctest.h>

#include <cmath>
#include <random>

#include "msenet/gradcheck.hpp"
#include "msenet/losses.hpp"

using T64 = msenet::Tensor<double>;
using msenet::BBox;
using msenet::Frame;
using msenet::GtBox;

TEST_CASE("bce_logits analytic values") {
  auto ln2 = std::log(2.0);
  CHECK(std::abs(msenet::bce_logits(T64::scalar(0), T64::scalar(1)).item() - ln2) < 1e-9);
  CHECK(std::abs(msenet::bce_logits(T64::scalar(0), T64::scalar(0)).item() - ln2) < 1e-9);

  // high-precision route: direct evaluation in extended precision
  const long double x = 20.0L;
  const long double direct = logl(1.0L + expl(-x));
  const double got = msenet::bce_logits(T64::scalar(20), T64::scalar(1)).item();
  CHECK(std::abs(got - (double)direct) < 1e-18);
  CHECK(got == doctest::Approx(2.061153622e-9).epsilon(1e-6));
}

TEST_CASE("bce_logits stable form matches direct evaluation for |x| <= 10") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(-10, 10), uy(0, 1);
  for (int i = 0; i < 300; ++i) {
    const double x = ux(rng), y = uy(rng);
    const double sig = 1.0 / (1.0 + std::exp(-x));
    const double direct = -(y * std::log(sig) + (1 - y) * std::log(1 - sig));
    const double stable = msenet::bce_logits(T64::scalar(x), T64::scalar(y)).item();
    CHECK(std::abs(stable - direct) < 1e-9);
    CHECK(stable >= 0.0);
  }
}

TEST_CASE("bce_logits is strictly positive for finite logits at hard targets") {
  for (double x : {-5.0, -0.5, 0.0, 0.5, 5.0}) {
    CHECK(msenet::bce_logits(T64::scalar(x), T64::scalar(1)).item() > 0.0);
    CHECK(msenet::bce_logits(T64::scalar(x), T64::scalar(0)).item() > 0.0);
  }
}

TEST_CASE("bce_logits rejects targets outside [0, 1]") {
  CHECK_THROWS_AS(msenet::bce_logits(T64::scalar(0), T64::scalar(1.5)),
                  msenet::contract_error);
  CHECK_THROWS_AS(msenet::bce_logits(T64::scalar(0), T64::scalar(-0.1)),
                  msenet::contract_error);
}

TEST_CASE("bce_logits gradcheck") {
  std::mt19937_64 rng(2);
  auto x = T64::randn({4, 5}, rng, 2.0, true);
  std::uniform_real_distribution<double> uy(0, 1);
  std::vector<double> yv(20);
  for (auto& v : yv) v = uy(rng);
  auto y = T64::from_values({4, 5}, yv);
  auto f = [&] { return msenet::bce_logits(x, y); };
  auto report = msenet::gradcheck<double>(f, {x}, 1e-5, 1e-4);
  INFO(report.to_string());
  CHECK(report.pass);
}

TEST_CASE("dfl: one-hot distribution at an integer target costs ~0") {
  std::vector<double> lv(8, -30.0);
  lv[3] = 30.0;
  auto logits = T64::from_values({1, 8}, lv);
  CHECK(msenet::dfl_loss(logits, {3.0}).item() < 1e-9);
}

TEST_CASE("dfl: uniform distribution at an integer target costs ln n") {
  for (int nb : {2, 4, 8}) {
    auto logits = T64::zeros({1, nb});
    CHECK(std::abs(msenet::dfl_loss(logits, {1.0}).item() - std::log((double)nb)) <
          1e-12);
  }
}

TEST_CASE("dfl: midpoint target with equal bracketing mass costs ln 2") {
  auto logits = T64::zeros({1, 2});  // softmax -> (0.5, 0.5)
  CHECK(std::abs(msenet::dfl_loss(logits, {0.5}).item() - std::log(2.0)) < 1e-9);
}

TEST_CASE("dfl is non-negative; zero only for one-hot integer targets") {
  std::mt19937_64 rng(3);
  auto logits = T64::randn({6, 8}, rng, 2.0);
  std::uniform_real_distribution<double> uy(0, 7);
  std::vector<double> t(6);
  for (auto& v : t) v = uy(rng);
  CHECK(msenet::dfl_loss(logits, t).item() > 0.0);
}

TEST_CASE("dfl rejects out-of-range targets") {
  auto logits = T64::zeros({1, 8});
  CHECK_THROWS_AS(msenet::dfl_loss(logits, {7.5}), msenet::contract_error);
  CHECK_THROWS_AS(msenet::dfl_loss(logits, {-0.1}), msenet::contract_error);
}

TEST_CASE("dfl gradcheck") {
  std::mt19937_64 rng(4);
  auto logits = T64::randn({5, 8}, rng, 1.5, true);
  std::uniform_real_distribution<double> uy(0.1, 6.9);
  std::vector<double> t(5);
  for (auto& v : t) v = uy(rng);
  auto f = [&] { return msenet::dfl_loss(logits, t); };
  auto report = msenet::gradcheck<double>(f, {logits}, 1e-5, 1e-4);
  INFO(report.to_string());
  CHECK(report.pass);
}

TEST_CASE("dfl_expected: exact on one-hot rows, bounded everywhere") {
  std::vector<double> lv(8, -1000.0);
  lv[5] = 1000.0;  // softmax underflows to an exact one-hot
  auto e = msenet::dfl_expected(T64::from_values({1, 8}, lv));
  CHECK(e.values()[0] == 5.0);

  std::mt19937_64 rng(5);
  auto logits = T64::randn({40, 8}, rng, 3.0);
  auto ev = msenet::dfl_expected(logits);
  for (double v : ev.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 7.0);
  }
}

TEST_CASE("ciou_loss: perfect prediction costs zero") {
  const BBox g{10, 20, 6, 4, Frame::RgbPx};
  auto pred = T64::from_values({1, 4}, {10, 20, 6, 4});
  CHECK(msenet::ciou_loss(pred, {g}).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ciou_loss: concentric equal-aspect half-size box costs 3/4") {
  const BBox g{0, 0, 2, 2, Frame::RgbPx};
  auto pred = T64::from_values({1, 4}, {0, 0, 1, 1});
  CHECK(std::abs(msenet::ciou_loss(pred, {g}).item() - 0.75) < 1e-9);
}

TEST_CASE("ciou_loss matches the geometry module on random pairs") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(-5, 5), size(0.4, 6);
  for (int i = 0; i < 200; ++i) {
    const BBox a{pos(rng), pos(rng), size(rng), size(rng), Frame::RgbPx};
    const BBox g{pos(rng), pos(rng), size(rng), size(rng), Frame::RgbPx};
    auto pred = T64::from_values({1, 4}, {a.x, a.y, a.w, a.h});
    const double loss = msenet::ciou_loss(pred, {g}).item();
    CHECK(std::abs(loss - (1.0 - msenet::ciou(a, g))) < 1e-12);
  }
}

TEST_CASE("ciou_loss gradcheck") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-3, 3), size(1.0, 4);
  std::vector<double> pv;
  std::vector<BBox> gt;
  for (int i = 0; i < 6; ++i) {
    pv.insert(pv.end(), {pos(rng), pos(rng), size(rng), size(rng)});
    gt.push_back(BBox{pos(rng), pos(rng), size(rng), size(rng), Frame::RgbPx});
  }
  auto pred = T64::from_values({6, 4}, pv, true);
  auto f = [&] { return msenet::ciou_loss(pred, gt); };
  auto report = msenet::gradcheck<double>(f, {pred}, 1e-6, 1e-4);
  INFO(report.to_string());
  CHECK(report.pass);
}

TEST_CASE("assign_targets: a box centered in cell (2, 3) claims exactly it") {
  // 80x80 image on an 8x8 grid; cells are 10x10
  const GtBox g{BBox{25, 35, 12, 9, Frame::RgbPx}, 0};
  auto t = msenet::assign_targets({g}, 80, 80, 8, 8, 2, 8);
  REQUIRE(t.positives.size() == 1);
  CHECK(t.positives[0].cell == 3 * 8 + 2);
  CHECK(t.class_targets[(size_t)(0 * 64 + 3 * 8 + 2)] == 1.0);
  // sides are non-negative and below n_bins - 1
  for (double s : t.positives[0].sides) {
    CHECK(s >= 0.0);
    CHECK(s < 7.0);
  }
}

TEST_CASE("assign_targets: empty image yields no positives, all-zero targets") {
  auto t = msenet::assign_targets({}, 80, 80, 8, 8, 2, 8);
  CHECK(t.positives.empty());
  for (double v : t.class_targets) CHECK(v == 0.0);
}

TEST_CASE("assign_targets: same-cell collision keeps the larger area") {
  const GtBox small{BBox{25, 35, 2, 2, Frame::RgbPx}, 0};   // area 4
  const GtBox large{BBox{24, 34, 3, 3, Frame::RgbPx}, 1};   // area 9
  auto t1 = msenet::assign_targets({small, large}, 80, 80, 8, 8, 2, 8);
  auto t2 = msenet::assign_targets({large, small}, 80, 80, 8, 8, 2, 8);
  REQUIRE(t1.positives.size() == 1);
  CHECK(t1.positives[0].class_id == 1);
  CHECK(t2.positives[0].class_id == 1);
  CHECK(t1.positives[0].gt_box.w == 3);
}

TEST_CASE("assign_targets skips centers outside the grid") {
  const GtBox g{BBox{-5, 40, 20, 20, Frame::RgbPx}, 0};
  auto t = msenet::assign_targets({g}, 80, 80, 8, 8, 2, 8);
  CHECK(t.positives.empty());
}

namespace {

// Head tensor with hard class logits and one-hot DFL rows decoding to `g`.
msenet::Tensor<double> perfect_head(const std::vector<GtBox>& gts, int n_classes,
                                    int n_bins, int gh, int gw, int img_w,
                                    int img_h) {
  auto t = msenet::assign_targets(gts, img_w, img_h, gh, gw, n_classes, n_bins);
  std::vector<double> raw((size_t)(n_classes + 4 * n_bins) * gh * gw, -20.0);
  for (const auto& pos : t.positives) {
    raw[(size_t)(pos.class_id * gh * gw + pos.cell)] = 20.0;
    for (int side = 0; side < 4; ++side) {
      const int bin = (int)std::llround(pos.sides[(size_t)side]);
      for (int j = 0; j < n_bins; ++j) {
        raw[(size_t)((n_classes + side * n_bins + j) * gh * gw + pos.cell)] =
            j == bin ? 20.0 : -20.0;
      }
    }
  }
  return msenet::Tensor<double>::from_values({1, n_classes + 4 * n_bins, gh, gw},
                                             raw);
}

}  // namespace

TEST_CASE("detection_loss: perfect predictions cost < 1e-6") {
  // integer side distances: centers on cell centers, sides whole cells
  std::vector<GtBox> gts = {GtBox{BBox{25, 35, 40, 20, Frame::RgbPx}, 0},
                            GtBox{BBox{65, 75, 20, 40, Frame::RgbPx}, 1}};
  auto raw = perfect_head(gts, 2, 8, 8, 8, 80, 80);
  auto targets = msenet::assign_targets(gts, 80, 80, 8, 8, 2, 8);
  auto parts = msenet::detection_loss(raw, {targets}, {});
  CHECK(parts.positives == 2);
  CHECK(parts.total.item() < 1e-6);
}

TEST_CASE("detection_loss: empty image with confident negatives costs < 1e-6") {
  auto raw = T64::full({1, 2 + 32, 8, 8}, -20.0);
  auto targets = msenet::assign_targets({}, 80, 80, 8, 8, 2, 8);
  auto parts = msenet::detection_loss(raw, {targets}, {});
  CHECK(parts.positives == 0);
  CHECK(parts.total.item() < 1e-6);
  CHECK(parts.box_ciou.item() == 0.0);
  CHECK(parts.dfl.item() == 0.0);
}

TEST_CASE("detection_loss is invariant to ground-truth order") {
  std::mt19937_64 rng(8);
  auto raw = T64::randn({1, 2 + 32, 8, 8}, rng, 1.0);
  std::vector<GtBox> gts = {GtBox{BBox{25, 35, 12, 9, Frame::RgbPx}, 0},
                            GtBox{BBox{55, 15, 18, 22, Frame::RgbPx}, 1},
                            GtBox{BBox{24, 34, 30, 30, Frame::RgbPx}, 1}};
  std::vector<GtBox> reversed(gts.rbegin(), gts.rend());
  auto a = msenet::detection_loss(
      raw, {msenet::assign_targets(gts, 80, 80, 8, 8, 2, 8)}, {});
  auto b = msenet::detection_loss(
      raw, {msenet::assign_targets(reversed, 80, 80, 8, 8, 2, 8)}, {});
  CHECK(a.total.item() == b.total.item());
}

TEST_CASE("detection_loss gradcheck on a 1-image 2-box instance") {
  std::mt19937_64 rng(9);
  auto raw = T64::randn({1, 2 + 4 * 4, 4, 4}, rng, 1.0, true);
  std::vector<GtBox> gts = {GtBox{BBox{15, 25, 14, 11, Frame::RgbPx}, 0},
                            GtBox{BBox{55, 65, 17, 13, Frame::RgbPx}, 1}};
  auto targets = msenet::assign_targets(gts, 80, 80, 4, 4, 2, 4);
  REQUIRE(targets.positives.size() == 2);
  auto f = [&] { return msenet::detection_loss(raw, {targets}, {}).total; };
  auto report = msenet::gradcheck<double>(f, {raw}, 1e-5, 1e-3);
  INFO(report.to_string());
  CHECK(report.pass);
}
