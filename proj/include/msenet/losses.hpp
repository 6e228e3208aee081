#pragma once

// Training objective: BCE-with-logits classification, CIoU box regression and
// Distribution Focal Loss over the bracketing bins, glued together by a
// center-cell target assigner.

#include <array>
#include <cmath>

#include "msenet/geometry.hpp"
#include "msenet/tensor.hpp"

namespace msenet {

// Mean over elements of the numerically stable form
//   max(x, 0) - x*y + log(1 + exp(-|x|)),
// which equals -[y log σ(x) + (1-y) log(1-σ(x))] without overflow.
// Differentiable w.r.t. x; y are targets in [0, 1].
template <class Real>
Tensor<Real> bce_logits(const Tensor<Real>& x, const Tensor<Real>& y) {
  MSENET_REQUIRE(x.shape() == y.shape(), "bce_logits: shape mismatch ",
                 shape_str(x.shape()), " vs ", shape_str(y.shape()));
  for (Real t : y.values()) {
    MSENET_REQUIRE(t >= Real(0) && t <= Real(1),
                   "bce_logits: target outside [0, 1]: ", t);
  }
  const auto& xv = x.values();
  const auto& yv = y.values();
  Real acc = 0;
  for (size_t i = 0; i < xv.size(); ++i) {
    const Real v = xv[i];
    acc += std::max(v, Real(0)) - v * yv[i] + std::log1p(std::exp(-std::abs(v)));
  }
  const Real inv = Real(1) / Real(xv.size());
  auto xn = x.node();
  auto yn = y.node();
  return detail::make_op<Real>(
      "bce_logits", {1}, {acc * inv}, {x, y},
      [xn, yn, inv](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        const Real g = self.grad[0] * inv;
        for (size_t i = 0; i < xn->values.size(); ++i) {
          const Real v = xn->values[i];
          const Real s = v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                                : std::exp(v) / (Real(1) + std::exp(v));
          gx[i] += g * (s - yn->values[i]);
        }
      });
}

// Distribution focal loss. logits is [M, n_bins]; targets[m] is a continuous
// distance y in [0, n_bins-1]. Each row pays the cross entropy of the two
// bins bracketing y, weighted (y_hi - y, y - y_lo); mean over rows.
template <class Real>
Tensor<Real> dfl_loss(const Tensor<Real>& logits,
                      const std::vector<double>& targets) {
  MSENET_REQUIRE(logits.ndim() == 2, "dfl_loss: logits must be [M, n_bins], got ",
                 shape_str(logits.shape()));
  const int m = logits.dim(0), nb = logits.dim(1);
  MSENET_REQUIRE(nb >= 2, "dfl_loss: need at least 2 bins");
  MSENET_REQUIRE((int)targets.size() == m, "dfl_loss: ", targets.size(),
                 " targets for ", m, " rows");
  for (double y : targets) {
    MSENET_REQUIRE(y >= 0.0 && y <= (double)(nb - 1),
                   "dfl_loss: target distance ", y, " outside [0, ", nb - 1, "]");
  }

  // log-softmax per row, loss on the bracketing bins
  const auto& lv = logits.values();
  std::vector<Real> soft(lv.size());
  Real acc = 0;
  std::vector<int> lo_bin((size_t)m);
  std::vector<Real> w_hi((size_t)m);
  for (int r = 0; r < m; ++r) {
    const Real* src = lv.data() + (size_t)r * nb;
    Real mx = src[0];
    for (int j = 1; j < nb; ++j) mx = std::max(mx, src[j]);
    Real sum = 0;
    for (int j = 0; j < nb; ++j) sum += std::exp(src[j] - mx);
    const Real logsum = std::log(sum);
    for (int j = 0; j < nb; ++j)
      soft[(size_t)(r * nb + j)] = std::exp(src[j] - mx - logsum);
    int lo = (int)std::floor(targets[(size_t)r]);
    if (lo > nb - 2) lo = nb - 2;
    const Real hi_w = (Real)(targets[(size_t)r] - lo);
    lo_bin[(size_t)r] = lo;
    w_hi[(size_t)r] = hi_w;
    const Real log_lo = src[lo] - mx - logsum;
    const Real log_hi = src[lo + 1] - mx - logsum;
    acc -= (Real(1) - hi_w) * log_lo + hi_w * log_hi;
  }
  const Real inv = Real(1) / Real(m);
  auto ln = logits.node();
  return detail::make_op<Real>(
      "dfl_loss", {1}, {acc * inv}, {logits},
      [ln, soft = std::move(soft), lo_bin = std::move(lo_bin),
       w_hi = std::move(w_hi), m, nb, inv](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*ln);
        const Real g = self.grad[0] * inv;
        for (int r = 0; r < m; ++r) {
          for (int j = 0; j < nb; ++j) {
            Real t = 0;
            if (j == lo_bin[(size_t)r]) t = Real(1) - w_hi[(size_t)r];
            if (j == lo_bin[(size_t)r] + 1) t = w_hi[(size_t)r];
            gx[(size_t)(r * nb + j)] += g * (soft[(size_t)(r * nb + j)] - t);
          }
        }
      });
}

// Expected distance per row, sum_j j * softmax(logits)_j. Exact for one-hot
// rows and always within [0, n_bins-1].
template <class Real>
Tensor<Real> dfl_expected(const Tensor<Real>& logits) {
  MSENET_REQUIRE(logits.ndim() == 2, "dfl_expected: logits must be [M, n_bins]");
  const int nb = logits.dim(1);
  std::vector<Real> bins((size_t)nb);
  for (int j = 0; j < nb; ++j) bins[(size_t)j] = (Real)j;
  auto soft = softmax_lastdim(logits);
  auto expected = matmul(soft, Tensor<Real>::from_values({nb, 1}, bins));
  return reshape(expected, {logits.dim(0)});
}

// Mean of (1 - ciou(pred_i, gt_i)). pred is [P, 4] center-format (x, y, w, h)
// in the same coordinate frame as gt; differentiable w.r.t. pred. The alpha
// weight on the aspect term carries its full gradient so analytic and
// central-difference derivatives agree exactly.
template <class Real>
Tensor<Real> ciou_loss(const Tensor<Real>& pred, const std::vector<BBox>& gt) {
  MSENET_REQUIRE(pred.ndim() == 2 && pred.dim(1) == 4,
                 "ciou_loss: pred must be [P, 4], got ", shape_str(pred.shape()));
  const int p = pred.dim(0);
  MSENET_REQUIRE((int)gt.size() == p, "ciou_loss: ", gt.size(), " gt boxes for ",
                 p, " predictions");
  std::vector<Real> gx((size_t)p), gy((size_t)p), gw((size_t)p), gh((size_t)p);
  for (int i = 0; i < p; ++i) {
    MSENET_REQUIRE(gt[(size_t)i].w > 0 && gt[(size_t)i].h > 0,
                   "ciou_loss: gt box ", i, " has non-positive size");
    gx[(size_t)i] = (Real)gt[(size_t)i].x;
    gy[(size_t)i] = (Real)gt[(size_t)i].y;
    gw[(size_t)i] = (Real)gt[(size_t)i].w;
    gh[(size_t)i] = (Real)gt[(size_t)i].h;
  }
  for (int i = 0; i < p; ++i) {
    MSENET_REQUIRE(pred.values()[(size_t)(i * 4 + 2)] > 0 &&
                       pred.values()[(size_t)(i * 4 + 3)] > 0,
                   "ciou_loss: pred box ", i, " has non-positive size");
  }
  auto gxt = Tensor<Real>::from_values({p}, std::move(gx));
  auto gyt = Tensor<Real>::from_values({p}, std::move(gy));
  auto gwt = Tensor<Real>::from_values({p}, std::move(gw));
  auto ght = Tensor<Real>::from_values({p}, std::move(gh));

  auto px = select_column(pred, 0);
  auto py = select_column(pred, 1);
  auto pw = select_column(pred, 2);
  auto ph = select_column(pred, 3);

  auto half = [](const Tensor<Real>& t) { return mul_scalar(t, Real(0.5)); };
  auto p_x1 = sub(px, half(pw)), p_x2 = add(px, half(pw));
  auto p_y1 = sub(py, half(ph)), p_y2 = add(py, half(ph));
  auto g_x1 = sub(gxt, half(gwt)), g_x2 = add(gxt, half(gwt));
  auto g_y1 = sub(gyt, half(ght)), g_y2 = add(gyt, half(ght));

  auto iw = clamp_min(sub(minimum(p_x2, g_x2), maximum(p_x1, g_x1)), Real(0));
  auto ih = clamp_min(sub(minimum(p_y2, g_y2), maximum(p_y1, g_y1)), Real(0));
  auto inter = mul(iw, ih);
  auto uni = sub(add(mul(pw, ph), mul(gwt, ght)), inter);
  auto overlap = div(inter, uni);

  auto rho2 = add(square(sub(px, gxt)), square(sub(py, gyt)));
  auto cw = sub(maximum(p_x2, g_x2), minimum(p_x1, g_x1));
  auto ch = sub(maximum(p_y2, g_y2), minimum(p_y1, g_y1));
  auto c2 = add(square(cw), square(ch));

  const Real four_over_pi2 = Real(4.0 / (3.14159265358979323846 * 3.14159265358979323846));
  auto d = sub(arctan(div(gwt, ght)), arctan(div(pw, ph)));
  auto v = mul_scalar(square(d), four_over_pi2);
  // the tiny epsilon only guards the 0/0 of a perfect match, where the whole
  // term vanishes anyway
  auto one_minus_iou = add_scalar(neg(overlap), Real(1));
  auto alpha = div(v, add_scalar(add(one_minus_iou, v), Real(1e-12)));

  auto ciou_vec = sub(sub(overlap, div(rho2, c2)), mul(alpha, v));
  return add_scalar(neg(mean(ciou_vec)), Real(1));
}

// --------------------------------------------------------------------------
// Target assignment (center cell) and the combined detection loss
// --------------------------------------------------------------------------

struct AssignedTargets {
  int grid_h = 0, grid_w = 0, n_classes = 0, n_bins = 0;
  double cell_w = 0, cell_h = 0;  // cell size in image pixels

  // one-hot per positive cell, zero elsewhere; [n_classes][grid_h][grid_w]
  std::vector<double> class_targets;

  struct Positive {
    int cell = 0;                          // row-major grid index
    std::array<double, 4> sides{};         // (l, t, r, b) in cell units, clamped
    BBox gt_box;                           // original box, image pixels
    int class_id = 0;
  };
  std::vector<Positive> positives;
};

// Every ground-truth box whose center lies inside the grid claims the cell
// containing its center. When two boxes claim one cell the larger area wins;
// exact ties fall back to lexicographic (x, y, w, h, class) order so the
// result is independent of input order.
inline AssignedTargets assign_targets(const std::vector<GtBox>& gts, int img_w,
                                      int img_h, int grid_h, int grid_w,
                                      int n_classes, int n_bins) {
  MSENET_REQUIRE(grid_h > 0 && grid_w > 0 && n_classes > 0 && n_bins >= 2,
                 "assign_targets: bad grid/config");
  AssignedTargets out;
  out.grid_h = grid_h;
  out.grid_w = grid_w;
  out.n_classes = n_classes;
  out.n_bins = n_bins;
  out.cell_w = (double)img_w / grid_w;
  out.cell_h = (double)img_h / grid_h;
  out.class_targets.assign((size_t)n_classes * grid_h * grid_w, 0.0);

  std::vector<int> owner((size_t)grid_h * grid_w, -1);
  auto better = [&](const GtBox& a, const GtBox& b) {
    if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
    if (a.box.x != b.box.x) return a.box.x < b.box.x;
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    if (a.box.w != b.box.w) return a.box.w < b.box.w;
    if (a.box.h != b.box.h) return a.box.h < b.box.h;
    return a.class_id < b.class_id;
  };
  for (size_t i = 0; i < gts.size(); ++i) {
    MSENET_REQUIRE(gts[i].class_id >= 0 && gts[i].class_id < n_classes,
                   "assign_targets: class id ", gts[i].class_id, " out of range");
    const int cx = (int)std::floor(gts[i].box.x / out.cell_w);
    const int cy = (int)std::floor(gts[i].box.y / out.cell_h);
    if (cx < 0 || cx >= grid_w || cy < 0 || cy >= grid_h) continue;
    const int cell = cy * grid_w + cx;
    if (owner[(size_t)cell] >= 0 && !better(gts[i], gts[(size_t)owner[(size_t)cell]]))
      continue;
    owner[(size_t)cell] = (int)i;
  }

  const double side_max = (double)(n_bins - 1) - 1e-3;
  for (int cell = 0; cell < grid_h * grid_w; ++cell) {
    const int gi = owner[(size_t)cell];
    if (gi < 0) continue;
    const GtBox& g = gts[(size_t)gi];
    const int cy = cell / grid_w, cx = cell % grid_w;
    const double ccx = (cx + 0.5) * out.cell_w;
    const double ccy = (cy + 0.5) * out.cell_h;
    AssignedTargets::Positive pos;
    pos.cell = cell;
    pos.class_id = g.class_id;
    pos.gt_box = g.box;
    pos.sides[0] = std::clamp((ccx - g.box.x1()) / out.cell_w, 0.0, side_max);
    pos.sides[1] = std::clamp((ccy - g.box.y1()) / out.cell_h, 0.0, side_max);
    pos.sides[2] = std::clamp((g.box.x2() - ccx) / out.cell_w, 0.0, side_max);
    pos.sides[3] = std::clamp((g.box.y2() - ccy) / out.cell_h, 0.0, side_max);
    out.positives.push_back(pos);
    out.class_targets[(size_t)(g.class_id * grid_h * grid_w + cell)] = 1.0;
  }
  return out;
}

struct LossWeights {
  double cls = 0.5;
  double box_ciou = 7.5;
  double dfl = 1.5;
};

template <class Real>
struct LossParts {
  Tensor<Real> total;
  Tensor<Real> cls;
  Tensor<Real> box_ciou;
  Tensor<Real> dfl;
  int positives = 0;
};

// raw is the head output [N, n_classes + 4*n_bins, grid_h, grid_w]; targets
// has one entry per batch element on the same grid. Classification runs over
// every cell; the CIoU and DFL terms average over positive cells only, so a
// batch with no positives pays classification loss alone.
template <class Real>
LossParts<Real> detection_loss(const Tensor<Real>& raw,
                               const std::vector<AssignedTargets>& targets,
                               const LossWeights& weights) {
  MSENET_REQUIRE(raw.ndim() == 4, "detection_loss: raw must be NCHW");
  const int n = raw.dim(0);
  MSENET_REQUIRE((int)targets.size() == n, "detection_loss: ", targets.size(),
                 " target sets for batch of ", n);
  const int n_classes = targets[0].n_classes;
  const int n_bins = targets[0].n_bins;
  const int gh = targets[0].grid_h, gw = targets[0].grid_w;
  MSENET_REQUIRE(raw.dim(1) == n_classes + 4 * n_bins && raw.dim(2) == gh &&
                     raw.dim(3) == gw,
                 "detection_loss: raw ", shape_str(raw.shape()),
                 " does not match targets (", n_classes, " classes, ", n_bins,
                 " bins, ", gh, "x", gw, " grid)");

  // classification over all cells
  std::vector<Real> cls_t;
  cls_t.reserve((size_t)n * n_classes * gh * gw);
  for (const auto& t : targets) {
    MSENET_REQUIRE(t.grid_h == gh && t.grid_w == gw && t.n_classes == n_classes,
                   "detection_loss: inconsistent grids in batch");
    for (double v : t.class_targets) cls_t.push_back((Real)v);
  }
  auto cls_logits = slice_channels(raw, 0, n_classes);
  auto cls_loss = bce_logits(
      cls_logits, Tensor<Real>::from_values(cls_logits.shape(), std::move(cls_t)));

  LossParts<Real> parts;
  parts.cls = cls_loss;

  std::vector<int> pos_batch, pos_cell;
  std::vector<double> side_targets;
  std::vector<BBox> gt_boxes;
  std::vector<Real> ccx, ccy;
  for (int i = 0; i < n; ++i) {
    for (const auto& pos : targets[(size_t)i].positives) {
      pos_batch.push_back(i);
      pos_cell.push_back(pos.cell);
      for (double s : pos.sides) side_targets.push_back(s);
      gt_boxes.push_back(pos.gt_box);
      ccx.push_back((Real)((pos.cell % gw + 0.5) * targets[(size_t)i].cell_w));
      ccy.push_back((Real)((pos.cell / gw + 0.5) * targets[(size_t)i].cell_h));
    }
  }
  parts.positives = (int)pos_batch.size();

  if (parts.positives == 0) {
    parts.box_ciou = Tensor<Real>::scalar(0);
    parts.dfl = Tensor<Real>::scalar(0);
    parts.total = mul_scalar(cls_loss, (Real)weights.cls);
    return parts;
  }

  const int p = parts.positives;
  auto dist_logits = gather_cells(slice_channels(raw, n_classes, n_classes + 4 * n_bins),
                                  pos_batch, pos_cell);       // [P, 4*nb]
  auto rows = reshape(dist_logits, {p * 4, n_bins});          // row per side
  parts.dfl = dfl_loss(rows, side_targets);

  const double cell_w = targets[0].cell_w, cell_h = targets[0].cell_h;
  auto dist = reshape(dfl_expected(rows), {p, 4});            // (l, t, r, b) cells
  auto l = select_column(dist, 0);
  auto t = select_column(dist, 1);
  auto r = select_column(dist, 2);
  auto b = select_column(dist, 3);
  auto ccx_t = Tensor<Real>::from_values({p}, std::move(ccx));
  auto ccy_t = Tensor<Real>::from_values({p}, std::move(ccy));
  auto px = add(ccx_t, mul_scalar(sub(r, l), (Real)(cell_w / 2)));
  auto py = add(ccy_t, mul_scalar(sub(b, t), (Real)(cell_h / 2)));
  auto pw = clamp_min(mul_scalar(add(l, r), (Real)cell_w), (Real)1e-6);
  auto ph = clamp_min(mul_scalar(add(t, b), (Real)cell_h), (Real)1e-6);
  auto pred = stack_columns<Real>({px, py, pw, ph});
  parts.box_ciou = ciou_loss(pred, gt_boxes);

  parts.total = add(add(mul_scalar(cls_loss, (Real)weights.cls),
                        mul_scalar(parts.box_ciou, (Real)weights.box_ciou)),
                    mul_scalar(parts.dfl, (Real)weights.dfl));
  return parts;
}

}  // namespace msenet
