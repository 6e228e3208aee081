#include "msenet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msenet {

std::vector<Detection> decode_head(const std::vector<double>& raw, int n_classes,
                                   int n_bins, int grid_h, int grid_w, int img_w,
                                   int img_h, double conf_threshold) {
  const int channels = n_classes + 4 * n_bins;
  MSENET_REQUIRE((int64_t)raw.size() == (int64_t)channels * grid_h * grid_w,
                 "decode_head: ", raw.size(), " values for ", channels, "x",
                 grid_h, "x", grid_w);
  const double cell_w = (double)img_w / grid_w;
  const double cell_h = (double)img_h / grid_h;
  const int hw = grid_h * grid_w;

  std::vector<Detection> out;
  for (int cy = 0; cy < grid_h; ++cy) {
    for (int cx = 0; cx < grid_w; ++cx) {
      const int cell = cy * grid_w + cx;
      int best_class = 0;
      double best_logit = raw[(size_t)cell];
      for (int c = 1; c < n_classes; ++c) {
        const double v = raw[(size_t)(c * hw + cell)];
        if (v > best_logit) {
          best_logit = v;
          best_class = c;
        }
      }
      const double score = 1.0 / (1.0 + std::exp(-best_logit));
      if (score < conf_threshold) continue;

      double sides[4];  // l, t, r, b in cell units
      for (int s = 0; s < 4; ++s) {
        const int base = n_classes + s * n_bins;
        double mx = raw[(size_t)(base * hw + cell)];
        for (int j = 1; j < n_bins; ++j)
          mx = std::max(mx, raw[(size_t)((base + j) * hw + cell)]);
        double sum = 0, expectation = 0;
        for (int j = 0; j < n_bins; ++j) {
          const double e = std::exp(raw[(size_t)((base + j) * hw + cell)] - mx);
          sum += e;
          expectation += j * e;
        }
        sides[s] = expectation / sum;
      }
      const double ccx = (cx + 0.5) * cell_w;
      const double ccy = (cy + 0.5) * cell_h;
      const double x1 = ccx - sides[0] * cell_w, x2 = ccx + sides[2] * cell_w;
      const double y1 = ccy - sides[1] * cell_h, y2 = ccy + sides[3] * cell_h;
      Detection d;
      d.box = BBox{(x1 + x2) / 2, (y1 + y2) / 2, std::max(x2 - x1, 1e-6),
                   std::max(y2 - y1, 1e-6), Frame::RgbPx};
      d.class_id = best_class;
      d.score = score;
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_threshold) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (dets[(size_t)a].score != dets[(size_t)b].score)
      return dets[(size_t)a].score > dets[(size_t)b].score;
    return dets[(size_t)a].class_id < dets[(size_t)b].class_id;
  });

  std::vector<char> suppressed(dets.size(), 0);
  std::vector<Detection> kept;
  for (size_t i = 0; i < order.size(); ++i) {
    const int a = order[i];
    if (suppressed[(size_t)a]) continue;
    kept.push_back(dets[(size_t)a]);
    for (size_t j = i + 1; j < order.size(); ++j) {
      const int b = order[j];
      if (suppressed[(size_t)b] ||
          dets[(size_t)b].class_id != dets[(size_t)a].class_id)
        continue;
      if (iou(dets[(size_t)a].box, dets[(size_t)b].box) > iou_threshold)
        suppressed[(size_t)b] = 1;
    }
  }
  return kept;
}

}  // namespace msenet
