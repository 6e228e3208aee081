#pragma once

// Detections, anchor-free head decoding and greedy per-class NMS.

#include <vector>

#include "msenet/geometry.hpp"

namespace msenet {

struct Detection {
  BBox box;  // RGB pixel frame, center format
  int class_id = 0;
  double score = 0.0;  // in [0, 1]
};

// Decodes one image's head output (flat [C][gh][gw] values with
// C = n_classes + 4*n_bins). Per cell: score is the max sigmoid class logit;
// box sides are the DFL expected distances in cell units, scaled to RGB
// pixels around the cell center (cx + 0.5) * cell; cells scoring below the
// confidence threshold are dropped. Class ties pick the lower class id.
std::vector<Detection> decode_head(const std::vector<double>& raw, int n_classes,
                                   int n_bins, int grid_h, int grid_w, int img_w,
                                   int img_h, double conf_threshold);

// Greedy per-class suppression by descending score; candidates tie-break by
// lower class id, then input order. A kept box suppresses same-class boxes
// with iou > iou_threshold. Survivors come back in descending score order.
std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_threshold);

}  // namespace msenet
