#pragma once

// Detection metrics: greedy same-class IoU matching, COCO-style
// continuous-integration average precision at IoU 0.50:0.05:0.95, and
// wall-clock throughput.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "msenet/detection.hpp"

namespace msenet {

struct MatchResult {
  std::vector<int> order;   // detection indices, descending score (stable)
  std::vector<char> is_tp;  // parallel to order
  int fn_count = 0;         // ground truths left unmatched
};

// Greedy matching: detections in descending score order (ties keep input
// order) each claim the highest-IoU unmatched same-class ground truth with
// IoU >= iou_thr; every ground truth matches at most once.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GtBox>& gts, double iou_thr);

// Area under the monotone precision envelope over recall (all-points
// integration). labels are TP flags in descending score order. Zero when
// nothing can be recalled.
double average_precision(const std::vector<char>& labels, int64_t n_gt);

inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

struct EvalResult {
  std::vector<double> iou_thresholds;
  std::vector<std::vector<double>> ap;  // [class][threshold]
  std::vector<char> class_active;      // has ground truth or detections
  double ap50 = 0;                      // macro over active classes at 0.5
  double ap_avg = 0;                    // macro over classes and thresholds
  std::vector<std::array<int64_t, 3>> counts;  // per threshold: TP, FP, FN
  double fps = 0;                       // filled by the caller's timing loop
};

// Aggregates matching and AP over a frame set. Frames pair up by index;
// classes with neither ground truth nor detections are excluded from the
// macro averages.
EvalResult evaluate(const std::vector<std::vector<Detection>>& dets_per_frame,
                    const std::vector<std::vector<GtBox>>& gts_per_frame,
                    int n_classes);

// timed_n / elapsed seconds over the timed loop, after warmup_n untimed
// iterations; runs single-threaded (thread count restored afterwards).
double measure_fps(const std::function<void(int)>& run_frame, int warmup_n,
                   int timed_n);

// "class,iou_thr,ap" rows, fixed formatting, deterministic order.
void write_eval_csv(const std::string& path, const EvalResult& result,
                    const std::vector<std::string>& class_names);

// Human-readable per-class table plus summary.
void write_eval_report(const std::string& path, const EvalResult& result,
                       const std::vector<std::string>& class_names);

}  // namespace msenet
