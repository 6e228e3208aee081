#include "msenet/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msenet {

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GtBox>& gts, double iou_thr) {
  MatchResult res;
  res.order.resize(dets.size());
  std::iota(res.order.begin(), res.order.end(), 0);
  std::stable_sort(res.order.begin(), res.order.end(), [&](int a, int b) {
    return dets[(size_t)a].score > dets[(size_t)b].score;
  });

  std::vector<char> gt_used(gts.size(), 0);
  res.is_tp.assign(dets.size(), 0);
  for (size_t i = 0; i < res.order.size(); ++i) {
    const auto& d = dets[(size_t)res.order[i]];
    int best_gt = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].class_id != d.class_id) continue;
      const double v = iou(d.box, gts[g].box);
      if (v >= iou_thr && v > best_iou) {
        best_iou = v;
        best_gt = (int)g;
      }
    }
    if (best_gt >= 0) {
      gt_used[(size_t)best_gt] = 1;
      res.is_tp[i] = 1;
    }
  }
  res.fn_count = (int)gts.size() -
                 (int)std::count(gt_used.begin(), gt_used.end(), (char)1);
  return res;
}

double average_precision(const std::vector<char>& labels, int64_t n_gt) {
  if (n_gt <= 0 || labels.empty()) return 0.0;
  const size_t n = labels.size();
  std::vector<double> precision(n), recall(n);
  int64_t tp = 0;
  for (size_t i = 0; i < n; ++i) {
    tp += labels[i] ? 1 : 0;
    precision[i] = (double)tp / (double)(i + 1);
    recall[i] = (double)tp / (double)n_gt;
  }
  // monotone non-increasing envelope
  for (size_t i = n - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

EvalResult evaluate(const std::vector<std::vector<Detection>>& dets_per_frame,
                    const std::vector<std::vector<GtBox>>& gts_per_frame,
                    int n_classes) {
  MSENET_REQUIRE(dets_per_frame.size() == gts_per_frame.size(),
                 "evaluate: ", dets_per_frame.size(), " detection frames vs ",
                 gts_per_frame.size(), " ground-truth frames");
  MSENET_REQUIRE(n_classes >= 1, "evaluate: need at least one class");

  EvalResult res;
  res.iou_thresholds = coco_iou_thresholds();
  res.ap.assign((size_t)n_classes,
                std::vector<double>(res.iou_thresholds.size(), 0.0));
  res.counts.assign(res.iou_thresholds.size(), {0, 0, 0});

  std::vector<int64_t> n_gt((size_t)n_classes, 0);
  std::vector<char> has_det((size_t)n_classes, 0);
  for (const auto& gts : gts_per_frame) {
    for (const auto& g : gts) {
      MSENET_REQUIRE(g.class_id >= 0 && g.class_id < n_classes,
                     "evaluate: ground-truth class ", g.class_id, " out of range");
      n_gt[(size_t)g.class_id]++;
    }
  }
  for (const auto& dets : dets_per_frame) {
    for (const auto& d : dets) {
      MSENET_REQUIRE(d.class_id >= 0 && d.class_id < n_classes,
                     "evaluate: detection class ", d.class_id, " out of range");
      has_det[(size_t)d.class_id] = 1;
    }
  }
  res.class_active.resize((size_t)n_classes);
  for (int c = 0; c < n_classes; ++c)
    res.class_active[(size_t)c] = n_gt[(size_t)c] > 0 || has_det[(size_t)c];

  for (size_t ti = 0; ti < res.iou_thresholds.size(); ++ti) {
    // scored labels per class, frames concatenated in order
    std::vector<std::vector<std::pair<double, char>>> scored((size_t)n_classes);
    for (size_t f = 0; f < dets_per_frame.size(); ++f) {
      const auto m = match_detections(dets_per_frame[f], gts_per_frame[f],
                                      res.iou_thresholds[ti]);
      for (size_t i = 0; i < m.order.size(); ++i) {
        const auto& d = dets_per_frame[f][(size_t)m.order[i]];
        scored[(size_t)d.class_id].push_back({d.score, m.is_tp[i]});
        res.counts[ti][m.is_tp[i] ? 0 : 1]++;
      }
      res.counts[ti][2] += m.fn_count;
    }
    for (int c = 0; c < n_classes; ++c) {
      auto& sc = scored[(size_t)c];
      std::stable_sort(sc.begin(), sc.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
      });
      std::vector<char> labels;
      labels.reserve(sc.size());
      for (const auto& [score, tp] : sc) labels.push_back(tp);
      res.ap[(size_t)c][ti] = average_precision(labels, n_gt[(size_t)c]);
    }
  }

  int active = 0;
  for (int c = 0; c < n_classes; ++c) active += res.class_active[(size_t)c] ? 1 : 0;
  if (active > 0) {
    double sum50 = 0, sum_all = 0;
    for (int c = 0; c < n_classes; ++c) {
      if (!res.class_active[(size_t)c]) continue;
      sum50 += res.ap[(size_t)c][0];
      for (double v : res.ap[(size_t)c]) sum_all += v;
    }
    res.ap50 = sum50 / active;
    res.ap_avg = sum_all / (active * (double)res.iou_thresholds.size());
  }
  return res;
}

double measure_fps(const std::function<void(int)>& run_frame, int warmup_n,
                   int timed_n) {
  MSENET_REQUIRE(timed_n >= 1, "measure_fps: timed_n must be >= 1");
#ifdef _OPENMP
  const int saved_threads = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  for (int i = 0; i < warmup_n; ++i) run_frame(i);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < timed_n; ++i) run_frame(warmup_n + i);
  const auto end = std::chrono::steady_clock::now();
#ifdef _OPENMP
  omp_set_num_threads(saved_threads);
#endif
  const double seconds = std::chrono::duration<double>(end - start).count();
  return (double)timed_n / seconds;
}

void write_eval_csv(const std::string& path, const EvalResult& result,
                    const std::vector<std::string>& class_names) {
  std::ofstream f(path);
  if (!f) fail_io("cannot open for writing: ", path);
  f << "class,iou_thr,ap\n";
  char buf[128];
  for (size_t c = 0; c < result.ap.size(); ++c) {
    const std::string name =
        c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    for (size_t t = 0; t < result.iou_thresholds.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%s,%.2f,%.6f\n", name.c_str(),
                    result.iou_thresholds[t], result.ap[c][t]);
      f << buf;
    }
  }
  if (!f) fail_io("failed writing ", path);
}

void write_eval_report(const std::string& path, const EvalResult& result,
                       const std::vector<std::string>& class_names) {
  std::ofstream f(path);
  if (!f) fail_io("cannot open for writing: ", path);
  char buf[256];
  f << "per-class AP\n";
  for (size_t c = 0; c < result.ap.size(); ++c) {
    const std::string name =
        c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    std::snprintf(buf, sizeof(buf), "  %-12s ap50=%.4f ap=%.4f%s\n", name.c_str(),
                  result.ap[c][0],
                  std::accumulate(result.ap[c].begin(), result.ap[c].end(), 0.0) /
                      (double)result.ap[c].size(),
                  result.class_active[c] ? "" : " (inactive, excluded)");
    f << buf;
  }
  const auto& c50 = result.counts[0];
  std::snprintf(buf, sizeof(buf),
                "summary\n  AP50=%.4f AP=%.4f\n  tp=%lld fp=%lld fn=%lld at iou "
                "0.50\n  fps=%.2f\n",
                result.ap50, result.ap_avg, (long long)c50[0], (long long)c50[1],
                (long long)c50[2], result.fps);
  f << buf;
  if (!f) fail_io("failed writing ", path);
}

}  // namespace msenet
