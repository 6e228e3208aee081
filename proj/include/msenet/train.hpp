#pragma once

// SGD-with-momentum training over synthetic frame pairs. One permutation of
// the training frames is drawn per run and reused every epoch, so a zero
// learning rate provably freezes the loss curve and two runs with one seed
// produce identical logs.

#include <chrono>
#include <cmath>
#include <random>

#include "msenet/model.hpp"
#include "msenet/voc.hpp"

namespace msenet {

template <class Real>
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    MSENET_REQUIRE(lr >= 0.0, "sgd: negative learning rate");
    MSENET_REQUIRE(momentum >= 0.0 && momentum < 1.0, "sgd: momentum must be in [0, 1)");
  }

  void step(ParamStore<Real>& params) {
    const auto& entries = params.entries();
    if (velocity_.empty()) {
      velocity_.resize(entries.size());
      for (size_t i = 0; i < entries.size(); ++i)
        velocity_[i].assign((size_t)entries[i].second.numel(), Real(0));
    }
    MSENET_REQUIRE(velocity_.size() == entries.size(),
                   "sgd: parameter set changed between steps");
    for (size_t i = 0; i < entries.size(); ++i) {
      auto t = entries[i].second;
      if (!t.has_grad()) continue;
      const auto& g = t.grad();
      auto& vals = t.mutable_values();
      auto& vel = velocity_[i];
      for (size_t j = 0; j < vals.size(); ++j) {
        vel[j] = (Real)momentum_ * vel[j] + g[j];
        vals[j] -= (Real)lr_ * vel[j];
      }
    }
  }

 private:
  double lr_, momentum_;
  std::vector<std::vector<Real>> velocity_;
};

// A training sample: the current frame plus its predecessor in the same
// sequence (the first frame of a sequence injects itself).
struct TrainItem {
  const FramePair* cur = nullptr;
  const FramePair* prev = nullptr;
};

inline std::vector<TrainItem> make_train_items(const Dataset& ds,
                                               const std::string& split) {
  std::vector<TrainItem> items;
  for (const auto& seq : ds.sequences) {
    if (seq.split != split) continue;
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      items.push_back({&seq.frames[i], i > 0 ? &seq.frames[i - 1] : &seq.frames[i]});
    }
  }
  return items;
}

template <class Real>
Tensor<Real> image_batch(const std::vector<const FramePair*>& frames, bool rgb) {
  MSENET_REQUIRE(!frames.empty(), "image_batch: empty batch");
  const int n = (int)frames.size();
  const int c = rgb ? 3 : 1;
  const int h = rgb ? frames[0]->rgb_h : frames[0]->thermal_h;
  const int w = rgb ? frames[0]->rgb_w : frames[0]->thermal_w;
  std::vector<Real> values;
  values.reserve((size_t)n * c * h * w);
  for (const auto* f : frames) {
    const auto& src = rgb ? f->rgb : f->thermal;
    MSENET_REQUIRE((int64_t)src.size() == (int64_t)c * h * w,
                   "image_batch: inconsistent frame sizes in batch");
    values.insert(values.end(), src.begin(), src.end());
  }
  return Tensor<Real>::from_values({n, c, h, w}, std::move(values));
}

struct EpochStats {
  int epoch = 0;
  double loss = 0, cls = 0, box_ciou = 0, dfl = 0;
  int64_t positives = 0;
  double seconds = 0;
};

struct TrainOptions {
  int epochs = 30;
  int batch_size = 4;
  double lr = 0.01;
  double momentum = 0.9;
  LossWeights weights;
  uint64_t seed = 1;
};

// Trains in place; returns per-epoch statistics. A non-finite loss aborts
// with the offending batch index and the run seed in the diagnostic.
template <class Real>
std::vector<EpochStats> train_model(MseNet<Real>& model,
                                    const std::vector<TrainItem>& items,
                                    const TrainOptions& opts,
                                    const std::function<void(const EpochStats&)>&
                                        on_epoch = nullptr) {
  MSENET_REQUIRE(!items.empty(), "train_model: no training frames");
  MSENET_REQUIRE(opts.epochs >= 1 && opts.batch_size >= 1,
                 "train_model: bad budget");

  std::vector<AssignedTargets> all_targets;
  all_targets.reserve(items.size());
  for (const auto& it : items) all_targets.push_back(model_targets(model, it.cur->gts));

  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 perm_rng(opts.seed);
  std::shuffle(order.begin(), order.end(), perm_rng);
  std::mt19937_64 noise_rng(opts.seed ^ 0x9E3779B97F4A7C15ULL);

  SgdOptimizer<Real> opt(opts.lr, opts.momentum);
  std::vector<EpochStats> stats;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochStats es;
    es.epoch = epoch;
    int64_t frames_seen = 0;
    for (size_t start = 0, batch_idx = 0; start < order.size();
         start += (size_t)opts.batch_size, ++batch_idx) {
      const size_t end = std::min(order.size(), start + (size_t)opts.batch_size);
      std::vector<const FramePair*> cur, prev;
      std::vector<AssignedTargets> targets;
      for (size_t i = start; i < end; ++i) {
        cur.push_back(items[order[i]].cur);
        prev.push_back(items[order[i]].prev);
        targets.push_back(all_targets[order[i]]);
      }
      double loss, cls_v, ciou_v, dfl_v;
      int positives;
      {
        // the graph must be gone before the optimizer touches the leaves
        auto rgb = image_batch<Real>(cur, true);
        auto thermal = image_batch<Real>(cur, false);
        auto rgb_prev = image_batch<Real>(prev, true);
        auto raw = model.forward(rgb, thermal, rgb_prev, noise_rng, true);
        auto parts = detection_loss(raw, targets, opts.weights);
        loss = (double)parts.total.item();
        MSENET_REQUIRE(std::isfinite(loss), "non-finite loss at epoch ", epoch,
                       " batch ", batch_idx, " (seed ", opts.seed,
                       "); aborting");
        cls_v = (double)parts.cls.item();
        ciou_v = (double)parts.box_ciou.item();
        dfl_v = (double)parts.dfl.item();
        positives = parts.positives;
        backward(parts.total);
      }
      opt.step(model.params());
      model.params().zero_grads();

      const double bs = (double)(end - start);
      es.loss += loss * bs;
      es.cls += cls_v * bs;
      es.box_ciou += ciou_v * bs;
      es.dfl += dfl_v * bs;
      es.positives += positives;
      frames_seen += (int64_t)bs;
    }
    es.loss /= (double)frames_seen;
    es.cls /= (double)frames_seen;
    es.box_ciou /= (double)frames_seen;
    es.dfl /= (double)frames_seen;
    es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                     .count();
    if (on_epoch) on_epoch(es);
    stats.push_back(es);
  }
  return stats;
}

}  // namespace msenet
