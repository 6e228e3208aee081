#pragma once

// Central-difference gradient checker. Run it in 64-bit mode; finite
// differences in float are too noisy to say anything useful.

#include <functional>
#include <string>
#include <vector>

#include "msenet/tensor.hpp"

namespace msenet {

struct GradCheckEntry {
  std::string input;
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;  // elements flagged as near a non-smooth point
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
  double max_rel_err = 0.0;

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << "  " << e.input << ": max_rel_err=" << e.max_rel_err
         << " checked=" << e.checked;
      if (e.skipped) os << " skipped=" << e.skipped << " (near-kink, skipped)";
      os << (e.pass ? " PASS" : " FAIL") << "\n";
    }
    return os.str();
  }
};

// f rebuilds the graph from the given leaf tensors and returns a scalar loss.
// Checks every element of every tensor in `inputs` against (f(x+h)-f(x-h))/2h.
// Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|).
// `near_kink(input_idx, elem_idx)` marks elements to skip (e.g. bilinear
// coordinates within 1e-6 of the integer grid, where the sampler is not
// differentiable); skipped elements are reported, not checked.
template <class Real>
GradCheckReport gradcheck(
    const std::function<Tensor<Real>()>& f, std::vector<Tensor<Real>> inputs,
    Real h, double tol,
    const std::function<bool(size_t, int64_t)>& near_kink = nullptr,
    const std::vector<std::string>& names = {}) {
  for (size_t i = 0; i < inputs.size(); ++i) {
    MSENET_REQUIRE(inputs[i].valid() && inputs[i].is_leaf() &&
                       inputs[i].requires_grad(),
                   "gradcheck: input ", i, " must be a requires_grad leaf");
  }

  // Determinism gate: two evaluations at identical inputs must agree bitwise.
  {
    const Real a = f().item();
    const Real b = f().item();
    MSENET_REQUIRE(a == b,
                   "gradcheck aborted: f is non-deterministic across calls at "
                   "identical inputs (",
                   a, " vs ", b, ")");
  }

  // Analytic pass.
  std::vector<std::vector<Real>> analytic(inputs.size());
  {
    for (auto& t : inputs) t.zero_grad();
    auto loss = f();
    backward(loss);
    for (size_t i = 0; i < inputs.size(); ++i) {
      analytic[i] = inputs[i].has_grad()
                        ? inputs[i].grad()
                        : std::vector<Real>(inputs[i].values().size(), Real(0));
      inputs[i].zero_grad();
    }
  }

  GradCheckReport report;
  for (size_t i = 0; i < inputs.size(); ++i) {
    GradCheckEntry entry;
    entry.input = i < names.size() ? names[i] : "input" + std::to_string(i);
    const int64_t n = inputs[i].numel();
    for (int64_t j = 0; j < n; ++j) {
      if (near_kink && near_kink(i, j)) {
        entry.skipped++;
        continue;
      }
      auto& vals = inputs[i].mutable_values();
      const Real saved = vals[(size_t)j];
      vals[(size_t)j] = saved + h;
      const double fp = (double)f().item();
      inputs[i].mutable_values()[(size_t)j] = saved - h;
      const double fm = (double)f().item();
      inputs[i].mutable_values()[(size_t)j] = saved;
      const double numeric = (fp - fm) / (2.0 * (double)h);
      const double a = (double)analytic[i][(size_t)j];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      entry.checked++;
    }
    entry.pass = entry.max_rel_err < tol;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace msenet
