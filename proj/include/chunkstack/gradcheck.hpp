#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "chunkstack/tensor.hpp"

namespace chunkstack {

struct GradCheckItem {
  std::string param;
  int64_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  int64_t n_checked = 0;
  std::vector<GradCheckItem> worst;  // sorted, largest first
  bool passed(double tol) const { return max_rel_err <= tol; }
};

// Compares the analytic gradient of a scalar-valued function against central
// differences (f(t+h) - f(t-h)) / 2h for every element of every listed
// parameter. fn must rebuild its graph from the current parameter values on
// each call. f64 only.
inline GradCheckReport grad_check(
    const std::function<ad::NodePtr<double>()>& fn,
    const std::vector<std::pair<std::string, ad::NodePtr<double>>>& params,
    double h = 1e-5, size_t keep_worst = 10) {
  for (auto& [name, p] : params) p->grad.assign(p->value.size(), 0.0);
  auto loss = fn();
  ad::backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    ad::ensure_grad(*p);
    analytic.push_back(p->grad);
  }

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].second;
    for (size_t i = 0; i < p->value.size(); ++i) {
      double saved = p->value[i];
      p->value[i] = saved + h;
      double fp = fn()->value[0];
      p->value[i] = saved - h;
      double fm = fn()->value[0];
      p->value[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[pi][i];
      // The 1e-6 floor keeps finite-difference noise on near-zero gradients
      // (|g| ~ 1e-9, FD error ~ h^2) from dominating the relative error.
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      report.n_checked++;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      GradCheckItem item{params[pi].first, static_cast<int64_t>(i), a, numeric, rel};
      report.worst.push_back(item);
      std::sort(report.worst.begin(), report.worst.end(),
                [](const auto& x, const auto& y) { return x.rel_err > y.rel_err; });
      if (report.worst.size() > keep_worst) report.worst.resize(keep_worst);
    }
  }
  for (auto& [name, p] : params) p->grad.assign(p->value.size(), 0.0);
  return report;
}

}  // namespace chunkstack
