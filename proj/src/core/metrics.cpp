#include "chunkstack/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace chunkstack {

static std::vector<int64_t> confusion_counts(const std::vector<int>& gold,
                                             const std::vector<int>& pred, int n_class) {
  if (gold.empty()) throw std::runtime_error("metrics: empty input");
  if (gold.size() != pred.size()) throw std::runtime_error("metrics: length mismatch");
  std::vector<int64_t> m(static_cast<size_t>(n_class) * n_class, 0);
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= n_class || pred[i] < 0 || pred[i] >= n_class)
      throw std::runtime_error("metrics: label out of range");
    m[static_cast<size_t>(gold[i]) * n_class + pred[i]]++;
  }
  return m;
}

double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred, int n_class) {
  auto m = confusion_counts(gold, pred, n_class);
  double sum = 0;
  int supported = 0;
  for (int c = 0; c < n_class; ++c) {
    int64_t tp = m[static_cast<size_t>(c) * n_class + c];
    int64_t fp = 0, fn = 0, support = 0;
    for (int k = 0; k < n_class; ++k) {
      if (k != c) {
        fp += m[static_cast<size_t>(k) * n_class + c];
        fn += m[static_cast<size_t>(c) * n_class + k];
      }
      support += m[static_cast<size_t>(c) * n_class + k];
    }
    if (support == 0) continue;  // classes absent from gold are excluded
    double p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    double r = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    double f = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
    sum += f;
    supported++;
  }
  return supported > 0 ? sum / supported : 0.0;
}

double auc_roc(const std::vector<int>& gold, const std::vector<double>& scores) {
  if (gold.empty() || gold.size() != scores.size())
    throw std::runtime_error("auc_roc: empty input or length mismatch");
  int64_t n_pos = 0, n_neg = 0;
  for (int g : gold) {
    if (g == 1)
      n_pos++;
    else if (g == 0)
      n_neg++;
    else
      throw std::runtime_error("auc_roc: labels must be 0/1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::runtime_error("auc_roc: both classes must be present");

  // Average ranks with tie groups sharing their mean rank.
  std::vector<size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(gold.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0;
  for (size_t k = 0; k < gold.size(); ++k)
    if (gold[k] == 1) rank_sum_pos += rank[k];
  double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalReport make_report(const std::vector<int>& gold, const std::vector<int>& pred,
                       int n_class, const std::vector<double>& pos_scores) {
  EvalReport report;
  report.confusion = confusion_counts(gold, pred, n_class);
  report.n_examples = static_cast<int64_t>(gold.size());
  report.per_class.resize(static_cast<size_t>(n_class));
  int64_t correct = 0;
  for (int c = 0; c < n_class; ++c) {
    auto& cs = report.per_class[static_cast<size_t>(c)];
    int64_t tp = report.confusion[static_cast<size_t>(c) * n_class + c];
    correct += tp;
    int64_t fp = 0, fn = 0;
    for (int k = 0; k < n_class; ++k) {
      if (k == c) continue;
      fp += report.confusion[static_cast<size_t>(k) * n_class + c];
      fn += report.confusion[static_cast<size_t>(c) * n_class + k];
    }
    cs.support = tp + fn;
    cs.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    cs.recall = cs.support > 0 ? static_cast<double>(tp) / cs.support : 0.0;
    cs.f1 = (cs.precision + cs.recall) > 0
                ? 2.0 * cs.precision * cs.recall / (cs.precision + cs.recall)
                : 0.0;
  }
  report.accuracy = static_cast<double>(correct) / report.n_examples;
  report.macro_f1 = macro_f1(gold, pred, n_class);
  if (n_class == 2 && !pos_scores.empty()) report.auc = auc_roc(gold, pos_scores);
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "n_examples: " << n_examples << "\n";
  os << "accuracy: " << accuracy << "\n";
  os << "macro_f1: " << macro_f1 << "\n";
  if (auc >= 0) os << "auc_roc: " << auc << "\n";
  for (size_t c = 0; c < per_class.size(); ++c) {
    os << "class_" << c << ": precision=" << per_class[c].precision
       << " recall=" << per_class[c].recall << " f1=" << per_class[c].f1
       << " support=" << per_class[c].support << "\n";
  }
  os << "confusion:";
  for (int64_t v : confusion) os << " " << v;
  os << "\n";
  return os.str();
}

std::string EvalReport::to_json_line() const {
  nlohmann::json per;
  for (const auto& cs : per_class)
    per.push_back({{"precision", cs.precision},
                   {"recall", cs.recall},
                   {"f1", cs.f1},
                   {"support", cs.support}});
  nlohmann::json j{{"n_examples", n_examples}, {"accuracy", accuracy},
                   {"macro_f1", macro_f1},     {"per_class", per},
                   {"confusion", confusion}};
  if (auc >= 0) j["auc_roc"] = auc;
  return j.dump();
}

}  // namespace chunkstack
