#pragma once

#include <string>
#include <vector>

namespace chunkstack {

struct ClassStats {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  int64_t support = 0;
};

struct EvalReport {
  std::vector<ClassStats> per_class;
  double macro_f1 = 0;
  double auc = -1;  // binary tasks only, -1 when not applicable
  double accuracy = 0;
  std::vector<int64_t> confusion;  // n_class x n_class, gold-major
  int64_t n_examples = 0;

  std::string to_text() const;
  std::string to_json_line() const;
};

// Unweighted mean of per-class F1 over classes with gold support >= 1.
// Zero-denominator precision/recall/F1 are reported as 0.
double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred, int n_class);

// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted half,
// computed via average ranks. Both classes must be present.
double auc_roc(const std::vector<int>& gold, const std::vector<double>& scores);

// Confusion matrix, per-class stats, macro F1 and accuracy; AUC is filled
// for binary tasks when scores (positive-class probabilities) are given.
EvalReport make_report(const std::vector<int>& gold, const std::vector<int>& pred,
                       int n_class, const std::vector<double>& pos_scores = {});

}  // namespace chunkstack
