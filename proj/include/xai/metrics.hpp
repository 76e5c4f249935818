#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xai/model.hpp"

namespace xai {

/// 2x2 counts with class 1 (malignant) as positive.
struct ConfusionMatrix {
  std::int64_t tn = 0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tn + tp + fp + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// Labels from probabilities at a threshold (p >= threshold -> 1).
std::vector<int> threshold_predictions(const Eigen::VectorXd& proba, double threshold = 0.5);

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when a zero denominator forced a 0.0 value.
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;
};

BinaryMetrics precision_recall_f1_accuracy(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) anchor
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Thresholds swept over distinct scores in descending order; tied scores move
/// the curve in one diagonal step. AUC by the trapezoid rule.
RocCurve roc_curve(const std::vector<int>& y_true, const Eigen::VectorXd& scores);
double roc_auc(const std::vector<int>& y_true, const Eigen::VectorXd& scores);

struct ClassRow {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct ClassificationReport {
  ClassRow classes[2];  // index = class label
  ClassRow macro;
  ClassRow weighted;
  double accuracy = 0.0;

  /// Aligned text table, values rounded half-up to two decimals.
  std::string render() const;
  std::string to_csv() const;
};

ClassificationReport classification_report(const std::vector<int>& y_true, const std::vector<int>& y_pred);

/// Half-up rounding to `digits` decimals, robust to binary representation
/// error just below the tie.
double round_half_up(double v, int digits);

/// Metric over (labels, predicted probabilities); larger is better.
using ScoreFn = std::function<double(const std::vector<int>&, const Eigen::VectorXd&)>;
double accuracy_score(const std::vector<int>& y_true, const Eigen::VectorXd& proba);

/// Baseline metric minus metric after shuffling one column, averaged over
/// `repeats` shuffles, for every column. Column j's shuffles come from a
/// stream derived from (seed, j), so results do not depend on column order of
/// evaluation.
std::vector<double> permutation_score_drop(const BatchModel& model, const Eigen::MatrixXd& x,
                                           const std::vector<int>& y, const ScoreFn& metric, int repeats,
                                           std::uint64_t seed);

}  // namespace xai
