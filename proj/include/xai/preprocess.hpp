#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "xai/dataset.hpp"

namespace xai {

enum class ImputeStrategy { Mean, Median, Mode };
enum class TransformKind { Impute, MinMax, ZScore, Log };

std::string to_string(TransformKind kind);
std::string to_string(ImputeStrategy s);

/// Statistics of the non-missing entries of one column. `std` is the
/// population standard deviation (denominator N).
struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double mode = 0.0;
  std::size_t count = 0;

  bool degenerate_range() const { return max == min; }
};

/// NaN entries are treated as missing. Throws EmptyColumn when nothing remains.
ColumnStats column_stats(const Eigen::Ref<const Eigen::VectorXd>& column);

/// Median with even-length rule: mean of the two middle values.
double median(std::vector<double> values);
/// Most frequent value, smallest value on ties.
double mode(std::vector<double> values);

/// Fills NaN gaps with the column's mean, median or mode. Present entries are
/// copied bit-for-bit.
Eigen::VectorXd impute(const Eigen::Ref<const Eigen::VectorXd>& column, ImputeStrategy strategy);

/// (x - min) / (max - min). Values outside the fitted range pass through
/// unclipped; their count is written to `out_of_range` when given.
Eigen::VectorXd min_max_apply(const Eigen::Ref<const Eigen::VectorXd>& column, const ColumnStats& stats,
                              std::size_t* out_of_range = nullptr);
Eigen::VectorXd min_max_inverse(const Eigen::Ref<const Eigen::VectorXd>& scaled, const ColumnStats& stats);

/// (x - mean) / std.
Eigen::VectorXd zscore_apply(const Eigen::Ref<const Eigen::VectorXd>& column, const ColumnStats& stats);

/// ln(x + offset). Throws NonPositiveInput naming the first bad row.
Eigen::VectorXd log_transform(const Eigen::Ref<const Eigen::VectorXd>& column, double offset = 1.0);

struct PreprocessStep {
  TransformKind kind = TransformKind::ZScore;
  std::vector<std::string> columns;  // empty means every feature column
  ImputeStrategy strategy = ImputeStrategy::Mean;
  double log_offset = 1.0;
};

/// Fit-on-train / apply-anywhere preprocessing. Steps are fitted in order,
/// each on the output of the previous ones, so a zscore after a log step
/// standardises the logged values.
class PreprocessPlan {
 public:
  static constexpr int kTableVersion = 1;

  PreprocessPlan() = default;
  explicit PreprocessPlan(std::vector<PreprocessStep> steps) : steps_(std::move(steps)) {}

  /// Throws PlanState when called a second time.
  void fit(const Dataset& train);
  bool fitted() const { return fitted_; }

  /// Returns a transformed copy. Throws PlanState if the plan is unfitted or
  /// `d` already went through this plan.
  Dataset apply(const Dataset& d) const;

  const std::vector<PreprocessStep>& steps() const { return steps_; }
  /// Stats fitted for step `s`, one entry per column in that step.
  const std::vector<ColumnStats>& stats(std::size_t s) const { return stats_.at(s); }
  const std::vector<std::vector<std::size_t>>& step_columns() const { return columns_; }
  const std::vector<std::string>& feature_names() const { return names_; }

  std::uint64_t fingerprint() const;

  /// Versioned plain-text table: `step,kind,column,statistic,value` rows.
  std::string to_table() const;
  static PreprocessPlan from_table(const std::string& text);

 private:
  Eigen::MatrixXd transform(const Eigen::MatrixXd& values) const;

  std::vector<PreprocessStep> steps_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> columns_;
  std::vector<std::vector<ColumnStats>> stats_;
  bool fitted_ = false;
};

PreprocessPlan fit_plan(const Dataset& train, std::vector<PreprocessStep> steps);

}  // namespace xai
