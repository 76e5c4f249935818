#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace xai {

/// Column names of the Wisconsin diagnostic table, in file order.
const std::vector<std::string>& wdbc_feature_names();

struct Record {
  std::string id;
  std::vector<double> features;
  std::optional<char> label;  // raw diagnosis character
};

/// Rows plus schema. `labels` is populated by encode_labels().
struct Dataset {
  std::vector<Record> records;
  std::vector<std::string> feature_names;
  std::vector<int> labels;
  // Rows dropped at load because a feature cell was empty; kept for the audit.
  std::vector<std::size_t> missing_per_column;
  std::size_t dropped_rows = 0;
  // Fingerprints of preprocessing plans already applied to these values.
  std::vector<std::uint64_t> applied_plans;

  std::size_t size() const { return records.size(); }
  std::size_t width() const { return feature_names.size(); }

  /// Row-major feature matrix, one sample per row.
  Eigen::MatrixXd matrix() const;
  Eigen::VectorXd label_vector() const;

  /// Subset of rows in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const;
  /// Subset of feature columns by name, in the given order.
  Dataset select_columns(const std::vector<std::string>& names) const;

  /// Replace feature values from a matrix of the same shape.
  void assign(const Eigen::MatrixXd& values);
};

struct LoadOptions {
  /// Drop rows with an empty/NaN feature cell. When false such cells become NaN
  /// and are left for preprocess::impute.
  bool drop_missing = true;
};

/// Reads the diagnostic CSV. Requires `id`, `diagnosis` and the 30 feature
/// columns; a trailing unnamed empty column is discarded.
Dataset load_csv(const std::filesystem::path& path, const LoadOptions& opts = {});
Dataset parse_csv(const std::string& text, const LoadOptions& opts = {});

/// M -> 1, B -> 0.
Dataset encode_labels(Dataset d);
char decode_label(int label);

struct MissingReport {
  std::vector<std::string> columns;
  std::vector<std::size_t> counts;
  std::size_t total() const;
};

/// Empty or NaN cells per feature column, including cells of rows that the
/// loader dropped.
MissingReport audit_missing(const Dataset& d);

struct SplitIndices {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

/// Unstratified shuffle-then-slice. |test| = round(N * ratio); the shuffled
/// order's first |test| entries form the test set.
SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed);
std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double ratio, std::uint64_t seed);

/// Count of label==1 rows.
std::size_t positives(const Dataset& d);

}  // namespace xai
