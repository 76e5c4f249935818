#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xai/explain.hpp"
#include "xai/preprocess.hpp"
#include "xai/tune.hpp"

namespace xai {

enum class SelectMethod { Rfe, Chi2 };
enum class SearchMethod { Grid, Random };

std::string to_string(SelectMethod m);
std::string to_string(SearchMethod m);

/// Everything a run depends on. Defaults reproduce the reference experiment.
struct RunConfig {
  // [data]
  std::filesystem::path data_path = "data/wdbc.csv";
  double split_ratio = 0.2;
  bool drop_missing = true;
  // [run]
  std::uint64_t seed = 42;
  unsigned threads = 0;
  // [preprocess]
  std::vector<TransformKind> steps = {TransformKind::ZScore};
  ImputeStrategy impute_strategy = ImputeStrategy::Mean;
  double log_offset = 1.0;
  // [select]
  SelectMethod select_method = SelectMethod::Rfe;
  std::size_t n_features = 27;
  // [tune]
  std::vector<ModelKind> tune_models = {ModelKind::Mlp, ModelKind::Cnn};
  SearchMethod search = SearchMethod::Grid;
  std::size_t n_iter = 100;
  bool random_check = true;  // also run a random search and report it next to the grid
  std::size_t folds = 5;
  int dense_units = 64;
  ParamGrid mlp_grid = ParamGrid::default_mlp();
  ParamGrid cnn_grid = ParamGrid::default_cnn();
  // [train]
  ModelKind final_model = ModelKind::Cnn;
  int epochs = 10;
  int batch_size = 32;
  double validation_fraction = 0.1;
  EarlyStopConfig early_stop;
  // [explain]
  std::size_t background = 100;
  ShapMethod shap_method = ShapMethod::Kernel;
  std::size_t n_coalitions = 2048;
  std::size_t shap_instances = 20;
  std::vector<std::string> exact_features;  // subset for exact mode, <= 20
  std::size_t lime_instances = 3;
  LimeConfig lime;
  int permutation_repeats = 5;

  /// Throws ConfigError on any out-of-range or inconsistent value.
  void validate() const;

  /// Every key, one `key = value` per line under its section, in fixed order.
  std::string canonical() const;
  /// Digest of canonical().
  std::string hash() const;
  /// (section.key, value) pairs in canonical order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Parses the sectioned `key = value` format. Missing keys keep their
/// defaults; unknown sections or keys throw ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace xai
