#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "xai/nn.hpp"

namespace xai {

enum class ModelKind { Mlp, Cnn };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// One point of a search space. Fields irrelevant to `kind` are ignored (and
/// left out of key()).
struct HyperParams {
  ModelKind kind = ModelKind::Cnn;
  nn::Activation activation = nn::Activation::Relu;
  double dropout = 0.0;
  int hidden = 100;
  int filters = 32;
  int kernel_size = 5;
  int pool_size = 2;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;

  /// Canonical text form, e.g. "cnn:activation=relu,dropout=0.3,...".
  std::string key() const;
  /// (name, value) pairs in key order.
  std::vector<std::pair<std::string, std::string>> fields() const;
  bool operator==(const HyperParams& o) const { return key() == o.key(); }
};

HyperParams parse_hyperparams(const std::string& key);

/// Discrete search space. Enumeration order follows sorted parameter names
/// with the last name varying fastest: MLP (activation, dropout,
/// hidden_layer_sizes, optimizer); CNN (activation, dropout, filters,
/// kernel_size, optimizer, pool_size).
struct ParamGrid {
  ModelKind kind = ModelKind::Cnn;
  std::vector<nn::Activation> activations;
  std::vector<double> dropouts;
  std::vector<int> hidden_sizes;
  std::vector<int> filters;
  std::vector<int> kernel_sizes;
  std::vector<int> pool_sizes;
  std::vector<nn::OptimizerKind> optimizers;

  void validate() const;
  std::size_t size() const;
  std::vector<HyperParams> enumerate() const;

  static ParamGrid default_mlp();
  static ParamGrid default_cnn();
};

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  int epochs = 10;
  int batch_size = 32;
  int dense_units = 64;  // CNN head width
  unsigned threads = 0;  // candidate-level parallelism, 0 = hardware
};

struct CvResult {
  HyperParams params;
  std::vector<double> fold_scores;
  double mean = 0.0;
  double std = 0.0;  // population
  double seconds = 0.0;
  bool failed = false;
  std::string error;
  std::size_t enumeration_index = 0;
};

/// k shuffled folds whose sizes differ by at most one; the first n % k folds
/// take the extra element. Throws KTooLarge when n < k.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

nn::NetworkSpec build_spec(const HyperParams& p, int input_width, int dense_units = 64);

/// Seed for a candidate depends only on (seed, params), so the same candidate
/// scores identically in grid and random search.
std::uint64_t candidate_seed(std::uint64_t seed, const HyperParams& p);

CvResult cross_validate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const HyperParams& params,
                        const CvOptions& opts);

/// Shared memo of CV results keyed by HyperParams::key(). Only valid for one
/// (data, options) pair.
class CvCache {
 public:
  std::optional<CvResult> find(const std::string& key) const;
  void put(const CvResult& r);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, CvResult> results_;
};

/// Best first: mean descending, ties by enumeration index; failures last.
void rank_results(std::vector<CvResult>& results);

std::vector<CvResult> grid_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ParamGrid& grid,
                                  const CvOptions& opts, CvCache* cache = nullptr);

/// Draws n_iter candidates uniformly per dimension (seeded), deduplicates
/// keeping first occurrences, evaluates and ranks them.
std::vector<HyperParams> sample_candidates(const ParamGrid& space, std::size_t n_iter, std::uint64_t seed);
std::vector<CvResult> random_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ParamGrid& space,
                                    std::size_t n_iter, std::uint64_t sample_seed, const CvOptions& opts,
                                    CvCache* cache = nullptr);

struct EarlyStopConfig {
  double min_delta = 0.01;
  int patience = 30;
};

/// Tracks a maximised metric. `best` is the running max; the patience counter
/// resets only when a value beats the reference by at least min_delta.
class EarlyStopState {
 public:
  explicit EarlyStopState(EarlyStopConfig cfg = {}) : cfg_(cfg) {}

  /// Records one epoch's value; returns true when it is a new running max.
  bool update(double value);
  bool should_stop() const { return wait_ >= cfg_.patience; }

  double best() const { return best_; }
  int wait() const { return wait_; }
  const std::vector<double>& history() const { return history_; }
  const EarlyStopConfig& config() const { return cfg_; }

 private:
  EarlyStopConfig cfg_;
  std::vector<double> history_;
  double best_ = -std::numeric_limits<double>::infinity();
  double reference_ = -std::numeric_limits<double>::infinity();
  int wait_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double monitored = 0.0;
  bool checkpointed = false;
};

struct TrainFinalOptions {
  int epochs = 10;
  int batch_size = 32;
  int dense_units = 64;
  double validation_fraction = 0.1;
  EarlyStopConfig early_stop;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_path;  // empty: keep best weights in memory only
};

struct TrainResult {
  nn::Network network;  // best-checkpoint weights
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_monitored = 0.0;
  bool stopped_early = false;
  std::vector<std::size_t> validation_rows;
};

/// Mini-batch training on a (1 - validation_fraction) slice, monitoring
/// accuracy on the held-out slice after every epoch. Each new best is
/// checkpointed; the best weights are returned.
TrainResult train_final(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const HyperParams& params,
                        const TrainFinalOptions& opts);

}  // namespace xai
