#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xai/featsel.hpp"
#include "xai/metrics.hpp"
#include "xai/model.hpp"

namespace xai {

/// Per-feature contributions for one instance. For Shapley methods
/// sum(phi) == predicted - base_value.
struct Attribution {
  std::vector<std::string> feature_names;
  Eigen::VectorXd phi;
  double base_value = 0.0;
  double predicted = 0.0;
};

/// Reference rows that stand in for "absent" features.
struct BackgroundSet {
  Eigen::MatrixXd rows;
  Eigen::VectorXd means;

  static BackgroundSet from_rows(Eigen::MatrixXd rows);
  /// Single row of column means (fast, exact for linear models).
  static BackgroundSet means_only(const Eigen::VectorXd& means);
  /// `n` rows drawn without replacement from `data` (all rows if n >= rows).
  static BackgroundSet sample(const Eigen::MatrixXd& data, std::size_t n, std::uint64_t seed);
};

/// Feature presence bits (1 = present).
struct CoalitionMask {
  std::vector<std::uint8_t> bits;

  static CoalitionMask all(std::size_t n) { return {std::vector<std::uint8_t>(n, 1)}; }
  static CoalitionMask none(std::size_t n) { return {std::vector<std::uint8_t>(n, 0)}; }
  std::size_t size() const { return bits.size(); }
};

/// f_x(S): mean over background rows of the model evaluated on x with absent
/// columns replaced by the background row's values.
double masked_predict(const BatchModel& model, const Eigen::VectorXd& x, const CoalitionMask& mask,
                      const BackgroundSet& bg);

/// f_x(S) for many coalitions at once; row r of `masks` is one coalition.
Eigen::VectorXd masked_predict_batch(const BatchModel& model, const Eigen::VectorXd& x,
                                     const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& masks,
                                     const BackgroundSet& bg);

inline constexpr std::size_t kMaxExactFeatures = 20;

/// Shapley values by full enumeration over the players in `players` (column
/// indices, at most 20); every other column stays at its value in x. An empty
/// `players` means every column. phi has one entry per column; non-players get 0.
Attribution exact_shapley(const BatchModel& model, const Eigen::VectorXd& x, const BackgroundSet& bg,
                          const std::vector<std::size_t>& players = {},
                          const std::vector<std::string>& names = {});

struct KernelShapOptions {
  std::size_t n_coalitions = 2048;  // including the all-on/all-off anchors
  std::uint64_t seed = 0;
};

/// Kernel SHAP: coalitions weighted by the Shapley kernel, fitted by weighted
/// least squares with sum(phi) == f(x) - base imposed as an equality
/// constraint. Whole coalition sizes are enumerated while the budget allows
/// (pairing size s with n - s); the rest of the budget is sampled. With a
/// budget of 2^n every coalition is used and the result equals exact_shapley.
Attribution kernel_shap(const BatchModel& model, const Eigen::VectorXd& x, const BackgroundSet& bg,
                        const KernelShapOptions& opts = {}, const std::vector<std::string>& names = {});

/// Shapley kernel weight (n-1) / (C(n,s) s (n-s)) for 0 < s < n.
double shapley_kernel_weight(std::size_t n, std::size_t s);

struct LimeConfig {
  int n_samples = 5000;
  double kernel_width = 0.0;  // <= 0 means 0.75 * sqrt(feature count)
  int max_features = 10;      // top-K kept in the surrogate
  double ridge = 1e-3;
};

struct LimeExplanation {
  Attribution attribution;  // phi = surrogate coefficients (0 for dropped features)
  double intercept = 0.0;
  double fidelity_r2 = 0.0;  // weighted R^2 of the surrogate on its samples
  std::vector<std::size_t> selected;
};

/// Gaussian perturbations z = x + scale_j * N(0,1); weights exp(-D^2 / width^2)
/// with D the Euclidean distance in scale units; weighted ridge surrogate over
/// (z - x). Features are screened to the top-K by weighted univariate effect
/// (|cov_w(z_j, f)| / sd_w(z_j)), then the surrogate is refitted on them.
LimeExplanation lime_explain(const BatchModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& feature_scales,
                             const LimeConfig& cfg, std::uint64_t seed, const std::vector<std::string>& names = {});

/// LIME kernel weight for distance d and width w.
inline double lime_kernel(double distance, double width) { return std::exp(-(distance * distance) / (width * width)); }

/// Plain-text report: prediction line then one signed contribution per
/// selected feature, largest magnitude first.
std::string lime_report(const LimeExplanation& e, const Eigen::VectorXd& x);

/// Mean score drop per feature, ranked descending (ties by column order).
std::vector<FeatureScore> permutation_importance(const BatchModel& model, const Eigen::MatrixXd& x,
                                                 const std::vector<int>& y, const ScoreFn& metric, int repeats,
                                                 std::uint64_t seed, const std::vector<std::string>& names);

enum class ShapMethod { Exact, Kernel };

/// Mean |phi| over the rows of `sample`, sorted descending. Kernel mode uses
/// a per-row seed derived from `seed`. Exact mode enumerates `players` (all
/// columns when empty) with the other columns held at instance values.
std::vector<FeatureScore> global_mean_abs_shap(const BatchModel& model, const Eigen::MatrixXd& sample,
                                               const BackgroundSet& bg, ShapMethod method, std::uint64_t seed,
                                               const std::vector<std::string>& names,
                                               std::size_t n_coalitions = 2048,
                                               std::vector<Attribution>* per_instance = nullptr,
                                               const std::vector<std::size_t>& players = {});

}  // namespace xai
