#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xai/dataset.hpp"
#include "xai/error.hpp"

namespace xai {

struct FeatureScore {
  std::string name;
  double score = 0.0;
  int rank = 0;  // 1 = best
};

/// Pearson correlation coefficient.
template <typename DX, typename DY>
double pearson_corr(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "pearson: lengths differ");
  if (x.size() < 2) throw Error(ErrorKind::InvalidArgument, "pearson: need at least two points");
  const auto xa = x.derived().template cast<double>().array();
  const auto ya = y.derived().template cast<double>().array();
  const Eigen::ArrayXd dx = xa - xa.mean();
  const Eigen::ArrayXd dy = ya - ya.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::ZeroVariance, "pearson: constant input");
  const double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

/// Per-feature chi-square statistic of class-conditional feature sums against
/// their expectation under the class priors. Requires non-negative X.
Eigen::VectorXd chi2_scores(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct Chi2Selection {
  std::vector<FeatureScore> scores;  // column order; ranks 1..d by score, ties by column order
  std::vector<std::string> selected;  // column order
};

/// Top-k features by chi-square. Throws NegativeInput / KOutOfRange.
Chi2Selection chi2_select(const Dataset& d, std::size_t k);

struct LogisticConfig {
  int max_iters = 20000;
  double learning_rate = 0.0;  // <= 0 picks 1/L from the loss's Lipschitz bound
  double l2 = 1e-2;
  double tolerance = 1e-6;  // on the gradient's Euclidean norm
};

struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  int iterations = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
};

/// mean BCE + l2/2 * ||w||^2 (bias unpenalised).
double logistic_loss(const Eigen::VectorXd& weights, double bias, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double l2);

/// Full-batch gradient descent. Non-convergence is reported through
/// `converged == false` and a log warning; the last iterate is returned.
LogisticModel logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogisticConfig& cfg = {});
double predict_proba(const LogisticModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd predict_proba(const LogisticModel& m, const Eigen::MatrixXd& x);

/// Recursive feature elimination with a logistic estimator on standardised
/// surviving columns. One feature per round; the smallest |weight| goes,
/// rightmost on ties. Survivors get rank 1, the last feature eliminated rank
/// 2, and so on. Scores are |weight| at the time of elimination (final fit for
/// survivors). Result is in column order.
std::vector<FeatureScore> rfe(const Dataset& d, std::size_t n_keep, const LogisticConfig& cfg = {});

struct PcaModel {
  Eigen::MatrixXd components;  // d x d, column k is the k-th principal axis
  Eigen::VectorXd explained_variance;
  Eigen::VectorXd explained_variance_ratio;
  Eigen::VectorXd mean;
};

/// Eigendecomposition of the sample covariance of centred X via Jacobi.
PcaModel pca_fit(const Eigen::MatrixXd& x);
/// (X - mean) * V[:, :m].
Eigen::MatrixXd pca_transform(const PcaModel& m, const Eigen::MatrixXd& x, Eigen::Index components);
Eigen::MatrixXd pca_inverse_transform(const PcaModel& m, const Eigen::MatrixXd& y);

}  // namespace xai
