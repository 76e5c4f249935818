#include "xai/featsel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

#include "xai/linalg.hpp"

namespace xai {

Eigen::VectorXd chi2_scores(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "chi2: X and y row counts differ");
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if ((x.col(j).array() < 0.0).any()) throw Error(ErrorKind::NegativeInput, "column " + std::to_string(j));
  const double n = static_cast<double>(x.rows());
  const double n_pos = y.sum();
  const double prior[2] = {(n - n_pos) / n, n_pos / n};
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double observed[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < x.rows(); ++i) observed[y(i) > 0.5 ? 1 : 0] += x(i, j);
    const double total = observed[0] + observed[1];
    double chi2 = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double expected = prior[c] * total;
      if (expected > 0.0) chi2 += (observed[c] - expected) * (observed[c] - expected) / expected;
    }
    scores(j) = chi2;
  }
  return scores;
}

namespace {

// Ranks 1..n by descending score; equal scores keep column order.
std::vector<int> ordinal_ranks(const Eigen::VectorXd& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  std::vector<int> ranks(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r + 1);
  return ranks;
}

}  // namespace

Chi2Selection chi2_select(const Dataset& d, std::size_t k) {
  if (k < 1 || k > d.width()) throw Error(ErrorKind::KOutOfRange, "k=" + std::to_string(k));
  const auto scores = chi2_scores(d.matrix(), d.label_vector());
  const auto ranks = ordinal_ranks(scores);
  Chi2Selection out;
  for (std::size_t j = 0; j < d.width(); ++j) {
    out.scores.push_back({d.feature_names[j], scores(static_cast<Eigen::Index>(j)), ranks[j]});
    if (ranks[j] <= static_cast<int>(k)) out.selected.push_back(d.feature_names[j]);
  }
  return out;
}

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

}  // namespace

double logistic_loss(const Eigen::VectorXd& weights, double bias, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double l2) {
  const Eigen::ArrayXd z = ((x * weights).array() + bias);
  // log(1 + e^z) - y z, evaluated stably.
  const Eigen::ArrayXd softplus = z.max(0.0) + (-(z.abs())).exp().log1p();
  const double data = (softplus - y.array() * z).mean();
  return data + 0.5 * l2 * weights.squaredNorm();
}

LogisticModel logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogisticConfig& cfg) {
  if (x.rows() == 0) throw Error(ErrorKind::InvalidArgument, "logistic_fit: empty X");
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "logistic_fit: X and y row counts differ");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw Error(ErrorKind::InvalidArgument, "logistic_fit: labels must be 0/1");

  const double n = static_cast<double>(x.rows());
  LogisticModel m;
  m.weights = Eigen::VectorXd::Zero(x.cols());
  m.l2 = cfg.l2;
  m.learning_rate = cfg.learning_rate;
  if (m.learning_rate <= 0.0) {
    // Hessian of the mean log loss is bounded by 0.25 * [X 1]^T [X 1] / n.
    Eigen::MatrixXd gram(x.cols() + 1, x.cols() + 1);
    gram.topLeftCorner(x.cols(), x.cols()) = x.transpose() * x;
    gram.topRightCorner(x.cols(), 1) = x.colwise().sum().transpose();
    gram.bottomLeftCorner(1, x.cols()) = x.colwise().sum();
    gram(x.cols(), x.cols()) = n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram / n, Eigen::EigenvaluesOnly);
    const double lipschitz = 0.25 * es.eigenvalues().maxCoeff() + cfg.l2;
    m.learning_rate = 1.0 / lipschitz;
  }

  Eigen::VectorXd grad_w(x.cols());
  double grad_b = 0.0;
  auto gradient = [&] {
    const Eigen::VectorXd residual = sigmoid((x * m.weights).array().matrix() + Eigen::VectorXd::Constant(x.rows(), m.bias)) - y;
    grad_w = x.transpose() * residual / n + cfg.l2 * m.weights;
    grad_b = residual.mean();
    return std::sqrt(grad_w.squaredNorm() + grad_b * grad_b);
  };

  for (m.iterations = 0; m.iterations < cfg.max_iters; ++m.iterations) {
    m.gradient_norm = gradient();
    if (m.gradient_norm <= cfg.tolerance) {
      m.converged = true;
      return m;
    }
    m.weights -= m.learning_rate * grad_w;
    m.bias -= m.learning_rate * grad_b;
  }
  if (cfg.max_iters > 0) {
    m.gradient_norm = gradient();
    m.converged = m.gradient_norm <= cfg.tolerance;
    if (!m.converged)
      spdlog::warn("logistic_fit: no convergence after {} iterations (|grad| = {:.3g})", cfg.max_iters, m.gradient_norm);
  }
  return m;
}

double predict_proba(const LogisticModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != m.weights.size()) throw Error(ErrorKind::ShapeMismatch, "predict_proba: width");
  return 1.0 / (1.0 + std::exp(-(m.weights.dot(x) + m.bias)));
}

Eigen::VectorXd predict_proba(const LogisticModel& m, const Eigen::MatrixXd& x) {
  if (x.cols() != m.weights.size()) throw Error(ErrorKind::ShapeMismatch, "predict_proba: width");
  return sigmoid(x * m.weights + Eigen::VectorXd::Constant(x.rows(), m.bias));
}

std::vector<FeatureScore> rfe(const Dataset& d, std::size_t n_keep, const LogisticConfig& cfg) {
  const std::size_t width = d.width();
  if (n_keep < 1 || n_keep > width) throw Error(ErrorKind::KOutOfRange, "n_keep=" + std::to_string(n_keep));
  const Eigen::MatrixXd x_all = d.matrix();
  const Eigen::VectorXd y = d.label_vector();

  std::vector<std::size_t> alive(width);
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  std::vector<FeatureScore> out(width);
  for (std::size_t j = 0; j < width; ++j) out[j].name = d.feature_names[j];
  int next_rank = static_cast<int>(width - n_keep) + 1;

  for (;;) {
    Eigen::MatrixXd x(x_all.rows(), static_cast<Eigen::Index>(alive.size()));
    for (std::size_t k = 0; k < alive.size(); ++k) {
      const auto col = x_all.col(static_cast<Eigen::Index>(alive[k]));
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      if (sd > 0.0)
        x.col(static_cast<Eigen::Index>(k)) = ((col.array() - mean) / sd).matrix();
      else
        x.col(static_cast<Eigen::Index>(k)).setZero();
    }
    const auto model = logistic_fit(x, y, cfg);
    if (alive.size() == n_keep) {
      for (std::size_t k = 0; k < alive.size(); ++k) {
        out[alive[k]].rank = 1;
        out[alive[k]].score = std::abs(model.weights(static_cast<Eigen::Index>(k)));
      }
      break;
    }
    std::size_t weakest = 0;
    for (std::size_t k = 1; k < alive.size(); ++k)
      if (std::abs(model.weights(static_cast<Eigen::Index>(k))) <=
          std::abs(model.weights(static_cast<Eigen::Index>(weakest))))
        weakest = k;
    out[alive[weakest]].rank = next_rank--;
    out[alive[weakest]].score = std::abs(model.weights(static_cast<Eigen::Index>(weakest)));
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(weakest));
  }
  return out;
}

PcaModel pca_fit(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw Error(ErrorKind::InvalidArgument, "pca_fit: need at least two rows");
  PcaModel m;
  m.mean = column_means(x);
  const auto eig = jacobi_eigen(covariance(x));
  m.components = eig.vectors;
  m.explained_variance = eig.values.cwiseMax(0.0);
  const double total = m.explained_variance.sum();
  m.explained_variance_ratio =
      total > 0.0 ? Eigen::VectorXd(m.explained_variance / total) : Eigen::VectorXd::Zero(m.explained_variance.size());
  return m;
}

Eigen::MatrixXd pca_transform(const PcaModel& m, const Eigen::MatrixXd& x, Eigen::Index components) {
  if (x.cols() != m.mean.size()) throw Error(ErrorKind::ShapeMismatch, "pca_transform: width");
  if (components < 1 || components > m.components.cols())
    throw Error(ErrorKind::KOutOfRange, "pca_transform: m=" + std::to_string(components));
  return (x.rowwise() - m.mean.transpose()) * m.components.leftCols(components);
}

Eigen::MatrixXd pca_inverse_transform(const PcaModel& m, const Eigen::MatrixXd& y) {
  if (y.cols() > m.components.cols()) throw Error(ErrorKind::ShapeMismatch, "pca_inverse_transform: width");
  return (y * m.components.leftCols(y.cols()).transpose()).rowwise() + m.mean.transpose();
}

}  // namespace xai
