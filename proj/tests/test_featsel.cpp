#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "xai/dataset.hpp"
#include "xai/featsel.hpp"
#include "xai/linalg.hpp"
#include "xai/preprocess.hpp"

using namespace xai;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Dataset d;
  for (Eigen::Index j = 0; j < x.cols(); ++j) d.feature_names.push_back("f" + std::to_string(j));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Record r;
    r.id = std::to_string(i);
    for (Eigen::Index j = 0; j < x.cols(); ++j) r.features.push_back(x(i, j));
    d.records.push_back(r);
    d.labels.push_back(y(i) > 0.5 ? 1 : 0);
  }
  return d;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("pearson correlation") {
  const auto x = vec({1, 2, 3});
  CHECK(pearson_corr(x, x) == doctest::Approx(1.0));
  CHECK(pearson_corr(x, (-x).eval()) == doctest::Approx(-1.0));
  // Hand evaluation: cov = 5/3... r = 5 / sqrt(2 * 12.6667) = 0.99340
  CHECK(pearson_corr(x, vec({2, 4, 7})) == doctest::Approx(0.99340).epsilon(1e-5));
  CHECK_ERROR_KIND(pearson_corr(x, vec({1, 1, 1})), ErrorKind::ZeroVariance);
  CHECK_ERROR_KIND(pearson_corr(x, vec({1, 2})), ErrorKind::LengthMismatch);

  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto a = test::random_vector(rng, 30);
    const auto b = (a + test::random_vector(rng, 30)).eval();
    const double r = pearson_corr(a, b);
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
    CHECK(pearson_corr(b, a) == doctest::Approx(r).epsilon(1e-12));
    const double scale = rng.uniform(-5, 5);
    if (std::abs(scale) < 1e-3) continue;
    const Eigen::VectorXd moved = (scale * a.array() + 3.0).matrix();
    CHECK(pearson_corr(moved, b) == doctest::Approx((scale > 0 ? 1 : -1) * r).epsilon(1e-10));
  }
}

TEST_CASE("chi-square scores") {
  // label copy vs constant column, computed by hand: (0-1)^2/1 + (2-1)^2/1 = 2 and 0
  Eigen::MatrixXd x(4, 2);
  x << 0, 1, 1, 1, 1, 1, 0, 1;
  const auto y = vec({0, 1, 1, 0});
  const auto s = chi2_scores(x, y);
  CHECK(s(0) == doctest::Approx(2.0));
  CHECK(s(1) == doctest::Approx(0.0));
  const auto sel = chi2_select(make_dataset(x, y), 1);
  CHECK(sel.selected == std::vector<std::string>{"f0"});
  CHECK(sel.scores[0].rank == 1);

  CHECK_ERROR_KIND(chi2_scores((-x).eval(), y), ErrorKind::NegativeInput);
  CHECK_ERROR_KIND(chi2_select(make_dataset(x, y), 3), ErrorKind::KOutOfRange);
  CHECK_ERROR_KIND(chi2_select(make_dataset(x, y), 0), ErrorKind::KOutOfRange);
  CHECK(chi2_select(make_dataset(x, y), 2).selected.size() == 2);
}

TEST_CASE("chi-square selections are nested in k") {
  const auto d = encode_labels(load_csv(test::wdbc_path()));
  const auto unit = fit_plan(d, {PreprocessStep{TransformKind::MinMax, {}, {}, 1.0}}).apply(d);
  std::set<std::string> prev;
  for (std::size_t k = 1; k <= 30; ++k) {
    const auto sel = chi2_select(unit, k);
    CHECK(sel.selected.size() == k);
    std::set<std::string> cur(sel.selected.begin(), sel.selected.end());
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
}

TEST_CASE("logistic regression") {
  Eigen::MatrixXd x(6, 1);
  x << -3, -2, -1, 1, 2, 3;
  const auto y = vec({0, 0, 0, 1, 1, 1});
  const auto m = logistic_fit(x, y);
  const auto p = predict_proba(m, x);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK((p(i) >= 0.5) == (y(i) > 0.5));

  LogisticConfig zero;
  zero.max_iters = 0;
  const auto z = logistic_fit(x, y, zero);
  CHECK(z.weights.isZero());
  CHECK(predict_proba(z, x).isApproxToConstant(0.5));
}

TEST_CASE("logistic gradient vanishes at the returned weights") {
  Rng rng(4);
  const auto x = test::random_matrix(rng, 80, 4);
  Eigen::VectorXd y(80);
  for (Eigen::Index i = 0; i < 80; ++i) y(i) = (x(i, 0) - 0.5 * x(i, 2) + 0.3 * rng.normal()) > 0 ? 1 : 0;
  LogisticConfig cfg;
  const auto m = logistic_fit(x, y, cfg);
  REQUIRE(m.converged);
  const double h = 1e-6;
  Eigen::VectorXd g(5);
  for (Eigen::Index j = 0; j < 4; ++j) {
    Eigen::VectorXd wp = m.weights, wm = m.weights;
    wp(j) += h;
    wm(j) -= h;
    g(j) = (logistic_loss(wp, m.bias, x, y, cfg.l2) - logistic_loss(wm, m.bias, x, y, cfg.l2)) / (2 * h);
  }
  g(4) = (logistic_loss(m.weights, m.bias + h, x, y, cfg.l2) - logistic_loss(m.weights, m.bias - h, x, y, cfg.l2)) /
         (2 * h);
  CHECK(g.norm() <= cfg.tolerance + 1e-8);
}

TEST_CASE("rfe drops the noise feature first") {
  Rng rng(17);
  const Eigen::Index n = 300;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    x(i, 2) = rng.normal();
    y(i) = (2.0 * x(i, 0) + 1.5 * x(i, 1) + 0.3 * rng.normal()) > 0 ? 1 : 0;
  }
  const auto d = make_dataset(x, y);
  const auto ranks = rfe(d, 2);
  CHECK(ranks[0].rank == 1);
  CHECK(ranks[1].rank == 1);
  CHECK(ranks[2].rank == 2);
  const auto all = rfe(d, 3);
  for (const auto& r : all) CHECK(r.rank == 1);
  const auto one = rfe(d, 1);
  CHECK(one[0].rank == 1);
  CHECK(one[1].rank == 2);
  CHECK(one[2].rank == 3);
}

TEST_CASE("rfe keeps 27 WDBC features") {
  const auto d = encode_labels(load_csv(test::wdbc_path()));
  const auto [train, test_set] = train_test_split(d, 0.2, 42);
  const auto std_train = fit_plan(train, {PreprocessStep{}}).apply(train);
  const auto ranks = rfe(std_train, 27);
  std::multiset<int> seen;
  for (const auto& r : ranks) seen.insert(r.rank);
  CHECK(seen.count(1) == 27);
  CHECK(seen.count(2) == 1);
  CHECK(seen.count(3) == 1);
  CHECK(seen.count(4) == 1);
}

TEST_CASE("jacobi eigensolver agrees with an independent solver") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index n = 2 + rng.below(12);
    const auto b = test::random_matrix(rng, n, n);
    const Eigen::MatrixXd a = b * b.transpose();
    const auto eig = jacobi_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
    Eigen::VectorXd expected = ref.eigenvalues().reverse();
    CHECK((eig.values - expected).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, expected(0)));
    CHECK((eig.vectors.transpose() * eig.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a * eig.vectors - eig.vectors * eig.values.asDiagonal()).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, expected(0)));
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::Index arg = 0;
      eig.vectors.col(k).cwiseAbs().maxCoeff(&arg);
      CHECK(eig.vectors(arg, k) > 0);
    }
  }
}

TEST_CASE("pca on a line puts all variance on one axis") {
  Eigen::MatrixXd x(5, 2);
  x << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5;
  const auto m = pca_fit(x);
  CHECK(m.explained_variance_ratio(0) == doctest::Approx(1.0));
  CHECK(std::abs(m.components(0, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(std::abs(m.components(1, 0)) == doctest::Approx(1 / std::sqrt(2.0)));
}

TEST_CASE("pca on an isotropic sample splits variance evenly") {
  Rng rng(2024);
  const auto x = test::random_matrix(rng, 10000, 2);
  const auto m = pca_fit(x);
  CHECK(std::abs(m.explained_variance_ratio(0) - 0.5) <= 0.02);
  CHECK(std::abs(m.explained_variance_ratio(1) - 0.5) <= 0.02);
}

TEST_CASE("pca invariants on WDBC") {
  const auto d = load_csv(test::wdbc_path());
  const auto x = fit_plan(d, {PreprocessStep{}}).apply(d).matrix();
  const auto m = pca_fit(x);
  const Eigen::Index p = x.cols();
  CHECK((m.components.transpose() * m.components - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index k = 0; k < p; ++k) CHECK(m.explained_variance_ratio(k) >= 0);
  for (Eigen::Index k = 1; k < p; ++k) CHECK(m.explained_variance_ratio(k) <= m.explained_variance_ratio(k - 1));
  CHECK(m.explained_variance_ratio.sum() <= 1 + 1e-10);

  const auto y = pca_transform(m, x, p);
  const auto back = pca_inverse_transform(m, y);
  CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-8);

  const auto cov = covariance(y);
  Eigen::MatrixXd off = cov;
  off.diagonal().setZero();
  CHECK(off.cwiseAbs().maxCoeff() < 1e-8);
  CHECK((cov.diagonal() - m.explained_variance).cwiseAbs().maxCoeff() < 1e-8);
}
