#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "xai/explain.hpp"

using namespace xai;

namespace {

double factorial(std::size_t n) { return n < 2 ? 1.0 : static_cast<double>(n) * factorial(n - 1); }

// Shapley values straight from the subset-sum definition, with absent
// features averaged over the background rows.
Eigen::VectorXd brute_force_shapley(const BatchModel& f, const Eigen::VectorXd& x, const Eigen::MatrixXd& bg) {
  const auto n = static_cast<std::size_t>(x.size());
  auto value = [&](unsigned mask) {
    Eigen::MatrixXd rows = bg;
    for (std::size_t j = 0; j < n; ++j)
      if (mask >> j & 1u) rows.col(static_cast<Eigen::Index>(j)).setConstant(x(static_cast<Eigen::Index>(j)));
    return f(rows).mean();
  };
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (unsigned s = 0; s < (1u << n); ++s) {
      if (s >> i & 1u) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcount(s));
      const double w = factorial(size) * factorial(n - size - 1) / factorial(n);
      phi(static_cast<Eigen::Index>(i)) += w * (value(s | (1u << i)) - value(s));
    }
  return phi;
}

BatchModel linear(const Eigen::VectorXd& w, double b) {
  return [w, b](const Eigen::MatrixXd& x) -> Eigen::VectorXd { return (x * w).array() + b; };
}

// Small random tanh network with a sigmoid output.
BatchModel random_model(Rng& rng, Eigen::Index n) {
  const Eigen::MatrixXd a = test::random_matrix(rng, n, 6);
  const Eigen::VectorXd c = test::random_vector(rng, 6);
  return [a, c](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    const Eigen::ArrayXd z = ((x * a).array().tanh().matrix() * c).array();
    return (1.0 / (1.0 + (-z).exp())).matrix();
  };
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("masked prediction") {
  const auto f = linear(vec({2, 3}), 0.0);
  const auto bg = BackgroundSet::means_only(vec({0, 0}));
  const auto x = vec({1, 1});
  CHECK(masked_predict(f, x, {{1, 0}}, bg) == 2.0);
  CHECK(masked_predict(f, x, CoalitionMask::all(2), bg) == 5.0);
  CHECK(masked_predict(f, x, CoalitionMask::none(2), bg) == 0.0);

  Rng rng(1);
  const auto rows = test::random_matrix(rng, 7, 4);
  const auto g = random_model(rng, 4);
  const auto bg2 = BackgroundSet::from_rows(rows);
  const auto xi = test::random_vector(rng, 4);
  CHECK(masked_predict(g, xi, CoalitionMask::all(4), bg2) == doctest::Approx(g(xi.transpose())(0)).epsilon(1e-14));
  CHECK(masked_predict(g, xi, CoalitionMask::none(4), bg2) == doctest::Approx(g(rows).mean()).epsilon(1e-14));
  CHECK_ERROR_KIND(BackgroundSet::from_rows(Eigen::MatrixXd(0, 4)), ErrorKind::EmptyBackground);

  const auto sampled = BackgroundSet::sample(test::random_matrix(rng, 50, 3), 10, 5);
  CHECK(sampled.rows.rows() == 10);
  CHECK(sampled.means.isApprox(sampled.rows.colwise().mean().transpose()));
}

TEST_CASE("exact shapley examples") {
  const auto f = linear(vec({2, 3}), 0.0);
  const auto a = exact_shapley(f, vec({1, 1}), BackgroundSet::means_only(vec({0, 0})));
  CHECK(a.phi(0) == doctest::Approx(2.0));
  CHECK(a.phi(1) == doctest::Approx(3.0));
  CHECK(a.base_value == 0.0);
  CHECK(a.predicted == 5.0);

  Rng rng(2);
  Eigen::MatrixXd big = test::random_matrix(rng, 2, 21);
  CHECK_ERROR_KIND(exact_shapley(linear(Eigen::VectorXd::Ones(21), 0), big.row(0).transpose(),
                                 BackgroundSet::from_rows(big)),
                   ErrorKind::TooManyFeatures);
}

TEST_CASE("exact shapley matches the subset-sum definition") {
  Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    const Eigen::Index n = 1 + rng.below(7);
    const auto f = random_model(rng, n);
    const auto bg = test::random_matrix(rng, 1 + rng.below(6), n);
    const auto x = test::random_vector(rng, n);
    const auto got = exact_shapley(f, x, BackgroundSet::from_rows(bg));
    CHECK((got.phi - brute_force_shapley(f, x, bg)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("shapley axioms") {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto f = random_model(rng, 8);
    const auto bg = BackgroundSet::from_rows(test::random_matrix(rng, 4, 8));
    const auto x = test::random_vector(rng, 8);
    const auto a = exact_shapley(f, x, bg);
    CHECK(std::abs(a.phi.sum() - (a.predicted - a.base_value)) <= 1e-10);
  }

  // dummy: column 2 is never read
  const Eigen::MatrixXd w = test::random_matrix(rng, 4, 3);
  BatchModel skip = [w](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    Eigen::MatrixXd used = x;
    used.col(2).setZero();
    return (used * w).rowwise().sum().array().tanh();
  };
  const auto bg4 = BackgroundSet::from_rows(test::random_matrix(rng, 5, 4));
  const auto x4 = test::random_vector(rng, 4);
  CHECK(exact_shapley(skip, x4, bg4).phi(2) == 0.0);

  // symmetry: relabelling features 0 and 3 relabels their values
  const auto f = random_model(rng, 4);
  BatchModel swapped = [f](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd y = x;
    y.col(0).swap(y.col(3));
    return f(y);
  };
  Eigen::MatrixXd rows = bg4.rows;
  rows.col(0).swap(rows.col(3));
  Eigen::VectorXd xs = x4;
  std::swap(xs(0), xs(3));
  const auto p = exact_shapley(f, x4, bg4).phi;
  const auto q = exact_shapley(swapped, xs, BackgroundSet::from_rows(rows)).phi;
  CHECK(q(0) == doctest::Approx(p(3)).epsilon(1e-14));
  CHECK(q(3) == doctest::Approx(p(0)).epsilon(1e-14));
  CHECK(q(1) == doctest::Approx(p(1)).epsilon(1e-14));

  // linearity under a shared background
  const auto g = random_model(rng, 4);
  BatchModel sum = [f, g](const Eigen::MatrixXd& x) -> Eigen::VectorXd { return f(x) + g(x); };
  const auto pf = exact_shapley(f, x4, bg4).phi;
  const auto pg = exact_shapley(g, x4, bg4).phi;
  CHECK((exact_shapley(sum, x4, bg4).phi - (pf + pg)).cwiseAbs().maxCoeff() <= 1e-10);

  // a subset of players; the rest stay at instance values
  const auto sub = exact_shapley(f, x4, bg4, {1, 2});
  CHECK(sub.phi(0) == 0.0);
  CHECK(sub.phi(3) == 0.0);
  CHECK(std::abs(sub.phi.sum() - (sub.predicted - sub.base_value)) <= 1e-12);
}

TEST_CASE("kernel shap with an exhaustive budget equals exact shapley") {
  Rng rng(5);
  for (Eigen::Index n = 2; n <= 10; ++n) {
    const auto f = random_model(rng, n);
    const auto bg = BackgroundSet::from_rows(test::random_matrix(rng, 5, n));
    const auto x = test::random_vector(rng, n);
    KernelShapOptions opts;
    opts.n_coalitions = std::size_t{1} << n;
    opts.seed = 9;
    const auto k = kernel_shap(f, x, bg, opts);
    const auto e = exact_shapley(f, x, bg);
    CHECK_MESSAGE((k.phi - e.phi).cwiseAbs().maxCoeff() <= 1e-6, "n = ", n);
    CHECK(k.base_value == doctest::Approx(e.base_value).epsilon(1e-14));
  }

  const Eigen::VectorXd w = vec({1.5, -2, 0.5, 3});
  const auto bg = BackgroundSet::from_rows(test::random_matrix(rng, 6, 4));
  const auto x = test::random_vector(rng, 4);
  const auto k = kernel_shap(linear(w, 0.7), x, bg, {16, 1});
  const Eigen::VectorXd expected = w.array() * (x - bg.means).array();
  CHECK((k.phi - expected).cwiseAbs().maxCoeff() <= 1e-9);

  BatchModel sym = [](const Eigen::MatrixXd& m) -> Eigen::VectorXd { return m.col(0) + m.col(1); };
  const auto s = kernel_shap(sym, vec({2, 2}), BackgroundSet::means_only(vec({0, 0})), {4, 1});
  CHECK(std::abs(s.phi(0) - s.phi(1)) <= 1e-6);

  CHECK_ERROR_KIND(kernel_shap(sym, vec({1}), BackgroundSet::means_only(vec({0}))), ErrorKind::InvalidArgument);
  CHECK(shapley_kernel_weight(4, 1) == doctest::Approx(3.0 / (4 * 1 * 3)));
  CHECK(shapley_kernel_weight(4, 2) == doctest::Approx(3.0 / (6 * 2 * 2)));
}

TEST_CASE("sampled kernel shap keeps efficiency and is seeded") {
  Rng rng(6);
  const auto f = random_model(rng, 16);
  const auto bg = BackgroundSet::from_rows(test::random_matrix(rng, 8, 16));
  const auto x = test::random_vector(rng, 16);
  const auto a = kernel_shap(f, x, bg, {300, 4});
  CHECK(std::abs(a.phi.sum() - (a.predicted - a.base_value)) <= 1e-10);
  CHECK(kernel_shap(f, x, bg, {300, 4}).phi == a.phi);
}

TEST_CASE("lime recovers a linear black box") {
  const Eigen::VectorXd w = vec({0.8, -1.2, 0.0, 2.5, 0.3});
  const auto f = linear(w, 0.1);
  const Eigen::VectorXd x = vec({0.5, -1, 2, 0, 1});
  LimeConfig cfg;
  cfg.max_features = 5;
  const auto e = lime_explain(f, x, Eigen::VectorXd::Ones(5), cfg, 3);
  for (Eigen::Index j = 0; j < 5; ++j)
    if (w(j) != 0.0) CHECK(std::abs(e.attribution.phi(j) - w(j)) <= 0.05 * std::abs(w(j)));
  CHECK(std::abs(e.attribution.phi(2)) <= 0.05);
  CHECK(e.fidelity_r2 > 0.99);
  CHECK(e.intercept == doctest::Approx(f(x.transpose())(0)).epsilon(1e-6));
  CHECK(lime_explain(f, x, Eigen::VectorXd::Ones(5), cfg, 3).attribution.phi == e.attribution.phi);

  cfg.max_features = 2;
  const auto top = lime_explain(f, x, Eigen::VectorXd::Ones(5), cfg, 3);
  auto sel = top.selected;
  std::sort(sel.begin(), sel.end());
  CHECK(sel == std::vector<std::size_t>{1, 3});
  CHECK(top.attribution.phi(0) == 0.0);

  const auto report = lime_report(top, x);
  // largest magnitude first, signed, unnamed features labelled by index
  const auto first = report.find("x3 = 0.0000 (contribution: +2.");
  const auto second = report.find("x1 = -1.0000 (contribution: -1.");
  CHECK(first != std::string::npos);
  CHECK(second != std::string::npos);
  CHECK(first < second);

  LimeConfig narrow;
  narrow.kernel_width = 1e-6;
  CHECK_ERROR_KIND(lime_explain(f, x, Eigen::VectorXd::Ones(5), narrow, 3), ErrorKind::DegeneratePerturbations);
  LimeConfig few;
  few.n_samples = 5;
  CHECK_ERROR_KIND(lime_explain(f, x, Eigen::VectorXd::Ones(5), few, 3), ErrorKind::InvalidArgument);
}

TEST_CASE("lime kernel locality") {
  for (double width : {0.1, 0.5, 1.0, 3.0})
    for (double d = 0.0; d < 10.0; d += 0.25) CHECK(lime_kernel(d, width / 2) <= lime_kernel(d, width));
  CHECK(lime_kernel(0.0, 1.0) == 1.0);
  CHECK(lime_kernel(5.0, 1e9) == doctest::Approx(1.0));
}

TEST_CASE("permutation importance") {
  Rng rng(7);
  const auto x = test::random_matrix(rng, 300, 4);
  std::vector<int> y(300);
  for (Eigen::Index i = 0; i < 300; ++i) y[static_cast<std::size_t>(i)] = x(i, 1) > 0;
  const std::vector<std::string> names{"a", "b", "c", "d"};

  BatchModel constant = [](const Eigen::MatrixXd& m) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(m.rows(), 0.3); };
  for (const auto& s : permutation_importance(constant, x, y, accuracy_score, 5, 1, names)) CHECK(s.score == 0.0);

  BatchModel one = [](const Eigen::MatrixXd& m) -> Eigen::VectorXd {
    return (1.0 / (1.0 + (-20.0 * m.col(1).array()).exp())).matrix();
  };
  const auto ranked = permutation_importance(one, x, y, accuracy_score, 5, 1, names);
  CHECK(ranked[0].name == "b");
  CHECK(ranked[0].rank == 1);
  CHECK(ranked[0].score > ranked[1].score);
  for (std::size_t k = 1; k < ranked.size(); ++k) CHECK(ranked[k].score == 0.0);
  const auto again = permutation_importance(one, x, y, accuracy_score, 5, 1, names);
  for (std::size_t k = 0; k < ranked.size(); ++k) CHECK(again[k].score == ranked[k].score);
}

TEST_CASE("global mean absolute shap") {
  Rng rng(8);
  const auto sample = test::random_matrix(rng, 4, 5);
  const auto bg = BackgroundSet::from_rows(test::random_matrix(rng, 6, 5));
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  BatchModel flat = [](const Eigen::MatrixXd& m) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(m.rows(), 0.4); };
  for (auto method : {ShapMethod::Exact, ShapMethod::Kernel})
    for (const auto& s : global_mean_abs_shap(flat, sample, bg, method, 1, names, 64))
      CHECK(std::abs(s.score) <= 1e-12);

  const auto f = random_model(rng, 5);
  const auto one = global_mean_abs_shap(f, sample.topRows(1), bg, ShapMethod::Exact, 1, names);
  const auto a = exact_shapley(f, sample.row(0).transpose(), bg);
  for (const auto& s : one) {
    const auto j = std::find(names.begin(), names.end(), s.name) - names.begin();
    CHECK(s.score == doctest::Approx(std::abs(a.phi(j))).epsilon(1e-14));
  }
  for (std::size_t k = 1; k < one.size(); ++k) CHECK(one[k - 1].score >= one[k].score);

  std::vector<Attribution> per;
  global_mean_abs_shap(f, sample, bg, ShapMethod::Kernel, 1, names, 32, &per);
  CHECK(per.size() == 4);
}
