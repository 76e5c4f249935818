#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "xai/metrics.hpp"

using namespace xai;

namespace {

// Labels and predictions producing a given confusion matrix.
void outcome(const ConfusionMatrix& cm, std::vector<int>& y, std::vector<int>& p) {
  y.clear();
  p.clear();
  auto add = [&](std::int64_t n, int t, int q) {
    for (std::int64_t i = 0; i < n; ++i) y.push_back(t), p.push_back(q);
  };
  add(cm.tn, 0, 0);
  add(cm.tp, 1, 1);
  add(cm.fp, 0, 1);
  add(cm.fn, 1, 0);
}

ConfusionMatrix cm_of(std::int64_t tn, std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  ConfusionMatrix c;
  c.tn = tn, c.tp = tp, c.fp = fp, c.fn = fn;
  return c;
}

// Mann-Whitney statistic by enumerating every positive/negative pair.
double pair_auc(const std::vector<int>& y, const Eigen::VectorXd& s) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        const double a = s(static_cast<Eigen::Index>(i)), b = s(static_cast<Eigen::Index>(j));
        good += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
      }
  return good / pairs;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("confusion matrix") {
  std::vector<int> y, p;
  outcome(cm_of(71, 36, 0, 7), y, p);
  const auto cm = confusion(y, p);
  CHECK(cm == cm_of(71, 36, 0, 7));
  CHECK(cm.total() == 114);
  CHECK(confusion(y, y) == cm_of(71, 43, 0, 0));

  std::vector<int> flipped(p.size());
  std::transform(p.begin(), p.end(), flipped.begin(), [](int v) { return 1 - v; });
  CHECK(confusion(y, flipped) == cm_of(0, 7, 71, 36));
  CHECK_ERROR_KIND(confusion(y, std::vector<int>(3, 0)), ErrorKind::LengthMismatch);

  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<int> ys, ps;
    for (auto i : order) ys.push_back(y[i]), ps.push_back(p[i]);
    CHECK(confusion(ys, ps) == cm);
  }
  CHECK(threshold_predictions(vec({0.2, 0.5, 0.7})) == std::vector<int>{0, 1, 1});
}

TEST_CASE("threshold metrics") {
  const auto m = precision_recall_f1_accuracy(cm_of(71, 36, 0, 7));
  CHECK(round_half_up(m.accuracy, 4) == 0.9386);
  CHECK(m.precision == 1.0);
  CHECK(round_half_up(m.recall, 4) == 0.8372);
  CHECK(round_half_up(m.f1, 4) == 0.9114);
  CHECK(round_half_up(m.f1, 2) == 0.91);

  const auto perfect = precision_recall_f1_accuracy(cm_of(10, 5, 0, 0));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto none = precision_recall_f1_accuracy(cm_of(10, 0, 0, 5));
  CHECK(none.precision == 0.0);
  CHECK(none.precision_degenerate);
  CHECK(none.f1_degenerate);
  CHECK_FALSE(none.recall_degenerate);

  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    const auto c = cm_of(rng.below(30), rng.below(30), rng.below(30), rng.below(30));
    if (c.total() == 0) continue;
    const auto r = precision_recall_f1_accuracy(c);
    for (double v : {r.accuracy, r.precision, r.recall, r.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (r.precision > 0 && r.recall > 0) {
      CHECK(r.f1 <= std::max(r.precision, r.recall) + 1e-15);
      CHECK(r.f1 >= std::min(r.precision, r.recall) - 1e-15);
    }
  }
}

TEST_CASE("half-up rounding") {
  CHECK(round_half_up(0.955, 2) == 0.96);
  CHECK(round_half_up(0.945, 2) == 0.95);
  CHECK(round_half_up(0.125, 2) == 0.13);
  CHECK(round_half_up(0.9114, 2) == 0.91);
  CHECK(round_half_up(1.0, 2) == 1.0);
}

TEST_CASE("roc curve and auc") {
  CHECK(roc_auc({0, 0, 1, 1}, vec({0.1, 0.4, 0.35, 0.8})) == doctest::Approx(0.75));
  CHECK(roc_auc({0, 0, 1, 1}, vec({0.1, 0.2, 0.8, 0.9})) == 1.0);
  const auto flat = roc_curve({0, 1, 0, 1, 1}, vec({0.5, 0.5, 0.5, 0.5, 0.5}));
  CHECK(flat.auc == 0.5);
  REQUIRE(flat.points.size() == 2);
  CHECK(flat.points[1].fpr == 1.0);
  CHECK(flat.points[1].tpr == 1.0);
  CHECK_ERROR_KIND(roc_auc({1, 1}, vec({0.2, 0.3})), ErrorKind::SingleClass);
  CHECK_ERROR_KIND(roc_auc({0, 1}, vec({0.2})), ErrorKind::LengthMismatch);

  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<int> y(n);
    for (auto& v : y) v = rng.bernoulli(0.4) ? 1 : 0;
    y[0] = 0;
    y[1] = 1;
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    // coarse scores so that ties are common
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = static_cast<double>(rng.below(8)) / 8.0;
    const auto c = roc_curve(y, s);
    CHECK(std::abs(c.auc - pair_auc(y, s)) <= 1e-12);
    CHECK(c.auc >= 0.0);
    CHECK(c.auc <= 1.0);
    REQUIRE(c.points.size() >= 2);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(std::isinf(c.points.front().threshold));
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      CHECK(c.points[k].fpr >= c.points[k - 1].fpr);
      CHECK(c.points[k].tpr >= c.points[k - 1].tpr);
      CHECK(c.points[k].threshold < c.points[k - 1].threshold);
    }
  }
}

TEST_CASE("classification report") {
  std::vector<int> y, p;
  outcome(cm_of(71, 36, 0, 7), y, p);
  const auto r = classification_report(y, p);
  CHECK(r.classes[0].support == 71);
  CHECK(r.classes[1].support == 43);
  CHECK(round_half_up(r.macro.precision, 4) == 0.9551);
  CHECK(r.accuracy == doctest::Approx(107.0 / 114.0));

  const std::string expected =
      "                   precision    recall  f1-score   support\n"
      "0                       0.91      1.00      0.95        71\n"
      "1                       1.00      0.84      0.91        43\n"
      "macro avg               0.96      0.92      0.93       114\n"
      "weighted avg            0.94      0.94      0.94       114\n";
  CHECK(r.render() == expected);
  CHECK(r.to_csv().rfind("class,precision,recall,f1,support\r\n", 0) == 0);

  const auto single = classification_report({0, 0, 0}, {0, 0, 0});
  CHECK(single.classes[0].precision == 1.0);
  CHECK(single.classes[0].recall == 1.0);
  CHECK(single.classes[0].f1 == 1.0);
  CHECK(single.classes[1].support == 0);
  CHECK_ERROR_KIND(classification_report({0, 1}, {0}), ErrorKind::LengthMismatch);

  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto c = cm_of(1 + rng.below(40), 1 + rng.below(40), rng.below(40), rng.below(40));
    outcome(c, y, p);
    const auto rep = classification_report(y, p);
    CHECK(rep.classes[0].support + rep.classes[1].support == c.total());
    const double w0 = static_cast<double>(rep.classes[0].support) / static_cast<double>(c.total());
    const double w1 = 1.0 - w0;
    CHECK(std::abs(rep.weighted.f1 - (w0 * rep.classes[0].f1 + w1 * rep.classes[1].f1)) <= 1e-12);
    CHECK(std::abs(rep.weighted.precision - (w0 * rep.classes[0].precision + w1 * rep.classes[1].precision)) <= 1e-12);
    CHECK(std::abs(rep.macro.recall - 0.5 * (rep.classes[0].recall + rep.classes[1].recall)) <= 1e-12);
    // class 1 row agrees with the positive-class metrics
    const auto m = precision_recall_f1_accuracy(c);
    CHECK(rep.classes[1].precision == m.precision);
    CHECK(rep.classes[1].recall == m.recall);
  }
}

TEST_CASE("permutation score drop") {
  Rng rng(5);
  const Eigen::Index n = 400;
  const auto x = test::random_matrix(rng, n, 3);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = x(i, 1) > 0 ? 1 : 0;
  // depends only on column 1, through a steep sigmoid
  BatchModel model = [](const Eigen::MatrixXd& m) -> Eigen::VectorXd {
    return (1.0 / (1.0 + (-50.0 * m.col(1).array()).exp())).matrix();
  };
  const auto drops = permutation_score_drop(model, x, y, accuracy_score, 5, 11);
  REQUIRE(drops.size() == 3);
  CHECK(drops[0] == 0.0);
  CHECK(drops[2] == 0.0);
  CHECK(drops[1] > 0.3);
  CHECK(permutation_score_drop(model, x, y, accuracy_score, 5, 11) == drops);
  CHECK_ERROR_KIND(permutation_score_drop(model, x, y, accuracy_score, 0, 11), ErrorKind::InvalidArgument);
}
