#include <cmath>
#include <limits>

#include "support.hpp"
#include "xai/dataset.hpp"
#include "xai/preprocess.hpp"

using namespace xai;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Dataset small_dataset(const Eigen::MatrixXd& x) {
  Dataset d;
  for (Eigen::Index j = 0; j < x.cols(); ++j) d.feature_names.push_back("f" + std::to_string(j));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Record r;
    r.id = std::to_string(i);
    for (Eigen::Index j = 0; j < x.cols(); ++j) r.features.push_back(x(i, j));
    r.label = i % 2 ? 'M' : 'B';
    d.records.push_back(r);
  }
  return encode_labels(d);
}

}  // namespace

TEST_CASE("column statistics use the population deviation") {
  const auto s = column_stats(vec({1, 2, 3}));
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(0.8165).epsilon(1e-4));
  CHECK(s.min == 1);
  CHECK(s.max == 3);
  CHECK(s.median == 2);
  CHECK(median({1, 2, 3, 4}) == 2.5);
  CHECK(mode({3, 1, 1, 3, 2}) == 1);
  CHECK_ERROR_KIND(column_stats(vec({kNaN, kNaN})), ErrorKind::EmptyColumn);
}

TEST_CASE("imputation") {
  CHECK(impute(vec({1, kNaN, 3}), ImputeStrategy::Mean) == vec({1, 2, 3}));
  CHECK(impute(vec({5, 5, kNaN}), ImputeStrategy::Mode) == vec({5, 5, 5}));
  CHECK(impute(vec({1, 2, 100, kNaN}), ImputeStrategy::Median) == vec({1, 2, 100, 2}));
  CHECK_ERROR_KIND(impute(vec({kNaN, kNaN}), ImputeStrategy::Mean), ErrorKind::AllMissing);
}

TEST_CASE("imputation leaves present entries bit-identical") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd v = test::random_vector(rng, 40, 1e3);
    for (int k = 0; k < 5; ++k) v(rng.below(40)) = kNaN;
    for (auto s : {ImputeStrategy::Mean, ImputeStrategy::Median, ImputeStrategy::Mode}) {
      const auto out = impute(v, s);
      CHECK(out.allFinite());
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isnan(v(i))) CHECK(std::memcmp(&out(i), &v(i), sizeof(double)) == 0);
    }
  }
}

TEST_CASE("min-max scaling") {
  const auto st = column_stats(vec({2, 4, 6}));
  CHECK(min_max_apply(vec({2, 4, 6}), st) == vec({0, 0.5, 1}));
  std::size_t outside = 0;
  CHECK(min_max_apply(vec({8}), st, &outside)(0) == 1.5);
  CHECK(outside == 1);
  const auto constant = column_stats(vec({3, 3, 3}));
  CHECK(constant.degenerate_range());
  CHECK_ERROR_KIND(min_max_apply(vec({3}), constant), ErrorKind::DegenerateRange);

  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto v = test::random_vector(rng, 30, 50.0);
    const auto s = column_stats(v);
    const auto back = min_max_inverse(min_max_apply(v, s), s);
    CHECK((back - v).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("z-score") {
  const auto v = vec({1, 2, 3});
  const auto z = zscore_apply(v, column_stats(v));
  CHECK(z(0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(z(1) == 0.0);
  CHECK(z(2) == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK_ERROR_KIND(zscore_apply(vec({1, 1}), column_stats(vec({1, 1}))), ErrorKind::ZeroVariance);

  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const auto c = test::random_vector(rng, 50, 10.0);
    const auto zz = zscore_apply(c, column_stats(c));
    const double mean = zz.mean();
    const double sd = std::sqrt((zz.array() - mean).square().mean());
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sd - 1.0) < 1e-12);
  }
}

TEST_CASE("log transform") {
  const auto out = log_transform(vec({1, std::exp(1.0) - 1}), 1.0);
  CHECK(out(0) == doctest::Approx(std::log(2.0)));
  CHECK(out(1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(log_transform(vec({0}), 1.0)(0) == 0.0);
  CHECK_ERROR_KIND(log_transform(vec({-1}), 0.0), ErrorKind::NonPositiveInput);
}

TEST_CASE("plan fits once on training data and refuses a second application") {
  Rng rng(3);
  const auto train = small_dataset(test::random_matrix(rng, 20, 3, 4.0));
  const auto test_set = small_dataset(test::random_matrix(rng, 7, 3, 4.0));
  PreprocessPlan plan({PreprocessStep{TransformKind::ZScore, {}, {}, 1.0}});
  plan.fit(train);
  CHECK_ERROR_KIND(plan.fit(train), ErrorKind::PlanState);

  const auto before = plan.to_table();
  const auto t1 = plan.apply(train);
  plan.apply(test_set);
  CHECK(plan.to_table() == before);  // applying never touches the fitted statistics
  CHECK_ERROR_KIND(plan.apply(t1), ErrorKind::PlanState);

  const auto& st = plan.stats(0);
  const Eigen::MatrixXd raw = train.matrix();
  const Eigen::MatrixXd scaled = t1.matrix();
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(st[static_cast<std::size_t>(j)].mean == doctest::Approx(raw.col(j).mean()));
    CHECK(scaled.col(j).mean() == doctest::Approx(0.0).epsilon(1e-12));
  }
  PreprocessPlan unfitted({PreprocessStep{}});
  CHECK_ERROR_KIND(unfitted.apply(train), ErrorKind::PlanState);
}

TEST_CASE("steps chain and the plan table round-trips") {
  Rng rng(8);
  Eigen::MatrixXd x = test::random_matrix(rng, 25, 4, 2.0).array().abs() + 0.5;
  x(3, 1) = kNaN;
  const auto train = small_dataset(x);
  auto plan = fit_plan(train, {PreprocessStep{TransformKind::Impute, {}, ImputeStrategy::Median, 1.0},
                               PreprocessStep{TransformKind::Log, {"f0", "f2"}, {}, 1.0},
                               PreprocessStep{TransformKind::ZScore, {}, {}, 1.0}});
  const auto out = plan.apply(train).matrix();
  CHECK(out.allFinite());
  // log then zscore: column 0 is standardized logged values
  Eigen::VectorXd logged = (x.col(0).array() + 1.0).log().matrix();
  const auto st = column_stats(logged);
  CHECK((out.col(0) - zscore_apply(logged, st)).cwiseAbs().maxCoeff() < 1e-12);

  const auto replay = PreprocessPlan::from_table(plan.to_table());
  CHECK(replay.fingerprint() == plan.fingerprint());
  CHECK((replay.apply(train).matrix() - out).cwiseAbs().maxCoeff() == 0.0);

  auto text = plan.to_table();
  text.replace(text.find("v1"), 2, "v9");
  CHECK_ERROR_KIND(PreprocessPlan::from_table(text), ErrorKind::VersionMismatch);
}

TEST_CASE("wdbc standardization fitted on train only") {
  const auto d = encode_labels(load_csv(test::wdbc_path()));
  const auto [train, test_set] = train_test_split(d, 0.2, 42);
  const auto plan = fit_plan(train, {PreprocessStep{}});
  const auto tt = plan.apply(train).matrix();
  for (Eigen::Index j = 0; j < tt.cols(); ++j) CHECK(std::abs(tt.col(j).mean()) < 1e-12);
  const auto te = plan.apply(test_set).matrix();
  CHECK(std::abs(te.col(0).mean()) > 1e-6);  // test statistics are not re-fitted
}
