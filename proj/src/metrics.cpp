#include "xai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "xai/error.hpp"
#include "xai/io.hpp"
#include "xai/rng.hpp"

namespace xai {

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(y_true.size()) + " labels vs " + std::to_string(y_pred.size()) + " predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) throw Error(ErrorKind::InvalidArgument, "labels must be 0/1");
    if (t == 1) {
      (p == 1 ? cm.tp : cm.fn)++;
    } else {
      (p == 1 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

std::vector<int> threshold_predictions(const Eigen::VectorXd& proba, double threshold) {
  std::vector<int> out(static_cast<std::size_t>(proba.size()));
  for (Eigen::Index i = 0; i < proba.size(); ++i) out[static_cast<std::size_t>(i)] = proba(i) >= threshold ? 1 : 0;
  return out;
}

namespace {

double ratio(std::int64_t num, std::int64_t den, bool& degenerate) {
  degenerate = den == 0;
  return degenerate ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r, bool& degenerate) {
  degenerate = p + r == 0.0;
  return degenerate ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace

BinaryMetrics precision_recall_f1_accuracy(const ConfusionMatrix& cm) {
  BinaryMetrics m;
  bool unused = false;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total(), unused);
  m.precision = ratio(cm.tp, cm.tp + cm.fp, m.precision_degenerate);
  m.recall = ratio(cm.tp, cm.tp + cm.fn, m.recall_degenerate);
  m.f1 = harmonic(m.precision, m.recall, m.f1_degenerate);
  return m;
}

RocCurve roc_curve(const std::vector<int>& y_true, const Eigen::VectorXd& scores) {
  if (static_cast<Eigen::Index>(y_true.size()) != scores.size())
    throw Error(ErrorKind::LengthMismatch, "roc_curve: labels vs scores");
  std::int64_t pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores(i))) throw Error(ErrorKind::InvalidArgument, "roc_curve: non-finite score");
    (y_true[static_cast<std::size_t>(i)] == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw Error(ErrorKind::SingleClass, "roc_curve needs both classes");

  std::vector<std::size_t> order(y_true.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });

  RocCurve c;
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores(static_cast<Eigen::Index>(order[i]));
    while (i < order.size() && scores(static_cast<Eigen::Index>(order[i])) == s) {
      (y_true[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    c.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  // Integrate in counts so the result is exact for the pair statistic.
  double area = 0.0;
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    const double dx = c.points[k].fpr - c.points[k - 1].fpr;
    area += dx * 0.5 * (c.points[k].tpr + c.points[k - 1].tpr);
  }
  c.auc = area;
  return c;
}

double roc_auc(const std::vector<int>& y_true, const Eigen::VectorXd& scores) { return roc_curve(y_true, scores).auc; }

ClassificationReport classification_report(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  const auto cm = confusion(y_true, y_pred);
  ClassificationReport r;
  bool d = false;
  // Class 1 as positive.
  r.classes[1].precision = ratio(cm.tp, cm.tp + cm.fp, d);
  r.classes[1].recall = ratio(cm.tp, cm.tp + cm.fn, d);
  r.classes[1].support = cm.tp + cm.fn;
  // Class 0 as positive: roles of tp/tn and fp/fn swap.
  r.classes[0].precision = ratio(cm.tn, cm.tn + cm.fn, d);
  r.classes[0].recall = ratio(cm.tn, cm.tn + cm.fp, d);
  r.classes[0].support = cm.tn + cm.fp;
  for (auto& c : r.classes) c.f1 = harmonic(c.precision, c.recall, d);

  const double n = static_cast<double>(cm.total());
  r.macro.precision = 0.5 * (r.classes[0].precision + r.classes[1].precision);
  r.macro.recall = 0.5 * (r.classes[0].recall + r.classes[1].recall);
  r.macro.f1 = 0.5 * (r.classes[0].f1 + r.classes[1].f1);
  r.macro.support = cm.total();
  if (n > 0) {
    const double w0 = static_cast<double>(r.classes[0].support) / n;
    const double w1 = static_cast<double>(r.classes[1].support) / n;
    r.weighted.precision = w0 * r.classes[0].precision + w1 * r.classes[1].precision;
    r.weighted.recall = w0 * r.classes[0].recall + w1 * r.classes[1].recall;
    r.weighted.f1 = w0 * r.classes[0].f1 + w1 * r.classes[1].f1;
    r.accuracy = static_cast<double>(cm.tp + cm.tn) / n;
  }
  r.weighted.support = cm.total();
  return r;
}

double round_half_up(double v, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::floor(v * scale + 0.5 + 1e-9) / scale;
}

namespace {

std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << round_half_up(v, 2);
  return os.str();
}

}  // namespace

std::string ClassificationReport::render() const {
  std::ostringstream os;
  auto row = [&](const std::string& label, const ClassRow& r) {
    os << std::left << std::setw(18) << label << std::right << std::setw(10) << fixed2(r.precision) << std::setw(10)
       << fixed2(r.recall) << std::setw(10) << fixed2(r.f1) << std::setw(10) << r.support << "\n";
  };
  os << std::left << std::setw(18) << "" << std::right << std::setw(10) << "precision" << std::setw(10) << "recall"
     << std::setw(10) << "f1-score" << std::setw(10) << "support" << "\n";
  row("0", classes[0]);
  row("1", classes[1]);
  row("macro avg", macro);
  row("weighted avg", weighted);
  return os.str();
}

std::string ClassificationReport::to_csv() const {
  io::CsvWriter w({"class", "precision", "recall", "f1", "support"});
  auto row = [&](const std::string& label, const ClassRow& r) {
    w.row({label, io::format_double(r.precision), io::format_double(r.recall), io::format_double(r.f1),
           std::to_string(r.support)});
  };
  row("0", classes[0]);
  row("1", classes[1]);
  row("macro avg", macro);
  row("weighted avg", weighted);
  return w.str();
}

double accuracy_score(const std::vector<int>& y_true, const Eigen::VectorXd& proba) {
  if (static_cast<Eigen::Index>(y_true.size()) != proba.size()) throw Error(ErrorKind::LengthMismatch, "accuracy");
  if (y_true.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    hit += (proba(static_cast<Eigen::Index>(i)) >= 0.5 ? 1 : 0) == y_true[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

std::vector<double> permutation_score_drop(const BatchModel& model, const Eigen::MatrixXd& x,
                                           const std::vector<int>& y, const ScoreFn& metric, int repeats,
                                           std::uint64_t seed) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw Error(ErrorKind::LengthMismatch, "permutation: X vs y");
  if (repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be >= 1");
  const double baseline = metric(y, model(x));
  std::vector<double> drops(static_cast<std::size_t>(x.cols()), 0.0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    Eigen::MatrixXd shuffled = x;
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      rng.shuffle(perm);
      for (Eigen::Index i = 0; i < x.rows(); ++i) shuffled(i, j) = x(perm[static_cast<std::size_t>(i)], j);
      total += baseline - metric(y, model(shuffled));
    }
    drops[static_cast<std::size_t>(j)] = total / repeats;
  }
  return drops;
}

}  // namespace xai
