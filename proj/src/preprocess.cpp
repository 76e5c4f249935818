#include "xai/preprocess.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "xai/error.hpp"
#include "xai/io.hpp"
#include "xai/rng.hpp"

namespace xai {

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::Impute: return "impute";
    case TransformKind::MinMax: return "minmax";
    case TransformKind::ZScore: return "zscore";
    case TransformKind::Log: return "log";
  }
  return "?";
}

std::string to_string(ImputeStrategy s) {
  switch (s) {
    case ImputeStrategy::Mean: return "mean";
    case ImputeStrategy::Median: return "median";
    case ImputeStrategy::Mode: return "mode";
  }
  return "?";
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyColumn, "median of empty column");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mode(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyColumn, "mode of empty column");
  std::sort(values.begin(), values.end());
  double best = values[0];
  std::size_t best_run = 0;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    if (j - i > best_run) {
      best_run = j - i;
      best = values[i];
    }
    i = j;
  }
  return best;
}

namespace {

std::vector<double> present(const Eigen::Ref<const Eigen::VectorXd>& column) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(column.size()));
  for (Eigen::Index i = 0; i < column.size(); ++i)
    if (!std::isnan(column(i))) v.push_back(column(i));
  return v;
}

}  // namespace

ColumnStats column_stats(const Eigen::Ref<const Eigen::VectorXd>& column) {
  auto v = present(column);
  if (v.empty()) throw Error(ErrorKind::EmptyColumn, "no non-missing values");
  ColumnStats s;
  s.count = v.size();
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  s.min = *mn;
  s.max = *mx;
  s.median = median(v);
  s.mode = mode(std::move(v));
  return s;
}

Eigen::VectorXd impute(const Eigen::Ref<const Eigen::VectorXd>& column, ImputeStrategy strategy) {
  auto v = present(column);
  if (v.empty()) throw Error(ErrorKind::AllMissing, "cannot impute a column with no values");
  double fill = 0.0;
  switch (strategy) {
    case ImputeStrategy::Mean: {
      double sum = 0.0;
      for (double x : v) sum += x;
      fill = sum / static_cast<double>(v.size());
      break;
    }
    case ImputeStrategy::Median: fill = median(std::move(v)); break;
    case ImputeStrategy::Mode: fill = mode(std::move(v)); break;
  }
  Eigen::VectorXd out = column;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (std::isnan(out(i))) out(i) = fill;
  return out;
}

Eigen::VectorXd min_max_apply(const Eigen::Ref<const Eigen::VectorXd>& column, const ColumnStats& stats,
                              std::size_t* out_of_range) {
  if (stats.degenerate_range()) throw Error(ErrorKind::DegenerateRange, "max == min");
  const double span = stats.max - stats.min;
  Eigen::VectorXd out = (column.array() - stats.min) / span;
  if (out_of_range) {
    *out_of_range = 0;
    for (Eigen::Index i = 0; i < column.size(); ++i)
      if (column(i) < stats.min || column(i) > stats.max) ++*out_of_range;
  }
  return out;
}

Eigen::VectorXd min_max_inverse(const Eigen::Ref<const Eigen::VectorXd>& scaled, const ColumnStats& stats) {
  return scaled.array() * (stats.max - stats.min) + stats.min;
}

Eigen::VectorXd zscore_apply(const Eigen::Ref<const Eigen::VectorXd>& column, const ColumnStats& stats) {
  if (!(stats.std > 0.0)) throw Error(ErrorKind::ZeroVariance, "standard deviation is zero");
  return (column.array() - stats.mean) / stats.std;
}

Eigen::VectorXd log_transform(const Eigen::Ref<const Eigen::VectorXd>& column, double offset) {
  Eigen::VectorXd out(column.size());
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    double shifted = column(i) + offset;
    if (!(shifted > 0.0)) throw Error(ErrorKind::NonPositiveInput, "row " + std::to_string(i));
    out(i) = std::log(shifted);
  }
  return out;
}

void PreprocessPlan::fit(const Dataset& train) {
  if (fitted_) throw Error(ErrorKind::PlanState, "plan already fitted");
  if (train.size() == 0) throw Error(ErrorKind::EmptyColumn, "training set is empty");
  names_ = train.feature_names;
  columns_.clear();
  stats_.clear();
  Eigen::MatrixXd values = train.matrix();
  for (const auto& step : steps_) {
    std::vector<std::size_t> cols;
    if (step.columns.empty()) {
      for (std::size_t j = 0; j < names_.size(); ++j) cols.push_back(j);
    } else {
      for (const auto& c : step.columns) {
        auto it = std::find(names_.begin(), names_.end(), c);
        if (it == names_.end()) throw Error(ErrorKind::MissingColumn, c);
        cols.push_back(static_cast<std::size_t>(it - names_.begin()));
      }
    }
    std::vector<ColumnStats> st;
    for (auto c : cols) {
      auto cs = column_stats(values.col(static_cast<Eigen::Index>(c)));
      if (step.kind == TransformKind::MinMax && cs.degenerate_range())
        spdlog::warn("preprocess: column '{}' is constant, min-max range is degenerate", names_[c]);
      st.push_back(cs);
    }
    columns_.push_back(cols);
    stats_.push_back(std::move(st));
    // Later steps see the output of this one.
    Eigen::MatrixXd next = values;
    std::size_t s = stats_.size() - 1;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      auto c = static_cast<Eigen::Index>(cols[k]);
      const auto& cs = stats_[s][k];
      switch (step.kind) {
        case TransformKind::Impute: {
          double fill = step.strategy == ImputeStrategy::Mean     ? cs.mean
                        : step.strategy == ImputeStrategy::Median ? cs.median
                                                                  : cs.mode;
          for (Eigen::Index i = 0; i < next.rows(); ++i)
            if (std::isnan(next(i, c))) next(i, c) = fill;
          break;
        }
        case TransformKind::MinMax:
          if (!cs.degenerate_range()) next.col(c) = min_max_apply(values.col(c), cs);
          break;
        case TransformKind::ZScore: next.col(c) = zscore_apply(values.col(c), cs); break;
        case TransformKind::Log: next.col(c) = log_transform(values.col(c), step.log_offset); break;
      }
    }
    values = std::move(next);
  }
  fitted_ = true;
}

Eigen::MatrixXd PreprocessPlan::transform(const Eigen::MatrixXd& input) const {
  Eigen::MatrixXd values = input;
  for (std::size_t s = 0; s < steps_.size(); ++s) {
    const auto& step = steps_[s];
    for (std::size_t k = 0; k < columns_[s].size(); ++k) {
      auto c = static_cast<Eigen::Index>(columns_[s][k]);
      const auto& cs = stats_[s][k];
      switch (step.kind) {
        case TransformKind::Impute: {
          double fill = step.strategy == ImputeStrategy::Mean     ? cs.mean
                        : step.strategy == ImputeStrategy::Median ? cs.median
                                                                  : cs.mode;
          for (Eigen::Index i = 0; i < values.rows(); ++i)
            if (std::isnan(values(i, c))) values(i, c) = fill;
          break;
        }
        case TransformKind::MinMax: {
          if (cs.degenerate_range()) {
            values.col(c).setZero();
            break;
          }
          std::size_t outside = 0;
          values.col(c) = min_max_apply(values.col(c), cs, &outside);
          if (outside > 0)
            spdlog::debug("preprocess: {} value(s) of '{}' outside fitted range", outside, names_[columns_[s][k]]);
          break;
        }
        case TransformKind::ZScore: values.col(c) = zscore_apply(values.col(c), cs); break;
        case TransformKind::Log: values.col(c) = log_transform(values.col(c), step.log_offset); break;
      }
    }
  }
  return values;
}

Dataset PreprocessPlan::apply(const Dataset& d) const {
  if (!fitted_) throw Error(ErrorKind::PlanState, "plan not fitted");
  if (d.feature_names != names_) throw Error(ErrorKind::ShapeMismatch, "dataset columns differ from fitted plan");
  const auto fp = fingerprint();
  if (std::find(d.applied_plans.begin(), d.applied_plans.end(), fp) != d.applied_plans.end())
    throw Error(ErrorKind::PlanState, "plan already applied to this dataset");
  Dataset out = d;
  out.assign(transform(d.matrix()));
  out.applied_plans.push_back(fp);
  return out;
}

std::uint64_t PreprocessPlan::fingerprint() const { return fnv1a64(to_table()); }

std::string PreprocessPlan::to_table() const {
  std::ostringstream os;
  os << "# preprocess-plan v" << kTableVersion << "\r\n";
  io::CsvWriter w({"step", "kind", "column", "statistic", "value"});
  for (std::size_t j = 0; j < names_.size(); ++j) w.row({"schema", "", names_[j], "index", std::to_string(j)});
  for (std::size_t s = 0; s < steps_.size(); ++s) {
    const auto& step = steps_[s];
    auto kind = to_string(step.kind);
    auto sid = std::to_string(s);
    if (step.kind == TransformKind::Impute) w.row({sid, kind, "", "strategy", to_string(step.strategy)});
    if (step.kind == TransformKind::Log) w.row({sid, kind, "", "offset", io::format_double(step.log_offset)});
    if (!fitted_) continue;
    for (std::size_t k = 0; k < columns_[s].size(); ++k) {
      const auto& name = names_[columns_[s][k]];
      const auto& cs = stats_[s][k];
      w.row({sid, kind, name, "mean", io::format_double(cs.mean)});
      w.row({sid, kind, name, "std", io::format_double(cs.std)});
      w.row({sid, kind, name, "min", io::format_double(cs.min)});
      w.row({sid, kind, name, "max", io::format_double(cs.max)});
      w.row({sid, kind, name, "median", io::format_double(cs.median)});
      w.row({sid, kind, name, "mode", io::format_double(cs.mode)});
      w.row({sid, kind, name, "count", std::to_string(cs.count)});
    }
  }
  os << w.str();
  return os.str();
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorKind::ParseError, "bad number '" + s + "'");
  return v;
}

TransformKind parse_kind(const std::string& s) {
  if (s == "impute") return TransformKind::Impute;
  if (s == "minmax") return TransformKind::MinMax;
  if (s == "zscore") return TransformKind::ZScore;
  if (s == "log") return TransformKind::Log;
  throw Error(ErrorKind::ParseError, "unknown transform '" + s + "'");
}

}  // namespace

PreprocessPlan PreprocessPlan::from_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty plan table");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string magic = "# preprocess-plan v";
  if (line.rfind(magic, 0) != 0) throw Error(ErrorKind::ParseError, "missing plan header");
  if (std::stoi(line.substr(magic.size())) != kTableVersion)
    throw Error(ErrorKind::VersionMismatch, "plan table " + line);
  std::getline(in, line);  // column header

  PreprocessPlan plan;
  std::map<std::size_t, std::vector<std::pair<std::string, std::map<std::string, double>>>> per_step;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = io::split_csv_line(line);
    if (f.size() != 5) throw Error(ErrorKind::ParseError, "plan row: " + line);
    if (f[0] == "schema") {
      plan.names_.push_back(f[2]);
      continue;
    }
    auto s = static_cast<std::size_t>(std::stoul(f[0]));
    while (plan.steps_.size() <= s) plan.steps_.push_back({});
    auto& step = plan.steps_[s];
    step.kind = parse_kind(f[1]);
    if (f[3] == "strategy") {
      step.strategy = f[4] == "median" ? ImputeStrategy::Median : f[4] == "mode" ? ImputeStrategy::Mode : ImputeStrategy::Mean;
      continue;
    }
    if (f[3] == "offset") {
      step.log_offset = parse_double(f[4]);
      continue;
    }
    auto& cols = per_step[s];
    if (cols.empty() || cols.back().first != f[2]) cols.push_back({f[2], {}});
    cols.back().second[f[3]] = parse_double(f[4]);
  }
  if (plan.names_.empty()) return plan;
  for (std::size_t s = 0; s < plan.steps_.size(); ++s) {
    std::vector<std::size_t> cols;
    std::vector<ColumnStats> st;
    for (const auto& [name, m] : per_step[s]) {
      auto it = std::find(plan.names_.begin(), plan.names_.end(), name);
      if (it == plan.names_.end()) throw Error(ErrorKind::ParseError, "plan column not in schema: " + name);
      cols.push_back(static_cast<std::size_t>(it - plan.names_.begin()));
      ColumnStats cs;
      cs.mean = m.at("mean");
      cs.std = m.at("std");
      cs.min = m.at("min");
      cs.max = m.at("max");
      cs.median = m.at("median");
      cs.mode = m.at("mode");
      cs.count = static_cast<std::size_t>(m.at("count"));
      st.push_back(cs);
    }
    plan.columns_.push_back(std::move(cols));
    plan.stats_.push_back(std::move(st));
  }
  plan.fitted_ = true;
  return plan;
}

PreprocessPlan fit_plan(const Dataset& train, std::vector<PreprocessStep> steps) {
  PreprocessPlan plan(std::move(steps));
  plan.fit(train);
  return plan;
}

}  // namespace xai
