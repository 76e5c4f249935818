#include "xai/plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "xai/error.hpp"
#include "xai/io.hpp"

namespace xai::plot {

std::string to_string(PlotKind k) {
  switch (k) {
    case PlotKind::HistogramGrid: return "histogram_grid";
    case PlotKind::Boxplot: return "boxplot";
    case PlotKind::RfeHeatmap: return "rfe_heatmap";
    case PlotKind::ConfusionHeatmap: return "confusion_heatmap";
    case PlotKind::Roc: return "roc";
    case PlotKind::ShapBar: return "shap_bar";
    case PlotKind::LimeReport: return "lime_report";
  }
  return "?";
}

std::string PlotTable::to_csv() const {
  io::CsvWriter w(header);
  for (const auto& r : rows) w.row(r);
  return w.str();
}

std::size_t PlotTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorKind::InvalidArgument, "plot table has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double PlotTable::number(std::size_t row, std::size_t col) const {
  const auto& s = rows.at(row).at(col);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(ErrorKind::InvalidArgument, "plot table cell '" + s + "' is not a number");
  return v;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return io::format_double(v);
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

// Light-to-dark blue for t in [0, 1].
std::string blue(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [&](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  return fmt::format("#{:02x}{:02x}{:02x}", mix(239, 8), mix(243, 48), mix(255, 107));
}

class Svg {
 public:
  Svg(double w, double h, const std::string& title) {
    out_ = fmt::format(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\">\n"
        "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"#ffffff\"/>\n",
        w, h);
    text(w / 2, 22, title, 16, "middle");
  }
  void text(double x, double y, std::string_view s, double size = 11, std::string_view anchor = "start",
            std::string_view fill = "#222222") {
    out_ += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"{}\" text-anchor=\"{}\" fill=\"{}\">{}</text>\n", x,
                        y, size, anchor, fill, escape(s));
  }
  void rect(double x, double y, double w, double h, std::string_view fill, std::string_view stroke = "none") {
    out_ += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" stroke=\"{}\"/>\n",
                        x, y, std::max(w, 0.0), std::max(h, 0.0), fill, stroke);
  }
  void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#444444",
            std::string_view dash = "") {
    out_ += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\"{}/>\n", x1, y1, x2,
                        y2, stroke, dash.empty() ? "" : fmt::format(" stroke-dasharray=\"{}\"", dash));
  }
  void raw(std::string_view s) { out_ += s; }
  std::string finish() { return out_ + "</svg>\n"; }

 private:
  std::string out_;
};

void require_columns(const PlotSpec& spec, std::initializer_list<const char*> cols) {
  for (const char* c : cols) spec.data.column(c);
  for (const auto& r : spec.data.rows)
    if (r.size() != spec.data.header.size())
      throw Error(ErrorKind::InvalidArgument, "plot table row width differs from header");
}

std::string render_histograms(const PlotSpec& spec) {
  const auto& t = spec.data;
  const auto cf = t.column("feature"), cc = t.column("count");
  std::vector<std::string> features;
  for (const auto& r : t.rows)
    if (features.empty() || features.back() != r[cf]) features.push_back(r[cf]);
  const int cols = 6;
  const int grid_rows = static_cast<int>((features.size() + cols - 1) / cols);
  const double pw = 170, ph = 120, top = 40;
  Svg svg(cols * pw + 20, top + grid_rows * ph + 10, spec.title);
  std::size_t r = 0;
  for (std::size_t f = 0; f < features.size(); ++f) {
    std::size_t end = r;
    double peak = 0;
    while (end < t.rows.size() && t.rows[end][cf] == features[f]) peak = std::max(peak, t.number(end++, cc));
    const double x0 = 10 + static_cast<double>(f % cols) * pw, y0 = top + static_cast<double>(f / cols) * ph;
    svg.raw("<g class=\"panel\">\n");
    svg.text(x0 + pw / 2, y0 + 12, features[f], 10, "middle");
    const double area_h = ph - 30, bar_w = (pw - 20) / static_cast<double>(std::max<std::size_t>(end - r, 1));
    for (std::size_t b = r; b < end; ++b) {
      const double h = peak > 0 ? area_h * t.number(b, cc) / peak : 0.0;
      svg.rect(x0 + 10 + static_cast<double>(b - r) * bar_w, y0 + 18 + area_h - h, bar_w, h, "#4c78a8", "#ffffff");
    }
    svg.line(x0 + 10, y0 + 18 + area_h, x0 + pw - 10, y0 + 18 + area_h);
    svg.raw("</g>\n");
    r = end;
  }
  return svg.finish();
}

std::string render_boxplot(const PlotSpec& spec) {
  const auto& t = spec.data;
  const auto cf = t.column("feature"), cmin = t.column("min"), cq1 = t.column("q1"), cmed = t.column("median"),
             cq3 = t.column("q3"), cmax = t.column("max");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    lo = std::min(lo, t.number(i, cmin));
    hi = std::max(hi, t.number(i, cmax));
  }
  if (!(hi > lo)) hi = lo + 1;
  const double left = 190, width = 520, row_h = 20, top = 40;
  Svg svg(left + width + 30, top + row_h * static_cast<double>(t.rows.size()) + 40, spec.title);
  auto sx = [&](double v) { return left + width * (v - lo) / (hi - lo); };
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double y = top + row_h * static_cast<double>(i) + row_h / 2;
    svg.text(left - 8, y + 4, t.rows[i][cf], 10, "end");
    svg.line(sx(t.number(i, cmin)), y, sx(t.number(i, cmax)), y);
    svg.rect(sx(t.number(i, cq1)), y - 6, sx(t.number(i, cq3)) - sx(t.number(i, cq1)), 12, "#9ecae1", "#08306b");
    svg.line(sx(t.number(i, cmed)), y - 6, sx(t.number(i, cmed)), y + 6, "#d62728");
  }
  const double axis_y = top + row_h * static_cast<double>(t.rows.size()) + 8;
  svg.line(left, axis_y, left + width, axis_y);
  svg.text(left, axis_y + 14, fmt::format("{:.3g}", lo), 10, "middle");
  svg.text(left + width, axis_y + 14, fmt::format("{:.3g}", hi), 10, "middle");
  return svg.finish();
}

std::string render_rfe(const PlotSpec& spec) {
  const auto& t = spec.data;
  const auto cf = t.column("feature"), cr = t.column("rank");
  double worst = 1;
  for (std::size_t i = 0; i < t.rows.size(); ++i) worst = std::max(worst, t.number(i, cr));
  const int cols = 5;
  const double cw = 150, ch = 36, top = 40;
  const auto grid_rows = (t.rows.size() + cols - 1) / cols;
  Svg svg(cols * cw + 20, top + static_cast<double>(grid_rows) * ch + 30, spec.title);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double rank = t.number(i, cr);
    // rank 1 is darkest
    const double shade = worst > 1 ? 1.0 - (rank - 1) / (worst - 1) : 1.0;
    const double x = 10 + static_cast<double>(i % cols) * cw, y = top + static_cast<double>(i / cols) * ch;
    svg.rect(x, y, cw - 2, ch - 2, blue(0.15 + 0.85 * shade), "#ffffff");
    const auto fill = shade > 0.5 ? "#ffffff" : "#222222";
    svg.text(x + cw / 2, y + 14, t.rows[i][cf], 9, "middle", fill);
    svg.text(x + cw / 2, y + 27, "rank " + t.rows[i][cr], 10, "middle", fill);
  }
  return svg.finish();
}

std::string render_confusion(const PlotSpec& spec) {
  const auto& t = spec.data;
  const auto ca = t.column("actual"), cp = t.column("predicted"), cc = t.column("count");
  double peak = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) peak = std::max(peak, t.number(i, cc));
  const double cell = 120, left = 110, top = 60;
  Svg svg(left + 2 * cell + 30, top + 2 * cell + 50, spec.title);
  svg.text(left + cell, top - 12, "predicted", 12, "middle");
  svg.text(20, top + cell, "actual", 12, "start");
  for (int k = 0; k < 2; ++k) {
    svg.text(left + cell * (k + 0.5), top + 2 * cell + 18, std::to_string(k), 12, "middle");
    svg.text(left - 10, top + cell * (k + 0.5) + 4, std::to_string(k), 12, "end");
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double a = t.number(i, ca), p = t.number(i, cp), v = t.number(i, cc);
    const double shade = peak > 0 ? v / peak : 0.0;
    svg.rect(left + p * cell, top + a * cell, cell, cell, blue(shade), "#ffffff");
    svg.text(left + (p + 0.5) * cell, top + (a + 0.5) * cell + 6, t.rows[i][cc], 20, "middle",
             shade > 0.5 ? "#ffffff" : "#222222");
  }
  return svg.finish();
}

std::string render_roc(const PlotSpec& spec) {
  const auto& t = spec.data;
  const auto cx = t.column("fpr"), cy = t.column("tpr");
  const double left = 60, top = 40, size = 360;
  Svg svg(left + size + 30, top + size + 50, spec.title);
  auto sx = [&](double v) { return left + size * v; };
  auto sy = [&](double v) { return top + size * (1.0 - v); };
  svg.rect(left, top, size, size, "none", "#444444");
  svg.line(sx(0), sy(0), sx(1), sy(1), "#999999", "4 4");
  std::string pts;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    pts += fmt::format("{}{:.4f},{:.4f}", i ? " " : "", sx(t.number(i, cx)), sy(t.number(i, cy)));
  svg.raw(fmt::format("<polyline class=\"roc\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"{}\"/>\n",
                      pts));
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    svg.text(sx(v), sy(0) + 16, fmt::format("{:.2f}", v), 10, "middle");
    svg.text(sx(0) - 6, sy(v) + 4, fmt::format("{:.2f}", v), 10, "end");
  }
  svg.text(left + size / 2, top + size + 36, "false positive rate", 12, "middle");
  svg.text(left + 8, top + 16, "true positive rate", 12, "start");
  return svg.finish();
}

std::string render_bars(const PlotSpec& spec, std::size_t value_col, const std::vector<std::string>& labels) {
  const auto& t = spec.data;
  double peak = 0;
  bool any_negative = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    peak = std::max(peak, std::abs(t.number(i, value_col)));
    any_negative = any_negative || t.number(i, value_col) < 0;
  }
  if (peak <= 0) peak = 1;
  const double left = 260, width = 420, row_h = 20, top = 40;
  Svg svg(left + width + 90, top + row_h * static_cast<double>(t.rows.size()) + 30, spec.title);
  const double zero = any_negative ? left + width / 2 : left;
  const double scale = any_negative ? width / 2 / peak : width / peak;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double v = t.number(i, value_col);
    const double y = top + row_h * static_cast<double>(i);
    svg.text(left - 8, y + 14, labels[i], 10, "end");
    const double x = v >= 0 ? zero : zero + v * scale;
    svg.rect(x, y + 3, std::abs(v) * scale, row_h - 6, v >= 0 ? "#1f77b4" : "#d62728");
    svg.text(v >= 0 ? x + std::abs(v) * scale + 4 : zero + 4, y + 14, fmt::format("{:+.4f}", v), 9);
  }
  svg.line(zero, top, zero, top + row_h * static_cast<double>(t.rows.size()));
  return svg.finish();
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  switch (spec.kind) {
    case PlotKind::HistogramGrid:
      require_columns(spec, {"feature", "bin", "lower", "upper", "count"});
      return render_histograms(spec);
    case PlotKind::Boxplot:
      require_columns(spec, {"feature", "min", "q1", "median", "q3", "max"});
      return render_boxplot(spec);
    case PlotKind::RfeHeatmap:
      require_columns(spec, {"feature", "rank"});
      return render_rfe(spec);
    case PlotKind::ConfusionHeatmap:
      require_columns(spec, {"actual", "predicted", "count"});
      return render_confusion(spec);
    case PlotKind::Roc:
      require_columns(spec, {"fpr", "tpr"});
      return render_roc(spec);
    case PlotKind::ShapBar: {
      require_columns(spec, {"feature", "value"});
      const auto cf = spec.data.column("feature");
      std::vector<std::string> labels;
      for (const auto& r : spec.data.rows) labels.push_back(r[cf]);
      return render_bars(spec, spec.data.column("value"), labels);
    }
    case PlotKind::LimeReport: {
      require_columns(spec, {"feature", "value", "contribution"});
      const auto cf = spec.data.column("feature"), cv = spec.data.column("value");
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < spec.data.rows.size(); ++i)
        labels.push_back(spec.data.rows[i][cf] + " = " + fmt::format("{:.4g}", spec.data.number(i, cv)));
      return render_bars(spec, spec.data.column("contribution"), labels);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown plot kind");
}

PlotFiles emit_plot(const PlotSpec& spec) {
  PlotFiles files{spec.output, spec.output};
  files.csv.replace_extension(".csv");
  const auto svg = render_svg(spec);
  try {
    io::write_file_atomic(files.csv, spec.data.to_csv());
    io::write_file_atomic(files.svg, svg);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::IoError, e.what());
  }
  return files;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::EmptyColumn, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PlotTable histogram_table(const std::vector<std::string>& names, const Eigen::MatrixXd& x, int bins) {
  if (bins < 1) throw Error(ErrorKind::InvalidArgument, "bins must be >= 1");
  if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw Error(ErrorKind::LengthMismatch, "names vs columns");
  PlotTable t{{"feature", "bin", "lower", "upper", "count"}, {}};
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    // Missing (non-finite) cells are left out.
    std::vector<double> v;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (std::isfinite(x(i, j))) v.push_back(x(i, j));
    if (v.empty()) throw Error(ErrorKind::EmptyColumn, names[static_cast<std::size_t>(j)]);
    const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    const double w = hi > lo ? (hi - lo) / bins : 1.0;
    std::vector<long> counts(static_cast<std::size_t>(bins), 0);
    for (double value : v) {
      auto b = static_cast<long>(std::floor((value - lo) / w));
      counts[static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1))]++;
    }
    for (int b = 0; b < bins; ++b)
      t.rows.push_back({names[static_cast<std::size_t>(j)], std::to_string(b), num(lo + b * w),
                        num(b + 1 == bins ? std::max(hi, lo + w) : lo + (b + 1) * w),
                        std::to_string(counts[static_cast<std::size_t>(b)])});
  }
  return t;
}

PlotTable boxplot_table(const std::vector<std::string>& names, const Eigen::MatrixXd& x) {
  if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw Error(ErrorKind::LengthMismatch, "names vs columns");
  PlotTable t{{"feature", "min", "q1", "median", "q3", "max"}, {}};
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (std::isfinite(x(i, j))) v.push_back(x(i, j));
    t.rows.push_back({names[static_cast<std::size_t>(j)], num(quantile(v, 0.0)), num(quantile(v, 0.25)),
                      num(quantile(v, 0.5)), num(quantile(v, 0.75)), num(quantile(v, 1.0))});
  }
  return t;
}

PlotTable rfe_table(const std::vector<FeatureScore>& scores) {
  PlotTable t{{"feature", "rank", "score"}, {}};
  for (const auto& s : scores) t.rows.push_back({s.name, std::to_string(s.rank), num(s.score)});
  return t;
}

PlotTable confusion_table(const ConfusionMatrix& cm) {
  return {{"actual", "predicted", "count"},
          {{"0", "0", std::to_string(cm.tn)},
           {"0", "1", std::to_string(cm.fp)},
           {"1", "0", std::to_string(cm.fn)},
           {"1", "1", std::to_string(cm.tp)}}};
}

PlotTable roc_table(const RocCurve& curve) {
  PlotTable t{{"fpr", "tpr", "threshold"}, {}};
  for (const auto& p : curve.points) t.rows.push_back({num(p.fpr), num(p.tpr), num(p.threshold)});
  return t;
}

PlotTable shap_table(const std::vector<FeatureScore>& scores) {
  PlotTable t{{"feature", "value"}, {}};
  for (const auto& s : scores) t.rows.push_back({s.name, num(s.score)});
  return t;
}

PlotTable lime_table(const LimeExplanation& e, const Eigen::VectorXd& x) {
  std::vector<std::size_t> order = e.selected;
  const auto& phi = e.attribution.phi;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(phi(static_cast<Eigen::Index>(a))) > std::abs(phi(static_cast<Eigen::Index>(b)));
  });
  PlotTable t{{"feature", "value", "contribution"}, {}};
  for (auto j : order)
    t.rows.push_back({e.attribution.feature_names[j], num(x(static_cast<Eigen::Index>(j))),
                      num(phi(static_cast<Eigen::Index>(j)))});
  return t;
}

}  // namespace xai::plot
