#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "xai/explain.hpp"
#include "xai/featsel.hpp"
#include "xai/metrics.hpp"

namespace xai::plot {

enum class PlotKind { HistogramGrid, Boxplot, RfeHeatmap, ConfusionHeatmap, Roc, ShapBar, LimeReport };

std::string to_string(PlotKind k);

/// The plotted values. Written verbatim as the CSV, and the SVG is drawn from
/// these same strings, so the two cannot disagree.
struct PlotTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  std::size_t column(const std::string& name) const;  // throws InvalidArgument
  double number(std::size_t row, std::size_t col) const;
};

struct PlotSpec {
  PlotKind kind = PlotKind::ShapBar;
  std::string title;
  PlotTable data;
  std::filesystem::path output;  // .svg; the CSV goes next to it with a .csv extension
};

struct PlotFiles {
  std::filesystem::path svg;
  std::filesystem::path csv;
};

/// Validates the table columns for the plot kind and renders the SVG document.
std::string render_svg(const PlotSpec& spec);
/// Writes both files atomically. Throws IoError.
PlotFiles emit_plot(const PlotSpec& spec);

// Table builders, one per plot kind.

/// Columns: feature, bin, lower, upper, count. `bins` equal-width bins over
/// each column's [min, max]; the max lands in the last bin.
PlotTable histogram_table(const std::vector<std::string>& names, const Eigen::MatrixXd& x, int bins = 20);
/// Columns: feature, min, q1, median, q3, max. Quartiles interpolate linearly
/// between order statistics.
PlotTable boxplot_table(const std::vector<std::string>& names, const Eigen::MatrixXd& x);
/// Columns: feature, rank, score. Input order is kept.
PlotTable rfe_table(const std::vector<FeatureScore>& scores);
/// Columns: actual, predicted, count. Rows in (0,0), (0,1), (1,0), (1,1) order.
PlotTable confusion_table(const ConfusionMatrix& cm);
/// Columns: fpr, tpr, threshold.
PlotTable roc_table(const RocCurve& curve);
/// Columns: feature, value. Input order is kept.
PlotTable shap_table(const std::vector<FeatureScore>& scores);
/// Columns: feature, value, contribution. Selected features, largest |contribution| first.
PlotTable lime_table(const LimeExplanation& e, const Eigen::VectorXd& x);

/// Linear-interpolation quantile of a non-empty sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace xai::plot
