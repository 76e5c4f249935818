#include "xai/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "xai/error.hpp"
#include "xai/io.hpp"
#include "xai/rng.hpp"

namespace xai {

const std::vector<std::string>& wdbc_feature_names() {
  static const std::vector<std::string> names = [] {
    const char* base[] = {"radius",    "texture",   "perimeter",      "area",     "smoothness",
                          "compactness", "concavity", "concave points", "symmetry", "fractal_dimension"};
    std::vector<std::string> out;
    for (const char* suffix : {"mean", "se", "worst"})
      for (const char* b : base) out.push_back(std::string(b) + "_" + suffix);
    return out;
  }();
  return names;
}

Eigen::MatrixXd Dataset::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(width()));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < width(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = records[i].features[j];
  return m;
}

Eigen::VectorXd Dataset::label_vector() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = labels[i];
  return y;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.feature_names = feature_names;
  out.applied_plans = applied_plans;
  out.missing_per_column.assign(width(), 0);
  out.records.reserve(rows.size());
  for (auto r : rows) {
    if (r >= size()) throw Error(ErrorKind::InvalidArgument, "row index out of range");
    out.records.push_back(records[r]);
    if (!labels.empty()) out.labels.push_back(labels[r]);
  }
  return out;
}

Dataset Dataset::select_columns(const std::vector<std::string>& names) const {
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    auto it = std::find(feature_names.begin(), feature_names.end(), n);
    if (it == feature_names.end()) throw Error(ErrorKind::MissingColumn, n);
    cols.push_back(static_cast<std::size_t>(it - feature_names.begin()));
  }
  Dataset out;
  out.feature_names = names;
  out.labels = labels;
  out.applied_plans = applied_plans;
  out.missing_per_column.assign(names.size(), 0);
  out.records.reserve(size());
  for (const auto& r : records) {
    Record nr{r.id, {}, r.label};
    nr.features.reserve(cols.size());
    for (auto c : cols) nr.features.push_back(r.features[c]);
    out.records.push_back(std::move(nr));
  }
  return out;
}

void Dataset::assign(const Eigen::MatrixXd& values) {
  if (values.rows() != static_cast<Eigen::Index>(size()) || values.cols() != static_cast<Eigen::Index>(width()))
    throw Error(ErrorKind::ShapeMismatch, "assign: matrix shape differs from dataset");
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < width(); ++j)
      records[i].features[j] = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_missing_cell(const std::string& cell) {
  return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA" || cell == "?";
}

}  // namespace

Dataset parse_csv(const std::string& text, const LoadOptions& opts) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || trim(line).empty()) throw Error(ErrorKind::EmptyFile, "no header row");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = io::split_csv_line(line);
  for (auto& h : header) h = trim(h);
  // Trailing unnamed empty columns are an artefact of some distributions.
  while (!header.empty() && header.back().empty()) header.pop_back();

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::MissingColumn, name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = find_col("id");
  const std::size_t dx_col = find_col("diagnosis");
  const auto& names = wdbc_feature_names();
  std::vector<std::size_t> feat_cols;
  for (const auto& n : names) feat_cols.push_back(find_col(n));

  Dataset d;
  d.feature_names = names;
  d.missing_per_column.assign(names.size(), 0);

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = io::split_csv_line(line);
    while (cells.size() > header.size() && trim(cells.back()).empty()) cells.pop_back();
    if (cells.size() < header.size())
      throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " cells, got " +
                                             std::to_string(cells.size()));
    Record r;
    r.id = trim(cells[id_col]);
    auto dx = trim(cells[dx_col]);
    if (!dx.empty()) r.label = dx.size() == 1 ? dx[0] : '?';
    bool has_missing = false;
    r.features.reserve(feat_cols.size());
    for (std::size_t j = 0; j < feat_cols.size(); ++j) {
      auto cell = trim(cells[feat_cols[j]]);
      if (is_missing_cell(cell)) {
        ++d.missing_per_column[j];
        has_missing = true;
        r.features.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw Error(ErrorKind::ParseError,
                    "row " + std::to_string(line_no) + ", column " + header[feat_cols[j]] + ": '" + cell + "'");
      r.features.push_back(v);
    }
    if (has_missing && opts.drop_missing) {
      ++d.dropped_rows;
      continue;
    }
    d.records.push_back(std::move(r));
  }
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& opts) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::DataUnavailable, e.what());
  }
  if (text.empty()) throw Error(ErrorKind::EmptyFile, path.string());
  return parse_csv(text, opts);
}

Dataset encode_labels(Dataset d) {
  d.labels.clear();
  d.labels.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& lab = d.records[i].label;
    if (lab == 'M') {
      d.labels.push_back(1);
    } else if (lab == 'B') {
      d.labels.push_back(0);
    } else {
      throw Error(ErrorKind::UnknownLabel,
                  "'" + std::string(lab ? std::string(1, *lab) : std::string()) + "' at row " + std::to_string(i));
    }
  }
  return d;
}

char decode_label(int label) {
  if (label == 1) return 'M';
  if (label == 0) return 'B';
  throw Error(ErrorKind::UnknownLabel, std::to_string(label));
}

std::size_t MissingReport::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

MissingReport audit_missing(const Dataset& d) {
  MissingReport rep;
  rep.columns = d.feature_names;
  rep.counts.assign(d.width(), 0);
  for (const auto& r : d.records)
    for (std::size_t j = 0; j < d.width(); ++j)
      if (std::isnan(r.features[j])) ++rep.counts[j];
  // The loader's tally also covers rows it dropped.
  for (std::size_t j = 0; j < d.width() && j < d.missing_per_column.size(); ++j)
    rep.counts[j] = std::max(rep.counts[j], d.missing_per_column[j]);
  return rep;
}

SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::InvalidArgument, "split ratio must be in (0,1)");
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  if (n < 2 || n_test == 0 || n_test >= n)
    throw Error(ErrorKind::DegenerateSplit, "N=" + std::to_string(n) + " ratio=" + std::to_string(ratio));
  auto order = shuffled_indices(n, seed);
  SplitIndices s;
  s.seed = seed;
  s.ratio = ratio;
  s.test_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double ratio, std::uint64_t seed) {
  auto s = split_indices(d.size(), ratio, seed);
  return {d.subset(s.train_idx), d.subset(s.test_idx)};
}

std::size_t positives(const Dataset& d) {
  return static_cast<std::size_t>(std::count(d.labels.begin(), d.labels.end(), 1));
}

}  // namespace xai
