#include "xai/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "xai/checkpoint.hpp"
#include "xai/dataset.hpp"
#include "xai/error.hpp"
#include "xai/explain.hpp"
#include "xai/featsel.hpp"
#include "xai/io.hpp"
#include "xai/metrics.hpp"
#include "xai/plot.hpp"
#include "xai/preprocess.hpp"
#include "xai/rng.hpp"
#include "xai/tune.hpp"

namespace xai {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Preprocess: return "preprocess";
    case Stage::Select: return "select";
    case Stage::Tune: return "tune";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Explain: return "explain";
    case Stage::Report: return "report";
    case Stage::All: return "all";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (auto s : stage_order())
    if (to_string(s) == name) return s;
  if (name == "all") return Stage::All;
  throw Error(ErrorKind::ConfigError, "unknown stage '" + name + "'");
}

const std::vector<Stage>& stage_order() {
  static const std::vector<Stage> order = {Stage::Ingest, Stage::Preprocess, Stage::Select,  Stage::Tune,
                                           Stage::Train,  Stage::Evaluate,   Stage::Explain, Stage::Report};
  return order;
}

DerivedSeeds DerivedSeeds::from(std::uint64_t root) {
  DerivedSeeds s;
  s.root = root;
  s.split = derive_seed(root, "split");
  s.cv = derive_seed(root, "cv");
  s.random_search = derive_seed(root, "random_search");
  s.train = derive_seed(root, "train");
  s.background = derive_seed(root, "background");
  s.shap = derive_seed(root, "shap");
  s.lime = derive_seed(root, "lime");
  s.permutation = derive_seed(root, "permutation");
  return s;
}

json DerivedSeeds::to_json() const {
  return {{"root", root},         {"split", split},           {"cv", cv},
          {"random_search", random_search}, {"train", train}, {"background", background},
          {"shap", shap},         {"lime", lime},             {"permutation", permutation}};
}

json load_manifest(const fs::path& out) {
  const auto path = RunLayout{out}.manifest();
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MissingArtifact, "manifest is unreadable: " + std::string(e.what()));
  }
}

json comparable_manifest(json manifest) {
  manifest.erase("timing");
  return manifest;
}

int exit_code_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return 4;
  switch (err->kind()) {
    case ErrorKind::ConfigError: return 2;
    case ErrorKind::DataUnavailable:
    case ErrorKind::MissingColumn:
    case ErrorKind::ParseError:
    case ErrorKind::EmptyFile:
    case ErrorKind::UnknownLabel:
    case ErrorKind::DegenerateSplit:
    case ErrorKind::EmptyColumn:
    case ErrorKind::AllMissing:
    case ErrorKind::DegenerateRange:
    case ErrorKind::ZeroVariance:
    case ErrorKind::NonPositiveInput:
    case ErrorKind::NegativeInput: return 3;
    default: return 4;
  }
}

const std::vector<std::string>& plausible_top_features() {
  static const std::vector<std::string> names = {"perimeter_worst", "perimeter_mean", "texture_worst", "texture_mean",
                                                 "radius_worst"};
  return names;
}

namespace {

// Top-level manifest blocks owned by each stage; cleared when the stage or an
// upstream stage is re-run.
const std::map<Stage, std::vector<std::string>>& owned_blocks() {
  static const std::map<Stage, std::vector<std::string>> blocks = {
      {Stage::Ingest, {"dataset", "split"}},
      {Stage::Preprocess, {"preprocess"}},
      {Stage::Select, {"selected_features", "selection"}},
      {Stage::Tune, {"cv", "best_hyperparameters"}},
      {Stage::Train, {"training"}},
      {Stage::Evaluate, {"metrics", "classification_report"}},
      {Stage::Explain, {"explanations"}},
      {Stage::Report, {"report"}},
  };
  return blocks;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string fmt_hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, Eigen::Index n) { return x.topRows(std::min(n, x.rows())); }

class StageRun {
 public:
  StageRun(Stage stage, const RunConfig& cfg, const fs::path& root, json& manifest)
      : stage_(stage), cfg_(cfg), layout_{root}, manifest_(manifest), seeds_(DerivedSeeds::from(cfg.seed)) {}

  Stage stage() const { return stage_; }
  const RunConfig& cfg() const { return cfg_; }
  const RunLayout& layout() const { return layout_; }
  const DerivedSeeds& seeds() const { return seeds_; }
  json& manifest() { return manifest_; }
  json& record() { return manifest_["stages"][to_string(stage_)]; }

  /// Contents of an artifact produced by `producer`, after checking the
  /// producer completed and the file still has the digest it recorded.
  std::string input(const std::string& rel, Stage producer) {
    const auto pname = to_string(producer);
    const auto& stages = manifest_["stages"];
    if (!stages.contains(pname) || stages[pname].value("status", "") != "ok")
      throw Error(ErrorKind::MissingArtifact,
                  "stage '" + to_string(stage_) + "' needs '" + pname + "' to have completed first");
    const auto& outs = stages[pname]["outputs"];
    if (!outs.contains(rel))
      throw Error(ErrorKind::MissingArtifact, "stage '" + pname + "' did not record artifact " + rel);
    const auto path = layout_.root / rel;
    if (!fs::exists(path)) throw Error(ErrorKind::MissingArtifact, "artifact " + rel + " is missing");
    std::string bytes = io::read_file(path);
    if (io::digest(bytes) != outs[rel].get<std::string>())
      throw Error(ErrorKind::MissingArtifact, "artifact " + rel + " changed since stage '" + pname + "' wrote it");
    record()["inputs"][rel] = outs[rel];
    return bytes;
  }

  void output(const std::string& rel, const std::string& contents) {
    io::write_file_atomic(layout_.root / rel, contents);
    record()["outputs"][rel] = io::digest(contents);
  }

  /// Registers a file some other routine already wrote.
  void adopt(const std::string& rel) { record()["outputs"][rel] = io::digest_file(layout_.root / rel); }

  void plot(plot::PlotKind kind, const std::string& title, plot::PlotTable table, const std::string& name) {
    plot::PlotSpec spec{kind, title, std::move(table), layout_.plots() / (name + ".svg")};
    plot::emit_plot(spec);
    adopt("plots/" + name + ".svg");
    adopt("plots/" + name + ".csv");
  }

  /// The configured dataset, after checking it is the file ingest read.
  Dataset dataset() {
    Dataset d = encode_labels(load_csv(cfg_.data_path, LoadOptions{cfg_.drop_missing}));
    if (stage_ != Stage::Ingest) {
      if (!manifest_.contains("dataset")) throw Error(ErrorKind::MissingArtifact, "ingest has not run in this directory");
      const auto expected = manifest_["dataset"].value("digest", "");
      if (io::digest_file(cfg_.data_path) != expected)
        throw Error(ErrorKind::MissingArtifact, "dataset " + cfg_.data_path.string() + " changed since ingest");
    }
    return d;
  }

 private:
  Stage stage_;
  const RunConfig& cfg_;
  RunLayout layout_;
  json& manifest_;
  DerivedSeeds seeds_;
};

// Train/test views shared by the later stages.
struct Prepared {
  Dataset train_raw, test_raw;   // all feature columns, untransformed
  Dataset train_all, test_all;   // all feature columns, transformed
  std::vector<std::string> selected;
  Eigen::MatrixXd x_train, x_test;  // selected columns, transformed
  Eigen::VectorXd y_train, y_test;
  std::vector<int> labels_test;
  Eigen::MatrixXd raw_test_selected;
};

SplitIndices read_split(StageRun& run) {
  const auto lines = split_lines(run.input("tables/split.csv", Stage::Ingest));
  SplitIndices s;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != 4) throw Error(ErrorKind::MissingArtifact, "tables/split.csv is malformed");
    const auto row = static_cast<std::size_t>(std::stoull(f[0]));
    (f[2] == "test" ? s.test_idx : s.train_idx).push_back(row);
  }
  return s;
}

Prepared prepare(StageRun& run, bool with_selection) {
  Prepared p;
  const Dataset d = run.dataset();
  const auto split = read_split(run);
  p.train_raw = d.subset(split.train_idx);
  p.test_raw = d.subset(split.test_idx);
  const auto plan = PreprocessPlan::from_table(run.input("tables/preprocess_plan.txt", Stage::Preprocess));
  p.train_all = plan.apply(p.train_raw);
  p.test_all = plan.apply(p.test_raw);
  for (const auto* part : {&p.train_all, &p.test_all})
    if (!part->matrix().allFinite())
      throw Error(ErrorKind::ConfigError, "missing values remain after preprocessing; add impute to preprocess.steps");
  if (!with_selection) return p;
  for (const auto& line : split_lines(run.input("tables/selected_features.csv", Stage::Select))) p.selected.push_back(line);
  p.selected.erase(p.selected.begin());  // header
  const auto train = p.train_all.select_columns(p.selected);
  const auto test = p.test_all.select_columns(p.selected);
  p.x_train = train.matrix();
  p.x_test = test.matrix();
  p.y_train = train.label_vector();
  p.y_test = test.label_vector();
  p.labels_test = test.labels;
  p.raw_test_selected = p.test_raw.select_columns(p.selected).matrix();
  return p;
}

std::vector<PreprocessStep> plan_steps(const RunConfig& cfg) {
  std::vector<PreprocessStep> steps;
  for (auto kind : cfg.steps) {
    PreprocessStep s;
    s.kind = kind;
    s.strategy = cfg.impute_strategy;
    s.log_offset = cfg.log_offset;
    steps.push_back(s);
  }
  return steps;
}

std::string scores_csv(const std::vector<FeatureScore>& scores) {
  io::CsvWriter w({"feature", "score", "rank"});
  for (const auto& s : scores) w.row({s.name, io::format_double(s.score), std::to_string(s.rank)});
  return w.str();
}

// ---------------------------------------------------------------------------

void stage_ingest(StageRun& run) {
  const auto& cfg = run.cfg();
  const Dataset d = run.dataset();
  const auto missing = audit_missing(d);
  const auto split = split_indices(d.size(), cfg.split_ratio, run.seeds().split);

  io::CsvWriter sw({"row", "id", "set", "label"});
  std::vector<std::pair<std::size_t, bool>> rows;
  for (auto r : split.train_idx) rows.emplace_back(r, false);
  for (auto r : split.test_idx) rows.emplace_back(r, true);
  for (const auto& [r, test] : rows)
    sw.row({std::to_string(r), d.records[r].id, test ? "test" : "train", std::to_string(d.labels[r])});
  run.output("tables/split.csv", sw.str());

  io::CsvWriter mw({"feature", "missing"});
  for (std::size_t j = 0; j < missing.columns.size(); ++j)
    mw.row({missing.columns[j], std::to_string(missing.counts[j])});
  run.output("tables/missing.csv", mw.str());

  run.plot(plot::PlotKind::HistogramGrid, "Feature histograms", plot::histogram_table(d.feature_names, d.matrix()),
           "histograms");

  auto count_pos = [&](const std::vector<std::size_t>& idx) {
    return std::count_if(idx.begin(), idx.end(), [&](std::size_t r) { return d.labels[r] == 1; });
  };
  run.manifest()["dataset"] = {{"path", cfg.data_path.generic_string()},
                               {"digest", io::digest_file(cfg.data_path)},
                               {"rows", d.size()},
                               {"features", d.width()},
                               {"malignant", positives(d)},
                               {"benign", d.size() - positives(d)},
                               {"dropped_rows", d.dropped_rows},
                               {"missing_cells", missing.total()}};
  run.manifest()["split"] = {{"ratio", cfg.split_ratio},
                             {"train_rows", split.train_idx.size()},
                             {"test_rows", split.test_idx.size()},
                             {"train_malignant", count_pos(split.train_idx)},
                             {"test_malignant", count_pos(split.test_idx)}};
  spdlog::info("ingest: {} rows ({} malignant), {} train / {} test", d.size(), positives(d), split.train_idx.size(),
               split.test_idx.size());
}

void stage_preprocess(StageRun& run) {
  const Dataset d = run.dataset();
  const auto split = read_split(run);
  const auto train = d.subset(split.train_idx);
  const auto plan = fit_plan(train, plan_steps(run.cfg()));
  run.output("tables/preprocess_plan.txt", plan.to_table());
  const auto transformed = plan.apply(train);
  run.plot(plot::PlotKind::Boxplot, "Transformed training features",
           plot::boxplot_table(transformed.feature_names, transformed.matrix()), "boxplot");
  std::vector<std::string> steps;
  for (const auto& s : plan.steps()) steps.push_back(to_string(s.kind));
  run.manifest()["preprocess"] = {{"steps", steps},
                                  {"fingerprint", fmt_hex(plan.fingerprint())},
                                  {"fitted_rows", train.size()}};
}

void stage_select(StageRun& run) {
  const auto& cfg = run.cfg();
  auto p = prepare(run, false);
  if (cfg.n_features > p.train_all.width())
    throw Error(ErrorKind::ConfigError, "select.n_features exceeds the feature count");

  const auto ranking = rfe(p.train_all, cfg.n_features);
  run.output("tables/rfe.csv", scores_csv(ranking));
  run.plot(plot::PlotKind::RfeHeatmap, "RFE ranks (1 = kept)", plot::rfe_table(ranking), "rfe_heatmap");

  // chi2 needs non-negative inputs, so it sees a min-max rescaled copy of the raw features.
  const auto unit = fit_plan(p.train_raw, {PreprocessStep{TransformKind::MinMax, {}, {}, 1.0}}).apply(p.train_raw);
  const auto chi2 = chi2_select(unit, cfg.n_features);
  run.output("tables/chi2.csv", scores_csv(chi2.scores));

  const auto pca = pca_fit(p.train_all.matrix());
  io::CsvWriter pw({"component", "explained_variance", "explained_variance_ratio", "cumulative_ratio"});
  double cumulative = 0.0;
  Eigen::Index for95 = 0;
  for (Eigen::Index k = 0; k < pca.explained_variance.size(); ++k) {
    cumulative += pca.explained_variance_ratio(k);
    if (for95 == 0 && cumulative >= 0.95) for95 = k + 1;
    pw.row({std::to_string(k + 1), io::format_double(pca.explained_variance(k)),
            io::format_double(pca.explained_variance_ratio(k)), io::format_double(cumulative)});
  }
  run.output("tables/pca.csv", pw.str());

  std::vector<std::string> selected;
  if (cfg.select_method == SelectMethod::Rfe) {
    for (const auto& name : p.train_all.feature_names)
      for (const auto& s : ranking)
        if (s.name == name && s.rank == 1) selected.push_back(name);
  } else {
    selected = chi2.selected;
  }
  io::CsvWriter fw({"feature"});
  for (const auto& f : selected) fw.row({f});
  run.output("tables/selected_features.csv", fw.str());

  std::vector<std::string> eliminated;
  for (const auto& s : ranking)
    if (s.rank != 1) eliminated.push_back(s.name);
  run.manifest()["selected_features"] = selected;
  run.manifest()["selection"] = {{"method", to_string(cfg.select_method)},
                                 {"n_features", cfg.n_features},
                                 {"rfe_rank1", std::count_if(ranking.begin(), ranking.end(),
                                                             [](const FeatureScore& s) { return s.rank == 1; })},
                                 {"rfe_eliminated", eliminated},
                                 {"chi2_selected", chi2.selected},
                                 {"pca_components_for_95pct", for95}};
  spdlog::info("select: kept {} of {} features", selected.size(), p.train_all.width());
}

std::string search_csv(const std::vector<CvResult>& results, std::size_t folds) {
  std::vector<std::string> header = {"rank"};
  if (!results.empty())
    for (const auto& [name, value] : results.front().params.fields()) header.push_back(name);
  for (std::size_t f = 0; f < folds; ++f) header.push_back("fold" + std::to_string(f + 1));
  header.push_back("mean");
  header.push_back("std");
  io::CsvWriter w(header);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::vector<std::string> row = {std::to_string(i + 1)};
    for (const auto& [name, value] : r.params.fields()) row.push_back(value);
    for (std::size_t f = 0; f < folds; ++f)
      row.push_back(r.failed || f >= r.fold_scores.size() ? "" : io::format_double(r.fold_scores[f]));
    row.push_back(r.failed ? "failed" : io::format_double(r.mean));
    row.push_back(r.failed ? r.error : io::format_double(r.std));
    w.row(row);
  }
  return w.str();
}

json cv_json(const CvResult& r) {
  return {{"params", r.params.key()}, {"mean", r.mean}, {"std", r.std}, {"fold_scores", r.fold_scores}};
}

void stage_tune(StageRun& run) {
  const auto& cfg = run.cfg();
  auto p = prepare(run, true);
  CvOptions opts;
  opts.folds = cfg.folds;
  opts.seed = run.seeds().cv;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.dense_units = cfg.dense_units;
  opts.threads = cfg.threads;

  io::CsvWriter best_w({"model", "params", "mean", "std"});
  json cv = json::object();
  for (auto kind : cfg.tune_models) {
    const auto& space = kind == ModelKind::Mlp ? cfg.mlp_grid : cfg.cnn_grid;
    const auto name = to_string(kind);
    CvCache cache;
    std::vector<CvResult> results;
    if (cfg.search == SearchMethod::Grid) {
      results = grid_search(p.x_train, p.y_train, space, opts, &cache);
    } else {
      results = random_search(p.x_train, p.y_train, space, cfg.n_iter, run.seeds().random_search, opts, &cache);
    }
    const auto failed = std::count_if(results.begin(), results.end(), [](const CvResult& r) { return r.failed; });
    if (results.empty() || results.front().failed)
      throw Error(ErrorKind::InvalidArgument, "every " + name + " candidate failed");
    run.output("tables/search_" + name + ".csv", search_csv(results, cfg.folds));
    json block = {{"search", to_string(cfg.search)},
                  {"candidates", results.size()},
                  {"failed", failed},
                  {"best", cv_json(results.front())}};
    if (cfg.search == SearchMethod::Grid) {
      block["grid_size"] = space.size();
      if (cfg.random_check) {
        // Shares the cache, so candidates the grid already scored cost nothing.
        const auto rs = random_search(p.x_train, p.y_train, space, cfg.n_iter, run.seeds().random_search, opts, &cache);
        run.output("tables/random_" + name + ".csv", search_csv(rs, cfg.folds));
        block["random_check"] = {{"n_iter", cfg.n_iter},
                                 {"candidates", rs.size()},
                                 {"best", cv_json(rs.front())},
                                 {"gap_to_grid", results.front().mean - rs.front().mean}};
      }
    }
    cv[name] = block;
    best_w.row({name, results.front().params.key(), io::format_double(results.front().mean),
                io::format_double(results.front().std)});
    spdlog::info("tune: best {} {} mean={:.4f} std={:.4f} ({} candidates)", name, results.front().params.key(),
                 results.front().mean, results.front().std, results.size());
  }
  run.output("tables/best_params.csv", best_w.str());
  run.manifest()["cv"] = cv;
  run.manifest()["best_hyperparameters"] = cv[to_string(cfg.final_model)]["best"]["params"];
}

HyperParams best_params_for(StageRun& run, ModelKind kind) {
  const auto lines = split_lines(run.input("tables/best_params.csv", Stage::Tune));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() >= 2 && f[0] == to_string(kind)) return parse_hyperparams(f[1]);
  }
  throw Error(ErrorKind::MissingArtifact, "tables/best_params.csv has no " + to_string(kind) + " entry");
}

void stage_train(StageRun& run) {
  const auto& cfg = run.cfg();
  auto p = prepare(run, true);
  const auto params = best_params_for(run, cfg.final_model);
  const std::string ckpt = "checkpoints/" + to_string(cfg.final_model) + ".ltck";

  TrainFinalOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.dense_units = cfg.dense_units;
  opts.validation_fraction = cfg.validation_fraction;
  opts.early_stop = cfg.early_stop;
  opts.seed = run.seeds().train;
  opts.checkpoint_path = run.layout().root / ckpt;
  const auto result = train_final(p.x_train, p.y_train, params, opts);
  run.adopt(ckpt);

  io::CsvWriter hw({"epoch", "train_loss", "validation_accuracy", "checkpointed"});
  for (const auto& e : result.history)
    hw.row({std::to_string(e.epoch), io::format_double(e.train_loss), io::format_double(e.monitored),
            e.checkpointed ? "1" : "0"});
  run.output("tables/history.csv", hw.str());

  run.manifest()["training"] = {{"model", to_string(cfg.final_model)},
                                {"params", params.key()},
                                {"checkpoint", ckpt},
                                {"parameter_count", result.network.parameter_count()},
                                {"dense_units", cfg.dense_units},
                                {"epochs_run", result.history.size()},
                                {"best_epoch", result.best_epoch},
                                {"best_validation_accuracy", result.best_monitored},
                                {"validation_rows", result.validation_rows.size()},
                                {"stopped_early", result.stopped_early}};
  spdlog::info("train: {} best epoch {} validation accuracy {:.4f}", params.key(), result.best_epoch,
               result.best_monitored);
}

nn::Network load_trained(StageRun& run) {
  const auto& training = run.manifest()["training"];
  if (!training.contains("checkpoint"))
    throw Error(ErrorKind::MissingArtifact, "stage '" + to_string(run.stage()) + "' needs 'train' to have completed first");
  const auto rel = training["checkpoint"].get<std::string>();
  return decode_checkpoint(run.input(rel, Stage::Train)).network;
}

json row_json(const ClassRow& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"support", r.support}};
}

void stage_evaluate(StageRun& run) {
  auto p = prepare(run, true);
  const auto net = load_trained(run);
  const Eigen::VectorXd proba = net.predict_proba(p.x_test);
  const auto pred = threshold_predictions(proba, 0.5);
  const auto cm = confusion(p.labels_test, pred);
  const auto m = precision_recall_f1_accuracy(cm);
  const auto roc = roc_curve(p.labels_test, proba);
  const auto report = classification_report(p.labels_test, pred);

  io::CsvWriter pw({"id", "label", "probability", "predicted"});
  for (std::size_t i = 0; i < pred.size(); ++i)
    pw.row({p.test_raw.records[i].id, std::to_string(p.labels_test[i]),
            io::format_double(proba(static_cast<Eigen::Index>(i))), std::to_string(pred[i])});
  run.output("tables/test_predictions.csv", pw.str());

  io::CsvWriter mw({"metric", "value"});
  mw.row({"accuracy", io::format_double(m.accuracy)});
  mw.row({"precision", io::format_double(m.precision)});
  mw.row({"recall", io::format_double(m.recall)});
  mw.row({"f1", io::format_double(m.f1)});
  mw.row({"roc_auc", io::format_double(roc.auc)});
  run.output("tables/metrics.csv", mw.str());
  run.output("tables/classification_report.txt", report.render());
  run.output("tables/classification_report.csv", report.to_csv());
  run.plot(plot::PlotKind::ConfusionHeatmap, "Confusion matrix (test)", plot::confusion_table(cm), "confusion");
  run.plot(plot::PlotKind::Roc, "ROC curve (test), AUC = " + fixed(roc.auc), plot::roc_table(roc), "roc");

  run.manifest()["metrics"] = {{"accuracy", m.accuracy},
                               {"precision", m.precision},
                               {"recall", m.recall},
                               {"f1", m.f1},
                               {"roc_auc", roc.auc},
                               {"threshold", 0.5},
                               {"confusion", {{"tn", cm.tn}, {"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}}}};
  run.manifest()["classification_report"] = {{"benign", row_json(report.classes[0])},
                                             {"malignant", row_json(report.classes[1])},
                                             {"macro", row_json(report.macro)},
                                             {"weighted", row_json(report.weighted)},
                                             {"accuracy", report.accuracy}};
  spdlog::info("evaluate: accuracy {:.4f} precision {:.4f} recall {:.4f} auc {:.4f}", m.accuracy, m.precision,
               m.recall, roc.auc);
}

void stage_explain(StageRun& run) {
  const auto& cfg = run.cfg();
  auto p = prepare(run, true);
  const auto net = load_trained(run);
  const auto model = net.as_model();
  const auto& names = p.selected;
  const auto bg = BackgroundSet::sample(p.x_train, cfg.background, run.seeds().background);

  // Global mean |SHAP| over the first test rows.
  const auto sample = rows_of(p.x_test, static_cast<Eigen::Index>(cfg.shap_instances));
  std::vector<std::size_t> players;
  for (const auto& f : cfg.exact_features) {
    auto it = std::find(names.begin(), names.end(), f);
    if (it == names.end()) throw Error(ErrorKind::ConfigError, "explain.exact_features: '" + f + "' is not a selected feature");
    players.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  std::vector<Attribution> per_instance;
  const auto global = global_mean_abs_shap(model, sample, bg, cfg.shap_method, run.seeds().shap, names,
                                           cfg.n_coalitions, &per_instance, players);
  const auto method = std::string(cfg.shap_method == ShapMethod::Kernel ? "kernel" : "exact");
  run.output("tables/shap_global.csv", scores_csv(global));
  run.plot(plot::PlotKind::ShapBar, "Mean |SHAP| (" + method + ", P(malignant))", plot::shap_table(global), "shap_bar");

  std::vector<std::string> header = {"id"};
  header.insert(header.end(), names.begin(), names.end());
  header.push_back("base_value");
  header.push_back("predicted");
  io::CsvWriter iw(header);
  double worst_efficiency = 0.0;
  for (std::size_t i = 0; i < per_instance.size(); ++i) {
    const auto& a = per_instance[i];
    std::vector<std::string> row = {p.test_raw.records[i].id};
    for (Eigen::Index j = 0; j < a.phi.size(); ++j) row.push_back(io::format_double(a.phi(j)));
    row.push_back(io::format_double(a.base_value));
    row.push_back(io::format_double(a.predicted));
    iw.row(row);
    worst_efficiency = std::max(worst_efficiency, std::abs(a.phi.sum() - (a.predicted - a.base_value)));
  }
  run.output("tables/shap_instances.csv", iw.str());

  // LIME reports, in standardized units with raw values shown for reading.
  Eigen::VectorXd scales(p.x_train.cols());
  for (Eigen::Index j = 0; j < p.x_train.cols(); ++j) {
    const double sd = std::sqrt((p.x_train.col(j).array() - p.x_train.col(j).mean()).square().mean());
    scales(j) = sd > 0.0 ? sd : 1.0;
  }
  json lime = json::array();
  const auto n_lime = std::min<std::size_t>(cfg.lime_instances, static_cast<std::size_t>(p.x_test.rows()));
  for (std::size_t i = 0; i < n_lime; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = p.x_test.row(r).transpose();
    const Eigen::VectorXd raw = p.raw_test_selected.row(r).transpose();
    const auto e = lime_explain(model, x, scales, cfg.lime, derive_seed(run.seeds().lime, i), names);
    const auto id = p.test_raw.records[i].id;
    run.output("tables/lime_" + id + ".txt", "id: " + id + " (actual " + std::string(1, decode_label(p.labels_test[i])) +
                                                  ")\n" + lime_report(e, raw));
    run.plot(plot::PlotKind::LimeReport, "LIME, test id " + id, plot::lime_table(e, raw), "lime_" + id);
    lime.push_back({{"id", id}, {"predicted", e.attribution.predicted}, {"fidelity_r2", e.fidelity_r2}});
  }

  const auto perm = permutation_importance(model, p.x_test, p.labels_test, accuracy_score, cfg.permutation_repeats,
                                           run.seeds().permutation, names);
  run.output("tables/permutation_importance.csv", scores_csv(perm));
  run.plot(plot::PlotKind::ShapBar, "Permutation importance (accuracy drop)", plot::shap_table(perm),
           "permutation_importance");

  json top = json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(5, global.size()); ++k)
    top.push_back({{"feature", global[k].name}, {"mean_abs_shap", global[k].score}});
  bool plausible = false;
  for (std::size_t k = 0; k < std::min<std::size_t>(3, global.size()); ++k)
    plausible = plausible || std::count(plausible_top_features().begin(), plausible_top_features().end(), global[k].name);
  run.manifest()["explanations"] = {{"shap_method", method},
                                    {"shap_instances", sample.rows()},
                                    {"background_rows", bg.rows.rows()},
                                    {"n_coalitions", cfg.n_coalitions},
                                    {"shap_top", top},
                                    {"max_efficiency_gap", worst_efficiency},
                                    {"plausible_top3", plausible},
                                    {"lime", lime},
                                    {"permutation_top", perm.empty() ? "" : perm.front().name}};
  if (!plausible)
    spdlog::warn("explain: none of the expected features ranks in the mean |SHAP| top 3; see tables/report.txt");
}

void stage_report(StageRun& run) {
  run.input("tables/metrics.csv", Stage::Evaluate);
  const auto report_text = run.input("tables/classification_report.txt", Stage::Evaluate);
  run.input("tables/shap_global.csv", Stage::Explain);
  const auto& m = run.manifest();

  std::ostringstream os;
  os << "Run summary\n===========\n\n";
  os << "Dataset: " << m["dataset"]["rows"].get<std::size_t>() << " rows, "
     << m["split"]["train_rows"].get<std::size_t>() << " train / " << m["split"]["test_rows"].get<std::size_t>()
     << " test\n";
  os << "Selected features (" << m["selected_features"].size() << "): ";
  for (std::size_t i = 0; i < m["selected_features"].size(); ++i)
    os << (i ? ", " : "") << m["selected_features"][i].get<std::string>();
  os << "\n\nCross-validation (" << run.cfg().folds << "-fold mean accuracy)\n";
  for (const auto& [kind, block] : m["cv"].items())
    os << "  " << kind << ": " << fixed(block["best"]["mean"].get<double>()) << " +/- "
       << fixed(block["best"]["std"].get<double>()) << "  " << block["best"]["params"].get<std::string>() << "\n";
  os << "\nFinal model: " << m["training"]["params"].get<std::string>() << "\n";
  os << "\nTest metrics\n";
  for (const char* k : {"accuracy", "precision", "recall", "f1", "roc_auc"})
    os << "  " << std::left << std::setw(10) << k << fixed(m["metrics"][k].get<double>()) << "\n";
  const auto& cm = m["metrics"]["confusion"];
  os << "  confusion tn=" << cm["tn"] << " fp=" << cm["fp"] << " fn=" << cm["fn"] << " tp=" << cm["tp"] << "\n";
  os << "\nClassification report\n" << report_text;
  os << "\nMean |SHAP| top features (probability scale)\n";
  for (const auto& t : m["explanations"]["shap_top"])
    os << "  " << std::left << std::setw(26) << t["feature"].get<std::string>() << fixed(t["mean_abs_shap"].get<double>())
       << "\n";
  const bool plausible = m["explanations"]["plausible_top3"].get<bool>();
  std::string warning;
  if (!plausible) {
    warning = "WARNING: none of {";
    for (std::size_t i = 0; i < plausible_top_features().size(); ++i)
      warning += (i ? ", " : "") + plausible_top_features()[i];
    warning += "} is in the mean |SHAP| top 3. Review the attribution plots manually.\n";
    os << "\n" << warning;
  }
  run.output("tables/report.txt", os.str());
  run.manifest()["report"] = {{"plausibility", plausible ? "ok" : "warning"}};
}

void run_one(Stage stage, const RunConfig& cfg, const fs::path& out, json& manifest) {
  const auto name = to_string(stage);
  const auto t0 = std::chrono::steady_clock::now();
  // Re-running a stage invalidates it and everything downstream.
  bool downstream = false;
  for (auto s : stage_order()) {
    downstream = downstream || s == stage;
    if (!downstream) continue;
    if (manifest.contains("stages")) manifest["stages"].erase(to_string(s));
    for (const auto& key : owned_blocks().at(s)) manifest.erase(key);
  }
  manifest["format"] = 1;
  manifest["config"] = json::object();
  for (const auto& [k, v] : cfg.entries()) manifest["config"][k] = v;
  manifest["config_hash"] = cfg.hash();
  manifest["seeds"] = DerivedSeeds::from(cfg.seed).to_json();
  manifest["stages"][name] = {{"status", "running"}, {"config_hash", cfg.hash()}, {"inputs", json::object()},
                              {"outputs", json::object()}};

  StageRun run(stage, cfg, out, manifest);
  auto finish = [&](const std::string& status) {
    manifest["stages"][name]["status"] = status;
    manifest["timing"][name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["timing"]["updated_at"] = utc_now();
    json artifacts = json::object();
    for (const auto& [sname, rec] : manifest["stages"].items())
      for (const auto& [rel, digest] : rec["outputs"].items()) artifacts[rel] = digest;
    manifest["artifacts"] = artifacts;
    io::write_file_atomic(RunLayout{out}.manifest(), manifest.dump(2) + "\n");
  };
  spdlog::info("stage {} started", name);
  try {
    const auto& stages = manifest["stages"];
    for (auto s : stage_order()) {
      if (s == stage) break;
      const auto it = stages.find(to_string(s));
      if (it == stages.end() || it->value("status", "") != "ok")
        throw Error(ErrorKind::MissingArtifact, "stage '" + name + "' needs '" + to_string(s) + "' to have completed first");
    }
    switch (stage) {
      case Stage::Ingest: stage_ingest(run); break;
      case Stage::Preprocess: stage_preprocess(run); break;
      case Stage::Select: stage_select(run); break;
      case Stage::Tune: stage_tune(run); break;
      case Stage::Train: stage_train(run); break;
      case Stage::Evaluate: stage_evaluate(run); break;
      case Stage::Explain: stage_explain(run); break;
      case Stage::Report: stage_report(run); break;
      case Stage::All: break;
    }
  } catch (const std::exception& e) {
    manifest["stages"][name]["error"] = e.what();
    finish("failed");
    throw;
  }
  finish("ok");
  spdlog::info("stage {} done", name);
}

}  // namespace

void run(Stage stage, const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  if (stage == Stage::All) {
    json manifest = json::object();
    for (auto s : stage_order()) run_one(s, cfg, out, manifest);
    return;
  }
  json manifest = load_manifest(out);
  run_one(stage, cfg, out, manifest);
}

}  // namespace xai
