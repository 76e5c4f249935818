#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "xai/config.hpp"
#include "xai/dataset.hpp"
#include "xai/io.hpp"
#include "xai/pipeline.hpp"
#include "xai/plot.hpp"

using namespace xai;
namespace fs = std::filesystem;

namespace {

boost::property_tree::ptree parse_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(in, tree);
  return tree;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

// A configuration small enough to run every stage in a few seconds.
std::string tiny_config() {
  return "[data]\npath = " + test::wdbc_path().string() +
         "\n[run]\nthreads = 1\n"
         "[select]\nn_features = 8\n"
         "[tune]\nfolds = 2\nn_iter = 2\ndense_units = 4\n"
         "mlp_activations = tanh\nmlp_dropouts = 0.1\nmlp_hidden_layer_sizes = 8\nmlp_optimizers = adam\n"
         "cnn_activations = relu\ncnn_dropouts = 0.1\ncnn_filters = 4\ncnn_kernel_sizes = 3,5\n"
         "cnn_pool_sizes = 2\ncnn_optimizers = adam\n"
         "[train]\nepochs = 2\n"
         "[explain]\nbackground = 10\nn_coalitions = 64\nshap_instances = 2\nlime_instances = 1\n"
         "lime_samples = 200\npermutation_repeats = 1\n";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(XAI_BINARY_DIR) + "/xai --quiet " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("configuration defaults and parsing") {
  const RunConfig d;
  CHECK(d.epochs == 10);
  CHECK(d.batch_size == 32);
  CHECK(d.seed == 42);
  CHECK(d.split_ratio == 0.2);
  CHECK(d.folds == 5);
  CHECK(d.n_features == 27);
  CHECK(d.early_stop.min_delta == 0.01);
  CHECK(d.early_stop.patience == 30);
  CHECK_NOTHROW(d.validate());

  const auto c = parse_config("# comment\n[run]\nseed = 7\n[train]\nepochs = 3\nmodel = mlp\n"
                              "[tune]\ncnn_filters = 8, 16\n");
  CHECK(c.seed == 7);
  CHECK(c.epochs == 3);
  CHECK(c.final_model == ModelKind::Mlp);
  CHECK(c.cnn_grid.filters == std::vector<int>{8, 16});
  CHECK(c.batch_size == 32);
  CHECK(parse_config("").hash() == d.hash());
  CHECK(c.hash() != d.hash());

  const auto back = parse_config(c.canonical());
  CHECK(back.canonical() == c.canonical());

  CHECK_ERROR_KIND(parse_config("[run]\nsede = 7\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(parse_config("[nope]\nseed = 7\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(parse_config("seed = 7\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(parse_config("[run]\nseed = x\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(parse_config("[data]\nsplit_ratio = 1.5\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(parse_config("[tune]\nmlp_dropouts =\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(parse_config("[train]\nmodel = svm\n"), ErrorKind::ConfigError);
  CHECK_ERROR_KIND(load_config("/nonexistent/xai.ini"), ErrorKind::ConfigError);
}

TEST_CASE("stage names") {
  for (auto s : stage_order()) CHECK(parse_stage(to_string(s)) == s);
  CHECK(parse_stage("all") == Stage::All);
  CHECK(stage_order().size() == 8);
  CHECK_ERROR_KIND(parse_stage("deploy"), ErrorKind::ConfigError);
  const auto a = DerivedSeeds::from(42), b = DerivedSeeds::from(42);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.split != a.cv);
  CHECK(a.split == derive_seed(42, "split"));
}

TEST_CASE("quantiles") {
  CHECK(plot::quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(plot::quantile({1, 2, 3, 4}, 0.25) == 1.75);
  CHECK(plot::quantile({5}, 0.9) == 5);
  CHECK(plot::quantile({3, 1, 2}, 0.0) == 1);
  CHECK(plot::quantile({3, 1, 2}, 1.0) == 3);
}

TEST_CASE("confusion heatmap") {
  ConfusionMatrix cm;
  cm.tn = 71, cm.tp = 36, cm.fp = 0, cm.fn = 7;
  const auto t = plot::confusion_table(cm);
  CHECK(t.header == std::vector<std::string>{"actual", "predicted", "count"});
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0] == std::vector<std::string>{"0", "0", "71"});
  CHECK(t.rows[1] == std::vector<std::string>{"0", "1", "0"});
  CHECK(t.rows[2] == std::vector<std::string>{"1", "0", "7"});
  CHECK(t.rows[3] == std::vector<std::string>{"1", "1", "36"});

  const auto dir = test::scratch("plots");
  const auto files = plot::emit_plot({plot::PlotKind::ConfusionHeatmap, "Confusion", t, dir / "cm.svg"});
  const auto svg = io::read_file(files.svg);
  CHECK_NOTHROW(parse_xml(svg));
  CHECK(files.csv == dir / "cm.csv");
  CHECK(io::read_file(files.csv) == t.to_csv());
  CHECK(count(svg, "width=\"120.00\" height=\"120.00\"") == 4);  // the 2x2 grid
  for (const char* v : {">71<", ">36<", ">7<", ">0<"}) CHECK(svg.find(v) != std::string::npos);
}

TEST_CASE("roc of a perfect classifier") {
  Eigen::VectorXd s(4);
  s << 0.1, 0.2, 0.8, 0.9;
  const auto curve = roc_curve({0, 0, 1, 1}, s);
  const auto svg = plot::render_svg({plot::PlotKind::Roc, "ROC", plot::roc_table(curve), "roc.svg"});
  const auto tree = parse_xml(svg);
  std::string points;
  for (const auto& [tag, node] : tree.get_child("svg"))
    if (tag == "polyline" && node.get<std::string>("<xmlattr>.class", "") == "roc")
      points = node.get<std::string>("<xmlattr>.points");
  REQUIRE_FALSE(points.empty());
  // plot area spans x 60..420 and y 400..40
  std::vector<std::pair<double, double>> xy;
  std::istringstream in(points);
  std::string pair;
  while (in >> pair) {
    const auto comma = pair.find(',');
    xy.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
  }
  // up the left edge to the top-left corner, then along the top
  REQUIRE(xy.size() >= 3);
  CHECK(xy.front() == std::pair<double, double>{60, 400});
  CHECK(xy.back() == std::pair<double, double>{420, 40});
  CHECK(std::find(xy.begin(), xy.end(), std::pair<double, double>{60, 40}) != xy.end());
  for (const auto& [px, py] : xy) CHECK((px == 60 || py == 40));
}

TEST_CASE("histogram grid on WDBC") {
  const auto d = load_csv(test::wdbc_path());
  const auto t = plot::histogram_table(d.feature_names, d.matrix());
  CHECK(t.rows.size() == 30 * 20);
  const auto dir = test::scratch("hist");
  const auto files = plot::emit_plot({plot::PlotKind::HistogramGrid, "Histograms", t, dir / "h.svg"});
  const auto svg = io::read_file(files.svg);
  CHECK_NOTHROW(parse_xml(svg));
  CHECK(count(svg, "<g class=\"panel\"") == 30);
  for (std::size_t f = 0; f < 30; ++f) {
    double total = 0;
    for (std::size_t b = 0; b < 20; ++b) total += t.number(f * 20 + b, t.column("count"));
    CHECK(total == 569);
  }
  CHECK_ERROR_KIND(t.column("nope"), ErrorKind::InvalidArgument);
}

TEST_CASE("every plot kind renders well-formed SVG") {
  Rng rng(1);
  const std::vector<std::string> names{"a<b", "c&d", "e\"f"};
  const auto x = test::random_matrix(rng, 30, 3);
  std::vector<FeatureScore> scores{{"a<b", 0.5, 1}, {"c&d", -0.2, 2}, {"e\"f", 0.1, 3}};
  LimeExplanation lime;
  lime.attribution.feature_names = names;
  lime.attribution.phi = Eigen::Vector3d(0.3, -0.4, 0.0);
  lime.selected = {0, 1};
  const auto lt = plot::lime_table(lime, Eigen::Vector3d(1, 2, 3));
  CHECK(lt.rows[0][0] == "c&d");

  const std::vector<std::pair<plot::PlotKind, plot::PlotTable>> cases{
      {plot::PlotKind::HistogramGrid, plot::histogram_table(names, x, 5)},
      {plot::PlotKind::Boxplot, plot::boxplot_table(names, x)},
      {plot::PlotKind::RfeHeatmap, plot::rfe_table(scores)},
      {plot::PlotKind::ShapBar, plot::shap_table(scores)},
      {plot::PlotKind::LimeReport, lt},
  };
  const auto dir = test::scratch("kinds");
  for (const auto& [kind, table] : cases) {
    const auto files = plot::emit_plot({kind, "t <&>", table, dir / (plot::to_string(kind) + ".svg")});
    CHECK_NOTHROW(parse_xml(io::read_file(files.svg)));
    CHECK(io::read_file(files.csv) == table.to_csv());
  }
  const auto bad = plot::emit_plot;
  CHECK_ERROR_KIND(bad({plot::PlotKind::ShapBar, "x", plot::shap_table(scores), "/proc/forbidden/x.svg"}),
                   ErrorKind::IoError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(ErrorKind::ConfigError, "")) == 2);
  for (auto k : {ErrorKind::DataUnavailable, ErrorKind::MissingColumn, ErrorKind::ParseError, ErrorKind::EmptyFile,
                 ErrorKind::DegenerateSplit})
    CHECK(exit_code_for(Error(k, "")) == 3);
  CHECK(exit_code_for(Error(ErrorKind::MissingArtifact, "")) == 4);
  CHECK(exit_code_for(Error(ErrorKind::SingularSystem, "")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 4);
}

TEST_CASE("pipeline stages") {
  const auto cfg = parse_config(tiny_config());
  const auto out = test::scratch("pipeline");

  CHECK_ERROR_KIND(run(Stage::Evaluate, cfg, out), ErrorKind::MissingArtifact);
  CHECK(load_manifest(out)["stages"]["evaluate"]["status"] == "failed");

  for (auto s : stage_order()) REQUIRE_NOTHROW(run(s, cfg, out));
  const auto m = load_manifest(out);
  for (auto s : stage_order()) CHECK(m["stages"][to_string(s)]["status"] == "ok");
  for (const char* k : {"accuracy", "precision", "recall", "f1", "roc_auc"}) CHECK(m["metrics"].contains(k));
  CHECK(m["selected_features"].size() == 8);
  CHECK(m["cv"]["cnn"]["grid_size"] == 2);
  CHECK(fs::exists(out / "checkpoints" / "cnn.ltck"));
  for (const auto& [rel, digest] : m["artifacts"].items()) {
    CHECK(fs::exists(out / rel));
    CHECK(io::digest(io::read_file(out / rel)) == digest.get<std::string>());
    if (rel.size() > 4 && rel.substr(rel.size() - 4) == ".svg") {
      CHECK_NOTHROW(parse_xml(io::read_file(out / rel)));
      CHECK(fs::exists(out / (rel.substr(0, rel.size() - 4) + ".csv")));
    }
  }

  // re-running a stage with the same config overwrites identically
  const auto before = comparable_manifest(m);
  run(Stage::Train, cfg, out);
  run(Stage::Evaluate, cfg, out);
  run(Stage::Explain, cfg, out);
  run(Stage::Report, cfg, out);
  CHECK(comparable_manifest(load_manifest(out)) == before);

  // an artifact edited behind the manifest's back is refused downstream
  io::write_file_atomic(out / "tables" / "split.csv", io::read_file(out / "tables" / "split.csv") + "\r\n");
  CHECK_ERROR_KIND(run(Stage::Preprocess, cfg, out), ErrorKind::MissingArtifact);
}

TEST_CASE("a failed tune stage is recorded and earlier stages survive") {
  auto cfg = parse_config(tiny_config());
  cfg.tune_models = {ModelKind::Cnn};
  cfg.final_model = ModelKind::Cnn;
  cfg.cnn_grid.kernel_sizes = {9};  // longer than the 8 selected features
  const auto out = test::scratch("failed_tune");
  run(Stage::Ingest, cfg, out);
  run(Stage::Preprocess, cfg, out);
  run(Stage::Select, cfg, out);
  const auto before = load_manifest(out);
  CHECK_THROWS(run(Stage::Tune, cfg, out));
  const auto m = load_manifest(out);
  CHECK(m["stages"]["tune"]["status"] == "failed");
  CHECK_FALSE(m["stages"]["tune"]["error"].get<std::string>().empty());
  for (const char* s : {"ingest", "preprocess", "select"}) CHECK(m["stages"][s] == before["stages"][s]);
  CHECK(m["dataset"] == before["dataset"]);
  CHECK(m["preprocess"] == before["preprocess"]);
  CHECK_ERROR_KIND(run(Stage::Train, cfg, out), ErrorKind::MissingArtifact);
}

TEST_CASE("command line exit codes") {
  const auto dir = test::scratch("cli");
  CHECK(run_cli("--config /nonexistent.ini --out " + (dir / "a").string()) == 2);
  CHECK(run_cli("--stage deploy --out " + (dir / "b").string()) == 2);
  CHECK(run_cli("--bogus-flag") == 2);
  std::ofstream(dir / "missing.ini") << "[data]\npath = " << (dir / "absent.csv").string() << "\n";
  CHECK(run_cli("--config " + (dir / "missing.ini").string() + " --stage ingest --out " + (dir / "c").string()) == 3);
  CHECK(run_cli("--stage evaluate --out " + (dir / "d").string()) == 4);
  std::ofstream(dir / "tiny.ini") << tiny_config();
  CHECK(run_cli("--config " + (dir / "tiny.ini").string() + " --seed 7 --stage ingest --out " + (dir / "e").string()) ==
        0);
  CHECK(load_manifest(dir / "e")["seeds"]["root"] == 7);
}
