#include "xai/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "xai/error.hpp"
#include "xai/io.hpp"

namespace xai {

std::string to_string(SelectMethod m) { return m == SelectMethod::Rfe ? "rfe" : "chi2"; }
std::string to_string(SearchMethod m) { return m == SearchMethod::Grid ? "grid" : "random"; }

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(ErrorKind::ConfigError, key + " = '" + value + "': " + why);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a non-negative integer");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const auto u = to_u64(key, v);
  if (u > 1'000'000'000ULL) bad(key, v, "value too large");
  return static_cast<int>(u);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  bad(key, v, "expected true or false");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F parse_one) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    try {
      out.push_back(parse_one(item));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      bad(key, v, e.what());
    } catch (const std::exception& e) {
      bad(key, v, e.what());
    }
  }
  if (out.empty()) bad(key, v, "list is empty");
  return out;
}

template <typename T, typename F>
std::string format_list(const std::vector<T>& items, F fmt) {
  std::vector<std::string> s;
  for (const auto& x : items) s.push_back(fmt(x));
  return join(s);
}

TransformKind parse_transform(const std::string& s) {
  if (s == "impute") return TransformKind::Impute;
  if (s == "minmax") return TransformKind::MinMax;
  if (s == "zscore") return TransformKind::ZScore;
  if (s == "log") return TransformKind::Log;
  throw Error(ErrorKind::InvalidArgument, "unknown step '" + s + "'");
}

std::string transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::Impute: return "impute";
    case TransformKind::MinMax: return "minmax";
    case TransformKind::ZScore: return "zscore";
    case TransformKind::Log: return "log";
  }
  return "?";
}

ImputeStrategy parse_strategy(const std::string& key, const std::string& v) {
  if (v == "mean") return ImputeStrategy::Mean;
  if (v == "median") return ImputeStrategy::Median;
  if (v == "mode") return ImputeStrategy::Mode;
  bad(key, v, "expected mean, median or mode");
}

std::string strategy_name(ImputeStrategy s) {
  switch (s) {
    case ImputeStrategy::Mean: return "mean";
    case ImputeStrategy::Median: return "median";
    case ImputeStrategy::Mode: return "mode";
  }
  return "?";
}

std::string fmt_d(double v) { return io::format_double(v); }
std::string fmt_i(int v) { return std::to_string(v); }
std::string fmt_act(nn::Activation a) { return nn::to_string(a); }
std::string fmt_opt(nn::OptimizerKind o) { return nn::to_string(o); }
std::string fmt_model(ModelKind k) { return to_string(k); }

struct Key {
  const char* section;
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      {"data", "path", [](RunConfig& c, auto&, auto& v) { c.data_path = v; },
       [](const RunConfig& c) { return c.data_path.generic_string(); }},
      {"data", "split_ratio", [](RunConfig& c, auto& k, auto& v) { c.split_ratio = to_double(k, v); },
       [](const RunConfig& c) { return fmt_d(c.split_ratio); }},
      {"data", "drop_missing", [](RunConfig& c, auto& k, auto& v) { c.drop_missing = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.drop_missing ? "true" : "false"); }},

      {"run", "seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"run", "threads", [](RunConfig& c, auto& k, auto& v) { c.threads = static_cast<unsigned>(to_int(k, v)); },
       [](const RunConfig& c) { return std::to_string(c.threads); }},

      {"preprocess", "steps",
       [](RunConfig& c, auto& k, auto& v) { c.steps = parse_list<TransformKind>(k, v, parse_transform); },
       [](const RunConfig& c) { return format_list(c.steps, transform_name); }},
      {"preprocess", "impute_strategy", [](RunConfig& c, auto& k, auto& v) { c.impute_strategy = parse_strategy(k, v); },
       [](const RunConfig& c) { return strategy_name(c.impute_strategy); }},
      {"preprocess", "log_offset", [](RunConfig& c, auto& k, auto& v) { c.log_offset = to_double(k, v); },
       [](const RunConfig& c) { return fmt_d(c.log_offset); }},

      {"select", "method",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "rfe") c.select_method = SelectMethod::Rfe;
         else if (v == "chi2") c.select_method = SelectMethod::Chi2;
         else bad(k, v, "expected rfe or chi2");
       },
       [](const RunConfig& c) { return to_string(c.select_method); }},
      {"select", "n_features", [](RunConfig& c, auto& k, auto& v) { c.n_features = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.n_features); }},

      {"tune", "models",
       [](RunConfig& c, auto& k, auto& v) { c.tune_models = parse_list<ModelKind>(k, v, parse_model_kind); },
       [](const RunConfig& c) { return format_list(c.tune_models, fmt_model); }},
      {"tune", "search",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "grid") c.search = SearchMethod::Grid;
         else if (v == "random") c.search = SearchMethod::Random;
         else bad(k, v, "expected grid or random");
       },
       [](const RunConfig& c) { return to_string(c.search); }},
      {"tune", "n_iter", [](RunConfig& c, auto& k, auto& v) { c.n_iter = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.n_iter); }},
      {"tune", "random_check", [](RunConfig& c, auto& k, auto& v) { c.random_check = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.random_check ? "true" : "false"); }},
      {"tune", "folds", [](RunConfig& c, auto& k, auto& v) { c.folds = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.folds); }},
      {"tune", "dense_units", [](RunConfig& c, auto& k, auto& v) { c.dense_units = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.dense_units); }},
      {"tune", "mlp_activations",
       [](RunConfig& c, auto& k, auto& v) { c.mlp_grid.activations = parse_list<nn::Activation>(k, v, nn::parse_activation); },
       [](const RunConfig& c) { return format_list(c.mlp_grid.activations, fmt_act); }},
      {"tune", "mlp_dropouts",
       [](RunConfig& c, auto& k, auto& v) {
         c.mlp_grid.dropouts = parse_list<double>(k, v, [&](const std::string& s) { return to_double(k, s); });
       },
       [](const RunConfig& c) { return format_list(c.mlp_grid.dropouts, fmt_d); }},
      {"tune", "mlp_hidden_layer_sizes",
       [](RunConfig& c, auto& k, auto& v) {
         c.mlp_grid.hidden_sizes = parse_list<int>(k, v, [&](const std::string& s) { return to_int(k, s); });
       },
       [](const RunConfig& c) { return format_list(c.mlp_grid.hidden_sizes, fmt_i); }},
      {"tune", "mlp_optimizers",
       [](RunConfig& c, auto& k, auto& v) { c.mlp_grid.optimizers = parse_list<nn::OptimizerKind>(k, v, nn::parse_optimizer); },
       [](const RunConfig& c) { return format_list(c.mlp_grid.optimizers, fmt_opt); }},
      {"tune", "cnn_activations",
       [](RunConfig& c, auto& k, auto& v) { c.cnn_grid.activations = parse_list<nn::Activation>(k, v, nn::parse_activation); },
       [](const RunConfig& c) { return format_list(c.cnn_grid.activations, fmt_act); }},
      {"tune", "cnn_dropouts",
       [](RunConfig& c, auto& k, auto& v) {
         c.cnn_grid.dropouts = parse_list<double>(k, v, [&](const std::string& s) { return to_double(k, s); });
       },
       [](const RunConfig& c) { return format_list(c.cnn_grid.dropouts, fmt_d); }},
      {"tune", "cnn_filters",
       [](RunConfig& c, auto& k, auto& v) {
         c.cnn_grid.filters = parse_list<int>(k, v, [&](const std::string& s) { return to_int(k, s); });
       },
       [](const RunConfig& c) { return format_list(c.cnn_grid.filters, fmt_i); }},
      {"tune", "cnn_kernel_sizes",
       [](RunConfig& c, auto& k, auto& v) {
         c.cnn_grid.kernel_sizes = parse_list<int>(k, v, [&](const std::string& s) { return to_int(k, s); });
       },
       [](const RunConfig& c) { return format_list(c.cnn_grid.kernel_sizes, fmt_i); }},
      {"tune", "cnn_pool_sizes",
       [](RunConfig& c, auto& k, auto& v) {
         c.cnn_grid.pool_sizes = parse_list<int>(k, v, [&](const std::string& s) { return to_int(k, s); });
       },
       [](const RunConfig& c) { return format_list(c.cnn_grid.pool_sizes, fmt_i); }},
      {"tune", "cnn_optimizers",
       [](RunConfig& c, auto& k, auto& v) { c.cnn_grid.optimizers = parse_list<nn::OptimizerKind>(k, v, nn::parse_optimizer); },
       [](const RunConfig& c) { return format_list(c.cnn_grid.optimizers, fmt_opt); }},

      {"train", "model",
       [](RunConfig& c, auto& k, auto& v) {
         try {
           c.final_model = parse_model_kind(v);
         } catch (const Error&) {
           bad(k, v, "expected mlp or cnn");
         }
       },
       [](const RunConfig& c) { return to_string(c.final_model); }},
      {"train", "epochs", [](RunConfig& c, auto& k, auto& v) { c.epochs = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"train", "batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"train", "validation_fraction", [](RunConfig& c, auto& k, auto& v) { c.validation_fraction = to_double(k, v); },
       [](const RunConfig& c) { return fmt_d(c.validation_fraction); }},
      {"train", "patience", [](RunConfig& c, auto& k, auto& v) { c.early_stop.patience = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.early_stop.patience); }},
      {"train", "min_delta", [](RunConfig& c, auto& k, auto& v) { c.early_stop.min_delta = to_double(k, v); },
       [](const RunConfig& c) { return fmt_d(c.early_stop.min_delta); }},

      {"explain", "background", [](RunConfig& c, auto& k, auto& v) { c.background = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.background); }},
      {"explain", "shap_method",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "kernel") c.shap_method = ShapMethod::Kernel;
         else if (v == "exact") c.shap_method = ShapMethod::Exact;
         else bad(k, v, "expected kernel or exact");
       },
       [](const RunConfig& c) { return std::string(c.shap_method == ShapMethod::Kernel ? "kernel" : "exact"); }},
      {"explain", "n_coalitions", [](RunConfig& c, auto& k, auto& v) { c.n_coalitions = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.n_coalitions); }},
      {"explain", "shap_instances", [](RunConfig& c, auto& k, auto& v) { c.shap_instances = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.shap_instances); }},
      {"explain", "exact_features", [](RunConfig& c, auto&, auto& v) { c.exact_features = split_list(v); },
       [](const RunConfig& c) { return join(c.exact_features); }},
      {"explain", "lime_instances", [](RunConfig& c, auto& k, auto& v) { c.lime_instances = to_u64(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lime_instances); }},
      {"explain", "lime_samples", [](RunConfig& c, auto& k, auto& v) { c.lime.n_samples = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lime.n_samples); }},
      {"explain", "lime_features", [](RunConfig& c, auto& k, auto& v) { c.lime.max_features = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lime.max_features); }},
      {"explain", "lime_ridge", [](RunConfig& c, auto& k, auto& v) { c.lime.ridge = to_double(k, v); },
       [](const RunConfig& c) { return fmt_d(c.lime.ridge); }},
      {"explain", "lime_kernel_width", [](RunConfig& c, auto& k, auto& v) { c.lime.kernel_width = to_double(k, v); },
       [](const RunConfig& c) { return fmt_d(c.lime.kernel_width); }},
      {"explain", "permutation_repeats", [](RunConfig& c, auto& k, auto& v) { c.permutation_repeats = to_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.permutation_repeats); }},
  };
  return keys;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::ConfigError, msg);
}

}  // namespace

void RunConfig::validate() const {
  require(!data_path.empty(), "data.path is empty");
  require(split_ratio > 0.0 && split_ratio < 1.0, "data.split_ratio must be in (0, 1)");
  require(!steps.empty(), "preprocess.steps is empty");
  require(log_offset >= 0.0, "preprocess.log_offset must be >= 0");
  require(n_features >= 1, "select.n_features must be >= 1");
  require(!tune_models.empty(), "tune.models is empty");
  require(std::set<ModelKind>(tune_models.begin(), tune_models.end()).size() == tune_models.size(),
          "tune.models lists a model twice");
  require(std::find(tune_models.begin(), tune_models.end(), final_model) != tune_models.end(),
          "train.model must be one of tune.models");
  require(n_iter >= 1, "tune.n_iter must be >= 1");
  require(folds >= 2, "tune.folds must be >= 2");
  require(dense_units >= 1, "tune.dense_units must be >= 1");
  mlp_grid.validate();
  cnn_grid.validate();
  require(epochs >= 1, "train.epochs must be >= 1");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "train.validation_fraction must be in [0, 1)");
  require(early_stop.patience >= 1, "train.patience must be >= 1");
  require(early_stop.min_delta >= 0.0, "train.min_delta must be >= 0");
  require(background >= 1, "explain.background must be >= 1");
  require(n_coalitions >= 2, "explain.n_coalitions must be >= 2");
  require(shap_instances >= 1, "explain.shap_instances must be >= 1");
  require(exact_features.size() <= 20, "explain.exact_features lists more than 20 features");
  require(shap_method == ShapMethod::Kernel || !exact_features.empty(),
          "explain.shap_method = exact needs explain.exact_features");
  require(lime.n_samples >= 10, "explain.lime_samples must be >= 10");
  require(lime.max_features >= 1, "explain.lime_features must be >= 1");
  require(lime.ridge >= 0.0, "explain.lime_ridge must be >= 0");
  require(lime.kernel_width >= 0.0, "explain.lime_kernel_width must be >= 0");
  require(permutation_repeats >= 1, "explain.permutation_repeats must be >= 1");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : registry()) out.emplace_back(std::string(k.section) + "." + k.name, k.get(*this));
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  std::string section;
  for (const auto& k : registry()) {
    if (section != k.section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return io::digest(canonical()); }

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error(ErrorKind::ConfigError, "key '" + section + "' outside a section");
    if (std::none_of(registry().begin(), registry().end(), [&](const Key& k) { return section == k.section; }))
      throw Error(ErrorKind::ConfigError, "unknown section [" + section + "]");
    for (const auto& [name, value] : body) {
      const auto it = std::find_if(registry().begin(), registry().end(),
                                   [&](const Key& k) { return section == k.section && name == k.name; });
      if (it == registry().end()) throw Error(ErrorKind::ConfigError, "unknown key " + section + "." + name);
      it->set(cfg, section + "." + name, trim(value.data()));
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::ConfigError, "cannot read config " + path.string() + ": " + e.what());
  }
  return parse_config(text);
}

}  // namespace xai
