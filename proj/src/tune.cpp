#include "xai/tune.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "xai/checkpoint.hpp"
#include "xai/io.hpp"
#include "xai/metrics.hpp"
#include "xai/parallel.hpp"

namespace xai {

std::string to_string(ModelKind k) { return k == ModelKind::Mlp ? "mlp" : "cnn"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "cnn") return ModelKind::Cnn;
  throw Error(ErrorKind::InvalidArgument, "unknown model kind '" + s + "'");
}

std::vector<std::pair<std::string, std::string>> HyperParams::fields() const {
  std::vector<std::pair<std::string, std::string>> f;
  f.emplace_back("activation", nn::to_string(activation));
  f.emplace_back("dropout", io::format_double(dropout));
  if (kind == ModelKind::Mlp) {
    f.emplace_back("hidden_layer_sizes", std::to_string(hidden));
    f.emplace_back("optimizer", nn::to_string(optimizer));
  } else {
    f.emplace_back("filters", std::to_string(filters));
    f.emplace_back("kernel_size", std::to_string(kernel_size));
    f.emplace_back("optimizer", nn::to_string(optimizer));
    f.emplace_back("pool_size", std::to_string(pool_size));
  }
  return f;
}

std::string HyperParams::key() const {
  std::string k = to_string(kind) + ":";
  bool first = true;
  for (const auto& [name, value] : fields()) {
    if (!first) k += ",";
    first = false;
    k += name + "=" + value;
  }
  return k;
}

HyperParams parse_hyperparams(const std::string& key) {
  auto colon = key.find(':');
  if (colon == std::string::npos) throw Error(ErrorKind::InvalidArgument, "hyperparameter key '" + key + "'");
  HyperParams p;
  p.kind = parse_model_kind(key.substr(0, colon));
  std::istringstream in(key.substr(colon + 1));
  std::string item;
  while (std::getline(in, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "hyperparameter '" + item + "'");
    const auto name = item.substr(0, eq), value = item.substr(eq + 1);
    if (name == "activation") p.activation = nn::parse_activation(value);
    else if (name == "dropout") p.dropout = std::stod(value);
    else if (name == "hidden_layer_sizes") p.hidden = std::stoi(value);
    else if (name == "filters") p.filters = std::stoi(value);
    else if (name == "kernel_size") p.kernel_size = std::stoi(value);
    else if (name == "pool_size") p.pool_size = std::stoi(value);
    else if (name == "optimizer") p.optimizer = nn::parse_optimizer(value);
    else throw Error(ErrorKind::InvalidArgument, "unknown hyperparameter '" + name + "'");
  }
  return p;
}

void ParamGrid::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::ConfigError, std::string("search space: ") + what);
  };
  need(!activations.empty(), "activation list is empty");
  need(!dropouts.empty(), "dropout list is empty");
  need(!optimizers.empty(), "optimizer list is empty");
  for (double d : dropouts) need(d >= 0.0 && d < 1.0, "dropout must be in [0, 1)");
  if (kind == ModelKind::Mlp) {
    need(!hidden_sizes.empty(), "hidden_layer_sizes list is empty");
    for (int h : hidden_sizes) need(h >= 1, "hidden_layer_sizes must be >= 1");
  } else {
    need(!filters.empty() && !kernel_sizes.empty() && !pool_sizes.empty(), "cnn lists must be non-empty");
    for (int f : filters) need(f >= 1, "filters must be >= 1");
    for (int k : kernel_sizes) need(k >= 1, "kernel_size must be >= 1");
    for (int p : pool_sizes) need(p >= 1, "pool_size must be >= 1");
  }
}

std::size_t ParamGrid::size() const {
  std::size_t n = activations.size() * dropouts.size() * optimizers.size();
  return kind == ModelKind::Mlp ? n * hidden_sizes.size() : n * filters.size() * kernel_sizes.size() * pool_sizes.size();
}

std::vector<HyperParams> ParamGrid::enumerate() const {
  validate();
  std::vector<HyperParams> out;
  out.reserve(size());
  HyperParams p;
  p.kind = kind;
  for (auto a : activations)
    for (double d : dropouts) {
      p.activation = a;
      p.dropout = d;
      if (kind == ModelKind::Mlp) {
        for (int h : hidden_sizes)
          for (auto o : optimizers) {
            p.hidden = h;
            p.optimizer = o;
            out.push_back(p);
          }
      } else {
        for (int f : filters)
          for (int k : kernel_sizes)
            for (auto o : optimizers)
              for (int ps : pool_sizes) {
                p.filters = f;
                p.kernel_size = k;
                p.optimizer = o;
                p.pool_size = ps;
                out.push_back(p);
              }
      }
    }
  return out;
}

ParamGrid ParamGrid::default_mlp() {
  using nn::Activation;
  using nn::OptimizerKind;
  ParamGrid g;
  g.kind = ModelKind::Mlp;
  g.activations = {Activation::Relu, Activation::Tanh, Activation::Sigmoid};
  g.dropouts = {0.1, 0.3, 0.5};
  g.hidden_sizes = {50, 100, 150};
  g.optimizers = {OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::RmsProp};
  return g;
}

ParamGrid ParamGrid::default_cnn() {
  using nn::Activation;
  using nn::OptimizerKind;
  ParamGrid g;
  g.kind = ModelKind::Cnn;
  g.activations = {Activation::Relu, Activation::Tanh, Activation::Sigmoid};
  g.dropouts = {0.1, 0.3, 0.5};
  g.filters = {16, 32};
  g.kernel_sizes = {3, 5};
  g.pool_sizes = {2};
  g.optimizers = {OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::RmsProp};
  return g;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "k must be >= 2");
  if (n < k) throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " > n=" + std::to_string(n));
  const auto order = shuffled_indices(n, seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

nn::NetworkSpec build_spec(const HyperParams& p, int input_width, int dense_units) {
  if (p.kind == ModelKind::Mlp) return nn::mlp_spec(input_width, p.hidden, p.activation, p.dropout);
  return nn::cnn_spec(input_width, p.filters, p.kernel_size, p.pool_size, p.activation, p.dropout, dense_units);
}

std::uint64_t candidate_seed(std::uint64_t seed, const HyperParams& p) { return derive_seed(seed, p.key()); }

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> as_labels(const Eigen::VectorXd& y) {
  std::vector<int> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = y(i) > 0.5 ? 1 : 0;
  return out;
}

double accuracy_of(const nn::Network& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return accuracy_score(as_labels(y), net.predict_proba(x));
}

}  // namespace

CvResult cross_validate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const HyperParams& params,
                        const CvOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  CvResult r;
  r.params = params;
  try {
    if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "cross_validate: X vs y");
    const auto folds = kfold_split(static_cast<std::size_t>(x.rows()), opts.folds, derive_seed(opts.seed, "folds"));
    const auto cseed = candidate_seed(opts.seed, params);
    const auto spec = build_spec(params, static_cast<int>(x.cols()), opts.dense_units);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train_rows;
      for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f) train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
      const auto fold_seed = derive_seed(cseed, static_cast<std::uint64_t>(f));
      nn::Network net(spec, fold_seed);
      auto opt = nn::OptimizerState::make(params.optimizer);
      Rng shuffle_rng(derive_seed(fold_seed, "shuffle"));
      Rng dropout_rng(derive_seed(fold_seed, "dropout"));
      const auto xt = take_rows(x, train_rows);
      const auto yt = take(y, train_rows);
      for (int e = 0; e < opts.epochs; ++e) net.train_epoch(xt, yt, opts.batch_size, opt, shuffle_rng, dropout_rng);
      r.fold_scores.push_back(accuracy_of(net, take_rows(x, folds[f]), take(y, folds[f])));
    }
    r.mean = std::accumulate(r.fold_scores.begin(), r.fold_scores.end(), 0.0) / static_cast<double>(r.fold_scores.size());
    double ss = 0.0;
    for (double s : r.fold_scores) ss += (s - r.mean) * (s - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.fold_scores.size()));
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
    spdlog::warn("candidate {} failed: {}", params.key(), e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::optional<CvResult> CvCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = results_.find(key);
  if (it == results_.end()) return std::nullopt;
  return it->second;
}

void CvCache::put(const CvResult& r) {
  std::lock_guard lock(mu_);
  results_.emplace(r.params.key(), r);
}

std::size_t CvCache::size() const {
  std::lock_guard lock(mu_);
  return results_.size();
}

void rank_results(std::vector<CvResult>& results) {
  std::stable_sort(results.begin(), results.end(), [](const CvResult& a, const CvResult& b) {
    if (a.failed != b.failed) return !a.failed;
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.enumeration_index < b.enumeration_index;
  });
}

namespace {

std::vector<CvResult> evaluate_all(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const std::vector<HyperParams>& candidates, const CvOptions& opts, CvCache* cache) {
  std::vector<CvResult> results(candidates.size());
  parallel_for(
      candidates.size(),
      [&](std::size_t i) {
        std::optional<CvResult> hit = cache ? cache->find(candidates[i].key()) : std::nullopt;
        results[i] = hit ? *hit : cross_validate(x, y, candidates[i], opts);
        results[i].enumeration_index = i;
        if (cache && !hit) cache->put(results[i]);
      },
      opts.threads);
  rank_results(results);
  return results;
}

}  // namespace

std::vector<CvResult> grid_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ParamGrid& grid,
                                  const CvOptions& opts, CvCache* cache) {
  return evaluate_all(x, y, grid.enumerate(), opts, cache);
}

std::vector<HyperParams> sample_candidates(const ParamGrid& space, std::size_t n_iter, std::uint64_t seed) {
  if (n_iter < 1) throw Error(ErrorKind::InvalidArgument, "n_iter must be >= 1");
  space.validate();
  Rng rng(seed);
  auto pick = [&](const auto& list) { return list[rng.below(static_cast<std::uint32_t>(list.size()))]; };
  std::vector<HyperParams> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < n_iter; ++i) {
    HyperParams p;
    p.kind = space.kind;
    p.activation = pick(space.activations);
    p.dropout = pick(space.dropouts);
    if (space.kind == ModelKind::Mlp) {
      p.hidden = pick(space.hidden_sizes);
      p.optimizer = pick(space.optimizers);
    } else {
      p.filters = pick(space.filters);
      p.kernel_size = pick(space.kernel_sizes);
      p.optimizer = pick(space.optimizers);
      p.pool_size = pick(space.pool_sizes);
    }
    if (seen.insert(p.key()).second) out.push_back(p);
  }
  return out;
}

std::vector<CvResult> random_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ParamGrid& space,
                                    std::size_t n_iter, std::uint64_t sample_seed, const CvOptions& opts,
                                    CvCache* cache) {
  return evaluate_all(x, y, sample_candidates(space, n_iter, sample_seed), opts, cache);
}

bool EarlyStopState::update(double value) {
  history_.push_back(value);
  const bool new_best = value > best_;
  if (new_best) best_ = value;
  if (value - reference_ >= cfg_.min_delta) {
    reference_ = value;
    wait_ = 0;
  } else {
    ++wait_;
  }
  return new_best;
}

TrainResult train_final(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const HyperParams& params,
                        const TrainFinalOptions& opts) {
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "train_final: X vs y");
  if (!(opts.validation_fraction >= 0.0 && opts.validation_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "validation_fraction must be in [0, 1)");
  const auto n = static_cast<std::size_t>(x.rows());
  auto order = shuffled_indices(n, derive_seed(opts.seed, "validation"));
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * opts.validation_fraction));
  if (opts.validation_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  TrainResult result;
  result.validation_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(result.validation_rows.begin(), result.validation_rows.end());
  std::sort(fit_rows.begin(), fit_rows.end());
  const auto x_fit = take_rows(x, fit_rows);
  const auto y_fit = take(y, fit_rows);
  const auto x_mon = n_val ? take_rows(x, result.validation_rows) : x_fit;
  const auto y_mon = n_val ? take(y, result.validation_rows) : y_fit;

  nn::Network net(build_spec(params, static_cast<int>(x.cols()), opts.dense_units), derive_seed(opts.seed, "init"));
  auto opt = nn::OptimizerState::make(params.optimizer);
  Rng shuffle_rng(derive_seed(opts.seed, "shuffle"));
  Rng dropout_rng(derive_seed(opts.seed, "dropout"));
  EarlyStopState stop(opts.early_stop);
  std::vector<Eigen::MatrixXd> best_params = net.parameters();

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = net.train_epoch(x_fit, y_fit, opts.batch_size, opt, shuffle_rng, dropout_rng);
    rec.monitored = accuracy_of(net, x_mon, y_mon);
    if (stop.update(rec.monitored)) {
      best_params = net.parameters();
      result.best_epoch = epoch;
      rec.checkpointed = true;
      if (!opts.checkpoint_path.empty()) {
        try {
          save_checkpoint(net, checkpoint_kind(params.kind), opts.checkpoint_path);
        } catch (const std::exception& e) {
          throw Error(ErrorKind::CheckpointIoError, e.what());
        }
      }
    }
    result.history.push_back(rec);
    if (stop.should_stop()) {
      result.stopped_early = epoch < opts.epochs;
      break;
    }
  }
  result.best_monitored = stop.best();
  result.network = nn::Network(net.spec(), std::move(best_params));
  return result;
}

}  // namespace xai
