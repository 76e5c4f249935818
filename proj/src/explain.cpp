#include "xai/explain.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "xai/error.hpp"
#include "xai/parallel.hpp"
#include "xai/rng.hpp"

namespace xai {

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

BackgroundSet BackgroundSet::from_rows(Eigen::MatrixXd rows) {
  if (rows.rows() == 0) throw Error(ErrorKind::EmptyBackground, "background has no rows");
  BackgroundSet bg;
  bg.means = rows.colwise().mean().transpose();
  bg.rows = std::move(rows);
  return bg;
}

BackgroundSet BackgroundSet::means_only(const Eigen::VectorXd& means) {
  return from_rows(Eigen::MatrixXd(means.transpose()));
}

BackgroundSet BackgroundSet::sample(const Eigen::MatrixXd& data, std::size_t n, std::uint64_t seed) {
  if (data.rows() == 0) throw Error(ErrorKind::EmptyBackground, "no rows to sample a background from");
  const auto total = static_cast<std::size_t>(data.rows());
  if (n >= total) return from_rows(data);
  auto idx = shuffled_indices(total, seed);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), data.cols());
  for (std::size_t i = 0; i < n; ++i) rows.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(idx[i]));
  return from_rows(std::move(rows));
}

namespace {

// Mean anchored at the first element: exact when every element is equal, and
// identical inputs always give identical results.
double anchored_mean(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double a = v(0);
  double acc = 0.0;
  for (Eigen::Index i = 1; i < v.size(); ++i) acc += v(i) - a;
  return a + acc / static_cast<double>(v.size());
}

void check_background(const Eigen::VectorXd& x, const BackgroundSet& bg) {
  if (bg.rows.rows() == 0) throw Error(ErrorKind::EmptyBackground, "background has no rows");
  if (bg.rows.cols() != x.size()) throw Error(ErrorKind::ShapeMismatch, "background width differs from instance");
}

std::vector<std::string> default_names(const std::vector<std::string>& names, Eigen::Index n) {
  if (!names.empty()) {
    if (static_cast<Eigen::Index>(names.size()) != n) throw Error(ErrorKind::ShapeMismatch, "feature name count");
    return names;
  }
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < n; ++j) out.push_back("x" + std::to_string(j));
  return out;
}

}  // namespace

Eigen::VectorXd masked_predict_batch(const BatchModel& model, const Eigen::VectorXd& x, const MaskMatrix& masks,
                                     const BackgroundSet& bg) {
  check_background(x, bg);
  if (masks.cols() != x.size()) throw Error(ErrorKind::ShapeMismatch, "mask width differs from instance");
  const Eigen::Index r = bg.rows.rows();
  const Eigen::Index d = x.size();
  // Coalitions per model call, keeping each call around 8k rows.
  const Eigen::Index per_call = std::max<Eigen::Index>(1, 8192 / r);
  Eigen::VectorXd values(masks.rows());
  Eigen::MatrixXd block;
  for (Eigen::Index start = 0; start < masks.rows(); start += per_call) {
    const Eigen::Index k = std::min(per_call, masks.rows() - start);
    block.resize(k * r, d);
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (masks(start + c, j)) {
          block.block(c * r, j, r, 1).setConstant(x(j));
        } else {
          block.block(c * r, j, r, 1) = bg.rows.col(j);
        }
      }
    }
    const Eigen::VectorXd out = model(block);
    if (out.size() != block.rows()) throw Error(ErrorKind::ShapeMismatch, "model returned wrong row count");
    for (Eigen::Index c = 0; c < k; ++c) values(start + c) = anchored_mean(out.segment(c * r, r));
  }
  return values;
}

double masked_predict(const BatchModel& model, const Eigen::VectorXd& x, const CoalitionMask& mask,
                      const BackgroundSet& bg) {
  if (static_cast<Eigen::Index>(mask.size()) != x.size())
    throw Error(ErrorKind::ShapeMismatch, "mask width differs from instance");
  MaskMatrix m(1, x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) m(0, j) = mask.bits[static_cast<std::size_t>(j)];
  return masked_predict_batch(model, x, m, bg)(0);
}

Attribution exact_shapley(const BatchModel& model, const Eigen::VectorXd& x, const BackgroundSet& bg,
                          const std::vector<std::size_t>& players_in, const std::vector<std::string>& names) {
  check_background(x, bg);
  const auto d = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> players = players_in;
  if (players.empty()) {
    players.resize(d);
    std::iota(players.begin(), players.end(), std::size_t{0});
  }
  const std::size_t n = players.size();
  if (n > kMaxExactFeatures)
    throw Error(ErrorKind::TooManyFeatures, std::to_string(n) + " players exceed the enumeration limit of 20");
  for (auto p : players)
    if (p >= d) throw Error(ErrorKind::InvalidArgument, "player index out of range");

  // v[S] for every subset S of players, S encoded as a bitmask over `players`.
  const std::size_t subsets = std::size_t{1} << n;
  std::vector<double> v(subsets);
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < subsets; start += kChunk) {
    const std::size_t k = std::min(kChunk, subsets - start);
    MaskMatrix masks = MaskMatrix::Ones(static_cast<Eigen::Index>(k), x.size());
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t b = 0; b < n; ++b)
        masks(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(players[b])) = ((start + c) >> b) & 1u;
    const auto vals = masked_predict_batch(model, x, masks, bg);
    for (std::size_t c = 0; c < k; ++c) v[start + c] = vals(static_cast<Eigen::Index>(c));
  }

  // |S|!(n-|S|-1)!/n! = 1 / (n * C(n-1, |S|)).
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    double binom = 1.0;
    for (std::size_t i = 1; i <= s; ++i) binom = binom * static_cast<double>(n - 1 - s + i) / static_cast<double>(i);
    weight[s] = 1.0 / (static_cast<double>(n) * binom);
  }

  Attribution a;
  a.feature_names = default_names(names, x.size());
  a.phi = Eigen::VectorXd::Zero(x.size());
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t bit = std::size_t{1} << b;
    double phi = 0.0;
    for (std::size_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      const double diff = v[s | bit] - v[s];
      if (diff != 0.0) phi += weight[static_cast<std::size_t>(__builtin_popcountll(s))] * diff;
    }
    a.phi(static_cast<Eigen::Index>(players[b])) = phi;
  }
  a.base_value = v[0];
  a.predicted = v[subsets - 1];
  return a;
}

double shapley_kernel_weight(std::size_t n, std::size_t s) {
  if (s == 0 || s >= n) throw Error(ErrorKind::InvalidArgument, "kernel weight undefined for empty/full coalition");
  double binom = 1.0;
  for (std::size_t i = 1; i <= s; ++i) binom = binom * static_cast<double>(n - s + i) / static_cast<double>(i);
  return static_cast<double>(n - 1) / (binom * static_cast<double>(s) * static_cast<double>(n - s));
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  double b = 1.0;
  for (std::size_t i = 1; i <= k; ++i) b = b * static_cast<double>(n - k + i) / static_cast<double>(i);
  return b;
}

struct CoalitionSet {
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<double> weights;
  std::map<std::vector<std::uint8_t>, std::size_t> sampled;  // mask -> index in masks
  std::vector<double> counts;                                // per index, sampled part only

  void add_fixed(std::vector<std::uint8_t> m, double w) {
    masks.push_back(std::move(m));
    weights.push_back(w);
    counts.push_back(0.0);
  }
};

// Calls fn(mask) for every subset of {0..n-1} of size k, lexicographic order.
template <typename Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (;;) {
    std::vector<std::uint8_t> m(n, 0);
    for (auto i : idx) m[i] = 1;
    fn(std::move(m));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::vector<std::uint8_t> complement(const std::vector<std::uint8_t>& m) {
  std::vector<std::uint8_t> c(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) c[i] = m[i] ? 0 : 1;
  return c;
}

CoalitionSet build_coalitions(std::size_t n, std::size_t budget, Rng& rng) {
  CoalitionSet set;
  const std::size_t n_sizes = (n - 1 + 1) / 2;  // ceil((n-1)/2)
  const std::size_t n_paired = (n - 1) / 2;
  std::vector<double> size_weight(n_sizes + 1, 0.0);
  double total = 0.0;
  for (std::size_t s = 1; s <= n_sizes; ++s) {
    size_weight[s] = static_cast<double>(n - 1) / (static_cast<double>(s) * static_cast<double>(n - s));
    if (s <= n_paired) size_weight[s] *= 2.0;
    total += size_weight[s];
  }
  for (auto& w : size_weight) w /= total;

  double remaining = budget > 2 ? static_cast<double>(budget - 2) : 0.0;
  double weight_left = 1.0;
  double all_left = std::pow(2.0, static_cast<double>(n)) - 2.0;
  std::size_t full_sizes = 0;
  for (std::size_t s = 1; s <= n_sizes; ++s) {
    const bool paired = s <= n_paired;
    const double count = binomial(n, s) * (paired ? 2.0 : 1.0);
    const bool fits_all = remaining >= all_left;
    if (!fits_all && remaining * size_weight[s] / weight_left < count - 1e-8) break;
    const double w = size_weight[s] / (paired ? 2.0 : 1.0) / binomial(n, s);
    for_each_combination(n, s, [&](std::vector<std::uint8_t> m) {
      if (paired) set.add_fixed(complement(m), w);
      set.add_fixed(std::move(m), w);
    });
    remaining -= count;
    all_left -= count;
    weight_left -= size_weight[s];
    full_sizes = s;
  }

  if (full_sizes < n_sizes && remaining >= 1.0) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (std::size_t s = full_sizes + 1; s <= n_sizes; ++s) cdf.push_back(acc += size_weight[s]);
    const std::size_t first_sampled = set.masks.size();
    auto add_sample = [&](std::vector<std::uint8_t> m) {
      auto it = set.sampled.find(m);
      if (it != set.sampled.end()) {
        set.counts[it->second] += 1.0;
        return;
      }
      set.sampled.emplace(m, set.masks.size());
      set.masks.push_back(std::move(m));
      set.weights.push_back(0.0);
      set.counts.push_back(1.0);
      remaining -= 1.0;
    };
    std::vector<std::size_t> perm(n);
    const std::size_t max_draws = 100 * budget;
    for (std::size_t draw = 0; draw < max_draws && remaining >= 1.0; ++draw) {
      const double u = rng.uniform() * acc;
      std::size_t k = 0;
      while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
      const std::size_t s = full_sizes + 1 + k;
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = 0; i < s; ++i) std::swap(perm[i], perm[i + rng.below(static_cast<std::uint32_t>(n - i))]);
      std::vector<std::uint8_t> m(n, 0);
      for (std::size_t i = 0; i < s; ++i) m[perm[i]] = 1;
      if (s <= n_paired) {
        auto c = complement(m);
        add_sample(std::move(m));
        if (remaining >= 1.0) add_sample(std::move(c));
      } else {
        add_sample(std::move(m));
      }
    }
    double count_total = 0.0;
    for (std::size_t i = first_sampled; i < set.masks.size(); ++i) count_total += set.counts[i];
    for (std::size_t i = first_sampled; i < set.masks.size(); ++i)
      set.weights[i] = weight_left * set.counts[i] / count_total;
  }
  return set;
}

}  // namespace

Attribution kernel_shap(const BatchModel& model, const Eigen::VectorXd& x, const BackgroundSet& bg,
                        const KernelShapOptions& opts, const std::vector<std::string>& names) {
  check_background(x, bg);
  const auto n = static_cast<std::size_t>(x.size());
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "kernel_shap needs at least two features");

  Rng rng(opts.seed);
  const auto set = build_coalitions(n, opts.n_coalitions, rng);
  const auto k = static_cast<Eigen::Index>(set.masks.size());

  MaskMatrix masks(k + 2, x.size());
  masks.row(0).setZero();
  masks.row(1).setOnes();
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index j = 0; j < x.size(); ++j)
      masks(c + 2, j) = set.masks[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
  const Eigen::VectorXd values = masked_predict_batch(model, x, masks, bg);

  Attribution a;
  a.feature_names = default_names(names, x.size());
  a.base_value = values(0);
  a.predicted = values(1);
  const double delta = a.predicted - a.base_value;

  // Eliminate the last feature through the efficiency constraint.
  const Eigen::Index m = x.size() - 1;
  Eigen::MatrixXd design(k, m);
  Eigen::VectorXd target(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& mask = set.masks[static_cast<std::size_t>(c)];
    const double last = mask[static_cast<std::size_t>(m)];
    const double sw = std::sqrt(set.weights[static_cast<std::size_t>(c)]);
    for (Eigen::Index j = 0; j < m; ++j) design(c, j) = sw * (mask[static_cast<std::size_t>(j)] - last);
    target(c) = sw * (values(c + 2) - a.base_value - last * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (k < m || qr.rank() < m)
    throw Error(ErrorKind::SingularSystem, "kernel_shap: " + std::to_string(k) + " coalitions give rank " +
                                               std::to_string(qr.rank()) + " < " + std::to_string(m) +
                                               "; raise n_coalitions");
  const Eigen::VectorXd head = qr.solve(target);
  a.phi.resize(x.size());
  a.phi.head(m) = head;
  a.phi(m) = delta - head.sum();
  return a;
}

LimeExplanation lime_explain(const BatchModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& feature_scales,
                             const LimeConfig& cfg, std::uint64_t seed, const std::vector<std::string>& names) {
  const Eigen::Index d = x.size();
  if (cfg.n_samples < 10) throw Error(ErrorKind::InvalidArgument, "LIME needs n_samples >= 10");
  if (feature_scales.size() != d) throw Error(ErrorKind::ShapeMismatch, "LIME: feature scale count");
  if ((feature_scales.array() <= 0.0).any()) throw Error(ErrorKind::InvalidArgument, "LIME: feature scales must be > 0");
  const double width = cfg.kernel_width > 0.0 ? cfg.kernel_width : 0.75 * std::sqrt(static_cast<double>(d));

  Rng rng(seed);
  const Eigen::Index n = cfg.n_samples;
  Eigen::MatrixXd offsets(n, d);  // z - x
  Eigen::MatrixXd z(n, d);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double dist2 = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double e = rng.normal();
      offsets(i, j) = e * feature_scales(j);
      z(i, j) = x(j) + offsets(i, j);
      dist2 += e * e;
    }
    w(i) = lime_kernel(std::sqrt(dist2), width);
  }
  const double w_sum = w.sum();
  if (!(w_sum > 1e-12 * static_cast<double>(n)))
    throw Error(ErrorKind::DegeneratePerturbations, "all LIME sample weights vanish; increase kernel_width");
  const Eigen::VectorXd f = model(z);

  const Eigen::VectorXd wn = w / w_sum;
  const Eigen::RowVectorXd mean_z = wn.transpose() * offsets;
  const double mean_f = wn.dot(f);
  const Eigen::MatrixXd zc = offsets.rowwise() - mean_z;
  const Eigen::VectorXd fc = f.array() - mean_f;

  // Screening by weighted univariate effect size.
  std::vector<std::size_t> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd effect(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (wn.array() * zc.col(j).array().square()).sum();
    const double cov = (wn.array() * zc.col(j).array() * fc.array()).sum();
    effect(j) = var > 0.0 ? std::abs(cov) / std::sqrt(var) : 0.0;
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return effect(static_cast<Eigen::Index>(a)) > effect(static_cast<Eigen::Index>(b));
  });
  const auto keep = static_cast<std::size_t>(std::clamp<Eigen::Index>(cfg.max_features, 1, d));
  std::vector<std::size_t> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(selected.begin(), selected.end());

  const auto k = static_cast<Eigen::Index>(selected.size());
  Eigen::MatrixXd xs(n, k);
  for (Eigen::Index c = 0; c < k; ++c) xs.col(c) = zc.col(static_cast<Eigen::Index>(selected[static_cast<std::size_t>(c)]));
  const Eigen::MatrixXd xw = xs.array().colwise() * w.array();
  Eigen::MatrixXd normal = xw.transpose() * xs;
  normal.diagonal().array() += cfg.ridge;
  const Eigen::VectorXd coef = normal.ldlt().solve(xw.transpose() * fc);

  LimeExplanation e;
  e.selected = selected;
  e.attribution.feature_names = default_names(names, d);
  e.attribution.phi = Eigen::VectorXd::Zero(d);
  for (Eigen::Index c = 0; c < k; ++c) e.attribution.phi(static_cast<Eigen::Index>(selected[static_cast<std::size_t>(c)])) = coef(c);
  // g(z) = intercept + coef . (z - x); intercept is the surrogate's value at x.
  Eigen::VectorXd sel_mean(k);
  for (Eigen::Index c = 0; c < k; ++c) sel_mean(c) = mean_z(static_cast<Eigen::Index>(selected[static_cast<std::size_t>(c)]));
  e.intercept = mean_f - coef.dot(sel_mean);
  e.attribution.base_value = e.intercept;
  e.attribution.predicted = model(Eigen::MatrixXd(x.transpose()))(0);

  const Eigen::VectorXd resid = fc - xs * coef;
  const double ss_res = (w.array() * resid.array().square()).sum();
  const double ss_tot = (w.array() * fc.array().square()).sum();
  e.fidelity_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return e;
}

std::string lime_report(const LimeExplanation& e, const Eigen::VectorXd& x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "prediction: P(malignant) = " << e.attribution.predicted << "\n";
  os << "surrogate intercept: " << e.intercept << ", local fidelity R^2: " << e.fidelity_r2 << "\n";
  std::vector<std::size_t> order = e.selected;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(e.attribution.phi(static_cast<Eigen::Index>(a))) >
           std::abs(e.attribution.phi(static_cast<Eigen::Index>(b)));
  });
  for (auto j : order) {
    const double c = e.attribution.phi(static_cast<Eigen::Index>(j));
    os << e.attribution.feature_names[j] << " = " << x(static_cast<Eigen::Index>(j)) << " (contribution: "
       << (c >= 0 ? "+" : "") << c << ")\n";
  }
  return os.str();
}

namespace {

std::vector<FeatureScore> ranked(const std::vector<std::string>& names, const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<FeatureScore> out;
  for (std::size_t r = 0; r < order.size(); ++r)
    out.push_back({names[order[r]], scores[order[r]], static_cast<int>(r + 1)});
  return out;
}

}  // namespace

std::vector<FeatureScore> permutation_importance(const BatchModel& model, const Eigen::MatrixXd& x,
                                                 const std::vector<int>& y, const ScoreFn& metric, int repeats,
                                                 std::uint64_t seed, const std::vector<std::string>& names) {
  const auto drops = permutation_score_drop(model, x, y, metric, repeats, seed);
  return ranked(default_names(names, x.cols()), drops);
}

std::vector<FeatureScore> global_mean_abs_shap(const BatchModel& model, const Eigen::MatrixXd& sample,
                                               const BackgroundSet& bg, ShapMethod method, std::uint64_t seed,
                                               const std::vector<std::string>& names, std::size_t n_coalitions,
                                               std::vector<Attribution>* per_instance,
                                               const std::vector<std::size_t>& players) {
  if (sample.rows() == 0) throw Error(ErrorKind::InvalidArgument, "global_mean_abs_shap: empty sample");
  const auto rows = static_cast<std::size_t>(sample.rows());
  std::vector<Attribution> attrs(rows);
  parallel_for(rows, [&](std::size_t i) {
    const Eigen::VectorXd x = sample.row(static_cast<Eigen::Index>(i)).transpose();
    attrs[i] = method == ShapMethod::Exact
                   ? exact_shapley(model, x, bg, players, names)
                   : kernel_shap(model, x, bg, {n_coalitions, derive_seed(seed, static_cast<std::uint64_t>(i))}, names);
  });
  std::vector<double> mean_abs(static_cast<std::size_t>(sample.cols()), 0.0);
  for (const auto& a : attrs)
    for (Eigen::Index j = 0; j < sample.cols(); ++j) mean_abs[static_cast<std::size_t>(j)] += std::abs(a.phi(j));
  for (auto& m : mean_abs) m /= static_cast<double>(rows);
  auto out = ranked(attrs.front().feature_names, mean_abs);
  if (per_instance) *per_instance = std::move(attrs);
  return out;
}

}  // namespace xai
