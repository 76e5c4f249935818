#include "xai/nn.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

namespace xai::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "linear") return Activation::Linear;
  throw Error(ErrorKind::InvalidArgument, "unknown activation '" + s + "'");
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::RmsProp: return "rmsprop";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "rmsprop") return OptimizerKind::RmsProp;
  throw Error(ErrorKind::InvalidArgument, "unknown optimizer '" + s + "'");
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::MaxPool1D: return "maxpool1d";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Output: return "output";
  }
  return "?";
}

Eigen::MatrixXd dense_forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  if (x.cols() != w.cols() || w.rows() != b.size())
    throw Error(ErrorKind::ShapeMismatch, "dense: x has " + std::to_string(x.cols()) + " columns, W is " +
                                              std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  Eigen::MatrixXd y = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

DenseGrads dense_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& grad_y) {
  if (grad_y.rows() != x.rows() || grad_y.cols() != w.rows() || x.cols() != w.cols())
    throw Error(ErrorKind::ShapeMismatch, "dense_backward");
  return {grad_y * w, grad_y.transpose() * x, grad_y.colwise().sum().transpose()};
}

namespace {

// Rows (b * out_length + t), columns (c * kernel + j).
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, const ConvShape& s) {
  const Eigen::Index lo = s.out_length();
  Eigen::MatrixXd patches(x.rows() * lo, s.channels * s.kernel);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index t = 0; t < lo; ++t)
      for (Eigen::Index c = 0; c < s.channels; ++c)
        for (Eigen::Index j = 0; j < s.kernel; ++j) patches(b * lo + t, c * s.kernel + j) = x(b, c * s.length + t + j);
  return patches;
}

void check_conv(const Eigen::MatrixXd& x, const ConvShape& s, const Eigen::MatrixXd& kernels) {
  if (s.kernel < 1 || s.kernel > s.length)
    throw Error(ErrorKind::KernelTooLarge,
                "kernel " + std::to_string(s.kernel) + " for length " + std::to_string(s.length));
  if (x.cols() != s.channels * s.length) throw Error(ErrorKind::ShapeMismatch, "conv1d: input width");
  if (kernels.cols() != s.channels * s.kernel) throw Error(ErrorKind::ShapeMismatch, "conv1d: kernel width");
}

}  // namespace

Eigen::MatrixXd conv1d_forward(const Eigen::MatrixXd& x, const ConvShape& shape, const Eigen::MatrixXd& kernels,
                               const Eigen::VectorXd& bias) {
  check_conv(x, shape, kernels);
  if (bias.size() != kernels.rows()) throw Error(ErrorKind::ShapeMismatch, "conv1d: bias size");
  const Eigen::Index lo = shape.out_length();
  const Eigen::Index filters = kernels.rows();
  const Eigen::MatrixXd out = im2col(x, shape) * kernels.transpose();  // (B*lo) x F
  Eigen::MatrixXd y(x.rows(), filters * lo);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index f = 0; f < filters; ++f)
      for (Eigen::Index t = 0; t < lo; ++t) y(b, f * lo + t) = out(b * lo + t, f) + bias(f);
  return y;
}

ConvGrads conv1d_backward(const Eigen::MatrixXd& x, const ConvShape& shape, const Eigen::MatrixXd& kernels,
                          const Eigen::MatrixXd& grad_y) {
  check_conv(x, shape, kernels);
  const Eigen::Index lo = shape.out_length();
  const Eigen::Index filters = kernels.rows();
  if (grad_y.rows() != x.rows() || grad_y.cols() != filters * lo)
    throw Error(ErrorKind::ShapeMismatch, "conv1d_backward: grad shape");
  Eigen::MatrixXd g(x.rows() * lo, filters);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index f = 0; f < filters; ++f)
      for (Eigen::Index t = 0; t < lo; ++t) g(b * lo + t, f) = grad_y(b, f * lo + t);
  ConvGrads out;
  out.grad_kernels = g.transpose() * im2col(x, shape);
  out.grad_bias = g.colwise().sum().transpose();
  const Eigen::MatrixXd gp = g * kernels;  // (B*lo) x (C*k)
  out.grad_x = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index t = 0; t < lo; ++t)
      for (Eigen::Index c = 0; c < shape.channels; ++c)
        for (Eigen::Index j = 0; j < shape.kernel; ++j)
          out.grad_x(b, c * shape.length + t + j) += gp(b * lo + t, c * shape.kernel + j);
  return out;
}

PoolResult maxpool1d_forward(const Eigen::MatrixXd& x, Eigen::Index channels, Eigen::Index length,
                             Eigen::Index pool) {
  if (pool < 1) throw Error(ErrorKind::InvalidArgument, "pool size must be >= 1");
  if (x.cols() != channels * length) throw Error(ErrorKind::ShapeMismatch, "maxpool1d: input width");
  const Eigen::Index lp = pooled_length(length, pool);
  PoolResult r;
  r.y.resize(x.rows(), channels * lp);
  r.argmax.resize(x.rows(), channels * lp);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index c = 0; c < channels; ++c)
      for (Eigen::Index w = 0; w < lp; ++w) {
        const Eigen::Index start = c * length + w * pool;
        const Eigen::Index stop = c * length + std::min(length, (w + 1) * pool);
        Eigen::Index best = start;
        for (Eigen::Index i = start + 1; i < stop; ++i)
          if (x(b, i) > x(b, best)) best = i;
        r.y(b, c * lp + w) = x(b, best);
        r.argmax(b, c * lp + w) = best;
      }
  return r;
}

Eigen::MatrixXd maxpool1d_backward(const Eigen::MatrixXd& grad_y,
                                   const Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>& argmax,
                                   Eigen::Index input_cols) {
  if (grad_y.rows() != argmax.rows() || grad_y.cols() != argmax.cols())
    throw Error(ErrorKind::ShapeMismatch, "maxpool1d_backward");
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(grad_y.rows(), input_cols);
  for (Eigen::Index b = 0; b < grad_y.rows(); ++b)
    for (Eigen::Index k = 0; k < grad_y.cols(); ++k) gx(b, argmax(b, k)) += grad_y(b, k);
  return gx;
}

Eigen::MatrixXd dropout(const Eigen::MatrixXd& x, double p, Rng& rng, bool training, Eigen::MatrixXd* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidRate, "dropout rate " + std::to_string(p));
  if (!training || p == 0.0) {
    if (mask) *mask = Eigen::MatrixXd::Ones(x.rows(), x.cols());
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Eigen::MatrixXd m(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index j = 0; j < x.cols(); ++j) m(b, j) = rng.uniform() < p ? 0.0 : keep_scale;
  Eigen::MatrixXd y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

BceResult bce_loss(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
  if (p.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "bce_loss");
  if (p.size() == 0) return {0.0, Eigen::VectorXd()};
  const double n = static_cast<double>(p.size());
  BceResult r;
  r.grad.resize(p.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double raw = p(i);
    const double q = std::clamp(raw, kBceEpsilon, 1.0 - kBceEpsilon);
    total += y(i) * std::log(q) + (1.0 - y(i)) * std::log(1.0 - q);
    const bool clipped = raw < kBceEpsilon || raw > 1.0 - kBceEpsilon;
    r.grad(i) = clipped ? 0.0 : -(y(i) / q - (1.0 - y(i)) / (1.0 - q)) / n;
  }
  r.loss = -total / n;
  return r;
}

OptimizerState OptimizerState::make(OptimizerKind kind) {
  OptimizerState s;
  s.kind = kind;
  s.learning_rate = kind == OptimizerKind::Sgd ? 0.01 : 0.001;
  return s;
}

void optimizer_step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
                    OptimizerState& s) {
  if (params.size() != grads.size()) throw Error(ErrorKind::ShapeMismatch, "optimizer_step: array counts");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols())
      throw Error(ErrorKind::ShapeMismatch, "optimizer_step: array " + std::to_string(i));
  if (s.kind != OptimizerKind::Sgd && s.v.size() != params.size()) {
    s.v.clear();
    s.m.clear();
    for (const auto& p : params) {
      s.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      if (s.kind == OptimizerKind::Adam) s.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  ++s.step;
  switch (s.kind) {
    case OptimizerKind::Sgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= s.learning_rate * grads[i];
      break;
    case OptimizerKind::RmsProp:
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.v[i] = s.rho * s.v[i] + (1.0 - s.rho) * grads[i].cwiseAbs2();
        params[i].array() -= s.learning_rate * grads[i].array() / (s.v[i].array() + s.epsilon).sqrt();
      }
      break;
    case OptimizerKind::Adam: {
      const double t = static_cast<double>(s.step);
      const double c1 = 1.0 - std::pow(s.beta1, t);
      const double c2 = 1.0 - std::pow(s.beta2, t);
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i].cwiseAbs2();
        params[i].array() -= s.learning_rate * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.epsilon);
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------

void NetworkSpec::validate() const {
  if (input_width < 1) throw Error(ErrorKind::ShapeMismatch, "input width must be positive");
  if (layers.empty() || layers.back().kind != LayerKind::Output)
    throw Error(ErrorKind::ShapeMismatch, "network must end with an Output layer");
  Eigen::Index channels = 1, length = input_width;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::Output && i + 1 != layers.size())
      throw Error(ErrorKind::ShapeMismatch, "Output layer must be last and unique");
    switch (l.kind) {
      case LayerKind::Dense:
        if (l.units < 1) throw Error(ErrorKind::ShapeMismatch, "dense units must be positive");
        channels = 1;
        length = l.units;
        break;
      case LayerKind::Conv1D:
        if (l.units < 1) throw Error(ErrorKind::ShapeMismatch, "conv filters must be positive");
        if (l.kernel_size < 1 || l.kernel_size > length)
          throw Error(ErrorKind::KernelTooLarge,
                      "kernel " + std::to_string(l.kernel_size) + " for length " + std::to_string(length));
        channels = l.units;
        length = length - l.kernel_size + 1;
        break;
      case LayerKind::MaxPool1D:
        if (l.pool_size < 1) throw Error(ErrorKind::InvalidArgument, "pool size must be >= 1");
        length = pooled_length(length, l.pool_size);
        break;
      case LayerKind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) throw Error(ErrorKind::InvalidRate, std::to_string(l.rate));
        break;
      case LayerKind::Flatten:
        length *= channels;
        channels = 1;
        break;
      case LayerKind::Output:
        channels = 1;
        length = 1;
        break;
    }
  }
}

NetworkSpec mlp_spec(int input_width, int hidden, Activation act, double dropout) {
  NetworkSpec s;
  s.input_width = input_width;
  s.layers = {LayerSpec::dense(hidden, act), LayerSpec::dropout(dropout), LayerSpec::output()};
  return s;
}

NetworkSpec cnn_spec(int input_width, int filters, int kernel, int pool, Activation act, double dropout,
                     int dense_units) {
  NetworkSpec s;
  s.input_width = input_width;
  s.layers = {LayerSpec::conv1d(filters, kernel, act), LayerSpec::maxpool1d(pool), LayerSpec::dropout(dropout),
              LayerSpec::flatten(),  LayerSpec::dense(dense_units, act),  LayerSpec::dropout(dropout),
              LayerSpec::output()};
  return s;
}

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;  // input of each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation (dense/conv/output)
  std::vector<Eigen::MatrixXd> outputs;
  std::vector<Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>> argmax;
  std::vector<Eigen::MatrixXd> masks;
};

void Network::plan_layers() {
  spec_.validate();
  plan_.clear();
  Eigen::Index channels = 1, length = spec_.input_width;
  int next_param = 0;
  for (const auto& l : spec_.layers) {
    LayerPlan p;
    p.spec = l;
    p.in_channels = channels;
    p.in_length = length;
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Output:
        channels = 1;
        length = l.units;
        p.weight = next_param++;
        p.bias = next_param++;
        break;
      case LayerKind::Conv1D:
        channels = l.units;
        length = length - l.kernel_size + 1;
        p.weight = next_param++;
        p.bias = next_param++;
        break;
      case LayerKind::MaxPool1D: length = pooled_length(length, l.pool_size); break;
      case LayerKind::Dropout: break;
      case LayerKind::Flatten:
        length *= channels;
        channels = 1;
        break;
    }
    p.out_channels = channels;
    p.out_length = length;
    plan_.push_back(p);
  }
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  plan_layers();
  Rng rng(derive_seed(seed, "init"));
  for (const auto& p : plan_) {
    if (p.weight < 0) continue;
    Eigen::Index rows = 0, cols = 0;
    double fan_in = 0, fan_out = 0;
    if (p.spec.kind == LayerKind::Conv1D) {
      rows = p.spec.units;
      cols = p.in_channels * p.spec.kernel_size;
      fan_in = static_cast<double>(cols);
      fan_out = static_cast<double>(p.spec.units) * p.spec.kernel_size;
    } else {
      rows = p.spec.units;
      cols = p.in_channels * p.in_length;
      fan_in = static_cast<double>(cols);
      fan_out = static_cast<double>(rows);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
    params_.push_back(std::move(w));
    params_.push_back(Eigen::MatrixXd::Zero(rows, 1));
  }
}

Network::Network(NetworkSpec spec, std::vector<Eigen::MatrixXd> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  plan_layers();
  std::size_t expected = 0;
  for (const auto& p : plan_) {
    if (p.weight < 0) continue;
    expected += 2;
    const Eigen::Index cols = p.spec.kind == LayerKind::Conv1D ? p.in_channels * p.spec.kernel_size
                                                               : p.in_channels * p.in_length;
    if (static_cast<std::size_t>(p.bias) >= params_.size() || params_[static_cast<std::size_t>(p.weight)].rows() != p.spec.units ||
        params_[static_cast<std::size_t>(p.weight)].cols() != cols ||
        params_[static_cast<std::size_t>(p.bias)].rows() != p.spec.units ||
        params_[static_cast<std::size_t>(p.bias)].cols() != 1)
      throw Error(ErrorKind::ShapeMismatch, "parameter shapes do not match network spec");
  }
  if (expected != params_.size()) throw Error(ErrorKind::ShapeMismatch, "parameter count does not match network spec");
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x, bool training, Rng* rng, ForwardTrace* trace) const {
  if (x.cols() != spec_.input_width)
    throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(x.cols()) + " columns, network expects " +
                                              std::to_string(spec_.input_width));
  Eigen::MatrixXd a = x;
  for (const auto& p : plan_) {
    if (trace) trace->inputs.push_back(a);
    Eigen::MatrixXd pre;
    switch (p.spec.kind) {
      case LayerKind::Dense:
      case LayerKind::Output:
        pre = dense_forward(a, params_[static_cast<std::size_t>(p.weight)], params_[static_cast<std::size_t>(p.bias)].col(0));
        a = activation_forward(pre, p.spec.activation);
        break;
      case LayerKind::Conv1D:
        pre = conv1d_forward(a, {p.in_channels, p.in_length, p.spec.kernel_size},
                             params_[static_cast<std::size_t>(p.weight)], params_[static_cast<std::size_t>(p.bias)].col(0));
        a = activation_forward(pre, p.spec.activation);
        break;
      case LayerKind::MaxPool1D: {
        auto r = maxpool1d_forward(a, p.in_channels, p.in_length, p.spec.pool_size);
        a = std::move(r.y);
        if (trace) trace->argmax.push_back(std::move(r.argmax));
        break;
      }
      case LayerKind::Dropout: {
        if (training && rng) {
          Eigen::MatrixXd mask;
          a = dropout(a, p.spec.rate, *rng, true, &mask);
          if (trace) trace->masks.push_back(std::move(mask));
        } else if (trace) {
          trace->masks.push_back(Eigen::MatrixXd::Ones(a.rows(), a.cols()));
        }
        break;
      }
      case LayerKind::Flatten: break;
    }
    if (trace) {
      trace->pre.push_back(std::move(pre));
      trace->outputs.push_back(a);
    }
  }
  return a;
}

Eigen::VectorXd Network::predict_proba(const Eigen::MatrixXd& x) const {
  constexpr Eigen::Index kChunk = 4096;
  if (x.rows() <= kChunk) return forward(x, false, nullptr, nullptr).col(0);
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.rows() - start);
    out.segment(start, n) = forward(x.middleRows(start, n), false, nullptr, nullptr).col(0);
  }
  return out;
}

double Network::penalty() const {
  if (spec_.l1 == 0.0 && spec_.l2 == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& p : plan_)
    if (p.weight >= 0) {
      const auto& w = params_[static_cast<std::size_t>(p.weight)];
      s += spec_.l1 * w.cwiseAbs().sum() + spec_.l2 * w.squaredNorm();
    }
  return s;
}

double Network::loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool training, Rng& rng) const {
  const Eigen::VectorXd p = forward(x, training, &rng, nullptr).col(0);
  return bce_loss(p, y).loss + penalty();
}

double Network::loss_and_gradients(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool training, Rng& rng,
                                   std::vector<Eigen::MatrixXd>& grads) const {
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "loss_and_gradients: X and y rows");
  ForwardTrace tr;
  const Eigen::VectorXd p = forward(x, training, &rng, &tr).col(0);
  const auto bce = bce_loss(p, y);

  grads.resize(params_.size());
  Eigen::MatrixXd g = bce.grad;  // d loss / d output, B x 1
  std::size_t pool_i = tr.argmax.size(), mask_i = tr.masks.size();
  for (std::size_t li = plan_.size(); li-- > 0;) {
    const auto& p = plan_[li];
    switch (p.spec.kind) {
      case LayerKind::Dense:
      case LayerKind::Output: {
        g = activation_backward(tr.pre[li], tr.outputs[li], g, p.spec.activation);
        const auto& w = params_[static_cast<std::size_t>(p.weight)];
        auto dg = dense_backward(tr.inputs[li], w, g);
        grads[static_cast<std::size_t>(p.weight)] = std::move(dg.grad_w);
        grads[static_cast<std::size_t>(p.bias)] = std::move(dg.grad_b);
        g = std::move(dg.grad_x);
        break;
      }
      case LayerKind::Conv1D: {
        g = activation_backward(tr.pre[li], tr.outputs[li], g, p.spec.activation);
        const auto& k = params_[static_cast<std::size_t>(p.weight)];
        auto cg = conv1d_backward(tr.inputs[li], {p.in_channels, p.in_length, p.spec.kernel_size}, k, g);
        grads[static_cast<std::size_t>(p.weight)] = std::move(cg.grad_kernels);
        grads[static_cast<std::size_t>(p.bias)] = std::move(cg.grad_bias);
        g = std::move(cg.grad_x);
        break;
      }
      case LayerKind::MaxPool1D:
        g = maxpool1d_backward(g, tr.argmax[--pool_i], p.in_channels * p.in_length);
        break;
      case LayerKind::Dropout: g = g.cwiseProduct(tr.masks[--mask_i]); break;
      case LayerKind::Flatten: break;
    }
  }
  if (spec_.l1 != 0.0 || spec_.l2 != 0.0) {
    for (const auto& p : plan_)
      if (p.weight >= 0) {
        const auto& w = params_[static_cast<std::size_t>(p.weight)];
        grads[static_cast<std::size_t>(p.weight)] += spec_.l1 * w.cwiseSign() + 2.0 * spec_.l2 * w;
      }
  }
  return bce.loss + penalty();
}

double Network::train_epoch(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int batch_size, OptimizerState& opt,
                            Rng& shuffle_rng, Rng& dropout_rng) {
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  shuffle_rng.shuffle(order);
  std::vector<Eigen::MatrixXd> grads;
  double total = 0.0;
  int batches = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(batch_size));
    Eigen::MatrixXd xb(static_cast<Eigen::Index>(n), x.cols());
    Eigen::VectorXd yb(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      xb.row(static_cast<Eigen::Index>(i)) = x.row(order[start + i]);
      yb(static_cast<Eigen::Index>(i)) = y(order[start + i]);
    }
    total += loss_and_gradients(xb, yb, true, dropout_rng, grads);
    optimizer_step(params_, grads, opt);
    ++batches;
  }
  return batches ? total / batches : 0.0;
}

BatchModel Network::as_model() const {
  auto self = std::make_shared<const Network>(*this);
  return [self](const Eigen::MatrixXd& x) { return self->predict_proba(x); };
}

}  // namespace xai::nn
