#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xai/error.hpp"
#include "xai/model.hpp"
#include "xai/rng.hpp"

namespace xai::nn {

enum class Activation { Relu, Tanh, Sigmoid, Linear };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

// ---------------------------------------------------------------------------
// Elementwise activations. relu'(0) is taken as 0.

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> activation_forward(
    const Eigen::MatrixBase<Derived>& x, Activation kind) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case Activation::Relu: return x.array().max(Scalar(0)).matrix();
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::Sigmoid: return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
    case Activation::Linear: return x;
  }
  return x;
}

/// Gradient w.r.t. the pre-activation, given the pre-activation `x`, the
/// activation output `y` and the upstream gradient.
template <typename DX, typename DY, typename DG>
Eigen::Matrix<typename DX::Scalar, Eigen::Dynamic, Eigen::Dynamic> activation_backward(
    const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DG>& grad_y,
    Activation kind) {
  using Scalar = typename DX::Scalar;
  switch (kind) {
    case Activation::Relu: return (grad_y.array() * (x.array() > Scalar(0)).template cast<Scalar>()).matrix();
    case Activation::Tanh: return (grad_y.array() * (Scalar(1) - y.array().square())).matrix();
    case Activation::Sigmoid: return (grad_y.array() * y.array() * (Scalar(1) - y.array())).matrix();
    case Activation::Linear: return grad_y;
  }
  return grad_y;
}

// ---------------------------------------------------------------------------
// Layer kernels. Batches are row-major in the sense of one sample per row;
// convolutional activations are flattened channel-major (c * length + t).

/// y = x W^T + b, with W stored out x in.
Eigen::MatrixXd dense_forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& b);

struct DenseGrads {
  Eigen::MatrixXd grad_x;
  Eigen::MatrixXd grad_w;
  Eigen::VectorXd grad_b;
};
DenseGrads dense_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& grad_y);

struct ConvShape {
  Eigen::Index channels = 1;
  Eigen::Index length = 0;
  Eigen::Index kernel = 1;
  Eigen::Index out_length() const { return length - kernel + 1; }
};

/// Valid cross-correlation summed over input channels, plus per-filter bias.
/// `kernels` is filters x (channels * kernel), channel-major per row.
Eigen::MatrixXd conv1d_forward(const Eigen::MatrixXd& x, const ConvShape& shape, const Eigen::MatrixXd& kernels,
                               const Eigen::VectorXd& bias);

struct ConvGrads {
  Eigen::MatrixXd grad_x;
  Eigen::MatrixXd grad_kernels;
  Eigen::VectorXd grad_bias;
};
ConvGrads conv1d_backward(const Eigen::MatrixXd& x, const ConvShape& shape, const Eigen::MatrixXd& kernels,
                          const Eigen::MatrixXd& grad_y);

/// Output length of non-overlapping pooling; a short trailing window is kept.
constexpr Eigen::Index pooled_length(Eigen::Index length, Eigen::Index pool) { return (length + pool - 1) / pool; }

struct PoolResult {
  Eigen::MatrixXd y;
  // Input column feeding each output element, same shape as y.
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax;
};
/// Max over windows of `pool` with stride `pool`; earliest index wins ties.
PoolResult maxpool1d_forward(const Eigen::MatrixXd& x, Eigen::Index channels, Eigen::Index length, Eigen::Index pool);
Eigen::MatrixXd maxpool1d_backward(const Eigen::MatrixXd& grad_y,
                                   const Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>& argmax,
                                   Eigen::Index input_cols);

/// Inverted dropout with drop rate p: training zeroes each entry with
/// probability p and scales survivors by 1/(1-p); inference is the identity.
/// Mask entries are drawn sample by sample, column by column. When `mask` is
/// given it receives the multiplier applied to each entry.
Eigen::MatrixXd dropout(const Eigen::MatrixXd& x, double p, Rng& rng, bool training, Eigen::MatrixXd* mask = nullptr);

inline constexpr double kBceEpsilon = 1e-12;

struct BceResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d p
};
/// -mean(y ln p + (1-y) ln(1-p)) with p clipped to [eps, 1-eps]; the gradient
/// is zero where clipping was active.
BceResult bce_loss(const Eigen::VectorXd& p, const Eigen::VectorXd& y);

// ---------------------------------------------------------------------------
// Optimisers

enum class OptimizerKind { Sgd, Adam, RmsProp };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rho = 0.9;
  std::int64_t step = 0;
  std::vector<Eigen::MatrixXd> m;  // first moment (adam)
  std::vector<Eigen::MatrixXd> v;  // second moment (adam, rmsprop)

  /// Defaults: adam/rmsprop lr 1e-3, sgd lr 1e-2.
  static OptimizerState make(OptimizerKind kind);
};

/// One update of every parameter array. Accumulators are created on first use
/// with the shapes of `params`.
void optimizer_step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
                    OptimizerState& state);

// ---------------------------------------------------------------------------
// Networks

enum class LayerKind { Dense, Conv1D, MaxPool1D, Dropout, Flatten, Output };

std::string to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int units = 0;        // Dense units, Conv1D filters
  int kernel_size = 0;  // Conv1D
  int pool_size = 0;    // MaxPool1D
  double rate = 0.0;    // Dropout
  Activation activation = Activation::Linear;

  static LayerSpec dense(int units, Activation a) { return {LayerKind::Dense, units, 0, 0, 0.0, a}; }
  static LayerSpec conv1d(int filters, int kernel, Activation a) { return {LayerKind::Conv1D, filters, kernel, 0, 0.0, a}; }
  static LayerSpec maxpool1d(int pool) { return {LayerKind::MaxPool1D, 0, 0, pool, 0.0, Activation::Linear}; }
  static LayerSpec dropout(double p) { return {LayerKind::Dropout, 0, 0, 0, p, Activation::Linear}; }
  static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 0, 0.0, Activation::Linear}; }
  static LayerSpec output() { return {LayerKind::Output, 1, 0, 0, 0.0, Activation::Sigmoid}; }

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  int input_width = 0;
  std::vector<LayerSpec> layers;
  double l1 = 0.0;  // penalties on dense/conv/output weights, off by default
  double l2 = 0.0;

  /// Throws ShapeMismatch / KernelTooLarge / InvalidRate on an inconsistent
  /// chain or when the last layer is not the single Output layer.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// Dense(hidden, act) -> Dropout(p) -> Output.
NetworkSpec mlp_spec(int input_width, int hidden, Activation act, double dropout);
/// Conv1D(filters, kernel, act) -> MaxPool1D(pool) -> Dropout(p) -> Flatten ->
/// Dense(dense_units, act) -> Dropout(p) -> Output. Features form one channel.
NetworkSpec cnn_spec(int input_width, int filters, int kernel, int pool, Activation act, double dropout,
                     int dense_units = 64);

struct ForwardTrace;

class Network {
 public:
  Network() = default;
  /// Glorot-uniform weights from `seed`, zero biases.
  Network(NetworkSpec spec, std::uint64_t seed);
  /// Adopts given parameters (checkpoint load). Shapes are validated.
  Network(NetworkSpec spec, std::vector<Eigen::MatrixXd> params);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Eigen::MatrixXd>& parameters() { return params_; }
  const std::vector<Eigen::MatrixXd>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Inference pass (dropout off). Thread-safe.
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const;

  /// Loss (BCE plus optional penalties) and exact gradients for one batch.
  /// `rng` drives dropout masks when `training` is set.
  double loss_and_gradients(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool training, Rng& rng,
                            std::vector<Eigen::MatrixXd>& grads) const;

  /// Loss only, same conventions as loss_and_gradients.
  double loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool training, Rng& rng) const;

  /// One mini-batch epoch over shuffled rows; returns the mean batch loss.
  double train_epoch(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int batch_size, OptimizerState& opt,
                     Rng& shuffle_rng, Rng& dropout_rng);

  BatchModel as_model() const;

 private:
  struct LayerPlan {
    LayerSpec spec;
    Eigen::Index in_channels = 1, in_length = 0;
    Eigen::Index out_channels = 1, out_length = 0;
    int weight = -1;  // index into params_
    int bias = -1;
  };

  void plan_layers();
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training, Rng* rng, ForwardTrace* trace) const;
  double penalty() const;

  NetworkSpec spec_;
  std::vector<LayerPlan> plan_;
  std::vector<Eigen::MatrixXd> params_;
};

}  // namespace xai::nn
