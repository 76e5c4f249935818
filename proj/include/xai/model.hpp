#pragma once

#include <Eigen/Dense>

#include <functional>

namespace xai {

/// A fitted binary classifier seen from outside: rows in, P(class 1) out.
/// Implementations must be safe to call concurrently.
using BatchModel = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

}  // namespace xai
