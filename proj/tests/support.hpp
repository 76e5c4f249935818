#pragma once

#include <doctest.h>

#include <Eigen/Dense>

#include <filesystem>
#include <string>

#include "xai/error.hpp"
#include "xai/rng.hpp"

namespace xai::test {

inline std::filesystem::path data_dir() { return XAI_SOURCE_DIR "/data"; }
inline std::filesystem::path wdbc_path() { return data_dir() / "wdbc.csv"; }

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::path(XAI_BINARY_DIR) / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

}  // namespace xai::test

#define CHECK_ERROR_KIND(expr, k)                 \
  do {                                            \
    bool thrown_ = false;                         \
    try {                                         \
      (void)(expr);                               \
    } catch (const ::xai::Error& e_) {            \
      thrown_ = true;                             \
      CHECK_MESSAGE(e_.kind() == (k), e_.what()); \
    }                                             \
    CHECK_MESSAGE(thrown_, "expected " #k);       \
  } while (0)
