#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xai/nn.hpp"
#include "xai/tune.hpp"

namespace xai {

/// Binary model container:
///
///   "LTCK"            4 bytes magic
///   version           u8 (currently 1)
///   model kind        u8 (0 mlp, 1 cnn, 255 other)
///   input width       u32
///   l1, l2            f64, f64
///   layer count       u32, then per layer:
///                       kind u8, activation u8, units i32, kernel i32, pool i32, rate f64
///   array count       u32, then per array (declared layer order, weight then bias):
///                       rows u32, cols u32, rows*cols f64 in row-major order
///   checksum          u64 FNV-1a of every preceding byte
///
/// All integers and doubles little-endian.
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint8_t model_kind = 255;
  nn::Network network;
};

std::string encode_checkpoint(const nn::Network& net, std::uint8_t model_kind);
/// Throws ChecksumMismatch (including truncation), VersionMismatch or
/// ShapeMismatch.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const nn::Network& net, std::uint8_t model_kind, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline std::uint8_t checkpoint_kind(ModelKind k) { return k == ModelKind::Mlp ? 0 : 1; }

}  // namespace xai
