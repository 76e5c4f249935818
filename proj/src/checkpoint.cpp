#include "xai/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "xai/error.hpp"
#include "xai/io.hpp"
#include "xai/rng.hpp"

namespace xai {

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
      bits = std::bit_cast<std::uint64_t>(v);
    } else {
      bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void raw(std::string_view s) { out_ += s; }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > in_.size()) throw Error(ErrorKind::ChecksumMismatch, "checkpoint truncated");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "LTCK";
// magic + version byte + checksum
constexpr std::size_t kMinSize = 4 + 1 + 8;

}  // namespace

std::string encode_checkpoint(const nn::Network& net, std::uint8_t model_kind) {
  Writer w;
  w.raw(kMagic);
  w.put<std::uint8_t>(kCheckpointVersion);
  w.put<std::uint8_t>(model_kind);
  const auto& spec = net.spec();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.input_width));
  w.put<double>(spec.l1);
  w.put<double>(spec.l2);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
    w.put<std::int32_t>(l.units);
    w.put<std::int32_t>(l.kernel_size);
    w.put<std::int32_t>(l.pool_size);
    w.put<double>(l.rate);
  }
  const auto& params = net.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.cols()));
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) w.put<double>(p(r, c));
  }
  w.put<std::uint64_t>(fnv1a64(w.str()));
  return std::move(w.str());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::string_view(bytes).substr(0, 4) != kMagic)
    throw Error(ErrorKind::ChecksumMismatch, "not a checkpoint (bad magic)");
  if (bytes.size() < kMinSize) throw Error(ErrorKind::ChecksumMismatch, "checkpoint truncated");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  const std::string_view body = std::string_view(bytes).substr(0, bytes.size() - 8);
  Reader tail(std::string_view(bytes).substr(bytes.size() - 8));
  if (tail.get<std::uint64_t>() != fnv1a64(body)) throw Error(ErrorKind::ChecksumMismatch, "checkpoint checksum");

  Reader r(body);
  for (int i = 0; i < 5; ++i) r.get<std::uint8_t>();  // magic + version
  Checkpoint ck;
  ck.model_kind = r.get<std::uint8_t>();
  nn::NetworkSpec spec;
  spec.input_width = static_cast<int>(r.get<std::uint32_t>());
  spec.l1 = r.get<double>();
  spec.l2 = r.get<double>();
  const auto n_layers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    nn::LayerSpec l;
    const auto kind = r.get<std::uint8_t>();
    const auto act = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(nn::LayerKind::Output) || act > static_cast<std::uint8_t>(nn::Activation::Linear))
      throw Error(ErrorKind::ShapeMismatch, "checkpoint layer tag out of range");
    l.kind = static_cast<nn::LayerKind>(kind);
    l.activation = static_cast<nn::Activation>(act);
    l.units = r.get<std::int32_t>();
    l.kernel_size = r.get<std::int32_t>();
    l.pool_size = r.get<std::int32_t>();
    l.rate = r.get<double>();
    spec.layers.push_back(l);
  }
  const auto n_arrays = r.get<std::uint32_t>();
  std::vector<Eigen::MatrixXd> params;
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > body.size() - r.pos())
      throw Error(ErrorKind::ShapeMismatch, "checkpoint array larger than file");
    Eigen::MatrixXd p(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a)
      for (std::uint32_t b = 0; b < cols; ++b) p(a, b) = r.get<double>();
    params.push_back(std::move(p));
  }
  if (r.pos() != body.size()) throw Error(ErrorKind::ShapeMismatch, "trailing bytes in checkpoint");
  ck.network = nn::Network(std::move(spec), std::move(params));
  return ck;
}

void save_checkpoint(const nn::Network& net, std::uint8_t model_kind, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(net, model_kind));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace xai
