#include "satlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string_view>

#include "satlab/errors.hpp"

namespace sat {

namespace {

constexpr std::string_view kMagic = "SATCKPT1";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw DataError(DataErrorKind::Truncated, std::string("checkpoint ends inside ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T le(const char* what) {
    auto s = take(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{s[i]} << (8 * i));
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.le<std::uint32_t>(ckpt.version);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, tensor] : ckpt.params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ValueError("checkpoint: parameter name too long");
    if (tensor.rank() > std::numeric_limits<std::uint8_t>::max())
      throw ValueError("checkpoint: rank too large for '" + name + "'");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
    for (auto d : tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) w.f32(static_cast<float>(v));
  }
  const std::string meta = ckpt.metadata.dump();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size())
    throw DataError(DataErrorKind::Truncated, "checkpoint shorter than its magic");
  auto magic = r.take(kMagic.size(), "magic");
  if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0)
    throw DataError(DataErrorKind::BadMagic, "not a SATCKPT1 checkpoint");
  Checkpoint ckpt;
  ckpt.version = r.le<std::uint32_t>("version");
  if (ckpt.version != Checkpoint::kVersion)
    throw DataError(DataErrorKind::BadVersion,
                    "unsupported checkpoint version " + std::to_string(ckpt.version));
  const auto count = r.le<std::uint32_t>("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.le<std::uint16_t>("name length");
    auto name_bytes = r.take(len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.le<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint32_t>("dims");
    if (rank == 0 || numel(shape) == 0)
      throw DataError(DataErrorKind::Format, "entry '" + name + "' has an empty shape");
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = r.f32("tensor data");
    if (!ckpt.params.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw DataError(DataErrorKind::Format, "duplicate entry '" + name + "'");
  }
  const auto meta_len = r.le<std::uint32_t>("metadata length");
  auto meta = r.take(meta_len, "metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(DataErrorKind::Format, std::string("metadata is not JSON: ") + e.what());
  }
  if (!r.done()) throw DataError(DataErrorKind::Format, "trailing bytes after metadata");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrorKind::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

ModelParams round_to_stored_precision(const ModelParams& params) {
  ModelParams out = params;
  for (auto& [_, t] : out)
    for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace sat
