#include "spherecorr/features.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "spherecorr/bytes.hpp"

namespace spherecorr {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'F', 'M'};
// Upper bound on any one extent and on the element count; guards size
// arithmetic against hostile headers.
constexpr std::uint64_t kMaxExtent = 1u << 20;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void check_dims(std::uint64_t h, std::uint64_t w, std::uint64_t c) {
  if (h == 0 || w == 0 || c == 0) throw std::invalid_argument("feature map: zero dimension");
  if (h > kMaxExtent || w > kMaxExtent || c > kMaxExtent || h * w * c > kMaxElements)
    throw std::invalid_argument("feature map: dimension overflow");
}

}  // namespace

std::size_t DenseFeatureMap::mask_count() const {
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += m != 0;
  return n;
}

Tensor DenseFeatureMap::as_tensor() const {
  std::vector<double> d(data.begin(), data.end());
  return Tensor({pixels(), channels}, std::move(d));
}

void DenseFeatureMap::validate() const {
  check_dims(height, width, channels);
  if (data.size() != height * width * channels)
    throw std::invalid_argument("feature map: payload size does not match H*W*C");
  for (float v : data)
    if (!std::isfinite(v)) throw std::invalid_argument("feature map: non-finite value");
  if (!mask.empty()) {
    if (mask.size() != height * width) throw std::invalid_argument("feature map: mask size does not match H*W");
    for (std::uint8_t m : mask)
      if (m > 1) throw std::invalid_argument("feature map: mask values must be 0 or 1");
  }
}

std::vector<std::uint8_t> encode_feature_map(const DenseFeatureMap& map) {
  map.validate();
  bytes::Writer w;
  w.raw(kMagic, 4);
  w.u32(kFeatureMapVersion);
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  w.u32(static_cast<std::uint32_t>(map.channels));
  w.u8(map.has_mask() ? 1 : 0);
  w.buffer().reserve(w.buffer().size() + 4 * map.data.size() + map.mask.size());
  for (float v : map.data) w.f32(v);
  if (map.has_mask()) w.raw(map.mask.data(), map.mask.size());
  return std::move(w.buffer());
}

DenseFeatureMap decode_feature_map(const std::vector<std::uint8_t>& buf) {
  bytes::Reader r(buf.data(), buf.size(), "feature map");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("feature map: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFeatureMapVersion)
    throw std::runtime_error("feature map: unsupported version " + std::to_string(version));
  DenseFeatureMap m;
  const std::uint64_t h = r.u32(), w = r.u32(), c = r.u32();
  check_dims(h, w, c);
  m.height = h;
  m.width = w;
  m.channels = c;
  const std::uint8_t flag = r.u8();
  if (flag > 1) throw std::runtime_error("feature map: bad mask flag");
  const std::size_t n = h * w * c;
  r.need(4 * n);
  m.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.data[i] = r.f32();
  if (flag == 1) {
    if (r.remaining() < h * w) throw std::runtime_error("feature map: mask flag set but mask truncated");
    m.mask.resize(h * w);
    r.raw(m.mask.data(), h * w);
  }
  if (r.remaining() != 0) throw std::runtime_error("feature map: trailing bytes");
  m.validate();
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_feature_map(const DenseFeatureMap& map, const std::filesystem::path& path) {
  write_file_bytes(path, encode_feature_map(map));
}

DenseFeatureMap read_feature_map(const std::filesystem::path& path) {
  return decode_feature_map(read_file_bytes(path));
}

}  // namespace spherecorr
