#include "spherecorr/synth.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "spherecorr/rng.hpp"

namespace spherecorr {

using nlohmann::json;

std::array<double, kShBasisSize> sh_basis(const Vec3& s) {
  const double x = s[0], y = s[1], z = s[2];
  return {y,
          z,
          x,
          x * y,
          y * z,
          3 * z * z - 1,
          x * z,
          x * x - y * y,
          y * (3 * x * x - y * y),
          x * y * z,
          y * (5 * z * z - 1),
          z * (5 * z * z - 3),
          x * (5 * z * z - 1),
          z * (x * x - y * y),
          x * (x * x - 3 * y * y)};
}

std::vector<double> SyntheticWorld::features(const Vec3& s) const {
  std::vector<double> out(channels, 0.0);
  auto add = [&](const Vec3& p) {
    const auto b = sh_basis(p);
    std::vector<double> h(channels, 0.0);
    for (std::size_t k = 0; k < kShBasisSize; ++k)
      for (std::size_t c = 0; c < channels; ++c) h[c] += b[k] * weights[k * channels + c];
    return h;
  };
  const auto h = add(s);
  if (!symmetric) return h;
  // h(s) + h(Rs) is bitwise identical to h(Rs) + h(R(Rs)) since addition commutes.
  const auto hr = add(reflect(s));
  for (std::size_t c = 0; c < channels; ++c) out[c] = h[c] + hr[c];
  return out;
}

SyntheticWorld generate_world(std::size_t channels, std::uint64_t seed, bool symmetric,
                              std::size_t keypoint_count) {
  if (channels < 4) throw std::invalid_argument("generate_world: need at least 4 channels");
  SyntheticWorld w;
  w.channels = channels;
  w.seed = seed;
  w.symmetric = symmetric;
  Rng rng(Rng::mix(seed, 1));
  w.weights.resize(kShBasisSize * channels);
  for (double& v : w.weights) v = rng.normal();
  // Keypoints away from the mirror plane (so a keypoint and its mirror are
  // distinct), away from the poles (so side views see them), and apart
  // from each other.
  std::size_t attempts = 0;
  while (w.keypoints.size() < keypoint_count) {
    if (++attempts > 1000000) throw std::runtime_error("generate_world: cannot place keypoints");
    Vec3 p{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(p);
    if (n < 1e-12) continue;
    p = {p[0] / n, p[1] / n, p[2] / n};
    if (std::abs(p[0]) < 0.3 || std::abs(p[2]) > 0.8) continue;
    bool ok = true;
    for (const auto& q : w.keypoints) ok &= dot(p, q.p) < 0.95;
    if (!ok) continue;
    char name[16];
    std::snprintf(name, sizeof name, "kp%02zu", w.keypoints.size());
    w.keypoints.push_back({name, p});
  }
  return w;
}

std::vector<double> view_azimuths(std::size_t n, double offset) {
  std::vector<double> a(n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) a[i] = std::fmod(offset + two_pi * static_cast<double>(i) / n, two_pi);
  return a;
}

PixelCoord project(const Vec3& p, double azimuth, std::size_t height, std::size_t width, double radius) {
  const Vec3 right{-std::sin(azimuth), std::cos(azimuth), 0.0};
  const double u = dot(p, right) * radius;
  const double w = p[2] * radius;
  return {(u + 1.0) / 2.0 * width - 0.5, (1.0 - w) / 2.0 * height - 0.5};
}

RenderedView render_view(const SyntheticWorld& world, double azimuth, std::size_t height,
                         std::size_t width, const RenderOptions& opt) {
  if (height < 8 || width < 8) throw std::invalid_argument("render_view: image must be at least 8x8");
  const std::size_t C = world.channels;
  const Vec3 v{std::cos(azimuth), std::sin(azimuth), 0.0};
  const Vec3 right{-std::sin(azimuth), std::cos(azimuth), 0.0};
  const Vec3 up{0.0, 0.0, 1.0};

  RenderedView out;
  out.azimuth = azimuth;
  DenseFeatureMap& f = out.features;
  f.height = height;
  f.width = width;
  f.channels = C;
  f.data.assign(height * width * C, 0.0f);
  f.mask.assign(height * width, 0);
  f.viewpoint_bin = azimuth_bin(azimuth, opt.bins);
  out.surface.assign(height * width * 3, 0.0);

  std::vector<double> fg(height * width * C, 0.0);
  double energy = 0.0;
  std::size_t nfg = 0;
  for (std::size_t i = 0; i < height; ++i) {
    const double row = (2.0 * i + 1.0 - height) / height;
    for (std::size_t j = 0; j < width; ++j) {
      const double col = (2.0 * j + 1.0 - width) / width;
      const double u = col / opt.radius, w = -row / opt.radius;
      const double rr = u * u + w * w;
      if (rr > 1.0) continue;
      const double n = std::sqrt(std::max(0.0, 1.0 - rr));
      const Vec3 s{u * right[0] + w * up[0] + n * v[0], u * right[1] + w * up[1] + n * v[1],
                   u * right[2] + w * up[2] + n * v[2]};
      const std::size_t idx = i * width + j;
      f.mask[idx] = 1;
      for (int k = 0; k < 3; ++k) out.surface[3 * idx + k] = s[k];
      const auto g = world.features(s);
      for (std::size_t c = 0; c < C; ++c) {
        fg[idx * C + c] = g[c];
        energy += g[c] * g[c];
      }
      ++nfg;
    }
  }
  // Background: Gaussian noise at the foreground's per-channel energy.
  const double sigma = nfg ? std::sqrt(energy / (static_cast<double>(nfg) * C)) : 1.0;
  Rng noise(Rng::mix(world.seed, std::bit_cast<std::uint64_t>(azimuth)));
  for (std::size_t idx = 0; idx < height * width; ++idx)
    for (std::size_t c = 0; c < C; ++c) {
      const double nv = noise.normal() * sigma;
      f.data[idx * C + c] = static_cast<float>(f.mask[idx] ? fg[idx * C + c] : nv);
    }

  const double x0 = (1.0 - opt.radius) / 2.0 * width, x1 = (1.0 + opt.radius) / 2.0 * width;
  const double y0 = (1.0 - opt.radius) / 2.0 * height, y1 = (1.0 + opt.radius) / 2.0 * height;
  out.ann.bbox = {x0 - 0.5, y0 - 0.5, x1 - 0.5, y1 - 0.5};
  for (const auto& kp : world.keypoints) {
    auto place = [&](const Vec3& p) -> std::optional<PixelCoord> {
      if (dot(p, v) <= opt.visibility_margin) return std::nullopt;
      return project(p, azimuth, height, width, opt.radius);
    };
    out.ann.keypoints[kp.name] = place(kp.p);
    out.mirror_keypoints[kp.name] = place(reflect(kp.p));
  }
  return out;
}

SynthDataset make_synthetic_dataset(const SynthOptions& opt) {
  if (opt.views < 1) throw std::invalid_argument("synth: need at least one view");
  SynthDataset sd;
  sd.world = generate_world(opt.channels, opt.seed, opt.symmetric, opt.keypoints);
  double offset = opt.offset;
  if (offset < 0.0) {
    Rng r(Rng::mix(opt.seed, 2));
    offset = r.uniform(0.0, 2.0 * std::numbers::pi);
  }
  sd.world.azimuths = view_azimuths(opt.views, offset);
  RenderOptions ro = opt.render;
  ro.bins = opt.bins;
  Dataset& ds = sd.dataset;
  ds.bins = opt.bins;
  ds.categories = {opt.category};
  for (std::size_t i = 0; i < opt.views; ++i) {
    RenderedView rv = render_view(sd.world, sd.world.azimuths[i], opt.height, opt.width, ro);
    char id[32];
    std::snprintf(id, sizeof id, "view_%03zu", i);
    rv.features.image_id = id;
    rv.features.category = opt.category;
    ImageRecord rec;
    rec.id = id;
    rec.category = opt.category;
    rec.features = std::string("features/") + id + ".scfm";
    rec.viewpoint_bin = rv.features.viewpoint_bin;
    rec.azimuth = rv.azimuth;
    rec.ann = rv.ann;
    rec.mirror_keypoints = rv.mirror_keypoints;
    ds.images.push_back(std::move(rec));
    sd.views.push_back(std::move(rv));
  }
  ds.source = {{"generator", "spherecorr synth"},
               {"seed", opt.seed},
               {"symmetric", opt.symmetric},
               {"views", opt.views},
               {"height", opt.height},
               {"width", opt.width},
               {"channels", opt.channels},
               {"keypoints", opt.keypoints},
               {"radius", ro.radius},
               {"visibility_margin", ro.visibility_margin},
               {"offset", offset}};
  return sd;
}

json world_to_json(const SyntheticWorld& w) {
  json kps = json::array();
  for (const auto& k : w.keypoints) kps.push_back({{"name", k.name}, {"p", {k.p[0], k.p[1], k.p[2]}}});
  return {{"channels", w.channels}, {"seed", w.seed},       {"symmetric", w.symmetric},
          {"weights", w.weights},   {"keypoints", kps},     {"azimuths", w.azimuths}};
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

json build_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files) {
  std::vector<std::string> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  json list = json::array();
  for (const auto& f : sorted) {
    const auto bytes = read_file_bytes(dir / f);
    list.push_back({{"path", f}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
  }
  return {{"files", list}};
}

void write_synthetic_dataset(const SynthDataset& sd, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  std::vector<std::string> files;
  for (std::size_t i = 0; i < sd.views.size(); ++i) {
    const auto& rec = sd.dataset.images[i];
    write_feature_map(sd.views[i].features, dir / rec.features);
    files.push_back(rec.features);
  }
  save_annotations(sd.dataset, dir / "annotations.json");
  files.push_back("annotations.json");
  {
    std::ofstream out(dir / "world.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "world.json").string());
    out << world_to_json(sd.world).dump(1) << "\n";
  }
  files.push_back("world.json");
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest");
  out << build_manifest(dir, files).dump(1) << "\n";
}

}  // namespace spherecorr
