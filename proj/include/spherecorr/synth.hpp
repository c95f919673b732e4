#pragma once

// Synthetic objects with a known sphere-to-feature function. The object is
// the unit sphere itself; its feature at surface point s is a random
// mixture of real spherical harmonics of degree 1..3. Symmetric worlds add
// the mixture at the reflected point (-s0, s1, s2), so left and right
// halves carry identical features.
//
// Views are orthographic, looking at the origin from azimuth theta in the
// xy-plane with z up. For camera direction v = (cos t, sin t, 0) the image
// column axis is r = (-sin t, cos t, 0) and rows run along -z.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spherecorr/annotations.hpp"
#include "spherecorr/features.hpp"
#include "spherecorr/geometry.hpp"

namespace spherecorr {

inline constexpr std::size_t kShBasisSize = 15;

struct NamedPoint {
  std::string name;
  Vec3 p;
};

struct SyntheticWorld {
  std::size_t channels = 0;
  std::uint64_t seed = 0;
  bool symmetric = false;
  std::vector<double> weights;  // kShBasisSize x channels
  std::vector<NamedPoint> keypoints;
  std::vector<double> azimuths;

  std::vector<double> features(const Vec3& s) const;
};

// Real spherical harmonics (unnormalized) of degree 1..3 at s.
std::array<double, kShBasisSize> sh_basis(const Vec3& s);

inline Vec3 reflect(const Vec3& s) { return {-s[0], s[1], s[2]}; }

SyntheticWorld generate_world(std::size_t channels, std::uint64_t seed, bool symmetric,
                              std::size_t keypoint_count);

// n azimuths spaced 2 pi / n apart, starting at offset.
std::vector<double> view_azimuths(std::size_t n, double offset);

struct RenderOptions {
  double radius = 0.875;           // disk radius as a fraction of the half-width
  double visibility_margin = 0.1;  // keypoint visible iff k . v > margin
  int bins = 8;
};

struct RenderedView {
  DenseFeatureMap features;
  KeypointAnnotation ann;
  KeypointMap mirror_keypoints;
  std::vector<double> surface;  // H*W*3 true surface points, zero off the object
  double azimuth = 0.0;
};

RenderedView render_view(const SyntheticWorld& world, double azimuth, std::size_t height,
                         std::size_t width, const RenderOptions& opt = {});

// Pixel position of a sphere point seen from the given azimuth.
PixelCoord project(const Vec3& p, double azimuth, std::size_t height, std::size_t width,
                   double radius);

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t views = 16;
  bool symmetric = true;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 16;
  std::size_t keypoints = 12;
  int bins = 8;
  std::string category = "synthetic";
  double offset = -1.0;  // azimuth of the first view; negative draws it from the seed
  RenderOptions render;
};

// Builds the dataset in memory (features attached to each record id).
struct SynthDataset {
  SyntheticWorld world;
  Dataset dataset;
  std::vector<RenderedView> views;
};

SynthDataset make_synthetic_dataset(const SynthOptions& opt);

// Writes features/*.scfm, annotations.json, world.json and manifest.json.
void write_synthetic_dataset(const SynthDataset& sd, const std::filesystem::path& dir);

nlohmann::json world_to_json(const SyntheticWorld& w);

// SHA-256 of a byte buffer / file, lowercase hex.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

// Manifest of files below dir (paths relative to dir, sorted).
nlohmann::json build_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files);

}  // namespace spherecorr
