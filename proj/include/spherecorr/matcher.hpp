#pragma once

// Correspondence inference from feature maps and sphere maps. Distances are
// cosine distances Gamma = 1 - cos; a zero-norm vector has cosine 0 with
// everything. Argmin/argmax ties go to the first pixel in row-major order.

#include <cstdint>
#include <string>
#include <vector>

#include "spherecorr/features.hpp"
#include "spherecorr/geometry.hpp"

namespace spherecorr {

inline constexpr double kDefaultAlpha = 0.2;

struct MatchQuery {
  std::string source;
  std::string target;
  PixelCoord q;  // pixel in the source grid
};

// Row-major pixel index of a (possibly fractional) location, rounded to the
// nearest pixel centre. Throws when outside the grid.
std::size_t pixel_index(PixelCoord q, std::size_t height, std::size_t width);

// Per-pixel unit rows of a feature map (pixels x channels).
struct UnitFeatures {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<double> rows;
};
UnitFeatures unit_features(const DenseFeatureMap& f);

// Unit rows of a sphere map.
SphereMap unit_sphere(const SphereMap& s);

// Bilinear resampling (pixel-centre aligned) followed by renormalization.
SphereMap resample_sphere(const SphereMap& s, std::size_t height, std::size_t width);

// argmin over target pixels of Gamma(src[q], tgt[p]). Only pixels with
// mask != 0 compete when a mask is given; throws when it selects nothing.
std::size_t match_sphere_only(const SphereMap& source, std::size_t q, const SphereMap& target,
                              const std::vector<std::uint8_t>* target_mask = nullptr);

// argmin of (1 - alpha) Gamma_feat + alpha Gamma_sphere. Sphere maps are
// resampled to the feature grids when their sizes differ.
std::size_t match_combined(const DenseFeatureMap& source_feat, const SphereMap& source_sphere, std::size_t q,
                           const DenseFeatureMap& target_feat, const SphereMap& target_sphere,
                           double alpha = kDefaultAlpha);

struct SimilarityVolume {
  std::size_t height = 0, width = 0;
  double alpha = kDefaultAlpha;
  std::vector<double> score;    // (1 - alpha)(1 - Gamma_feat) + alpha (1 - Gamma_sphere)
  std::vector<double> feature;  // 1 - Gamma_feat
  std::vector<double> sphere;   // 1 - Gamma_sphere

  std::size_t argmax() const;
};

SimilarityVolume similarity_volume(const DenseFeatureMap& source_feat, const SphereMap& source_sphere, std::size_t q,
                                   const DenseFeatureMap& target_feat, const SphereMap& target_sphere,
                                   double alpha = kDefaultAlpha);

// Same computations on prepared unit rows, for repeated queries. Sphere
// maps must already be on the feature grids.
std::size_t match_combined(const UnitFeatures& sf, const SphereMap& ss, std::size_t q, const UnitFeatures& tf,
                           const SphereMap& ts, double alpha);
SimilarityVolume similarity_volume(const UnitFeatures& sf, const SphereMap& ss, std::size_t q,
                                   const UnitFeatures& tf, const SphereMap& ts, double alpha);

// Nearest neighbour by feature cosine alone.
std::size_t match_feature_only(const UnitFeatures& sf, std::size_t q, const UnitFeatures& tf);

}  // namespace spherecorr
