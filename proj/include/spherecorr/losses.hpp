#pragma once

// Training losses. Each loss exists as a graph builder (used by the trainer
// and checked against finite differences) and as a plain function on
// concrete maps. Sphere points are compared with the cosine distance, so
// the losses are defined for any nonzero 3-vectors, not only unit ones.

#include <cstdint>
#include <optional>
#include <vector>

#include "spherecorr/autodiff.hpp"
#include "spherecorr/features.hpp"
#include "spherecorr/geometry.hpp"
#include "spherecorr/models.hpp"
#include "spherecorr/rng.hpp"

namespace spherecorr {

struct LossWeights {
  double rd = 0.3;
  double o = 0.3;
  double vp = 0.1;
  double margin = 0.5;         // delta
  double det_threshold = 0.7;  // d_tau
};

// Pixel indices (row-major into the H x W grid) of a sampled triplet.
// positive is the non-anchor pixel closer to the anchor in the image.
struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

inline PixelCoord pixel_of(std::size_t idx, std::size_t width) {
  return {static_cast<double>(idx % width), static_cast<double>(idx / width)};
}

// T triplets of distinct foreground pixels. Throws with fewer than 3.
std::vector<Triplet> sample_triplets(const std::vector<std::uint8_t>& mask, std::size_t width,
                                     std::size_t count, Rng& rng);

struct LossComponents {
  double rec = 0.0;
  double rd = 0.0;
  double o = 0.0;
  double vp = 0.0;
};

// L_rec + w.rd L_rd + w.o L_o + w.vp L_vp. Throws on a non-finite term.
double total_loss(const LossComponents& c, const LossWeights& w);

// ---- graph builders ------------------------------------------------------

struct GraphLoss {
  Var value;               // 1 x 1
  bool degenerate = false; // nothing contributed; value is a constant 0
  std::size_t contributing = 0;
  std::size_t skipped = 0; // degenerate sphere triplets (orientation)
};

// features: N x C, sphere: N x 3 (the mapper output), mask over the N
// pixels. Mean over all N pixels of mask * Gamma(phi, S_Z(f_S)).
GraphLoss reconstruction_loss(Graph& g, Var features, Var sphere, const std::vector<std::uint8_t>& mask,
                              const PrototypeParams& proto, const BoundParams& proto_vars,
                              std::size_t category);

// Masked mean direction of an N x 3 sphere map, as a 1 x 3 node.
Var mean_direction(Graph& g, Var sphere, const std::vector<std::uint8_t>& mask);

// Mean over unordered pairs of (v_i . v_j - mu_i . mu_j)^2. mus are 1 x 3.
Var viewpoint_loss(Graph& g, const std::vector<Var>& mus, const std::vector<Vec3>& viewpoints);

GraphLoss relative_distance_loss(Graph& g, Var sphere, const std::vector<Triplet>& triplets,
                                 std::size_t width, double margin);

GraphLoss orientation_loss(Graph& g, Var sphere, const std::vector<Triplet>& triplets, std::size_t width,
                           double det_threshold);

// ---- plain evaluations ---------------------------------------------------

struct LossValue {
  double value = 0.0;
  bool degenerate = false;
  std::size_t contributing = 0;
  std::size_t skipped = 0;
};

LossValue reconstruction_loss(const DenseFeatureMap& features, const SphereMap& sphere,
                              const PrototypeParams& proto, const std::vector<std::uint8_t>& mask,
                              std::size_t category);

struct ViewpointSample {
  const SphereMap* sphere;
  Vec3 viewpoint;
  const std::vector<std::uint8_t>* mask;  // may be null
};
double viewpoint_loss(const std::vector<ViewpointSample>& images);

double relative_distance_loss(const std::vector<Triplet>& triplets, const SphereMap& sphere, double margin);
LossValue orientation_loss(const std::vector<Triplet>& triplets, const SphereMap& sphere, double det_threshold);

}  // namespace spherecorr
