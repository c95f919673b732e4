#pragma once

// The two learnable networks.
//
// Sphere mapper (f_S = psi o phi): per-pixel tokens [phi | pos] go through
// a linear reduction to C/2, one pre-norm transformer block (multi-head
// self-attention over all H*W tokens, then a ReLU MLP), a linear map to
// R^3 and pixel-wise l2 normalization. pos holds the pixel's normalized
// (column, row) in (-1, 1) times pos_scale; pos_scale = 0 removes all
// positional information.
//
// Spherical prototype (S_Z): a sphere point is lifted linearly to width D,
// attends to the single category token (cross-attention only, no
// self-attention between points), passes a ReLU MLP and is mapped to C
// feature channels. With one key the attention weights are identically 1,
// so the category enters as a learned offset; each point is processed
// independently of every other point in the batch.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spherecorr/autodiff.hpp"
#include "spherecorr/features.hpp"
#include "spherecorr/geometry.hpp"
#include "spherecorr/tensor.hpp"

namespace spherecorr {

struct ModelDims {
  std::size_t channels = 16;   // C
  std::size_t hidden = 0;      // prototype width D; 0 means C/2
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t categories = 1;
  double pos_scale = 3.0;

  std::size_t mapper_width() const { return channels / 2; }
  std::size_t proto_width() const { return hidden ? hidden : channels / 2; }
  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
};

// Ordered named tensors.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& operator[](const std::string& name);
  const Tensor& operator[](const std::string& name) const;
  std::size_t index(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t scalar_count() const;
  bool all_finite() const;
  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

struct SphereMapperParams {
  ModelDims dims;
  ParamStore p;
};

struct PrototypeParams {
  ModelDims dims;
  ParamStore p;
};

// Leaves of one graph holding a parameter store.
struct BoundParams {
  std::vector<Var> vars;
  const ParamStore* store = nullptr;
  Var operator[](const std::string& name) const { return vars[store->index(name)]; }
};

BoundParams bind(Graph& g, const ParamStore& store);

// Deterministic scaled-uniform initialization. Throws on odd C or zero
// hidden width, heads or categories, or when heads does not divide a width.
std::pair<SphereMapperParams, PrototypeParams> init_params(const ModelDims& dims, std::uint64_t seed);

// Positional channels for an H x W grid, row-major, pixels x 2.
Tensor position_channels(std::size_t height, std::size_t width, double scale);

// tokens: N x C features, pos: N x 2 positional channels. Returns N x 3
// unit vectors.
Var mapper_forward(Graph& g, const SphereMapperParams& params, const BoundParams& bp, Var tokens, Var pos);

// points: N x 3. Returns N x C.
Var prototype_forward(Graph& g, const PrototypeParams& params, const BoundParams& bp, Var points,
                      std::size_t category);

// Convenience wrappers evaluating a fresh graph.
SphereMap sphere_mapper_forward(const SphereMapperParams& params, const DenseFeatureMap& features);
Tensor prototype_query(const PrototypeParams& params, const Tensor& points, std::size_t category);

// Versioned binary checkpoint:
//   "SCCK", u32 version, u32 header length, header JSON (UTF-8),
//   u32 tensor count, per tensor { u32 name length, name, u32 rank,
//   u32 extents..., f64 values... }, then 32 bytes SHA-256 of everything
//   before it. Little-endian throughout.
struct Checkpoint {
  SphereMapperParams mapper;
  PrototypeParams prototype;
  std::vector<std::string> categories;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  nlohmann::json config = nlohmann::json::object();
  // Rotation/reflection taking sphere coordinates to the viewpoint frame,
  // fit after training. Row-major 3 x 3.
  std::optional<std::array<double, 9>> frame;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spherecorr
