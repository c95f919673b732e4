#pragma once

// Dense feature maps and the SCFM binary container:
//
//   offset  size      field
//   0       4         magic "SCFM"
//   4       4         u32 version (1)
//   8       4         u32 H
//   12      4         u32 W
//   16      4         u32 C
//   20      1         u8 mask flag (0 or 1)
//   21      4*H*W*C   f32 payload, row-major (row, col, channel)
//   ...     H*W       mask bytes (0 or 1), present iff flag is 1
//
// All integers and floats are little-endian.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spherecorr/tensor.hpp"

namespace spherecorr {

struct DenseFeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;          // H * W * C
  std::vector<std::uint8_t> mask;   // H * W, or empty when absent

  // Metadata carried by annotations, not by the SCFM file.
  std::string image_id;
  std::string category;
  int viewpoint_bin = -1;

  std::size_t pixels() const { return height * width; }
  bool has_mask() const { return !mask.empty(); }
  std::size_t mask_count() const;

  // Pixels x channels matrix in double precision.
  Tensor as_tensor() const;

  // Throws std::invalid_argument when dimensions, sizes or values are off.
  void validate() const;
};

inline constexpr std::uint32_t kFeatureMapVersion = 1;

std::vector<std::uint8_t> encode_feature_map(const DenseFeatureMap& map);
DenseFeatureMap decode_feature_map(const std::vector<std::uint8_t>& bytes);

void write_feature_map(const DenseFeatureMap& map, const std::filesystem::path& path);
DenseFeatureMap read_feature_map(const std::filesystem::path& path);

// Whole-file helpers shared by the binary formats.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace spherecorr
