#pragma once

// Dataset annotations: a JSON document describing images, their feature
// files, categories, viewpoint bins, bounding boxes and keypoints.
// docs/annotation_schema.md documents the format.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spherecorr/features.hpp"
#include "spherecorr/geometry.hpp"

namespace spherecorr {

inline constexpr const char* kAnnotationSchema = "spherecorr/annotations/v1";

struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double max_side() const { return width() > height() ? width() : height(); }
};

// Keypoint id -> location, or nullopt when not visible.
using KeypointMap = std::map<std::string, std::optional<PixelCoord>>;

struct KeypointAnnotation {
  KeypointMap keypoints;
  BBox bbox;
};

struct ImageRecord {
  std::string id;
  std::string category;
  std::string features;  // path relative to the dataset root
  int viewpoint_bin = -1;
  std::optional<double> azimuth;  // radians, when known
  KeypointAnnotation ann;
  // Projection of each keypoint's mirror image in this view (synthetic
  // data only); used as a confusion oracle by evaluation.
  KeypointMap mirror_keypoints;
};

struct Dataset {
  int bins = 8;
  std::vector<std::string> categories;
  std::vector<ImageRecord> images;
  nlohmann::json source;  // free-form provenance (generator parameters)
  std::filesystem::path root;

  const ImageRecord& image(const std::string& id) const;
  int category_index(const std::string& name) const;  // -1 when unknown
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);  // throws SchemaError

// Accepts either the annotation file or the directory containing
// annotations.json.
Dataset load_dataset(const std::filesystem::path& path);
void save_annotations(const Dataset& ds, const std::filesystem::path& file);

// Reads the image's feature file and attaches its metadata.
DenseFeatureMap load_features(const Dataset& ds, const ImageRecord& rec);

}  // namespace spherecorr
