#include "spherecorr/annotations.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace spherecorr {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw SchemaError("annotations: " + msg); }

const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) fail(where + ": missing \"" + key + "\"");
  return *it;
}

json kp_to_json(const KeypointMap& m) {
  json o = json::object();
  for (const auto& [name, p] : m) o[name] = p ? json::array({p->x, p->y}) : json(nullptr);
  return o;
}

KeypointMap kp_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where + ": keypoints must be an object");
  KeypointMap m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_null()) {
      m[it.key()] = std::nullopt;
    } else if (it->is_array() && it->size() == 2 && (*it)[0].is_number() && (*it)[1].is_number()) {
      m[it.key()] = PixelCoord{(*it)[0].get<double>(), (*it)[1].get<double>()};
    } else {
      fail(where + ": keypoint \"" + it.key() + "\" must be [x, y] or null");
    }
  }
  return m;
}

}  // namespace

const ImageRecord& Dataset::image(const std::string& id) const {
  for (const auto& r : images)
    if (r.id == id) return r;
  throw std::out_of_range("dataset: unknown image " + id);
}

int Dataset::category_index(const std::string& name) const {
  auto it = std::find(categories.begin(), categories.end(), name);
  return it == categories.end() ? -1 : static_cast<int>(it - categories.begin());
}

json dataset_to_json(const Dataset& ds) {
  json j;
  j["$schema"] = kAnnotationSchema;
  j["bins"] = ds.bins;
  j["categories"] = ds.categories;
  json imgs = json::array();
  for (const auto& r : ds.images) {
    json o;
    o["id"] = r.id;
    o["category"] = r.category;
    o["features"] = r.features;
    o["viewpoint_bin"] = r.viewpoint_bin;
    if (r.azimuth) o["azimuth"] = *r.azimuth;
    o["bbox"] = {r.ann.bbox.x0, r.ann.bbox.y0, r.ann.bbox.x1, r.ann.bbox.y1};
    o["keypoints"] = kp_to_json(r.ann.keypoints);
    if (!r.mirror_keypoints.empty()) o["mirror_keypoints"] = kp_to_json(r.mirror_keypoints);
    imgs.push_back(std::move(o));
  }
  j["images"] = std::move(imgs);
  if (!ds.source.is_null()) j["source"] = ds.source;
  return j;
}

Dataset dataset_from_json(const json& j) {
  if (!j.is_object()) fail("document must be an object");
  const json& schema = field(j, "$schema", "document");
  if (!schema.is_string() || schema.get<std::string>() != kAnnotationSchema)
    fail("unsupported $schema (expected " + std::string(kAnnotationSchema) + ")");
  Dataset ds;
  const json& bins = field(j, "bins", "document");
  if (!bins.is_number_integer() || bins.get<int>() < 2) fail("bins must be an integer >= 2");
  ds.bins = bins.get<int>();
  const json& cats = field(j, "categories", "document");
  if (!cats.is_array() || cats.empty()) fail("categories must be a non-empty array");
  for (const auto& c : cats) {
    if (!c.is_string()) fail("category names must be strings");
    ds.categories.push_back(c.get<std::string>());
  }
  if (std::set<std::string>(ds.categories.begin(), ds.categories.end()).size() != ds.categories.size())
    fail("duplicate category names");
  const json& imgs = field(j, "images", "document");
  if (!imgs.is_array() || imgs.empty()) fail("images must be a non-empty array");
  std::set<std::string> ids;
  for (const auto& o : imgs) {
    if (!o.is_object()) fail("image entries must be objects");
    ImageRecord r;
    const json& id = field(o, "id", "image");
    if (!id.is_string() || id.get<std::string>().empty()) fail("image id must be a non-empty string");
    r.id = id.get<std::string>();
    const std::string where = "image " + r.id;
    if (!ids.insert(r.id).second) fail("duplicate image id " + r.id);
    const json& cat = field(o, "category", where);
    if (!cat.is_string() || ds.category_index(cat.get<std::string>()) < 0) fail(where + ": unknown category");
    r.category = cat.get<std::string>();
    const json& feat = field(o, "features", where);
    if (!feat.is_string()) fail(where + ": features must be a path string");
    r.features = feat.get<std::string>();
    if (auto it = o.find("viewpoint_bin"); it != o.end()) {
      if (!it->is_number_integer()) fail(where + ": viewpoint_bin must be an integer");
      r.viewpoint_bin = it->get<int>();
      if (r.viewpoint_bin < -1 || r.viewpoint_bin >= ds.bins) fail(where + ": viewpoint_bin out of range");
    }
    if (auto it = o.find("azimuth"); it != o.end()) {
      if (!it->is_number()) fail(where + ": azimuth must be a number");
      r.azimuth = it->get<double>();
    }
    const json& bb = field(o, "bbox", where);
    if (!bb.is_array() || bb.size() != 4) fail(where + ": bbox must be [x0, y0, x1, y1]");
    for (const auto& v : bb)
      if (!v.is_number()) fail(where + ": bbox entries must be numbers");
    r.ann.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
    if (!(r.ann.bbox.width() > 0 && r.ann.bbox.height() > 0)) fail(where + ": bbox must have positive area");
    r.ann.keypoints = kp_from_json(field(o, "keypoints", where), where);
    if (auto it = o.find("mirror_keypoints"); it != o.end())
      r.mirror_keypoints = kp_from_json(*it, where + " mirror");
    ds.images.push_back(std::move(r));
  }
  if (auto it = j.find("source"); it != j.end()) ds.source = *it;
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) file = path / "annotations.json";
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("annotations: invalid JSON in " + file.string() + ": " + e.what());
  }
  Dataset ds = dataset_from_json(j);
  ds.root = file.parent_path();
  return ds;
}

void save_annotations(const Dataset& ds, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << dataset_to_json(ds).dump(1) << "\n";
}

DenseFeatureMap load_features(const Dataset& ds, const ImageRecord& rec) {
  DenseFeatureMap m = read_feature_map(ds.root / rec.features);
  m.image_id = rec.id;
  m.category = rec.category;
  m.viewpoint_bin = rec.viewpoint_bin;
  for (const auto& [name, p] : rec.ann.keypoints)
    if (p && (p->x < -0.5 || p->y < -0.5 || p->x > m.width - 0.5 || p->y > m.height - 0.5))
      throw SchemaError("annotations: image " + rec.id + ": keypoint " + name + " lies outside the image");
  return m;
}

}  // namespace spherecorr
