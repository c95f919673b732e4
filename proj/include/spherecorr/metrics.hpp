#pragma once

// PCK@kappa and KAP@kappa. Distances are compared with a closed threshold
// kappa * max(bbox height, bbox width) of the target box. Both metrics are
// averaged per category and then macro-averaged over categories.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spherecorr/geometry.hpp"

namespace spherecorr {

enum class KapCase { in_radius, out_radius, invisible_target };

struct KapSample {
  double score = 0.0;
  bool positive = false;
  std::string pair;
  std::string keypoint;
  KapCase kase = KapCase::in_radius;
};

// All-points AP: samples sorted by decreasing score with negatives ahead
// of positives on equal scores; the sum of precision at each positive over
// the number of positives. Throws std::invalid_argument with no positives.
double average_precision(const std::vector<KapSample>& samples);
double average_precision(std::vector<std::pair<double, bool>> scored);

// One source keypoint queried in one ordered image pair.
struct KeypointQuery {
  std::string category;
  std::string pair;  // "source->target"
  std::string keypoint;
  std::optional<PixelCoord> target_gt;  // nullopt: not visible in the target
  double threshold = 0.0;               // kappa * max bbox side of the target
  PixelCoord predicted;                 // matched target pixel
};

// The three-case sample construction for one query from its target
// similarity grid (row-major height x width). Pixels scoring -inf are
// excluded (e.g. outside a target mask). Cases with no admissible pixel
// produce no sample.
std::vector<KapSample> kap_samples(const KeypointQuery& q, const std::vector<double>& scores, std::size_t height,
                                   std::size_t width);

struct CategoryScore {
  std::optional<double> pck;  // nullopt when every pair was skipped
  std::optional<double> kap;  // nullopt when no positive samples
  std::size_t pairs = 0;          // pairs contributing to PCK
  std::size_t skipped_pairs = 0;  // pairs without co-visible keypoints
  std::size_t queries = 0;
  std::size_t samples = 0;
  std::size_t positives = 0;
};

struct MetricReport {
  std::string method;
  double kappa = 0.1;
  std::optional<double> alpha;
  std::map<std::string, CategoryScore> categories;
  std::optional<double> pck;  // macro averages
  std::optional<double> kap;
  // Mirror-confusion rate: fraction of oracle-checked queries whose
  // predicted pixel lies within the threshold of the mirrored keypoint.
  std::optional<double> mirror_confusion;
  std::size_t mirror_cases = 0;

  nlohmann::json to_json() const;
};

// Per-pair mean of co-visible hits, per-category mean over pairs, macro
// over categories. Skipped pairs are counted per category.
void compute_pck(const std::vector<KeypointQuery>& queries, MetricReport& report);

// One AP per category over its pooled samples, macro over categories that
// have positives.
void compute_kap(const std::vector<KapSample>& samples, const std::vector<std::string>& sample_categories,
                 MetricReport& report);

// Aligned text table of reports, one row per category plus the macro row,
// values x100 with one decimal.
std::string format_table(const std::vector<MetricReport>& reports);

// Mirror-confusion bookkeeping for one query: counted when the keypoint and
// its mirror are both visible in the target and the mirror lies more than
// twice the threshold from the truth.
struct MirrorCheck {
  bool counted = false;
  bool confused = false;
};
MirrorCheck mirror_check(const KeypointQuery& q, const std::optional<PixelCoord>& mirror_gt);

}  // namespace spherecorr
