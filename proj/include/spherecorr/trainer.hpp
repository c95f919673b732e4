#pragma once

// Training loop: same-category minibatches, Adam with linear warmup and
// global-norm clipping, periodic checkpoints. Deterministic given the
// config and seed; images are ordered by id before the seeded shuffle, so
// dataset file order does not matter.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spherecorr/annotations.hpp"
#include "spherecorr/features.hpp"
#include "spherecorr/losses.hpp"
#include "spherecorr/models.hpp"
#include "spherecorr/rng.hpp"

namespace spherecorr {

// Full default configuration (all sections). Config files and overrides
// are merged into it; keys it does not contain are rejected.
nlohmann::json default_config();

// default_config() with an optional file and key=value overrides applied.
nlohmann::json resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  LossWeights weights;
  std::size_t triplets = 256;  // T per image
  int bins = 8;                // K
  std::uint64_t seed = 0;
  std::vector<std::string> categories;  // empty: every category with images
  bool disable_vp = false;
  bool disable_rd = false;
  bool disable_o = false;
  ModelDims model;  // channels and categories are taken from the data
  double warmup_fraction = 0.05;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::size_t checkpoint_every = 25;  // 0: final checkpoint only

  // Reads the train, loss, ablate, model and viewpoint sections of a
  // resolved config. Throws ConfigError on invariant violations.
  static TrainConfig from_json(const nlohmann::json& cfg);
  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossComponents mean;    // all four components, including ablated ones
  double total = 0.0;     // the optimized objective
  double seconds = 0.0;   // wall time since the start of training
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  std::filesystem::path checkpoint;  // empty when nothing was written
  nlohmann::json to_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

struct FitOptions {
  std::filesystem::path out_dir;       // empty: no files written
  std::ostream* progress = nullptr;    // one line per epoch
  nlohmann::json config = nlohmann::json::object();  // echoed into checkpoints
  // Called after every optimizer step with the 0-based step index and the
  // step's total loss; may be empty.
  std::function<void(std::size_t, double)> on_step;
};

// Trains on the images of ds; features[i] belongs to ds.images[i]. When
// features is empty they are read from the dataset root.
TrainResult fit(const TrainConfig& cfg, const Dataset& ds, std::vector<DenseFeatureMap> features = {},
                const FitOptions& opt = {});

// One image of a training batch. tokens may be null (taken from features).
struct BatchItem {
  const DenseFeatureMap* features = nullptr;
  const Tensor* tokens = nullptr;
  std::size_t category = 0;
  Vec3 viewpoint{0.0, 0.0, 0.0};
};

// Loss components of one batch at fixed parameters, triplets drawn from
// rng; total receives the optimized objective when given. No update.
LossComponents batch_objective(const TrainConfig& cfg, const SphereMapperParams& mapper, const PrototypeParams& proto,
                               const std::vector<BatchItem>& items, Rng& rng, double* total = nullptr);

// Viewpoint bins of the records under K bins: the stored bin when K
// matches the dataset, otherwise recomputed from the azimuth.
std::vector<int> resolve_bins(const Dataset& ds, int bins);

// Orthogonal frame (rotation or reflection) taking masked mean sphere
// directions to their bin viewpoint vectors.
Mat3 fit_viewpoint_frame(const SphereMapperParams& mapper, const std::vector<DenseFeatureMap>& features,
                         const std::vector<int>& bins, int bin_count);

// glibc keeps freed large blocks mapped instead of returning them to the
// OS between steps; attention buffers are reallocated every step.
void tune_allocator();

}  // namespace spherecorr
