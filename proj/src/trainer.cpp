#include "spherecorr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "spherecorr/config.hpp"
#include "spherecorr/optim.hpp"
#include "spherecorr/rng.hpp"

namespace spherecorr {

using nlohmann::json;

json default_config() {
  return json{
      {"seed", 0},
      {"train",
       {{"epochs", 200},
        {"batch_size", 4},
        {"lr", 1e-3},
        {"triplets", 256},
        {"warmup_fraction", 0.05},
        {"clip_norm", 10.0},
        {"checkpoint_every", 25},
        {"categories", json::array()}}},
      {"loss", {{"rd", 0.3}, {"o", 0.3}, {"vp", 0.1}, {"margin", 0.5}, {"det_threshold", 0.7}}},
      {"ablate", {{"vp", false}, {"rd", false}, {"o", false}}},
      {"model", {{"heads", 4}, {"hidden", 0}, {"mlp_ratio", 4}, {"pos_scale", 3.0}}},
      {"viewpoint", {{"bins", 8}}},
      {"eval", {{"alpha", 0.2}, {"kappa", 0.1}, {"mask", true}}},
      {"synth",
       {{"views", 16},
        {"eval_views", 16},
        {"symmetric", true},
        {"height", 32},
        {"width", 32},
        {"channels", 16},
        {"keypoints", 12},
        {"offset", -1.0},
        {"category", "synthetic"}}},
  };
}

json resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (file) merge_config(cfg, load_config_file(*file));
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

namespace {

template <class T>
T get_count(const json& j, const char* section, const char* key) {
  const json& v = j.at(section).at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ConfigError(std::string(section) + "." + key + " must be a non-negative integer");
  return static_cast<T>(v.get<std::int64_t>());
}

}  // namespace

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    const json& s = j.at("seed");
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) throw ConfigError("seed must be a non-negative integer");
    c.seed = s.get<std::uint64_t>();
    c.epochs = get_count<std::size_t>(j, "train", "epochs");
    c.batch_size = get_count<std::size_t>(j, "train", "batch_size");
    c.lr = j.at("train").at("lr").get<double>();
    c.triplets = get_count<std::size_t>(j, "train", "triplets");
    c.warmup_fraction = j.at("train").at("warmup_fraction").get<double>();
    c.clip_norm = j.at("train").at("clip_norm").get<double>();
    c.checkpoint_every = get_count<std::size_t>(j, "train", "checkpoint_every");
    c.categories = j.at("train").at("categories").get<std::vector<std::string>>();
    const json& l = j.at("loss");
    c.weights.rd = l.at("rd").get<double>();
    c.weights.o = l.at("o").get<double>();
    c.weights.vp = l.at("vp").get<double>();
    c.weights.margin = l.at("margin").get<double>();
    c.weights.det_threshold = l.at("det_threshold").get<double>();
    c.disable_vp = j.at("ablate").at("vp").get<bool>();
    c.disable_rd = j.at("ablate").at("rd").get<bool>();
    c.disable_o = j.at("ablate").at("o").get<bool>();
    c.model.heads = get_count<std::size_t>(j, "model", "heads");
    c.model.hidden = get_count<std::size_t>(j, "model", "hidden");
    c.model.mlp_ratio = get_count<std::size_t>(j, "model", "mlp_ratio");
    c.model.pos_scale = j.at("model").at("pos_scale").get<double>();
    c.bins = get_count<int>(j, "viewpoint", "bins");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (bins < 2) throw ConfigError("viewpoint.bins must be >= 2");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!disable_vp && batch_size < 2) throw ConfigError("train.batch_size must be >= 2 while L_vp is enabled");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (triplets < 1) throw ConfigError("train.triplets must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("train.warmup_fraction must be in [0, 1]");
  if (!std::isfinite(clip_norm)) throw ConfigError("train.clip_norm must be finite");
  if (!(weights.margin >= 0.0)) throw ConfigError("loss.margin must be >= 0");
  if (!(weights.det_threshold > 0.0 && weights.det_threshold <= 1.0))
    throw ConfigError("loss.det_threshold must be in (0, 1]");
  for (double w : {weights.rd, weights.o, weights.vp})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  if (!(model.pos_scale >= 0.0) || !std::isfinite(model.pos_scale)) throw ConfigError("model.pos_scale must be >= 0");
}

json TrainReport::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs)
    ep.push_back({{"epoch", e.epoch},
                  {"L_rec", e.mean.rec},
                  {"L_vp", e.mean.vp},
                  {"L_rd", e.mean.rd},
                  {"L_o", e.mean.o},
                  {"total", e.total},
                  {"seconds", e.seconds}});
  return json{{"epochs", ep}, {"wall_seconds", wall_seconds}, {"steps", steps}, {"checkpoint", checkpoint.string()}};
}

std::vector<int> resolve_bins(const Dataset& ds, int bins) {
  std::vector<int> out;
  out.reserve(ds.images.size());
  for (const auto& r : ds.images) {
    if (bins == ds.bins && r.viewpoint_bin >= 0 && r.viewpoint_bin < bins) {
      out.push_back(r.viewpoint_bin);
    } else if (r.azimuth) {
      out.push_back(azimuth_bin(*r.azimuth, bins));
    } else {
      throw SchemaError("image " + r.id + ": no viewpoint bin for K=" + std::to_string(bins) +
                        " (dataset uses K=" + std::to_string(ds.bins) + " and has no azimuth)");
    }
  }
  return out;
}

Mat3 fit_viewpoint_frame(const SphereMapperParams& mapper, const std::vector<DenseFeatureMap>& features,
                         const std::vector<int>& bins, int bin_count) {
  std::vector<Vec3> mus, vps;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const SphereMap s = sphere_mapper_forward(mapper, features[i]);
    const Vec3 mu = mean_direction(s, features[i].has_mask() ? &features[i].mask : nullptr);
    if (norm(mu) < 1e-12) continue;
    mus.push_back(normalized(mu));
    vps.push_back(viewpoint_vector(bins[i], bin_count).v);
  }
  if (mus.empty()) return {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return orthogonal_procrustes(mus, vps);
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

namespace {

struct Sample {
  std::size_t index;  // into the dataset
  std::size_t category;
};

std::string format_components(const LossComponents& c, double total) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "L_rec %.6f  L_vp %.6f  L_rd %.6f  L_o %.6f  total %.6f", c.rec, c.vp, c.rd, c.o,
                total);
  return buf;
}

void check_finite(double v, const char* name, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v))
    throw TrainingError("non-finite " + std::string(name) + " at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(step));
}


class PositionCache {
 public:
  explicit PositionCache(double scale) : scale_(scale) {}
  const Tensor& operator()(std::size_t h, std::size_t w) {
    auto key = std::make_pair(h, w);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, position_channels(h, w, scale_)).first;
    return it->second;
  }

 private:
  double scale_;
  std::map<std::pair<std::size_t, std::size_t>, Tensor> cache_;
};

struct Objective {
  LossComponents parts;
  Var total;
};

Objective build_objective(Graph& g, const TrainConfig& cfg, const SphereMapperParams& mapper, const BoundParams& bm,
                          const PrototypeParams& proto, const BoundParams& bp, const std::vector<BatchItem>& items,
                          Rng& rng, PositionCache& positions) {
  std::vector<Var> rec, rd, ori, mus;
  std::vector<Vec3> vps;
  for (const BatchItem& it : items) {
    const DenseFeatureMap& f = *it.features;
    Var tok = g.leaf(it.tokens ? *it.tokens : f.as_tensor());
    Var pos = g.leaf(positions(f.height, f.width));
    Var sphere = mapper_forward(g, mapper, bm, tok, pos);
    rec.push_back(reconstruction_loss(g, tok, sphere, f.mask, proto, bp, it.category).value);
    const auto tri = sample_triplets(f.mask, f.width, cfg.triplets, rng);
    rd.push_back(relative_distance_loss(g, sphere, tri, f.width, cfg.weights.margin).value);
    ori.push_back(orientation_loss(g, sphere, tri, f.width, cfg.weights.det_threshold).value);
    mus.push_back(mean_direction(g, sphere, f.mask));
    vps.push_back(it.viewpoint);
  }
  const double inv_n = 1.0 / static_cast<double>(items.size());
  auto batch_mean = [&](const std::vector<Var>& v) { return g.scale(g.sum(g.concat_rows(v)), inv_n); };
  Var l_rec = batch_mean(rec), l_rd = batch_mean(rd), l_o = batch_mean(ori);
  Var l_vp = items.size() >= 2 ? viewpoint_loss(g, mus, vps) : g.full(1, 1, 0.0);

  Objective out;
  out.parts = {g.value(l_rec).item(), g.value(l_rd).item(), g.value(l_o).item(), g.value(l_vp).item()};
  Var total = l_rec;
  if (!cfg.disable_rd) total = g.add(total, g.scale(l_rd, cfg.weights.rd));
  if (!cfg.disable_o) total = g.add(total, g.scale(l_o, cfg.weights.o));
  if (!cfg.disable_vp) total = g.add(total, g.scale(l_vp, cfg.weights.vp));
  out.total = total;
  return out;
}

}  // namespace

LossComponents batch_objective(const TrainConfig& cfg, const SphereMapperParams& mapper, const PrototypeParams& proto,
                               const std::vector<BatchItem>& items, Rng& rng, double* total) {
  if (items.empty()) throw std::invalid_argument("batch_objective: empty batch");
  Graph g;
  BoundParams bm = bind(g, mapper.p);
  BoundParams bp = bind(g, proto.p);
  PositionCache positions(mapper.dims.pos_scale);
  const Objective obj = build_objective(g, cfg, mapper, bm, proto, bp, items, rng, positions);
  if (total) *total = g.value(obj.total).item();
  return obj.parts;
}

TrainResult fit(const TrainConfig& cfg, const Dataset& ds, std::vector<DenseFeatureMap> features,
                const FitOptions& opt) {
  cfg.validate();
  if (ds.images.empty()) throw SchemaError("fit: dataset has no images");
  if (features.empty()) {
    features.reserve(ds.images.size());
    for (const auto& r : ds.images) features.push_back(load_features(ds, r));
  }
  if (features.size() != ds.images.size()) throw std::invalid_argument("fit: features do not match the dataset");
  const std::vector<int> bins = resolve_bins(ds, cfg.bins);

  std::vector<std::string> cats = cfg.categories;
  if (cats.empty())
    for (const auto& c : ds.categories)
      if (std::any_of(ds.images.begin(), ds.images.end(), [&](const ImageRecord& r) { return r.category == c; }))
        cats.push_back(c);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());

  // Images grouped per category, ordered by id.
  std::vector<std::vector<std::size_t>> groups(cats.size());
  std::size_t channels = 0;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& r = ds.images[i];
    const auto it = std::find(cats.begin(), cats.end(), r.category);
    if (it == cats.end()) continue;
    const DenseFeatureMap& f = features[i];
    f.validate();
    if (!f.has_mask() || f.mask_count() < 3)
      throw SchemaError("image " + r.id + ": training needs a mask with at least 3 foreground pixels");
    if (channels == 0) channels = f.channels;
    if (f.channels != channels) throw SchemaError("image " + r.id + ": channel count differs from other images");
    groups[static_cast<std::size_t>(it - cats.begin())].push_back(i);
  }
  for (std::size_t c = 0; c < cats.size(); ++c) {
    if (groups[c].empty()) throw SchemaError("fit: category '" + cats[c] + "' has no images");
    std::sort(groups[c].begin(), groups[c].end(),
              [&](std::size_t a, std::size_t b) { return ds.images[a].id < ds.images[b].id; });
    if (!cfg.disable_vp && groups[c].size() < 2)
      throw TrainingError("L_vp needs at least 2 images per category; category '" + cats[c] + "' has " +
                          std::to_string(groups[c].size()) + " (disable it with --ablate vp)");
  }

  ModelDims dims = cfg.model;
  dims.channels = channels;
  dims.categories = cats.size();
  auto [mapper, proto] = init_params(dims, cfg.seed);

  // Per-category batch counts are fixed, so the step count is known up front.
  auto batches_for = [&](std::size_t n) {
    std::size_t b = (n + cfg.batch_size - 1) / cfg.batch_size;
    if (!cfg.disable_vp && n % cfg.batch_size == 1 && b > 1) --b;  // a lone leftover joins the previous batch
    return b;
  };
  std::size_t per_epoch = 0;
  for (const auto& g : groups) per_epoch += batches_for(g.size());
  const std::size_t total_steps = per_epoch * cfg.epochs;
  const std::size_t warmup =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * total_steps)));

  Rng rng(Rng::mix(cfg.seed, 20));
  PositionCache positions(dims.pos_scale);
  std::vector<Tensor> feature_tensors(features.size());

  AdamState adam;
  adam.lr = cfg.lr;
  TrainResult result;
  result.checkpoint.categories = cats;
  result.checkpoint.seed = cfg.seed;
  result.checkpoint.config = opt.config;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t step = 0;

  auto write_checkpoint = [&](std::size_t epoch, const std::filesystem::path& path) {
    Checkpoint ck;
    ck.mapper = mapper;
    ck.prototype = proto;
    ck.categories = cats;
    ck.seed = cfg.seed;
    ck.epoch = epoch;
    ck.config = opt.config;
    save_checkpoint(ck, path);
  };
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::vector<Sample>> batches;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      std::vector<std::size_t> order = groups[c];
      rng.shuffle(order);
      const std::size_t nb = batches_for(order.size());
      for (std::size_t b = 0; b < nb; ++b) {
        std::vector<Sample> batch;
        const std::size_t lo = b * cfg.batch_size;
        const std::size_t hi = b + 1 == nb ? order.size() : lo + cfg.batch_size;
        for (std::size_t i = lo; i < hi; ++i) batch.push_back({order[i], c});
        batches.push_back(std::move(batch));
      }
    }
    rng.shuffle(batches);

    LossComponents sum;
    double total_sum = 0.0;
    for (const auto& batch : batches) {
      Graph g;
      BoundParams bm = bind(g, mapper.p);
      BoundParams bp = bind(g, proto.p);
      std::vector<BatchItem> items;
      for (const Sample& s : batch) {
        if (feature_tensors[s.index].empty()) feature_tensors[s.index] = features[s.index].as_tensor();
        items.push_back({&features[s.index], &feature_tensors[s.index], s.category,
                         viewpoint_vector(bins[s.index], cfg.bins).v});
      }
      const Objective obj = build_objective(g, cfg, mapper, bm, proto, bp, items, rng, positions);
      const LossComponents& c = obj.parts;
      check_finite(c.rec, "L_rec", epoch, step);
      check_finite(c.vp, "L_vp", epoch, step);
      check_finite(c.rd, "L_rd", epoch, step);
      check_finite(c.o, "L_o", epoch, step);
      const Var total = obj.total;
      const double tv = g.value(total).item();
      check_finite(tv, "total loss", epoch, step);

      std::vector<Var> vars = bm.vars;
      vars.insert(vars.end(), bp.vars.begin(), bp.vars.end());
      std::vector<Tensor> grads = g.grad(total, vars);
      if (cfg.clip_norm > 0.0) {
        const double gn = clip_global_norm(grads, cfg.clip_norm);
        check_finite(gn, "gradient", epoch, step);
      }
      std::vector<Tensor*> params;
      for (auto& t : mapper.p.tensors()) params.push_back(&t);
      for (auto& t : proto.p.tensors()) params.push_back(&t);
      adam.lr = cfg.lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup));
      adam_step(params, grads, adam);

      sum.rec += c.rec;
      sum.vp += c.vp;
      sum.rd += c.rd;
      sum.o += c.o;
      total_sum += tv;
      if (opt.on_step) opt.on_step(step, tv);
      ++step;
    }

    const double nb = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean = {sum.rec / nb, sum.rd / nb, sum.o / nb, sum.vp / nb};
    rec.total = total_sum / nb;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report.epochs.push_back(rec);
    if (opt.progress)
      *opt.progress << "epoch " << epoch << "/" << cfg.epochs << "  " << format_components(rec.mean, rec.total)
                    << std::endl;
    if (!opt.out_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
        epoch != cfg.epochs) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_epoch%04zu.scck", epoch);
      write_checkpoint(epoch, opt.out_dir / name);
    }
  }

  std::vector<DenseFeatureMap> fit_feats;
  std::vector<int> fit_bins;
  for (const auto& g : groups)
    for (std::size_t i : g) {
      fit_feats.push_back(features[i]);
      fit_bins.push_back(bins[i]);
    }
  result.checkpoint.mapper = std::move(mapper);
  result.checkpoint.prototype = std::move(proto);
  result.checkpoint.epoch = cfg.epochs;
  result.checkpoint.frame = fit_viewpoint_frame(result.checkpoint.mapper, fit_feats, fit_bins, cfg.bins);
  result.report.steps = step;
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!opt.out_dir.empty()) {
    result.report.checkpoint = opt.out_dir / "checkpoint.scck";
    save_checkpoint(result.checkpoint, result.report.checkpoint);
  }
  return result;
}

}  // namespace spherecorr
