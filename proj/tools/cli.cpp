#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spherecorr/annotations.hpp"
#include "spherecorr/config.hpp"
#include "spherecorr/evaluate.hpp"
#include "spherecorr/matcher.hpp"
#include "spherecorr/models.hpp"
#include "spherecorr/synth.hpp"
#include "spherecorr/trainer.hpp"

namespace spherecorr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for bad arguments found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "TOML or JSON config file")->check(CLI::ExistingFile);
  sub->add_option("overrides", c.overrides, "section.key=value config overrides");
}

json resolve(const Common& c) {
  for (const auto& o : c.overrides)
    if (o.find('=') == std::string::npos) throw UsageError("expected section.key=value, got '" + o + "'");
  if (c.config.empty()) return resolve_config(nullptr, c.overrides);
  const fs::path p = c.config;
  return resolve_config(&p, c.overrides);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<DenseFeatureMap> load_all_features(const Dataset& ds) {
  std::vector<DenseFeatureMap> out;
  out.reserve(ds.images.size());
  for (const auto& rec : ds.images) out.push_back(load_features(ds, rec));
  return out;
}

json checkpoint_info(const fs::path& path, const Checkpoint& ck) {
  return {{"path", path.string()},
          {"epoch", ck.epoch},
          {"seed", ck.seed},
          {"untrained", ck.epoch == 0},
          {"categories", ck.categories},
          {"config", ck.config}};
}

void warn_untrained(const Checkpoint& ck, std::ostream& err) {
  if (ck.epoch == 0) err << "warning: untrained checkpoint (epoch 0)\n";
}

std::string safe_name(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  return s;
}

PixelCoord parse_query(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("query must be x,y: '" + s + "'");
  try {
    std::size_t a = 0, b = 0;
    const double x = std::stod(s.substr(0, comma), &a);
    const double y = std::stod(s.substr(comma + 1), &b);
    if (a != comma || b != s.size() - comma - 1) throw std::invalid_argument(s);
    return {x, y};
  } catch (const std::logic_error&) {
    throw UsageError("query must be x,y: '" + s + "'");
  }
}

// ---- synth ----

struct SynthArgs {
  Common c;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> views;
  std::optional<int> bins;
  std::optional<double> offset;
  CLI::Option* sym = nullptr;
  bool symmetric = true;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  json cfg = resolve(a.c);
  if (a.seed) cfg["seed"] = *a.seed;
  if (a.views) cfg["synth"]["views"] = *a.views;
  if (a.bins) cfg["viewpoint"]["bins"] = *a.bins;
  if (a.offset) cfg["synth"]["offset"] = *a.offset;
  if (a.sym->count()) cfg["synth"]["symmetric"] = a.symmetric;
  const json& s = cfg["synth"];
  SynthOptions o;
  o.seed = cfg["seed"].get<std::uint64_t>();
  o.views = s["views"].get<std::size_t>();
  o.symmetric = s["symmetric"].get<bool>();
  o.height = s["height"].get<std::size_t>();
  o.width = s["width"].get<std::size_t>();
  o.channels = s["channels"].get<std::size_t>();
  o.keypoints = s["keypoints"].get<std::size_t>();
  o.category = s["category"].get<std::string>();
  o.offset = s["offset"].get<double>();
  o.bins = cfg["viewpoint"]["bins"].get<int>();
  if (o.views == 0) throw UsageError("synth.views must be >= 1");
  if (o.bins < 2) throw UsageError("viewpoint.bins must be >= 2");
  if (o.height == 0 || o.width == 0 || o.channels == 0) throw UsageError("synth grid and channels must be positive");
  const SynthDataset sd = make_synthetic_dataset(o);
  write_synthetic_dataset(sd, a.out);
  out << "wrote " << sd.dataset.images.size() << " views to " << a.out << "\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  Common c;
  std::string data, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> bins;
  std::vector<std::string> ablate;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  json cfg = resolve(a.c);
  if (a.seed) cfg["seed"] = *a.seed;
  if (a.bins) cfg["viewpoint"]["bins"] = *a.bins;
  for (const auto& t : a.ablate) cfg["ablate"][t] = true;
  const TrainConfig tc = TrainConfig::from_json(cfg);
  const Dataset ds = load_dataset(a.data);
  FitOptions fo;
  fo.out_dir = a.out;
  fo.progress = &out;
  fo.config = cfg;
  const TrainResult r = fit(tc, ds, {}, fo);
  json rep = r.report.to_json();
  rep["config"] = cfg;
  rep["dataset"] = fs::absolute(ds.root).lexically_normal().string();
  write_text(fs::path(a.out) / "train_report.json", rep.dump(1) + "\n");
  out << "checkpoint " << r.report.checkpoint.string() << "\n";
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  Common c;
  std::string checkpoint, data, out;
  std::optional<double> kappa, alpha;
  CLI::Option* mask_opt = nullptr;
  bool mask = true;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  json cfg = resolve(a.c);
  if (a.kappa) cfg["eval"]["kappa"] = *a.kappa;
  if (a.alpha) cfg["eval"]["alpha"] = *a.alpha;
  if (a.mask_opt->count()) cfg["eval"]["mask"] = a.mask;
  EvalOptions eo;
  eo.kappa = cfg["eval"]["kappa"].get<double>();
  eo.alpha = cfg["eval"]["alpha"].get<double>();
  if (!(eo.kappa > 0.0)) throw UsageError("eval.kappa must be > 0");
  if (!(eo.alpha >= 0.0 && eo.alpha <= 1.0)) throw UsageError("eval.alpha must be in [0, 1]");
  if (cfg["eval"]["mask"].get<bool>())
    eo.methods = {Method::feature, Method::sphere_masked, Method::sphere_unmasked, Method::alpha_mix};
  else
    eo.methods = {Method::feature, Method::sphere_unmasked, Method::alpha_mix};

  const Checkpoint ck = load_checkpoint(a.checkpoint);
  warn_untrained(ck, err);
  const Dataset ds = load_dataset(a.data);
  const auto feats = load_all_features(ds);
  const auto spheres = compute_spheres(ck.mapper, feats);
  const auto reports = evaluate(ds, feats, spheres, eo);

  const std::string table = format_table(reports);
  out << table;
  if (!a.out.empty()) {
    json j{{"config", cfg}, {"checkpoint", checkpoint_info(a.checkpoint, ck)},
           {"dataset", fs::absolute(ds.root).lexically_normal().string()}, {"reports", json::array()}};
    for (const auto& r : reports) j["reports"].push_back(r.to_json());
    write_text(fs::path(a.out) / "eval_report.json", j.dump(1) + "\n");
    write_text(fs::path(a.out) / "eval_table.txt", table);
  }
  return kOk;
}

// ---- match ----

struct MatchArgs {
  Common c;
  std::string checkpoint, data, source, target, method = "alpha-mix";
  std::vector<std::string> queries;
  std::optional<double> alpha;
  CLI::Option* mask_opt = nullptr;
  bool mask = true;
};

int cmd_match(const MatchArgs& a, std::ostream& out, std::ostream& err) {
  json cfg = resolve(a.c);
  if (a.alpha) cfg["eval"]["alpha"] = *a.alpha;
  if (a.mask_opt->count()) cfg["eval"]["mask"] = a.mask;
  const double alpha = cfg["eval"]["alpha"].get<double>();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("eval.alpha must be in [0, 1]");
  const bool use_mask = cfg["eval"]["mask"].get<bool>();
  std::vector<PixelCoord> qs;
  for (const auto& q : a.queries) qs.push_back(parse_query(q));

  const Checkpoint ck = load_checkpoint(a.checkpoint);
  warn_untrained(ck, err);
  const Dataset ds = load_dataset(a.data);
  const DenseFeatureMap sf = load_features(ds, ds.image(a.source));
  const DenseFeatureMap tf = load_features(ds, ds.image(a.target));
  const UnitFeatures su = unit_features(sf), tu = unit_features(tf);
  const SphereMap ss = resample_sphere(sphere_mapper_forward(ck.mapper, sf), sf.height, sf.width);
  const SphereMap ts = resample_sphere(sphere_mapper_forward(ck.mapper, tf), tf.height, tf.width);

  json j{{"config", cfg}, {"checkpoint", checkpoint_info(a.checkpoint, ck)}, {"source", a.source},
         {"target", a.target},  {"method", a.method}, {"matches", json::array()}};
  if (a.method == "alpha-mix") j["alpha"] = alpha;
  if (a.method == "sphere") j["mask"] = use_mask;
  for (const PixelCoord& q : qs) {
    const std::size_t qi = pixel_index(q, sf.height, sf.width);
    std::size_t best = 0;
    if (a.method == "feature")
      best = match_feature_only(su, qi, tu);
    else if (a.method == "sphere")
      best = match_sphere_only(ss, qi, ts, use_mask && tf.has_mask() ? &tf.mask : nullptr);
    else
      best = match_combined(su, ss, qi, tu, ts, alpha);
    j["matches"].push_back({{"query", {q.x, q.y}}, {"match", {best % tf.width, best / tf.width}}});
  }
  out << j.dump(1) << "\n";
  return kOk;
}

// ---- infer-viewpoint ----

struct ViewArgs {
  Common c;
  std::string checkpoint, data, out;
  std::optional<int> bins;
};

int cmd_infer_viewpoint(const ViewArgs& a, std::ostream& out, std::ostream& err) {
  json cfg = resolve(a.c);
  if (a.bins) cfg["viewpoint"]["bins"] = *a.bins;
  const int K = cfg["viewpoint"]["bins"].get<int>();
  if (K < 2) throw UsageError("viewpoint.bins must be >= 2");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  warn_untrained(ck, err);
  const Dataset ds = load_dataset(a.data);
  const auto feats = load_all_features(ds);
  const auto spheres = compute_spheres(ck.mapper, feats);
  const auto truth = resolve_bins(ds, K);

  json rows = json::array();
  std::size_t known = 0, within = 0;
  out << std::left << std::setw(24) << "image" << std::right << std::setw(12) << "azimuth" << std::setw(6) << "bin"
      << std::setw(7) << "truth" << "\n";
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& rec = ds.images[i];
    Vec3 mu;
    try {
      mu = mean_direction(spheres[i], feats[i].has_mask() ? &feats[i].mask : nullptr);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("image " + rec.id + ": empty mask");
    }
    const double raw = std::atan2(mu[1], mu[0]);
    const Vec3 v = ck.frame ? mat_apply(*ck.frame, mu) : mu;
    const double az = std::atan2(v[1], v[0]);
    const int bin = azimuth_bin(az, K);
    json row{{"id", rec.id}, {"azimuth", az}, {"azimuth_raw", raw}, {"bin", bin}, {"mean_direction", mu}};
    std::string tstr = "-";
    if (truth[i] >= 0) {
      const int d = std::abs(bin - truth[i]);
      const bool ok = std::min(d, K - d) <= 1;
      row["truth"] = truth[i];
      row["within_one_bin"] = ok;
      ++known;
      within += ok;
      tstr = std::to_string(truth[i]);
    }
    out << std::left << std::setw(24) << rec.id << std::right << std::setw(12) << std::fixed << std::setprecision(4)
        << az << std::setw(6) << bin << std::setw(7) << tstr << "\n";
    rows.push_back(std::move(row));
  }
  json j{{"config", cfg}, {"checkpoint", checkpoint_info(a.checkpoint, ck)}, {"bins", K},
         {"frame_applied", ck.frame.has_value()}, {"images", rows}};
  if (ck.epoch == 0) j["flag"] = "untrained checkpoint";
  if (known) {
    const double frac = static_cast<double>(within) / static_cast<double>(known);
    j["within_one_bin"] = frac;
    out << "within one bin: " << within << "/" << known << "\n";
  }
  if (!a.out.empty()) write_text(a.out, j.dump(1) + "\n");
  return kOk;
}

// ---- export-maps ----

struct ExportArgs {
  Common c;
  std::string checkpoint, data, out;
  CLI::Option* mask_opt = nullptr;
  bool mask = true;
};

std::uint8_t to_byte(double s) {
  const double v = std::floor((s + 1.0) / 2.0 * 255.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

int cmd_export_maps(const ExportArgs& a, std::ostream& out, std::ostream& err) {
  json cfg = resolve(a.c);
  if (a.mask_opt->count()) cfg["eval"]["mask"] = a.mask;
  const bool use_mask = cfg["eval"]["mask"].get<bool>();
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  warn_untrained(ck, err);
  const Dataset ds = load_dataset(a.data);
  const auto feats = load_all_features(ds);
  const auto spheres = compute_spheres(ck.mapper, feats);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const SphereMap s = resample_sphere(spheres[i], feats[i].height, feats[i].width);
    const bool m = use_mask && feats[i].has_mask();
    std::string img = "P6\n" + std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
    for (std::size_t p = 0; p < s.pixels(); ++p)
      for (int k = 0; k < 3; ++k) img.push_back(static_cast<char>(m && !feats[i].mask[p] ? 0 : to_byte(s.data[3 * p + k])));
    write_text(fs::path(a.out) / (safe_name(ds.images[i].id) + ".ppm"), img);
  }
  out << "wrote " << ds.images.size() << " maps to " << a.out << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spherical maps for semantic correspondence", "spherecorr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "spherecorr 1.0");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, sa.c);
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--seed", sa.seed, "World seed");
  synth->add_option("--views", sa.views, "Number of views");
  synth->add_option("--bins", sa.bins, "Viewpoint bins K");
  synth->add_option("--offset", sa.offset, "Azimuth of the first view (radians)");
  sa.sym = synth->add_flag("--symmetric,!--asymmetric", sa.symmetric, "Reflection-symmetric world");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the sphere mapper");
  add_common(train, ta.c);
  train->add_option("--data", ta.data, "Dataset directory or annotation file")->required();
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--seed", ta.seed, "Training seed");
  train->add_option("--bins", ta.bins, "Viewpoint bins K");
  train->add_option("--ablate", ta.ablate, "Disable a loss term (repeatable)")
      ->allow_extra_args(false)
      ->check(CLI::IsMember({"vp", "rd", "o"}));

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "PCK and KAP of the matchers");
  add_common(ev, ea.c);
  ev->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ea.data, "Dataset directory or annotation file")->required();
  ev->add_option("--out", ea.out, "Directory for eval_report.json and eval_table.txt");
  ev->add_option("--kappa", ea.kappa, "Threshold as a fraction of the bounding box");
  ev->add_option("--alpha", ea.alpha, "Sphere weight of the blended matcher");
  ea.mask_opt = ev->add_flag("--mask,!--no-mask", ea.mask, "Also report target-masked sphere matching");

  MatchArgs ma;
  auto* match = app.add_subcommand("match", "Match query pixels from a source into a target image");
  add_common(match, ma.c);
  match->add_option("--checkpoint", ma.checkpoint)->required()->check(CLI::ExistingFile);
  match->add_option("--data", ma.data, "Dataset directory or annotation file")->required();
  match->add_option("--source", ma.source, "Source image id")->required();
  match->add_option("--target", ma.target, "Target image id")->required();
  match->add_option("--query", ma.queries, "Source pixel x,y (repeatable)")
      ->required()
      ->allow_extra_args(false);
  match->add_option("--method", ma.method)->check(CLI::IsMember({"alpha-mix", "feature", "sphere"}));
  match->add_option("--alpha", ma.alpha, "Sphere weight of the blended matcher");
  ma.mask_opt = match->add_flag("--mask,!--no-mask", ma.mask, "Restrict sphere matches to the target mask");

  ViewArgs va;
  auto* view = app.add_subcommand("infer-viewpoint", "Azimuth of each image from its mean sphere direction");
  add_common(view, va.c);
  view->add_option("--checkpoint", va.checkpoint)->required()->check(CLI::ExistingFile);
  view->add_option("--data", va.data, "Dataset directory or annotation file")->required();
  view->add_option("--out", va.out, "JSON report file");
  view->add_option("--bins", va.bins, "Viewpoint bins K");

  ExportArgs xa;
  auto* exp = app.add_subcommand("export-maps", "Write sphere maps as PPM images");
  add_common(exp, xa.c);
  exp->add_option("--checkpoint", xa.checkpoint)->required()->check(CLI::ExistingFile);
  exp->add_option("--data", xa.data, "Dataset directory or annotation file")->required();
  exp->add_option("--out", xa.out, "Output directory")->required();
  xa.mask_opt = exp->add_flag("--mask,!--no-mask", xa.mask, "Black out pixels outside the mask");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa, out);
    if (train->parsed()) return cmd_train(ta, out);
    if (ev->parsed()) return cmd_eval(ea, out, err);
    if (match->parsed()) return cmd_match(ma, out, err);
    if (view->parsed()) return cmd_infer_viewpoint(va, out, err);
    if (exp->parsed()) return cmd_export_maps(xa, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace spherecorr::cli
