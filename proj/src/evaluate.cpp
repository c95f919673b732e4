#include "spherecorr/evaluate.hpp"

#include <atomic>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>

#include "spherecorr/matcher.hpp"

namespace spherecorr {

std::string method_name(Method m) {
  switch (m) {
    case Method::feature: return "feature";
    case Method::sphere_masked: return "sphere-masked";
    case Method::sphere_unmasked: return "sphere";
    case Method::alpha_mix: return "alpha-mix";
  }
  return "?";
}

unsigned worker_threads() {
  if (const char* e = std::getenv("SPHERECORR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (end != e && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned h = std::thread::hardware_concurrency();
  return h ? h : 1;
}

namespace {

// Runs fn(i) for i in [0, n) on up to worker_threads() threads.
template <class F>
void parallel_for(std::size_t n, F fn) {
  const unsigned nt = std::min<unsigned>(worker_threads(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct MethodAcc {
  std::vector<KeypointQuery> queries;
  std::vector<KapSample> samples;
  std::vector<std::string> sample_cats;
  std::size_t mirror_cases = 0, mirror_confused = 0;
};

PixelCoord coord_of(std::size_t idx, std::size_t width) {
  return {static_cast<double>(idx % width), static_cast<double>(idx / width)};
}

}  // namespace

std::vector<SphereMap> compute_spheres(const SphereMapperParams& mapper, const std::vector<DenseFeatureMap>& features) {
  std::vector<SphereMap> out(features.size());
  parallel_for(features.size(), [&](std::size_t i) { out[i] = sphere_mapper_forward(mapper, features[i]); });
  return out;
}

std::vector<MetricReport> evaluate(const Dataset& ds, const std::vector<DenseFeatureMap>& features,
                                   const std::vector<SphereMap>& spheres, const EvalOptions& opt) {
  if (!(opt.kappa > 0.0)) throw std::invalid_argument("evaluate: kappa must be > 0");
  if (!(opt.alpha >= 0.0 && opt.alpha <= 1.0)) throw std::invalid_argument("evaluate: alpha must be in [0, 1]");
  const std::size_t n = ds.images.size();
  if (features.size() != n) throw std::invalid_argument("evaluate: features do not match the dataset");
  bool need_sphere = false;
  for (Method m : opt.methods) need_sphere |= m != Method::feature;
  if (need_sphere && spheres.size() != n) throw std::invalid_argument("evaluate: sphere maps do not match the dataset");

  std::vector<UnitFeatures> uf(n);
  std::vector<SphereMap> us(n);
  parallel_for(n, [&](std::size_t i) {
    uf[i] = unit_features(features[i]);
    if (need_sphere) us[i] = resample_sphere(spheres[i], features[i].height, features[i].width);
    else us[i] = SphereMap{features[i].height, features[i].width,
                           std::vector<double>(3 * features[i].pixels(), 0.0)};
  });

  const std::size_t nm = opt.methods.size();
  std::vector<std::vector<MethodAcc>> per_source(n, std::vector<MethodAcc>(nm));
  const double ninf = -std::numeric_limits<double>::infinity();

  parallel_for(n, [&](std::size_t i) {
    const ImageRecord& src = ds.images[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const ImageRecord& tgt = ds.images[j];
      if (tgt.category != src.category) continue;
      const DenseFeatureMap& tf = features[j];
      const double threshold = opt.kappa * tgt.ann.bbox.max_side();
      const std::string pair = src.id + "->" + tgt.id;
      for (const auto& [kp, loc] : src.ann.keypoints) {
        if (!loc) continue;
        const std::size_t q = pixel_index(*loc, features[i].height, features[i].width);
        const SimilarityVolume vol = similarity_volume(uf[i], us[i], q, uf[j], us[j], opt.alpha);
        auto gt_it = tgt.ann.keypoints.find(kp);
        const std::optional<PixelCoord> gt = gt_it == tgt.ann.keypoints.end() ? std::nullopt : gt_it->second;
        std::optional<PixelCoord> mirror;
        bool have_mirror = false;
        if (auto m = tgt.mirror_keypoints.find(kp); m != tgt.mirror_keypoints.end()) {
          have_mirror = true;
          mirror = m->second;
        }
        for (std::size_t k = 0; k < nm; ++k) {
          std::vector<double> scores;
          switch (opt.methods[k]) {
            case Method::feature: scores = vol.feature; break;
            case Method::sphere_unmasked: scores = vol.sphere; break;
            case Method::alpha_mix: scores = vol.score; break;
            case Method::sphere_masked:
              scores = vol.sphere;
              if (tf.has_mask())
                for (std::size_t p = 0; p < scores.size(); ++p)
                  if (!tf.mask[p]) scores[p] = ninf;
              break;
          }
          std::size_t best = scores.size();
          for (std::size_t p = 0; p < scores.size(); ++p)
            if (scores[p] != ninf && (best == scores.size() || scores[p] > scores[best])) best = p;
          if (best == scores.size()) throw std::invalid_argument("evaluate: target " + tgt.id + " has an empty mask");
          KeypointQuery kq{src.category, pair, kp, gt, threshold, coord_of(best, tf.width)};
          MethodAcc& acc = per_source[i][k];
          for (auto& s : kap_samples(kq, scores, tf.height, tf.width)) {
            acc.samples.push_back(std::move(s));
            acc.sample_cats.push_back(src.category);
          }
          if (have_mirror) {
            const MirrorCheck mc = mirror_check(kq, mirror);
            acc.mirror_cases += mc.counted;
            acc.mirror_confused += mc.confused;
          }
          acc.queries.push_back(std::move(kq));
        }
      }
    }
  });

  std::vector<MetricReport> reports;
  for (std::size_t k = 0; k < nm; ++k) {
    MethodAcc all;
    for (std::size_t i = 0; i < n; ++i) {
      MethodAcc& a = per_source[i][k];
      all.queries.insert(all.queries.end(), a.queries.begin(), a.queries.end());
      all.samples.insert(all.samples.end(), a.samples.begin(), a.samples.end());
      all.sample_cats.insert(all.sample_cats.end(), a.sample_cats.begin(), a.sample_cats.end());
      all.mirror_cases += a.mirror_cases;
      all.mirror_confused += a.mirror_confused;
    }
    MetricReport r;
    r.method = method_name(opt.methods[k]);
    r.kappa = opt.kappa;
    if (opt.methods[k] == Method::alpha_mix) r.alpha = opt.alpha;
    compute_pck(all.queries, r);
    compute_kap(all.samples, all.sample_cats, r);
    r.mirror_cases = all.mirror_cases;
    if (all.mirror_cases)
      r.mirror_confusion = static_cast<double>(all.mirror_confused) / static_cast<double>(all.mirror_cases);
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace spherecorr
