#include <doctest.h>

#include <cmath>
#include <numbers>

#include "spherecorr/losses.hpp"
#include "spherecorr/matcher.hpp"
#include "spherecorr/rng.hpp"
#include "spherecorr/synth.hpp"

using namespace spherecorr;

namespace {

DenseFeatureMap random_features(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  DenseFeatureMap m;
  m.height = h;
  m.width = w;
  m.channels = c;
  for (std::size_t i = 0; i < h * w * c; ++i) m.data.push_back(static_cast<float>(rng.normal()));
  return m;
}

SphereMap random_sphere(Rng& rng, std::size_t h, std::size_t w) {
  SphereMap s{h, w, {}};
  for (std::size_t i = 0; i < h * w; ++i) {
    const Vec3 v = normalized({rng.normal(), rng.normal(), rng.normal()});
    s.data.insert(s.data.end(), v.begin(), v.end());
  }
  return s;
}

double cosine(const double* a, const double* b, std::size_t n) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

// Exhaustive argmin of the blended cosine distance.
std::size_t brute_force(const DenseFeatureMap& sf, const SphereMap& ss, std::size_t q, const DenseFeatureMap& tf,
                        const SphereMap& ts, double alpha) {
  const std::size_t c = sf.channels;
  std::vector<double> a(sf.data.begin() + q * c, sf.data.begin() + (q + 1) * c);
  std::size_t best = 0;
  double bv = INFINITY;
  for (std::size_t p = 0; p < tf.pixels(); ++p) {
    std::vector<double> b(tf.data.begin() + p * c, tf.data.begin() + (p + 1) * c);
    const double gf = 1 - cosine(a.data(), b.data(), c);
    const double gs = 1 - cosine(&ss.data[3 * q], &ts.data[3 * p], 3);
    const double v = (1 - alpha) * gf + alpha * gs;
    if (v < bv) {
      bv = v;
      best = p;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("pixel index rounds and bounds-checks") {
  CHECK(pixel_index({0.0, 0.0}, 4, 5) == 0);
  CHECK(pixel_index({4.4, 3.2}, 4, 5) == 19);
  CHECK(pixel_index({1.6, 0.4}, 4, 5) == 2);
  CHECK_THROWS(pixel_index({5.0, 0.0}, 4, 5));
  CHECK_THROWS(pixel_index({-0.6, 0.0}, 4, 5));
}

TEST_CASE("self match") {
  Rng rng(1);
  const DenseFeatureMap f = random_features(rng, 6, 7, 8);
  const SphereMap s = random_sphere(rng, 6, 7);
  for (std::size_t q = 0; q < f.pixels(); ++q) {
    CHECK(match_combined(f, s, q, f, s, 0.2) == q);
    CHECK(match_sphere_only(s, q, s) == q);
  }
}

TEST_CASE("constant target sphere ties to the first pixel") {
  Rng rng(2);
  const SphereMap s = random_sphere(rng, 4, 4);
  SphereMap t{4, 4, {}};
  for (int i = 0; i < 16; ++i) t.data.insert(t.data.end(), {0.0, 0.6, 0.8});
  for (std::size_t q = 0; q < 16; ++q) CHECK(match_sphere_only(s, q, t) == 0);
  std::vector<std::uint8_t> mask(16, 0);
  mask[9] = mask[13] = 1;
  CHECK(match_sphere_only(s, 3, t, &mask) == 9);
  std::fill(mask.begin(), mask.end(), 0);
  CHECK_THROWS(match_sphere_only(s, 3, t, &mask));
}

TEST_CASE("3x3 maps agree with exhaustive search") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const DenseFeatureMap sf = random_features(rng, 3, 3, 4), tf = random_features(rng, 3, 3, 4);
    const SphereMap ss = random_sphere(rng, 3, 3), ts = random_sphere(rng, 3, 3);
    const std::size_t q = rng.below(9);
    const double alpha = rng.uniform();
    CHECK(match_combined(sf, ss, q, tf, ts, alpha) == brute_force(sf, ss, q, tf, ts, alpha));
  }
}

TEST_CASE("limit cases and volume properties") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 5 + rng.below(4), w = 5 + rng.below(4);
    const DenseFeatureMap sf = random_features(rng, h, w, 16), tf = random_features(rng, h, w, 16);
    const SphereMap ss = random_sphere(rng, h, w), ts = random_sphere(rng, h, w);
    const std::size_t q = rng.below(h * w);
    const UnitFeatures su = unit_features(sf), tu = unit_features(tf);
    CHECK(match_combined(sf, ss, q, tf, ts, 0.0) == match_feature_only(su, q, tu));
    CHECK(match_combined(sf, ss, q, tf, ts, 1.0) == match_sphere_only(ss, q, ts));

    const double alpha = rng.uniform();
    const SimilarityVolume v = similarity_volume(sf, ss, q, tf, ts, alpha);
    CHECK(v.argmax() == match_combined(sf, ss, q, tf, ts, alpha));
    CHECK(v.argmax() == match_combined(su, ss, q, tu, ts, alpha));
    for (double x : v.score) {
      CHECK(x >= -1.0 - 1e-12);
      CHECK(x <= 1.0 + 1e-12);
    }
    const SimilarityVolume v0 = similarity_volume(sf, ss, q, tf, ts, 0.0);
    CHECK(v0.score == v0.feature);
  }
  Rng r2(5);
  const DenseFeatureMap f = random_features(r2, 3, 3, 4);
  const SphereMap s = random_sphere(r2, 3, 3);
  CHECK_THROWS(similarity_volume(f, s, 0, f, s, 1.5));
  CHECK_THROWS(similarity_volume(f, s, 9, f, s, 0.5));
}

TEST_CASE("alpha sweep changes the match only at breakpoints") {
  Rng rng(6);
  const DenseFeatureMap sf = random_features(rng, 6, 6, 8), tf = random_features(rng, 6, 6, 8);
  const SphereMap ss = random_sphere(rng, 6, 6), ts = random_sphere(rng, 6, 6);
  // the winner at alpha is a pixel on the lower envelope of lines
  // (1 - a) f_p + a s_p; it can change at most h*w - 1 times
  std::size_t changes = 0, prev = match_combined(sf, ss, 7, tf, ts, 0.0);
  for (int i = 1; i <= 1000; ++i) {
    const std::size_t cur = match_combined(sf, ss, 7, tf, ts, i / 1000.0);
    changes += cur != prev;
    prev = cur;
  }
  CHECK(changes < 36);
}

TEST_CASE("zero vectors have cosine 0") {
  DenseFeatureMap f;
  f.height = 1;
  f.width = 2;
  f.channels = 2;
  f.data = {0, 0, 1, 0};
  const UnitFeatures u = unit_features(f);
  const SphereMap s{1, 2, {0, 0, 1, 0, 0, 1}};
  const SimilarityVolume v = similarity_volume(u, s, 0, u, s, 0.0);
  CHECK(v.feature[0] == 0.0);
  CHECK(v.feature[1] == 0.0);
}

TEST_CASE("resampling keeps unit norm and is identity on the same grid") {
  Rng rng(7);
  const SphereMap s = random_sphere(rng, 4, 4);
  const SphereMap same = resample_sphere(s, 4, 4);
  for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(same.data[i] == doctest::Approx(s.data[i]).epsilon(1e-15));
  const SphereMap up = resample_sphere(s, 9, 7);
  for (std::size_t i = 0; i < up.pixels(); ++i) CHECK(std::abs(norm(up.at(i)) - 1.0) < 1e-12);
}

TEST_CASE("true sphere coordinates break the symmetry that features cannot") {
  const SyntheticWorld w = generate_world(16, 11, true, 12);
  std::size_t sphere_hits = 0, sphere_cases = 0, feature_mirror = 0;
  for (double a0 : {0.3, 1.1, 2.0, 2.7, 3.5, 4.2, 5.0, 5.8}) {
    const RenderedView src = render_view(w, a0, 32, 32), tgt = render_view(w, a0 + 0.5, 32, 32);
    const SphereMap ss{32, 32, src.surface}, ts{32, 32, tgt.surface};
    const UnitFeatures su = unit_features(src.features), tu = unit_features(tgt.features);
    const double thr = 0.1 * 32;
    for (const auto& [kp, loc] : src.ann.keypoints) {
      const auto gi = tgt.ann.keypoints.find(kp), mi = tgt.mirror_keypoints.find(kp);
      if (!loc || gi == tgt.ann.keypoints.end() || mi == tgt.mirror_keypoints.end()) continue;
      const auto gt = gi->second, mirror = mi->second;
      if (!gt || !mirror) continue;
      if (std::hypot(gt->x - mirror->x, gt->y - mirror->y) <= 2 * thr) continue;
      const std::size_t q = pixel_index(*loc, 32, 32);
      const PixelCoord ps = pixel_of(match_sphere_only(ss, q, ts, &tgt.features.mask), 32);
      const PixelCoord pf = pixel_of(match_feature_only(su, q, tu), 32);
      ++sphere_cases;
      sphere_hits += std::hypot(ps.x - gt->x, ps.y - gt->y) <= thr;
      feature_mirror += std::hypot(pf.x - mirror->x, pf.y - mirror->y) <= thr;
    }
  }
  REQUIRE(sphere_cases > 5);
  CHECK(sphere_hits == sphere_cases);
  CHECK(feature_mirror > 0);
}
