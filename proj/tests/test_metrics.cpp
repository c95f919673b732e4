#include <doctest.h>

#include <cmath>
#include <limits>

#include "spherecorr/metrics.hpp"
#include "spherecorr/rng.hpp"

using namespace spherecorr;

namespace {

using Scored = std::vector<std::pair<double, bool>>;

// Rank-prefix oracle: a positive's rank counts every higher score, every
// tied negative, and tied positives listed before it.
double ap_oracle(const Scored& s) {
  double sum = 0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i].second) continue;
    ++npos;
    std::size_t rank = 1, tp = 1;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const bool ahead = s[j].first > s[i].first ||
                         (s[j].first == s[i].first && (!s[j].second || j < i));
      if (!ahead) continue;
      ++rank;
      tp += s[j].second;
    }
    sum += static_cast<double>(tp) / static_cast<double>(rank);
  }
  return sum / static_cast<double>(npos);
}

KeypointQuery query(std::optional<PixelCoord> gt, PixelCoord pred, double thr = 2.0,
                    const std::string& pair = "a->b", const std::string& cat = "c") {
  return {cat, pair, "k", gt, thr, pred};
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(average_precision(Scored{{0.9, true}, {0.8, false}, {0.7, true}}) == doctest::Approx((1 + 2.0 / 3) / 2));
  CHECK(average_precision(Scored{{3, true}, {2, true}, {1, false}, {0, false}}) == 1.0);
  Scored worst{{0.0, true}};
  for (int i = 0; i < 9; ++i) worst.push_back({1.0 + i, false});
  CHECK(average_precision(worst) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS(average_precision(Scored{{1.0, false}}));
  CHECK_THROWS(average_precision(Scored{}));
  // ties resolve against the positive
  CHECK(average_precision(Scored{{1.0, true}, {1.0, false}}) == 0.5);
}

TEST_CASE("average precision equals the rank-prefix oracle") {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng.below(20);
    Scored s;
    for (std::size_t i = 0; i < n; ++i) s.push_back({static_cast<double>(rng.below(6)) / 5.0, rng.uniform() < 0.4});
    if (std::none_of(s.begin(), s.end(), [](const auto& x) { return x.second; })) s[0].second = true;
    CHECK(std::abs(average_precision(s) - ap_oracle(s)) <= 1e-12);
  }
}

TEST_CASE("pck threshold is closed") {
  MetricReport r;
  compute_pck({query(PixelCoord{5, 5}, {5, 5}, 0.01)}, r);
  CHECK(*r.pck == 1.0);
  MetricReport b;
  compute_pck({query(PixelCoord{0, 0}, {3, 4}, 5.0)}, b);
  CHECK(*b.pck == 1.0);
  MetricReport h;
  compute_pck({query(PixelCoord{0, 0}, {0, 1}), query(PixelCoord{0, 0}, {0, 3})}, h);
  CHECK(*h.pck == 0.5);
}

TEST_CASE("pck averages per pair, then category, then macro") {
  MetricReport r;
  compute_pck({query(PixelCoord{0, 0}, {0, 0}, 1, "p1", "x"), query(PixelCoord{0, 0}, {9, 9}, 1, "p1", "x"),
               query(PixelCoord{0, 0}, {9, 9}, 1, "p1", "x"), query(PixelCoord{0, 0}, {0, 0}, 1, "p2", "x"),
               query(PixelCoord{0, 0}, {9, 9}, 1, "p3", "y"), query(std::nullopt, {0, 0}, 1, "p4", "y")},
              r);
  CHECK(*r.categories["x"].pck == doctest::Approx((1.0 / 3 + 1.0) / 2));
  CHECK(*r.categories["y"].pck == 0.0);
  CHECK(r.categories["y"].skipped_pairs == 1);
  CHECK(*r.pck == doctest::Approx((2.0 / 3) / 2));
}

TEST_CASE("kap sample cases") {
  // 1 x 5 grid, scores peak inside the radius
  const std::vector<double> scores{0.1, 0.9, 0.3, 0.2, 0.5};
  auto s = kap_samples(query(PixelCoord{1, 0}, {1, 0}, 1.0), scores, 1, 5);
  REQUIRE(s.size() == 2);
  CHECK(s[0].positive);
  CHECK(s[0].score == 0.9);
  CHECK_FALSE(s[1].positive);
  CHECK(s[1].score == 0.5);
  CHECK(average_precision(s) == 1.0);

  s = kap_samples(query(std::nullopt, {1, 0}), scores, 1, 5);
  REQUIRE(s.size() == 1);
  CHECK_FALSE(s[0].positive);
  CHECK(s[0].score == 0.9);
  CHECK(s[0].kase == KapCase::invisible_target);
  CHECK_THROWS(average_precision(s));

  // excluded pixels do not compete
  const double ninf = -std::numeric_limits<double>::infinity();
  s = kap_samples(query(PixelCoord{0, 0}, {0, 0}, 1.0), {ninf, ninf, ninf, 0.4, ninf}, 1, 5);
  REQUIRE(s.size() == 1);
  CHECK_FALSE(s[0].positive);
  CHECK(s[0].score == 0.4);
}

TEST_CASE("oracle predictor scores 100") {
  // score = -distance to the truth; invisible targets get a flat low grid
  Rng rng(2);
  const std::size_t h = 12, w = 12;
  std::vector<KeypointQuery> qs;
  std::vector<KapSample> samples;
  std::vector<std::string> cats;
  for (int i = 0; i < 40; ++i) {
    const bool visible = rng.uniform() < 0.7;
    const PixelCoord gt{static_cast<double>(rng.below(w)), static_cast<double>(rng.below(h))};
    std::vector<double> sc(h * w);
    for (std::size_t p = 0; p < h * w; ++p)
      sc[p] = visible ? -std::hypot(static_cast<double>(p % w) - gt.x, static_cast<double>(p / w) - gt.y) : -100.0;
    const std::string cat = i % 2 ? "a" : "b";
    KeypointQuery q{cat, "pair" + std::to_string(i % 5), "k" + std::to_string(i),
                    visible ? std::optional<PixelCoord>(gt) : std::nullopt, 1.5, gt};
    for (auto& s : kap_samples(q, sc, h, w)) {
      samples.push_back(s);
      cats.push_back(cat);
    }
    qs.push_back(q);
  }
  MetricReport r;
  compute_pck(qs, r);
  compute_kap(samples, cats, r);
  CHECK(*r.pck == 1.0);
  CHECK(*r.kap == 1.0);
  const std::string table = format_table({r});
  CHECK(table.find("100.0") != std::string::npos);
}

TEST_CASE("table layout") {
  MetricReport r;
  r.method = "alpha-mix";
  r.kappa = 0.05;
  r.alpha = 0.2;
  r.categories["car"].pck = 0.6361;
  r.categories["car"].kap = 0.5149;
  r.categories["car"].pairs = 3;
  r.pck = 0.6361;
  r.kap = 0.5149;
  const std::string t = format_table({r});
  CHECK(t.rfind("kappa = 0.05\n", 0) == 0);
  CHECK(t.find("car") != std::string::npos);
  CHECK(t.find("macro") != std::string::npos);
  CHECK(t.find("63.6") != std::string::npos);
  CHECK(t.find("51.5") != std::string::npos);
  const auto j = r.to_json();
  CHECK(j["kappa"] == 0.05);
  CHECK(j["macro"]["pck"] == 0.6361);
}

TEST_CASE("mirror check") {
  const KeypointQuery q = query(PixelCoord{0, 0}, {10, 0}, 2.0);
  CHECK(mirror_check(q, PixelCoord{10, 1}).counted);
  CHECK(mirror_check(q, PixelCoord{10, 1}).confused);
  CHECK_FALSE(mirror_check(q, PixelCoord{3, 0}).counted);  // mirror too close to the truth
  CHECK_FALSE(mirror_check(q, std::nullopt).counted);
  CHECK_FALSE(mirror_check(query(PixelCoord{0, 0}, {0, 0}), PixelCoord{10, 0}).confused);
}
