#include <doctest.h>

#include <cmath>
#include <numbers>

#include "spherecorr/geometry.hpp"
#include "spherecorr/rng.hpp"

using namespace spherecorr;

namespace {

Vec3 random_unit(Rng& rng) {
  return normalized({rng.normal(), rng.normal(), rng.normal()});
}

// Random proper rotation from a unit quaternion.
std::array<Vec3, 3> random_rotation(Rng& rng) {
  double q[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& v : q) v /= n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Vec3 apply(const std::array<Vec3, 3>& r, const Vec3& v) { return {dot(r[0], v), dot(r[1], v), dot(r[2], v)}; }

SphereMap map_of(std::initializer_list<Vec3> pts) {
  SphereMap m{1, pts.size(), {}};
  for (const Vec3& p : pts) m.data.insert(m.data.end(), p.begin(), p.end());
  return m;
}

}  // namespace

TEST_CASE("cosine distance examples") {
  const Vec3 e1{1, 0, 0}, e2{0, 1, 0}, m1{-1, 0, 0};
  CHECK(cosine_distance(e1, e1) == 0.0);
  CHECK(cosine_distance(e1, m1) == 2.0);
  CHECK(cosine_distance(e1, e2) == 1.0);
  CHECK_THROWS(cosine_distance(e1, Vec3{0, 0, 0}));
}

TEST_CASE("mean direction examples") {
  auto m = mean_direction(map_of({{0, 0, 1}}));
  CHECK(m == Vec3{0, 0, 1});
  m = mean_direction(map_of({{1, 0, 0}, {-1, 0, 0}}));
  CHECK(m == Vec3{0, 0, 0});
  m = mean_direction(map_of({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}}));
  CHECK(m == Vec3{0.5, 0.25, 0.25});
  std::vector<std::uint8_t> mask{0, 1, 0, 0};
  m = mean_direction(map_of({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}}), &mask);
  CHECK(m == Vec3{0, 1, 0});
  std::vector<std::uint8_t> none{0, 0};
  CHECK_THROWS(mean_direction(map_of({{1, 0, 0}, {0, 1, 0}}), &none));
}

TEST_CASE("mean direction norm is at most one and one only for identical vectors") {
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    SphereMap m{1, 5, {}};
    for (int i = 0; i < 5; ++i) {
      const Vec3 p = random_unit(rng);
      m.data.insert(m.data.end(), p.begin(), p.end());
    }
    CHECK(norm(mean_direction(m)) < 1.0);
  }
  const Vec3 p = random_unit(rng);
  CHECK(std::abs(norm(mean_direction(map_of({p, p, p}))) - 1.0) < 1e-15);
}

TEST_CASE("tangent projection examples") {
  const SpherePoint z({0, 0, 1});
  auto u = tangent_project(z, z).u;
  CHECK(u == Vec3{0, 0, 0});
  u = tangent_project(z, SpherePoint({1, 0, 0})).u;
  CHECK(u == Vec3{1, 0, 0});
  const double h = std::sqrt(2.0) / 2.0;
  u = tangent_project(z, SpherePoint({0, h, h})).u;
  CHECK(u[0] == 0.0);
  CHECK(std::abs(u[1] - h) < 1e-15);
  CHECK(std::abs(u[2]) < 1e-15);
}

TEST_CASE("tangent projection is orthogonal to the base point") {
  Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    const SpherePoint a(random_unit(rng)), b(random_unit(rng));
    CHECK(std::abs(dot(tangent_project(a, b).u, a.v())) < 1e-9);
  }
}

TEST_CASE("sphere determinant examples") {
  const SpherePoint a({0, 0, 1}), b({1, 0, 0}), c({0, 1, 0});
  CHECK(*sphere_determinant(a, b, c) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*sphere_determinant(a, c, b) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_FALSE(sphere_determinant(a, b, b).has_value());
  CHECK_FALSE(sphere_determinant(a, a, b).has_value());
}

TEST_CASE("sphere determinant antisymmetry and rotation invariance") {
  Rng rng(21);
  int checked = 0;
  for (int t = 0; t < 1000; ++t) {
    const Vec3 a = random_unit(rng), b = random_unit(rng), c = random_unit(rng);
    const auto d = sphere_determinant(SpherePoint(a), SpherePoint(b), SpherePoint(c));
    const auto ds = sphere_determinant(SpherePoint(a), SpherePoint(c), SpherePoint(b));
    REQUIRE(d.has_value());
    CHECK(std::abs(*d + *ds) < 1e-9);
    const auto r = random_rotation(rng);
    const auto dr = sphere_determinant(SpherePoint::from_any(apply(r, a)),
                                       SpherePoint::from_any(apply(r, b)),
                                       SpherePoint::from_any(apply(r, c)));
    CHECK(std::abs(*dr - *d) < 1e-9);
    CHECK(std::abs(*d) <= 1.0 + 1e-15);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("image determinant examples") {
  CHECK(image_determinant({0, 0}, {1, 0}, {0, 1}) == 1.0);
  CHECK(image_determinant({0, 0}, {2, 0}, {0, 3}) == 1.0);
  CHECK(image_determinant({0, 0}, {1, 1}, {3, 3}) == 0.0);
  CHECK_THROWS(image_determinant({1, 1}, {1, 1}, {0, 3}));
}

TEST_CASE("image determinant scale, translation and reflection") {
  Rng rng(13);
  for (int t = 0; t < 1000; ++t) {
    PixelCoord a{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    PixelCoord b{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    PixelCoord c{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const double d = image_determinant(a, b, c);
    const double s = std::exp(rng.uniform(-3, 3));
    const double tx = rng.uniform(-100, 100), ty = rng.uniform(-100, 100);
    auto tr = [&](PixelCoord p) { return PixelCoord{s * p.x + tx, s * p.y + ty}; };
    CHECK(std::abs(image_determinant(tr(a), tr(b), tr(c)) - d) < 1e-9);
    auto fl = [](PixelCoord p) { return PixelCoord{-p.x, p.y}; };
    CHECK(std::abs(image_determinant(fl(a), fl(b), fl(c)) + d) < 1e-9);
    CHECK(std::abs(d) <= 1.0 + 1e-15);
  }
}

TEST_CASE("viewpoint vectors") {
  auto v = viewpoint_vector(0, 4);
  CHECK(std::abs(v.v[0] - std::sqrt(0.5)) < 1e-15);
  CHECK(std::abs(v.v[1] - std::sqrt(0.5)) < 1e-15);
  CHECK(v.v[2] == 0.0);
  v = viewpoint_vector(2, 8);
  CHECK(std::abs(v.v[0] - (-0.3827)) < 1e-4);
  CHECK(std::abs(v.v[1] - 0.9239) < 1e-4);
  for (int k = 2; k <= 64; ++k)
    for (int b = 0; b < k; ++b) CHECK(std::abs(dot(viewpoint_vector(b, k).v, viewpoint_vector(b, k).v) - 1.0) < 1e-15);
  CHECK_THROWS(viewpoint_vector(8, 8));
  CHECK_THROWS(viewpoint_vector(-1, 8));
  CHECK_THROWS(viewpoint_vector(0, 1));
  CHECK(azimuth_bin(0.1, 8) == 0);
  CHECK(azimuth_bin(2 * std::numbers::pi - 1e-9, 8) == 7);
  CHECK(azimuth_bin(-0.1, 8) == 7);
}

TEST_CASE("sphere points must be unit") {
  CHECK_THROWS(SpherePoint({1, 1, 0}));
  CHECK_NOTHROW(SpherePoint({1 + 1e-7, 0, 0}));
}
