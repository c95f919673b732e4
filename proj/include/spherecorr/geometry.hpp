#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace spherecorr {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);  // throws on zero vector

// Unit vector on S^2. The constructor checks the norm to 1e-6.
class SpherePoint {
 public:
  explicit SpherePoint(const Vec3& v);
  static SpherePoint from_any(const Vec3& v) { return SpherePoint(normalized(v)); }
  const Vec3& v() const { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }

 private:
  Vec3 v_;
};

struct ViewpointVector {
  Vec3 v;
  int bin;
  int bins;
};

struct TangentVector {
  SpherePoint base;
  Vec3 u;
};

// Pixel position with x = column and y = row (increasing downward).
struct PixelCoord {
  double x;
  double y;
};

// H x W grid of unit 3-vectors, row-major, three doubles per pixel.
struct SphereMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  std::size_t pixels() const { return height * width; }
  Vec3 at(std::size_t idx) const { return {data[3 * idx], data[3 * idx + 1], data[3 * idx + 2]}; }
};

// 1 - u.v / (|u||v|). Throws on a zero-norm input.
double cosine_distance(std::span<const double> u, std::span<const double> v);
inline double cosine_distance(const Vec3& u, const Vec3& v) {
  return cosine_distance(std::span<const double>(u), std::span<const double>(v));
}

// Mean of the included unit vectors; with a mask only pixels where
// mask != 0 are included. Throws when nothing is included.
Vec3 mean_direction(const SphereMap& map, const std::vector<std::uint8_t>* mask = nullptr);

// u_b = s_b - (s_a . s_b) s_a, in the tangent plane at s_a.
TangentVector tangent_project(const SpherePoint& a, const SpherePoint& b);

// (u_b x u_c) . s_a on unit tangent vectors. nullopt when a projection is
// shorter than 1e-9 or the two tangents are parallel to within 1e-9.
std::optional<double> sphere_determinant(const SpherePoint& a, const SpherePoint& b,
                                         const SpherePoint& c);

// det(b - a, c - a) on unit difference vectors: the sine of the signed
// angle from b - a to c - a. Throws if b or c coincides with a.
double image_determinant(PixelCoord a, PixelCoord b, PixelCoord c);

// Bin centre azimuth 2 pi (bin + 0.5) / K as (cos, sin, 0).
ViewpointVector viewpoint_vector(int bin, int bins);

// Bin of an azimuth in radians, any real value accepted.
int azimuth_bin(double azimuth, int bins);

using Mat3 = std::array<double, 9>;  // row-major

inline Vec3 mat_apply(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

// Orthogonal Q (rotation or reflection) minimizing sum |Q x_i - y_i|^2.
// Rank-deficient problems are completed with a right-handed choice for the
// unconstrained directions. Throws on size mismatch or empty input.
Mat3 orthogonal_procrustes(const std::vector<Vec3>& x, const std::vector<Vec3>& y);

}  // namespace spherecorr
