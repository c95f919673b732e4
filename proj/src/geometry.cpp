#include "spherecorr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace spherecorr {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (!(n > 0.0)) throw std::invalid_argument("normalized: zero vector");
  return {a[0] / n, a[1] / n, a[2] / n};
}

SpherePoint::SpherePoint(const Vec3& v) : v_(v) {
  if (!(std::abs(norm(v) - 1.0) <= 1e-6))
    throw std::invalid_argument("SpherePoint: norm " + std::to_string(norm(v)) + " is not 1");
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_distance: length mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw std::invalid_argument("cosine_distance: zero-norm input");
  return 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
}

Vec3 mean_direction(const SphereMap& map, const std::vector<std::uint8_t>* mask) {
  if (mask && mask->size() != map.pixels())
    throw std::invalid_argument("mean_direction: mask size mismatch");
  Vec3 s{0.0, 0.0, 0.0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < map.pixels(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    for (int k = 0; k < 3; ++k) s[k] += map.data[3 * i + k];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("mean_direction: no included pixels");
  for (double& c : s) c /= static_cast<double>(n);
  return s;
}

TangentVector tangent_project(const SpherePoint& a, const SpherePoint& b) {
  const double d = dot(a.v(), b.v());
  const Vec3 u{b[0] - d * a[0], b[1] - d * a[1], b[2] - d * a[2]};
  return TangentVector{a, u};
}

std::optional<double> sphere_determinant(const SpherePoint& a, const SpherePoint& b,
                                         const SpherePoint& c) {
  const Vec3 ub = tangent_project(a, b).u;
  const Vec3 uc = tangent_project(a, c).u;
  const double nb = norm(ub), nc = norm(uc);
  if (nb < 1e-9 || nc < 1e-9) return std::nullopt;
  const Vec3 hb{ub[0] / nb, ub[1] / nb, ub[2] / nb};
  const Vec3 hc{uc[0] / nc, uc[1] / nc, uc[2] / nc};
  const Vec3 x = cross(hb, hc);
  if (norm(x) < 1e-9) return std::nullopt;
  return dot(x, a.v());
}

double image_determinant(PixelCoord a, PixelCoord b, PixelCoord c) {
  const double bx = b.x - a.x, by = b.y - a.y;
  const double cx = c.x - a.x, cy = c.y - a.y;
  const double nb = std::hypot(bx, by), nc = std::hypot(cx, cy);
  if (!(nb > 0.0) || !(nc > 0.0)) throw std::invalid_argument("image_determinant: coincident points");
  return (bx / nb) * (cy / nc) - (by / nb) * (cx / nc);
}

ViewpointVector viewpoint_vector(int bin, int bins) {
  if (bins < 2) throw std::invalid_argument("viewpoint_vector: need at least 2 bins");
  if (bin < 0 || bin >= bins) throw std::out_of_range("viewpoint_vector: bin out of range");
  const double th = 2.0 * std::numbers::pi * (bin + 0.5) / bins;
  return ViewpointVector{{std::cos(th), std::sin(th), 0.0}, bin, bins};
}

int azimuth_bin(double azimuth, int bins) {
  if (bins < 2) throw std::invalid_argument("azimuth_bin: need at least 2 bins");
  const double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(azimuth, two_pi);
  if (a < 0.0) a += two_pi;
  int b = static_cast<int>(std::floor(a / (two_pi / bins)));
  if (b >= bins) b = bins - 1;
  return b;
}

namespace {

// Eigen-decomposition of a symmetric 3 x 3 matrix by cyclic Jacobi
// rotations. Columns of v are eigenvectors, sorted by decreasing value.
void jacobi_eigen3(Mat3 a, Vec3& w, Mat3& v) {
  v = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a[3 * p + q];
        if (apq == 0.0) continue;
        const double theta = (a[3 * q + q] - a[3 * p + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < 3; ++k) {  // a <- a J
          const double akp = a[3 * k + p], akq = a[3 * k + q];
          a[3 * k + p] = c * akp - s * akq;
          a[3 * k + q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {  // a <- J^T a
          const double apk = a[3 * p + k], aqk = a[3 * q + k];
          a[3 * p + k] = c * apk - s * aqk;
          a[3 * q + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[3 * k + p], vkq = v[3 * k + q];
          v[3 * k + p] = c * vkp - s * vkq;
          v[3 * k + q] = s * vkp + c * vkq;
        }
      }
  }
  w = {a[0], a[4], a[8]};
  for (int i = 0; i < 2; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (w[j] > w[i]) {
        std::swap(w[i], w[j]);
        for (int k = 0; k < 3; ++k) std::swap(v[3 * k + i], v[3 * k + j]);
      }
}

Vec3 any_orthogonal(const Vec3& u) {
  const Vec3 e = std::abs(u[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalized(cross(u, e));
}

}  // namespace

Mat3 orthogonal_procrustes(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
  if (x.empty() || x.size() != y.size()) throw std::invalid_argument("orthogonal_procrustes: size mismatch");
  Mat3 m{};
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m[3 * r + c] += y[i][r] * x[i][c];
  Mat3 mtm{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) mtm[3 * r + c] += m[3 * k + r] * m[3 * k + c];
  Vec3 w;
  Mat3 v;
  jacobi_eigen3(mtm, w, v);
  std::array<Vec3, 3> vc, uc;
  for (int i = 0; i < 3; ++i) vc[i] = {v[i], v[3 + i], v[6 + i]};
  const double tol = 1e-12 * std::max(w[0], 1e-300);
  int rank = 0;
  for (int i = 0; i < 3; ++i) {
    if (w[i] <= tol) break;
    const Vec3 mv = mat_apply(m, vc[i]);
    uc[i] = normalized(mv);
    ++rank;
  }
  if (rank == 0) return {1, 0, 0, 0, 1, 0, 0, 0, 1};
  if (rank == 1) uc[1] = any_orthogonal(uc[0]);
  if (rank <= 2) uc[2] = cross(uc[0], uc[1]);
  if (rank <= 2) {
    // Right-handed completion of the x frame as well.
    vc[2] = cross(vc[0], vc[1]);
    if (rank == 1) {
      vc[1] = any_orthogonal(vc[0]);
      vc[2] = cross(vc[0], vc[1]);
    }
  }
  Mat3 q{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) q[3 * r + c] += uc[k][r] * vc[k][c];
  return q;
}

}  // namespace spherecorr
