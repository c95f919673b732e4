#include "spherecorr/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "spherecorr/kernels.hpp"

namespace spherecorr {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("matcher: alpha must be in [0, 1]");
}

void normalize_rows(std::vector<double>& rows, std::size_t width) {
  for (std::size_t i = 0; i + width <= rows.size(); i += width) {
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += rows[i + j] * rows[i + j];
    const double n = std::sqrt(s);
    if (n == 0.0) continue;  // stays zero: cosine 0 against everything
    for (std::size_t j = 0; j < width; ++j) rows[i + j] /= n;
  }
}

// Similarities are maximized with first-occurrence ties. Maximizing
// 1 - Gamma is the same as minimizing Gamma.
std::size_t first_argmax(const std::vector<double>& v, const std::vector<std::uint8_t>* mask) {
  std::size_t best = v.size();
  double bv = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    if (best == v.size() || v[i] > bv) {
      best = i;
      bv = v[i];
    }
  }
  return best;
}

void sphere_cosines(const SphereMap& ss, std::size_t q, const SphereMap& ts, std::vector<double>& out) {
  const double* a = ss.data.data() + 3 * q;
  out.resize(ts.pixels());
  for (std::size_t p = 0; p < ts.pixels(); ++p) {
    const double* b = ts.data.data() + 3 * p;
    out[p] = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  }
}

void feature_cosines(const UnitFeatures& sf, std::size_t q, const UnitFeatures& tf, std::vector<double>& out) {
  const auto& kt = kernels::active();
  out.resize(tf.height * tf.width);
  kt.gemv(out.size(), tf.channels, tf.rows.data(), sf.rows.data() + q * sf.channels, out.data());
}

void check_query(std::size_t q, std::size_t pixels) {
  if (q >= pixels) throw std::out_of_range("matcher: query pixel outside the source grid");
}

void check_pair(const UnitFeatures& sf, const SphereMap& ss, const UnitFeatures& tf, const SphereMap& ts) {
  if (sf.channels != tf.channels) throw std::invalid_argument("matcher: feature channels differ");
  if (ss.height != sf.height || ss.width != sf.width || ts.height != tf.height || ts.width != tf.width)
    throw std::invalid_argument("matcher: sphere map not on the feature grid");
}

}  // namespace

std::size_t pixel_index(PixelCoord q, std::size_t height, std::size_t width) {
  const double c = std::round(q.x), r = std::round(q.y);
  if (!(c >= 0.0 && r >= 0.0 && c < static_cast<double>(width) && r < static_cast<double>(height)))
    throw std::out_of_range("pixel (" + std::to_string(q.x) + ", " + std::to_string(q.y) + ") outside " +
                            std::to_string(height) + "x" + std::to_string(width) + " grid");
  return static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c);
}

UnitFeatures unit_features(const DenseFeatureMap& f) {
  UnitFeatures u{f.height, f.width, f.channels, std::vector<double>(f.data.begin(), f.data.end())};
  normalize_rows(u.rows, f.channels);
  return u;
}

SphereMap unit_sphere(const SphereMap& s) {
  SphereMap u = s;
  normalize_rows(u.data, 3);
  return u;
}

SphereMap resample_sphere(const SphereMap& s, std::size_t height, std::size_t width) {
  if (s.height == 0 || s.width == 0 || height == 0 || width == 0)
    throw std::invalid_argument("resample_sphere: empty grid");
  if (s.height == height && s.width == width) return unit_sphere(s);
  SphereMap out{height, width, std::vector<double>(height * width * 3)};
  auto coord = [](std::size_t i, std::size_t n_out, std::size_t n_in, std::size_t& i0, std::size_t& i1, double& t) {
    double x = (static_cast<double>(i) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(n_in - 1));
    i0 = static_cast<std::size_t>(std::floor(x));
    i1 = std::min(i0 + 1, n_in - 1);
    t = x - static_cast<double>(i0);
  };
  for (std::size_t r = 0; r < height; ++r) {
    std::size_t r0, r1;
    double tr;
    coord(r, height, s.height, r0, r1, tr);
    for (std::size_t c = 0; c < width; ++c) {
      std::size_t c0, c1;
      double tc;
      coord(c, width, s.width, c0, c1, tc);
      for (int k = 0; k < 3; ++k) {
        const double v00 = s.data[3 * (r0 * s.width + c0) + k], v01 = s.data[3 * (r0 * s.width + c1) + k];
        const double v10 = s.data[3 * (r1 * s.width + c0) + k], v11 = s.data[3 * (r1 * s.width + c1) + k];
        out.data[3 * (r * width + c) + k] =
            (1 - tr) * ((1 - tc) * v00 + tc * v01) + tr * ((1 - tc) * v10 + tc * v11);
      }
    }
  }
  normalize_rows(out.data, 3);
  return out;
}

std::size_t match_sphere_only(const SphereMap& source, std::size_t q, const SphereMap& target,
                              const std::vector<std::uint8_t>* target_mask) {
  check_query(q, source.pixels());
  if (target_mask && target_mask->size() != target.pixels())
    throw std::invalid_argument("match_sphere_only: mask size differs from the target grid");
  const SphereMap ss = unit_sphere(source), ts = unit_sphere(target);
  std::vector<double> cs;
  sphere_cosines(ss, q, ts, cs);
  const std::size_t best = first_argmax(cs, target_mask);
  if (best == cs.size()) throw std::invalid_argument("match_sphere_only: empty target mask");
  return best;
}

SimilarityVolume similarity_volume(const UnitFeatures& sf, const SphereMap& ss, std::size_t q, const UnitFeatures& tf,
                                   const SphereMap& ts, double alpha) {
  check_alpha(alpha);
  check_pair(sf, ss, tf, ts);
  check_query(q, sf.height * sf.width);
  SimilarityVolume v;
  v.height = tf.height;
  v.width = tf.width;
  v.alpha = alpha;
  feature_cosines(sf, q, tf, v.feature);
  sphere_cosines(ss, q, ts, v.sphere);
  v.score.resize(v.feature.size());
  const double wf = 1.0 - alpha;
  for (std::size_t p = 0; p < v.score.size(); ++p) v.score[p] = wf * v.feature[p] + alpha * v.sphere[p];
  return v;
}

std::size_t match_combined(const UnitFeatures& sf, const SphereMap& ss, std::size_t q, const UnitFeatures& tf,
                           const SphereMap& ts, double alpha) {
  return similarity_volume(sf, ss, q, tf, ts, alpha).argmax();
}

std::size_t match_feature_only(const UnitFeatures& sf, std::size_t q, const UnitFeatures& tf) {
  if (sf.channels != tf.channels) throw std::invalid_argument("matcher: feature channels differ");
  check_query(q, sf.height * sf.width);
  std::vector<double> cf;
  feature_cosines(sf, q, tf, cf);
  return first_argmax(cf, nullptr);
}

std::size_t SimilarityVolume::argmax() const {
  if (score.empty()) throw std::invalid_argument("similarity volume is empty");
  return first_argmax(score, nullptr);
}

SimilarityVolume similarity_volume(const DenseFeatureMap& source_feat, const SphereMap& source_sphere, std::size_t q,
                                   const DenseFeatureMap& target_feat, const SphereMap& target_sphere,
                                   double alpha) {
  check_alpha(alpha);
  const UnitFeatures sf = unit_features(source_feat), tf = unit_features(target_feat);
  const SphereMap ss = resample_sphere(source_sphere, sf.height, sf.width);
  const SphereMap ts = resample_sphere(target_sphere, tf.height, tf.width);
  return similarity_volume(sf, ss, q, tf, ts, alpha);
}

std::size_t match_combined(const DenseFeatureMap& source_feat, const SphereMap& source_sphere, std::size_t q,
                           const DenseFeatureMap& target_feat, const SphereMap& target_sphere, double alpha) {
  return similarity_volume(source_feat, source_sphere, q, target_feat, target_sphere, alpha).argmax();
}

}  // namespace spherecorr
