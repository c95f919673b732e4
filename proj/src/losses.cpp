#include "spherecorr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace spherecorr {

namespace {

Tensor sphere_tensor(const SphereMap& s) { return Tensor({s.pixels(), 3}, s.data); }

Var cross_rows(Graph& g, Var u, Var v) {
  Var ux = g.slice_cols(u, 0, 1), uy = g.slice_cols(u, 1, 2), uz = g.slice_cols(u, 2, 3);
  Var vx = g.slice_cols(v, 0, 1), vy = g.slice_cols(v, 1, 2), vz = g.slice_cols(v, 2, 3);
  return g.concat_cols({g.sub(g.mul(uy, vz), g.mul(uz, vy)), g.sub(g.mul(uz, vx), g.mul(ux, vz)),
                        g.sub(g.mul(ux, vy), g.mul(uy, vx))});
}

// b - (a.b) a, row-wise for unit a.
Var tangent_rows(Graph& g, Var a, Var b) {
  return g.sub(b, g.mul(g.broadcast_cols(g.dot_rows(a, b), 3), a));
}

Vec3 unit(const Vec3& v) {
  const double n = norm(v);
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

std::vector<Triplet> sample_triplets(const std::vector<std::uint8_t>& mask, std::size_t width, std::size_t count,
                                     Rng& rng) {
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) fg.push_back(i);
  if (fg.size() < 3) throw std::invalid_argument("sample_triplets: fewer than 3 foreground pixels");
  std::vector<Triplet> out;
  out.reserve(count);
  const std::uint64_t n = fg.size();
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t a = fg[rng.below(n)];
    std::size_t b = fg[rng.below(n)];
    while (b == a) b = fg[rng.below(n)];
    std::size_t c = fg[rng.below(n)];
    while (c == a || c == b) c = fg[rng.below(n)];
    const PixelCoord pa = pixel_of(a, width), pb = pixel_of(b, width), pc = pixel_of(c, width);
    const double db = std::hypot(pb.x - pa.x, pb.y - pa.y);
    const double dc = std::hypot(pc.x - pa.x, pc.y - pa.y);
    out.push_back(db <= dc ? Triplet{a, b, c} : Triplet{a, c, b});
  }
  return out;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  const double parts[4] = {c.rec, c.rd, c.o, c.vp};
  const char* names[4] = {"L_rec", "L_rd", "L_o", "L_vp"};
  for (int i = 0; i < 4; ++i)
    if (!std::isfinite(parts[i])) throw std::domain_error(std::string("total_loss: non-finite ") + names[i]);
  return c.rec + w.rd * c.rd + w.o * c.o + w.vp * c.vp;
}

GraphLoss reconstruction_loss(Graph& g, Var features, Var sphere, const std::vector<std::uint8_t>& mask,
                              const PrototypeParams& proto, const BoundParams& proto_vars, std::size_t category) {
  const std::size_t n = g.value(sphere).rows();
  if (g.value(features).rows() != n || mask.size() != n)
    throw std::invalid_argument("reconstruction_loss: shape mismatch");
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) fg.push_back(i);
  GraphLoss out;
  if (fg.empty()) {
    out.value = g.full(1, 1, 0.0);
    out.degenerate = true;
    return out;
  }
  Var s = g.gather_rows(sphere, fg);
  Var phi = g.gather_rows(features, fg);
  Var rec = prototype_forward(g, proto, proto_vars, s, category);
  Var cos = g.dot_rows(g.l2_normalize_rows(phi), g.l2_normalize_rows(rec));
  Var total = g.sub(g.full(1, 1, static_cast<double>(fg.size())), g.sum(cos));
  out.value = g.scale(total, 1.0 / static_cast<double>(n));
  out.contributing = fg.size();
  return out;
}

Var mean_direction(Graph& g, Var sphere, const std::vector<std::uint8_t>& mask) {
  const std::size_t n = g.value(sphere).rows();
  if (mask.size() != n) throw std::invalid_argument("mean_direction: mask size mismatch");
  std::size_t cnt = 0;
  for (auto m : mask) cnt += m != 0;
  if (cnt == 0) throw std::invalid_argument("mean_direction: empty mask");
  Tensor w = Tensor::matrix(1, n);
  for (std::size_t i = 0; i < n; ++i) w[i] = mask[i] ? 1.0 / static_cast<double>(cnt) : 0.0;
  return g.matmul(g.leaf(std::move(w)), sphere);
}

Var viewpoint_loss(Graph& g, const std::vector<Var>& mus, const std::vector<Vec3>& viewpoints) {
  if (mus.size() < 2 || mus.size() != viewpoints.size())
    throw std::invalid_argument("viewpoint_loss: need at least 2 images with one viewpoint each");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < mus.size(); ++i)
    for (std::size_t j = i + 1; j < mus.size(); ++j) {
      Var d = g.sub(g.full(1, 1, dot(viewpoints[i], viewpoints[j])), g.dot_rows(mus[i], mus[j]));
      terms.push_back(g.mul(d, d));
    }
  return g.scale(g.sum(g.concat_rows(terms)), 1.0 / static_cast<double>(terms.size()));
}

GraphLoss relative_distance_loss(Graph& g, Var sphere, const std::vector<Triplet>& triplets, std::size_t,
                                 double margin) {
  GraphLoss out;
  if (triplets.empty()) {
    out.value = g.full(1, 1, 0.0);
    out.degenerate = true;
    return out;
  }
  std::vector<std::size_t> ia, ip, in;
  for (const auto& t : triplets) {
    ia.push_back(t.anchor);
    ip.push_back(t.positive);
    in.push_back(t.negative);
  }
  Var a = g.l2_normalize_rows(g.gather_rows(sphere, ia));
  Var p = g.l2_normalize_rows(g.gather_rows(sphere, ip));
  Var q = g.l2_normalize_rows(g.gather_rows(sphere, in));
  // Gamma(a,p) - Gamma(a,q) + delta = a.q - a.p + delta
  Var d = g.sub(g.dot_rows(a, q), g.dot_rows(a, p));
  Var h = g.relu(g.add(d, g.full(triplets.size(), 1, margin)));
  out.value = g.mean(h);
  out.contributing = triplets.size();
  return out;
}

GraphLoss orientation_loss(Graph& g, Var sphere, const std::vector<Triplet>& triplets, std::size_t width,
                           double det_threshold) {
  const Tensor& sv = g.value(sphere);
  auto row = [&](std::size_t i) { return Vec3{sv.at(i, 0), sv.at(i, 1), sv.at(i, 2)}; };
  std::vector<std::size_t> ia, ib, ic;
  GraphLoss out;
  for (const auto& t : triplets) {
    std::size_t b = t.positive, c = t.negative;
    double d = image_determinant(pixel_of(t.anchor, width), pixel_of(b, width), pixel_of(c, width));
    if (d < 0.0) {
      std::swap(b, c);
      d = -d;
    }
    if (d < det_threshold) continue;
    const Vec3 sa = row(t.anchor), sb = row(b), sc = row(c);
    if (norm(sa) < 1e-12 || norm(sb) < 1e-12 || norm(sc) < 1e-12 ||
        !sphere_determinant(SpherePoint(unit(sa)), SpherePoint(unit(sb)), SpherePoint(unit(sc)))) {
      ++out.skipped;
      continue;
    }
    ia.push_back(t.anchor);
    ib.push_back(b);
    ic.push_back(c);
  }
  out.contributing = ia.size();
  if (ia.empty()) {
    out.value = g.full(1, 1, 0.0);
    out.degenerate = true;
    return out;
  }
  Var a = g.l2_normalize_rows(g.gather_rows(sphere, ia));
  Var b = g.l2_normalize_rows(g.gather_rows(sphere, ib));
  Var c = g.l2_normalize_rows(g.gather_rows(sphere, ic));
  Var ub = g.l2_normalize_rows(tangent_rows(g, a, b));
  Var uc = g.l2_normalize_rows(tangent_rows(g, a, c));
  Var ds = g.dot_rows(cross_rows(g, ub, uc), a);
  out.value = g.mean(g.relu(g.sub(g.full(ia.size(), 1, det_threshold), ds)));
  return out;
}

LossValue reconstruction_loss(const DenseFeatureMap& features, const SphereMap& sphere, const PrototypeParams& proto,
                              const std::vector<std::uint8_t>& mask, std::size_t category) {
  if (features.height != sphere.height || features.width != sphere.width)
    throw std::invalid_argument("reconstruction_loss: feature and sphere map sizes differ");
  Graph g;
  BoundParams bp = bind(g, proto.p);
  GraphLoss gl = reconstruction_loss(g, g.leaf(features.as_tensor()), g.leaf(sphere_tensor(sphere)), mask, proto,
                                     bp, category);
  return {g.value(gl.value).item(), gl.degenerate, gl.contributing, gl.skipped};
}

double viewpoint_loss(const std::vector<ViewpointSample>& images) {
  if (images.size() < 2) throw std::invalid_argument("viewpoint_loss: need at least 2 images");
  std::vector<Vec3> mus;
  for (const auto& im : images) mus.push_back(spherecorr::mean_direction(*im.sphere, im.mask));
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      const double d = dot(images[i].viewpoint, images[j].viewpoint) - dot(mus[i], mus[j]);
      s += d * d;
      ++pairs;
    }
  return s / static_cast<double>(pairs);
}

double relative_distance_loss(const std::vector<Triplet>& triplets, const SphereMap& sphere, double margin) {
  if (triplets.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : triplets) {
    const Vec3 a = sphere.at(t.anchor), p = sphere.at(t.positive), q = sphere.at(t.negative);
    s += std::max(cosine_distance(a, p) - cosine_distance(a, q) + margin, 0.0);
  }
  return s / static_cast<double>(triplets.size());
}

LossValue orientation_loss(const std::vector<Triplet>& triplets, const SphereMap& sphere, double det_threshold) {
  LossValue out;
  double s = 0.0;
  for (const auto& t : triplets) {
    std::size_t b = t.positive, c = t.negative;
    double d = image_determinant(pixel_of(t.anchor, sphere.width), pixel_of(b, sphere.width),
                                 pixel_of(c, sphere.width));
    if (d < 0.0) {
      std::swap(b, c);
      d = -d;
    }
    if (d < det_threshold) continue;
    const auto ds = sphere_determinant(SpherePoint(unit(sphere.at(t.anchor))), SpherePoint(unit(sphere.at(b))),
                                       SpherePoint(unit(sphere.at(c))));
    if (!ds) {
      ++out.skipped;
      continue;
    }
    s += std::max(det_threshold - *ds, 0.0);
    ++out.contributing;
  }
  out.degenerate = out.contributing == 0;
  out.value = out.contributing ? s / static_cast<double>(out.contributing) : 0.0;
  return out;
}

}  // namespace spherecorr
