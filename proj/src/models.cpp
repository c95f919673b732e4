#include "spherecorr/models.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>

#include "spherecorr/bytes.hpp"
#include "spherecorr/rng.hpp"
#include "spherecorr/synth.hpp"

namespace spherecorr {

using nlohmann::json;

json ModelDims::to_json() const {
  return {{"channels", channels},     {"hidden", proto_width()}, {"heads", heads},
          {"mlp_ratio", mlp_ratio},   {"categories", categories}, {"pos_scale", pos_scale}};
}

ModelDims ModelDims::from_json(const json& j) {
  ModelDims d;
  d.channels = j.at("channels").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.heads = j.at("heads").get<std::size_t>();
  d.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  d.categories = j.at("categories").get<std::size_t>();
  d.pos_scale = j.at("pos_scale").get<double>();
  return d;
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  for (const auto& n : names_)
    if (n == name) throw std::logic_error("params: duplicate name " + name);
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

std::size_t ParamStore::index(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw std::out_of_range("params: no tensor named " + name);
}

Tensor& ParamStore::operator[](const std::string& name) { return tensors_[index(name)]; }
const Tensor& ParamStore::operator[](const std::string& name) const { return tensors_[index(name)]; }

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& t : tensors_)
    if (!t.all_finite()) return false;
  return true;
}

BoundParams bind(Graph& g, const ParamStore& store) {
  BoundParams bp;
  bp.store = &store;
  for (const auto& t : store.tensors()) bp.vars.push_back(g.leaf(t));
  return bp;
}

namespace {

void add_linear(ParamStore& p, Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
  const double a = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w = Tensor::matrix(in, out), b = Tensor::matrix(1, out);
  for (double& v : w.values()) v = rng.uniform(-a, a);
  for (double& v : b.values()) v = rng.uniform(-a, a);
  p.add(name + ".w", std::move(w));
  p.add(name + ".b", std::move(b));
}

void add_norm(ParamStore& p, const std::string& name, std::size_t width) {
  p.add(name + ".g", Tensor::matrix(1, width, 1.0));
  p.add(name + ".b", Tensor::matrix(1, width, 0.0));
}

Var linear(Graph& g, const BoundParams& bp, const std::string& name, Var x) {
  Var y = g.matmul(x, bp[name + ".w"]);
  return g.add(y, g.broadcast_rows(bp[name + ".b"], g.value(x).rows()));
}

Var norm(Graph& g, const BoundParams& bp, const std::string& name, Var x) {
  const std::size_t n = g.value(x).rows();
  Var y = g.layer_norm_rows(x);
  y = g.mul(y, g.broadcast_rows(bp[name + ".g"], n));
  return g.add(y, g.broadcast_rows(bp[name + ".b"], n));
}

// Multi-head attention of queries q (N x w) against keys k and values v
// (M x w); returns N x w.
Var attention(Graph& g, Var q, Var k, Var v, std::size_t heads) {
  const std::size_t w = g.value(q).cols();
  const std::size_t dh = w / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  q = g.scale(q, sc);
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : g.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : g.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : g.slice_cols(v, h * dh, (h + 1) * dh);
    outs.push_back(g.matmul(g.softmax_rows(g.matmul(qh, kh, false, true)), vh));
  }
  return heads == 1 ? outs[0] : g.concat_cols(outs);
}

void check_dims(const ModelDims& d) {
  if (d.channels < 2 || d.channels % 2 != 0) throw std::invalid_argument("init_params: C must be even and >= 2");
  if (d.proto_width() < 1 || d.heads < 1 || d.categories < 1 || d.mlp_ratio < 1)
    throw std::invalid_argument("init_params: hidden width, heads, categories and mlp ratio must be >= 1");
  if (d.mapper_width() % d.heads != 0 || d.proto_width() % d.heads != 0)
    throw std::invalid_argument("init_params: heads must divide C/2 and D");
}

}  // namespace

std::pair<SphereMapperParams, PrototypeParams> init_params(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  SphereMapperParams m{dims, {}};
  PrototypeParams pr{dims, {}};
  const std::size_t C = dims.channels, w = dims.mapper_width(), D = dims.proto_width();
  {
    Rng rng(Rng::mix(seed, 10));
    add_linear(m.p, rng, "reduce", C + 2, w);
    add_norm(m.p, "norm1", w);
    add_linear(m.p, rng, "q", w, w);
    add_linear(m.p, rng, "k", w, w);
    add_linear(m.p, rng, "v", w, w);
    add_linear(m.p, rng, "attn_out", w, w);
    add_norm(m.p, "norm2", w);
    add_linear(m.p, rng, "mlp1", w, dims.mlp_ratio * w);
    add_linear(m.p, rng, "mlp2", dims.mlp_ratio * w, w);
    add_linear(m.p, rng, "out", w, 3);
  }
  {
    Rng rng(Rng::mix(seed, 11));
    add_linear(pr.p, rng, "lift", 3, D);
    Tensor emb = Tensor::matrix(dims.categories, D);
    const double a = std::sqrt(3.0) * 0.5;
    for (double& v : emb.values()) v = rng.uniform(-a, a);
    pr.p.add("category", std::move(emb));
    add_norm(pr.p, "norm1", D);
    add_linear(pr.p, rng, "q", D, D);
    add_linear(pr.p, rng, "k", D, D);
    add_linear(pr.p, rng, "v", D, D);
    add_linear(pr.p, rng, "attn_out", D, D);
    add_norm(pr.p, "norm2", D);
    add_linear(pr.p, rng, "mlp1", D, dims.mlp_ratio * D);
    add_linear(pr.p, rng, "mlp2", dims.mlp_ratio * D, D);
    add_linear(pr.p, rng, "out", D, C);
  }
  return {std::move(m), std::move(pr)};
}

Tensor position_channels(std::size_t height, std::size_t width, double scale) {
  Tensor t = Tensor::matrix(height * width, 2);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      t.at(i * width + j, 0) = scale * (2.0 * j + 1.0 - width) / width;
      t.at(i * width + j, 1) = scale * (2.0 * i + 1.0 - height) / height;
    }
  return t;
}

Var mapper_forward(Graph& g, const SphereMapperParams& params, const BoundParams& bp, Var tokens, Var pos) {
  const std::size_t C = params.dims.channels;
  if (g.value(tokens).cols() != C)
    throw std::invalid_argument("mapper: feature channels " + std::to_string(g.value(tokens).cols()) +
                                " do not match model channels " + std::to_string(C));
  if (g.value(pos).cols() != 2 || g.value(pos).rows() != g.value(tokens).rows())
    throw std::invalid_argument("mapper: positional channels must be N x 2");
  Var x = linear(g, bp, "reduce", g.concat_cols({tokens, pos}));
  Var a = norm(g, bp, "norm1", x);
  Var att = attention(g, linear(g, bp, "q", a), linear(g, bp, "k", a), linear(g, bp, "v", a), params.dims.heads);
  x = g.add(x, linear(g, bp, "attn_out", att));
  Var h = g.relu(linear(g, bp, "mlp1", norm(g, bp, "norm2", x)));
  x = g.add(x, linear(g, bp, "mlp2", h));
  return g.l2_normalize_rows(linear(g, bp, "out", x));
}

Var prototype_forward(Graph& g, const PrototypeParams& params, const BoundParams& bp, Var points,
                      std::size_t category) {
  if (category >= params.dims.categories)
    throw std::out_of_range("prototype: unknown category " + std::to_string(category));
  if (g.value(points).cols() != 3) throw std::invalid_argument("prototype: points must be N x 3");
  Var x = linear(g, bp, "lift", points);
  Var tok = g.gather_rows(bp["category"], {category});
  Var q = linear(g, bp, "q", norm(g, bp, "norm1", x));
  Var att = attention(g, q, linear(g, bp, "k", tok), linear(g, bp, "v", tok), params.dims.heads);
  x = g.add(x, linear(g, bp, "attn_out", att));
  Var h = g.relu(linear(g, bp, "mlp1", norm(g, bp, "norm2", x)));
  x = g.add(x, linear(g, bp, "mlp2", h));
  return linear(g, bp, "out", x);
}

SphereMap sphere_mapper_forward(const SphereMapperParams& params, const DenseFeatureMap& features) {
  features.validate();
  if (features.channels != params.dims.channels)
    throw std::invalid_argument("mapper: feature channels " + std::to_string(features.channels) +
                                " do not match model channels " + std::to_string(params.dims.channels));
  Graph g;
  BoundParams bp = bind(g, params.p);
  Var tok = g.leaf(features.as_tensor());
  Var pos = g.leaf(position_channels(features.height, features.width, params.dims.pos_scale));
  const Tensor& out = g.value(mapper_forward(g, params, bp, tok, pos));
  if (!out.all_finite()) throw std::domain_error("mapper: non-finite activations");
  return SphereMap{features.height, features.width, out.values()};
}

Tensor prototype_query(const PrototypeParams& params, const Tensor& points, std::size_t category) {
  if (points.cols() != 3) throw std::invalid_argument("prototype: points must be N x 3");
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double n = std::sqrt(points.at(i, 0) * points.at(i, 0) + points.at(i, 1) * points.at(i, 1) +
                               points.at(i, 2) * points.at(i, 2));
    if (std::abs(n - 1.0) > 1e-6) throw std::invalid_argument("prototype: point is not unit norm");
  }
  Graph g;
  BoundParams bp = bind(g, params.p);
  return g.value(prototype_forward(g, params, bp, g.leaf(points), category));
}

namespace {

constexpr char kCkMagic[4] = {'S', 'C', 'C', 'K'};

void put_store(bytes::Writer& w, const std::string& prefix, const ParamStore& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Tensor& t = s.tensors()[i];
    w.str(prefix + s.names()[i]);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.values()) w.f64(v);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  json h;
  h["format"] = "spherecorr checkpoint";
  h["dims"] = ck.mapper.dims.to_json();
  h["categories"] = ck.categories;
  h["seed"] = ck.seed;
  h["epoch"] = ck.epoch;
  h["config"] = ck.config;
  h["frame"] = ck.frame ? json(*ck.frame) : json(nullptr);
  const std::string header = h.dump();

  bytes::Writer w;
  w.raw(kCkMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(header);
  w.u32(static_cast<std::uint32_t>(ck.mapper.p.size() + ck.prototype.p.size()));
  put_store(w, "mapper.", ck.mapper.p);
  put_store(w, "prototype.", ck.prototype.p);
  const std::string digest = sha256_hex(w.buffer());
  for (std::size_t i = 0; i < 32; ++i)
    w.u8(static_cast<std::uint8_t>(std::stoi(digest.substr(2 * i, 2), nullptr, 16)));
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 4 + 4 + 32) throw std::runtime_error("checkpoint: truncated file");
  if (std::memcmp(buf.data(), kCkMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  const std::vector<std::uint8_t> body(buf.begin(), buf.end() - 32);
  const std::string digest = sha256_hex(body);
  for (std::size_t i = 0; i < 32; ++i)
    if (buf[body.size() + i] != static_cast<std::uint8_t>(std::stoi(digest.substr(2 * i, 2), nullptr, 16)))
      throw std::runtime_error("checkpoint: checksum mismatch (corrupt or truncated file)");

  bytes::Reader r(body.data(), body.size(), "checkpoint");
  char magic[4];
  r.raw(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  json h;
  try {
    h = json::parse(r.str());
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  Checkpoint ck;
  try {
    const ModelDims dims = ModelDims::from_json(h.at("dims"));
    auto fresh = init_params(dims, 0);  // shapes and names to fill
    ck.mapper = std::move(fresh.first);
    ck.prototype = std::move(fresh.second);
    ck.categories = h.at("categories").get<std::vector<std::string>>();
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.epoch = h.at("epoch").get<std::uint64_t>();
    ck.config = h.at("config");
    if (!h.at("frame").is_null()) ck.frame = h.at("frame").get<std::array<double, 9>>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  if (count != ck.mapper.p.size() + ck.prototype.p.size())
    throw std::runtime_error("checkpoint: tensor count does not match model dims");
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str();
    if (!seen.insert(name).second) throw std::runtime_error("checkpoint: duplicate tensor " + name);
    ParamStore* store = nullptr;
    std::string local;
    if (name.rfind("mapper.", 0) == 0) {
      store = &ck.mapper.p;
      local = name.substr(7);
    } else if (name.rfind("prototype.", 0) == 0) {
      store = &ck.prototype.p;
      local = name.substr(10);
    } else {
      throw std::runtime_error("checkpoint: unexpected tensor " + name);
    }
    Tensor* dst = nullptr;
    try {
      dst = &(*store)[local];
    } catch (const std::out_of_range&) {
      throw std::runtime_error("checkpoint: unexpected tensor " + name);
    }
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = r.u32();
    if (shape != dst->shape()) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    r.need(8 * dst->size());
    for (double& v : dst->values()) v = r.f64();
  }
  if (r.remaining() != 0) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace spherecorr
