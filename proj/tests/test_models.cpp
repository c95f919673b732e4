#include <doctest.h>

#include <cmath>
#include <numeric>

#include "spherecorr/models.hpp"
#include "spherecorr/rng.hpp"
#include "test_util.hpp"

using namespace spherecorr;

namespace {

DenseFeatureMap random_map(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  DenseFeatureMap m;
  m.height = h;
  m.width = w;
  m.channels = c;
  m.data.resize(h * w * c);
  for (float& v : m.data) v = static_cast<float>(rng.normal());
  return m;
}

ModelDims dims(std::size_t c, std::size_t heads = 2, std::size_t cats = 2) {
  ModelDims d;
  d.channels = c;
  d.heads = heads;
  d.categories = cats;
  return d;
}

Tensor mapper_out(const SphereMapperParams& p, const Tensor& tokens, const Tensor& pos) {
  Graph g;
  BoundParams bp = bind(g, p.p);
  return g.value(mapper_forward(g, p, bp, g.leaf(tokens), g.leaf(pos)));
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out = Tensor::matrix(t.rows(), t.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out.at(i, j) = t.at(perm[i], j);
  return out;
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  const auto a = init_params(dims(16), 3), b = init_params(dims(16), 3), c = init_params(dims(16), 4);
  CHECK(a.first.p == b.first.p);
  CHECK(a.second.p == b.second.p);
  CHECK_FALSE(a.first.p == c.first.p);
  CHECK_FALSE(a.second.p == c.second.p);
}

TEST_CASE("init rejects bad dims") {
  CHECK_THROWS(init_params(dims(15), 0));
  CHECK_THROWS(init_params(dims(16, 3), 0));  // 3 does not divide 8
  CHECK_THROWS(init_params(dims(16, 0), 0));
  CHECK_THROWS(init_params(dims(16, 2, 0), 0));
}

TEST_CASE("mapper output has unit norm, C=8 smoke run") {
  Rng rng(5);
  for (std::size_t c : {8u, 16u}) {
    const auto p = init_params(dims(c), 1);
    const DenseFeatureMap f = random_map(rng, 5, 6, c);
    const SphereMap s = sphere_mapper_forward(p.first, f);
    REQUIRE(s.pixels() == 30);
    for (std::size_t i = 0; i < s.pixels(); ++i) CHECK(std::abs(norm(s.at(i)) - 1.0) < 1e-12);
  }
}

TEST_CASE("identical inputs give identical sphere maps") {
  Rng rng(6);
  const auto p = init_params(dims(16), 2);
  const DenseFeatureMap f = random_map(rng, 4, 4, 16);
  DenseFeatureMap g = f;
  CHECK(sphere_mapper_forward(p.first, f).data == sphere_mapper_forward(p.first, g).data);
}

TEST_CASE("mapper is permutation equivariant over tokens and positions") {
  Rng rng(7);
  for (double pos_scale : {0.0, 3.0}) {
    ModelDims d = dims(16);
    d.pos_scale = pos_scale;
    const auto p = init_params(d, 9);
    const std::size_t h = 4, w = 5;
    const DenseFeatureMap f = random_map(rng, h, w, 16);
    const Tensor tokens = f.as_tensor();
    const Tensor pos = position_channels(h, w, pos_scale);
    std::vector<std::size_t> perm(h * w);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Tensor base = mapper_out(p.first, tokens, pos);
    const Tensor moved = mapper_out(p.first, permute_rows(tokens, perm), permute_rows(pos, perm));
    CHECK(testutil::rel_err(permute_rows(base, perm), moved) < 1e-12);
  }
}

TEST_CASE("positions change the output unless pos_scale is 0") {
  Rng rng(8);
  ModelDims d = dims(16);
  const auto p = init_params(d, 1);
  DenseFeatureMap f = random_map(rng, 3, 3, 16);
  // all pixels share one feature vector
  for (std::size_t i = 1; i < 9; ++i)
    for (std::size_t c = 0; c < 16; ++c) f.data[i * 16 + c] = f.data[c];
  const SphereMap s = sphere_mapper_forward(p.first, f);
  CHECK(s.at(0) != s.at(8));
  d.pos_scale = 0.0;
  const auto q = init_params(d, 1);
  const SphereMap t = sphere_mapper_forward(q.first, f);
  for (std::size_t i = 1; i < 9; ++i) CHECK(testutil::rel_err(Tensor({3}, {t.at(0)[0], t.at(0)[1], t.at(0)[2]}),
                                                           Tensor({3}, {t.at(i)[0], t.at(i)[1], t.at(i)[2]})) < 1e-12);
}

TEST_CASE("prototype processes points independently") {
  Rng rng(10);
  const auto p = init_params(dims(16), 4);
  auto unit_rows = [&](std::size_t n) {
    Tensor t = Tensor::matrix(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 v = normalized({rng.normal(), rng.normal(), rng.normal()});
      for (std::size_t j = 0; j < 3; ++j) t.at(i, j) = v[j];
    }
    return t;
  };
  const Tensor one = unit_rows(1);
  Tensor three = unit_rows(3);
  for (std::size_t j = 0; j < 3; ++j) three.at(0, j) = one.at(0, j);
  const Tensor a = prototype_query(p.second, one, 0), b = prototype_query(p.second, three, 0);
  REQUIRE(b.rows() == 3);
  REQUIRE(b.cols() == 16);
  for (std::size_t j = 0; j < 16; ++j) CHECK(a.at(0, j) == b.at(0, j));

  Tensor rep = Tensor::matrix(2, 3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) rep.at(i, j) = one.at(0, j);
  const Tensor r = prototype_query(p.second, rep, 1);
  for (std::size_t j = 0; j < 16; ++j) CHECK(r.at(0, j) == r.at(1, j));

  const Tensor c1 = prototype_query(p.second, one, 1);
  CHECK_FALSE(a == c1);
  CHECK_THROWS(prototype_query(p.second, one, 2));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(11);
  const auto p = init_params(dims(16), 12);
  Checkpoint ck{p.first, p.second, {"a", "b"}, 12, 7, {{"note", "x"}}, std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, -1}};
  const auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.mapper.p == ck.mapper.p);
  CHECK(back.prototype.p == ck.prototype.p);
  CHECK(back.categories == ck.categories);
  CHECK(back.seed == 12);
  CHECK(back.epoch == 7);
  CHECK(back.config == ck.config);
  REQUIRE(back.frame);
  CHECK(*back.frame == *ck.frame);
  CHECK(encode_checkpoint(back) == bytes);

  const DenseFeatureMap f = random_map(rng, 4, 4, 16);
  CHECK(sphere_mapper_forward(back.mapper, f).data == sphere_mapper_forward(ck.mapper, f).data);

  SUBCASE("corruption is detected") {
    for (std::size_t pos : {std::size_t{0}, std::size_t{5}, std::size_t{14}, bytes.size() / 2, bytes.size() - 1}) {
      auto bad = bytes;
      bad[pos] ^= 0x40;
      CHECK_THROWS(decode_checkpoint(bad));
    }
    auto cut = bytes;
    cut.resize(bytes.size() - 40);
    CHECK_THROWS(decode_checkpoint(cut));
  }
}
