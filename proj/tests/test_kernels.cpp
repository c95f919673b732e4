#include <doctest.h>

#include <cmath>
#include <vector>

#include "spherecorr/kernels.hpp"
#include "spherecorr/rng.hpp"

using namespace spherecorr;
namespace k = spherecorr::kernels;

namespace {

std::vector<k::Isa> available() {
  std::vector<k::Isa> out;
  for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2, k::Isa::neon})
    if (k::supported(isa)) out.push_back(isa);
  return out;
}

std::vector<double> randv(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Reference product straight from the definition.
std::vector<double> naive_gemm(std::size_t m, std::size_t n, std::size_t kk,
                               const std::vector<double>& a, bool ta,
                               const std::vector<double>& b, bool tb) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < kk; ++p)
        s += (ta ? a[p * m + i] : a[i * kk + p]) * (tb ? b[j * kk + p] : b[p * n + j]);
      c[i * n + j] = s;
    }
  return c;
}

double max_rel(const std::vector<double>& x, const std::vector<double>& y) {
  double d = 0.0, mag = 1e-300;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::max(d, std::abs(x[i] - y[i]));
    mag = std::max(mag, std::abs(y[i]));
  }
  return d / mag;
}

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(k::supported(k::Isa::scalar));
  CHECK(k::table(k::Isa::scalar).isa == k::Isa::scalar);
  CHECK(k::isa_name(k::active().isa).size() > 0);
}

TEST_CASE("gemm variants agree with the naive product") {
  Rng rng(11);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 2, 5}, {7, 4, 3}, {5, 9, 17},
                                   {16, 3, 33}, {2, 13, 8}, {33, 6, 1}};
  for (k::Isa isa : available()) {
    const auto& t = k::table(isa);
    for (const auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], kk = s[2];
      for (int mode = 0; mode < 4; ++mode) {
        const bool ta = mode & 1, tb = mode & 2;
        const auto a = randv(rng, m * kk), b = randv(rng, kk * n);
        const auto ref = naive_gemm(m, n, kk, a, ta, b, tb);
        std::vector<double> c(m * n, 0.0);
        t.gemm(m, n, kk, a.data(), ta, b.data(), tb, c.data(), false);
        CHECK(max_rel(c, ref) < 1e-13);
        // accumulate adds onto existing contents
        std::vector<double> acc(m * n, 1.5);
        t.gemm(m, n, kk, a.data(), ta, b.data(), tb, acc.data(), true);
        for (auto& v : acc) v -= 1.5;
        CHECK(max_rel(acc, ref) < 1e-12);
      }
    }
  }
}

TEST_CASE("gemm rows do not depend on how many rows are computed") {
  Rng rng(5);
  for (k::Isa isa : available()) {
    const auto& t = k::table(isa);
    for (std::size_t n : {1u, 3u, 4u, 8u, 10u}) {
      const std::size_t kk = 9, m = 6;
      const auto a = randv(rng, m * kk), b = randv(rng, kk * n);
      std::vector<double> all(m * n), one(n);
      t.gemm(m, n, kk, a.data(), false, b.data(), false, all.data(), false);
      for (std::size_t i = 0; i < m; ++i) {
        t.gemm(1, n, kk, a.data() + i * kk, false, b.data(), false, one.data(), false);
        for (std::size_t j = 0; j < n; ++j) CHECK(one[j] == all[i * n + j]);
      }
    }
  }
}

TEST_CASE("dot, gemv and axpy match the scalar reference") {
  Rng rng(3);
  const auto& ref = k::table(k::Isa::scalar);
  for (k::Isa isa : available()) {
    const auto& t = k::table(isa);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 64u, 1001u}) {
      const auto x = randv(rng, n), y = randv(rng, n);
      const double r = ref.dot(x.data(), y.data(), n);
      double mag = 1e-300;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
      CHECK(std::abs(t.dot(x.data(), y.data(), n) - r) <= 1e-14 * mag + 1e-300);

      auto y1 = y, y2 = y;
      ref.axpy(n, 0.37, x.data(), y1.data());
      t.axpy(n, 0.37, x.data(), y2.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) < 1e-15 * (1 + std::abs(y1[i])));
    }
    const std::size_t m = 5, kk = 13;
    const auto a = randv(rng, m * kk), x = randv(rng, kk);
    std::vector<double> y1(m), y2(m);
    ref.gemv(m, kk, a.data(), x.data(), y1.data());
    t.gemv(m, kk, a.data(), x.data(), y2.data());
    CHECK(max_rel(y2, y1) < 1e-13);
  }
}

TEST_CASE("softmax variants match the scalar reference") {
  Rng rng(9);
  const auto& ref = k::table(k::Isa::scalar);
  for (k::Isa isa : available()) {
    const auto& t = k::table(isa);
    for (std::size_t n : {1u, 2u, 4u, 5u, 16u, 37u, 1024u}) {
      auto x = randv(rng, n);
      for (double& v : x) v *= 20.0;
      std::vector<double> a(n), b(n);
      ref.softmax_row(n, x.data(), a.data());
      t.softmax_row(n, x.data(), b.data());
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(a[i] - b[i]) <= 1e-14 * std::max(a[i], 1e-300) + 1e-300);
        s += b[i];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    // very negative logits underflow gracefully
    std::vector<double> x{0.0, -800.0, -1e6, -740.0}, out(4);
    t.softmax_row(4, x.data(), out.data());
    CHECK(out[0] == doctest::Approx(1.0));
    for (int i = 1; i < 4; ++i) CHECK(out[i] >= 0.0);
    // single element is exactly one
    double v = 3.2, o = 0.0;
    t.softmax_row(1, &v, &o);
    CHECK(o == 1.0);
  }
}

TEST_CASE("unsupported ISA is rejected") {
  for (k::Isa isa : {k::Isa::avx2, k::Isa::neon})
    if (!k::supported(isa)) CHECK_THROWS(k::table(isa));
}
