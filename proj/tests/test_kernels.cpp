#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "kkm/collectives.hpp"
#include "kkm/kernels.hpp"
#include "test_util.hpp"

using namespace kkm;

namespace {

KernelSpec rbf(double sigma) { return {KernelKind::rbf, sigma, 2048}; }
KernelSpec linear() { return {KernelKind::linear, 1.0, 2048}; }

// returns false when the jittered matrix is not positive definite
bool cholesky_with_jitter(std::vector<double> a, std::size_t n, double jitter) {
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += jitter;
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
    if (diag <= 0.0) return false;
    const double root = std::sqrt(diag);
    a[j * n + j] = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / root;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("rbf of identical points is exactly one") {
  const float x[] = {0.3f, 0.7f};
  CHECK(eval_kernel(rbf(0.37), x, 2, x, 2) == 1.0);
  CHECK(eval_kernel(rbf(42.0), x, 2, x, 2) == 1.0);
}

TEST_CASE("rbf matches direct arithmetic") {
  const float x[] = {0.0f, 0.0f};
  const float y[] = {3.0f, 4.0f};
  CHECK(eval_kernel(rbf(5.0), x, 2, y, 2) ==
        doctest::Approx(std::exp(-25.0 / 50.0)).epsilon(1e-12));
}

TEST_CASE("linear kernel is the dot product") {
  const float x[] = {1.0f, 2.0f};
  const float y[] = {3.0f, -1.0f};
  CHECK(eval_kernel(linear(), x, 2, y, 2) == 1.0);
}

TEST_CASE("input validation") {
  const float x[] = {1.0f, 2.0f};
  const float y[] = {1.0f};
  CHECK_THROWS_AS(eval_kernel(linear(), x, 2, y, 1), InputError);
  const float bad[] = {1.0f, std::numeric_limits<float>::infinity()};
  CHECK_THROWS_AS(eval_kernel(linear(), x, 2, bad, 2), InputError);
  CHECK_THROWS_AS(eval_kernel(rbf(-1.0), x, 2, x, 2), InputError);
}

TEST_CASE("trivial blocks") {
  auto one = kkmtest::from_rows({{0.5f, 0.5f}});
  auto b = kernel_block<double>(rbf(1.0), Samples::of(one), Samples::of(one));
  CHECK(b.rows == 1);
  CHECK(b.cols == 1);
  CHECK(b.at(0, 0) == 1.0);

  auto two = kkmtest::from_rows({{0.1f, 0.2f}, {0.1f, 0.2f}});
  auto b2 = kernel_block<double>(rbf(0.5), Samples::of(two), Samples::of(two));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(b2.at(r, c) == 1.0);

  CHECK_THROWS_AS(
      kernel_block<double>(rbf(1.0), Samples{nullptr, 0, 2}, Samples::of(two)),
      InputError);
}

TEST_CASE("square block equals its transpose bitwise") {
  auto data = kkmtest::planted_mixture(3, 4, 1, 0.3, 99);
  auto b = kernel_block<double>(rbf(0.8), Samples::of(data), Samples::of(data));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(b.at(r, c) == b.at(c, r));
}

TEST_CASE("block entries equal eval_kernel bitwise") {
  auto a = kkmtest::planted_mixture(5, 3, 1, 0.5, 1);
  auto b = kkmtest::planted_mixture(7, 3, 1, 0.5, 2);
  for (const auto& spec : {rbf(0.9), linear()}) {
    auto blk = kernel_block<double>(spec, Samples::of(a), Samples::of(b));
    for (std::size_t r = 0; r < a.n; ++r)
      for (std::size_t c = 0; c < b.n; ++c)
        CHECK(blk.at(r, c) == eval_kernel(spec, a.row(r), a.d, b.row(c), b.d));
  }
}

TEST_CASE("pooled fill matches the serial block bitwise") {
  auto a = kkmtest::planted_mixture(37, 6, 2, 0.2, 5);
  auto serial = kernel_block<double>(rbf(1.1), Samples::of(a), Samples::of(a));
  for (int p : {1, 3}) {
    WorkerPool pool(p);
    KernelBlockT<double> out;
    kernel_block_fill(rbf(1.1), Samples::of(a), Samples::of(a), pool, out);
    CHECK(out.values == serial.values);
  }
}

TEST_CASE("rbf entries stay in (0, 1]") {
  auto a = kkmtest::planted_mixture(24, 5, 3, 0.4, 7);
  auto blk = kernel_block<double>(rbf(0.6), Samples::of(a), Samples::of(a));
  for (const auto v : blk.values) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("psd spot check via cholesky with jitter") {
  auto a = kkmtest::planted_mixture(48, 4, 4, 0.3, 11);
  auto blk = kernel_block<double>(rbf(0.7), Samples::of(a), Samples::of(a));
  CHECK(cholesky_with_jitter(blk.values, blk.rows, 1e-8));
}

TEST_CASE("estimate_d_max") {
  KernelSpec spec = rbf(1.0);

  auto pair = kkmtest::from_rows({{0.0f, 0.0f}, {3.0f, 4.0f}});
  CHECK(estimate_d_max(pair, spec, 1) == doctest::Approx(5.0).epsilon(1e-12));

  auto same = kkmtest::from_rows({{1.0f, 1.0f}, {1.0f, 1.0f}, {1.0f, 1.0f}});
  CHECK(estimate_d_max(same, spec, 1) == 0.0);

  auto square = kkmtest::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  CHECK(estimate_d_max(square, spec, 1) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  bool warned = false;
  auto single = kkmtest::from_rows({{2.0f, 2.0f}});
  CHECK(estimate_d_max(single, spec, 1, &warned) == 0.0);
  CHECK(warned);

  // subsampled estimate is deterministic and bounded by the true diameter
  auto big = kkmtest::planted_mixture(600, 3, 4, 0.5, 3);
  KernelSpec sub = spec;
  sub.d_max_sample_size = 128;
  const double est1 = estimate_d_max(big, sub, 9);
  const double est2 = estimate_d_max(big, sub, 9);
  const double exact = estimate_d_max(big, spec, 9);  // 2048 >= 600: exact
  CHECK(est1 == est2);
  CHECK(est1 <= exact);
  CHECK(est1 > 0.5 * exact);
}

TEST_CASE("sigma = 4 d_max mimics a linear kernel") {
  auto data = kkmtest::planted_mixture(64, 8, 4, 0.4, 17);
  KernelSpec spec = rbf(1.0);
  const double d_max = estimate_d_max(data, spec, 5);
  spec.sigma = 4.0 * d_max;
  auto blk = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
  const double floor = std::exp(-1.0 / 32.0);
  for (const auto v : blk.values) CHECK(v >= floor - 1e-12);
}

TEST_CASE("block cache pins entries across eviction") {
  BlockCache cache(2500);  // entry1 = 576 bytes, entry2 = 2176: cannot coexist
  BlockCache::Entry e1;
  e1.block = KernelBlockT<double>{8, 8, std::vector<double>(64, 1.0)};
  e1.diag = std::vector<double>(8, 1.0);
  auto p1 = cache.insert(1, std::move(e1));
  REQUIRE(p1 != nullptr);
  CHECK(cache.find(1) != nullptr);

  BlockCache::Entry e2;
  e2.block = KernelBlockT<double>{16, 16, std::vector<double>(256, 2.0)};
  e2.diag = std::vector<double>(16, 1.0);
  auto p2 = cache.insert(2, std::move(e2));
  REQUIRE(p2 != nullptr);
  CHECK(cache.find(1) == nullptr);  // evicted
  CHECK(std::get<KernelBlockT<double>>(p1->block).values[0] == 1.0);  // alive
}

}  // TEST_SUITE
