#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "kkm/engine.hpp"
#include "kkm/lifecycle.hpp"
#include "reference_kkm.hpp"
#include "test_util.hpp"

using namespace kkm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

KernelBlock block_from(const std::vector<std::vector<double>>& rows) {
  KernelBlock b;
  b.rows = rows.size();
  b.cols = rows[0].size();
  for (const auto& r : rows) b.values.insert(b.values.end(), r.begin(), r.end());
  return b;
}

std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), 0u);
  return v;
}

// direct evaluation of the batch cost from kernel entries alone:
// sum_i [K_ii - 2 f_{i,u_i} + g_{u_i}] over members, by brute force
double brute_force_cost(const KernelBlock& k, const std::vector<double>& diag,
                        const std::vector<std::int32_t>& labels, int c) {
  const std::size_t n = k.rows;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t j = labels[i];
    std::int64_t cnt = 0;
    double cross = 0.0;
    for (std::size_t m = 0; m < n; ++m)
      if (labels[m] == j) {
        ++cnt;
        cross += k.at(i, m);
      }
    double self = 0.0;
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t l = 0; l < n; ++l)
        if (labels[m] == j && labels[l] == j) self += k.at(m, l);
    total += diag[i] - 2.0 * cross / static_cast<double>(cnt) +
             self / (static_cast<double>(cnt) * static_cast<double>(cnt));
  }
  (void)c;
  return total;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("compactness hand examples") {
  // two points, one cluster
  auto k = block_from({{1.0, 0.5}, {0.5, 1.0}});
  std::vector<std::int32_t> labels = {0, 0};
  auto part = compute_compactness(k, labels, all_rows(2), 1, 0, 2);
  CHECK(part.counts[0] == 2);
  CHECK(part.g_numerator[0] == 3.0);
  CHECK(part.g_numerator[0] / 4.0 == 0.75);

  // singleton cluster: g equals the self-kernel
  auto k1 = block_from({{1.0}});
  std::vector<std::int32_t> single = {0};
  auto p1 = compute_compactness(k1, single, all_rows(1), 1, 0, 1);
  CHECK(p1.g_numerator[0] / 1.0 == 1.0);

  // two symmetric clusters of equal geometry
  auto k2 = block_from({{1.0, 0.8, 0.1, 0.1},
                        {0.8, 1.0, 0.1, 0.1},
                        {0.1, 0.1, 1.0, 0.8},
                        {0.1, 0.1, 0.8, 1.0}});
  std::vector<std::int32_t> two = {0, 0, 1, 1};
  auto p2 = compute_compactness(k2, two, all_rows(4), 2, 0, 4);
  CHECK(p2.g_numerator[0] == p2.g_numerator[1]);
}

TEST_CASE("compactness restricted to landmarks counts landmark mass") {
  auto k = block_from({{1.0, 0.5}, {0.5, 1.0}, {0.9, 0.9}, {0.2, 0.2}});
  std::vector<std::int32_t> labels = {0, 0, 0, 0};
  std::vector<std::uint32_t> lm = {0, 1};  // block cols are the landmarks
  auto part = compute_compactness(k, labels, lm, 1, 0, 4);
  CHECK(part.counts[0] == 2);  // landmark members only
  CHECK(part.g_numerator[0] == 3.0);
}

TEST_CASE("similarity hand examples") {
  auto k = block_from({{1.0, 0.5, 0.5}, {0.5, 1.0, 0.3}, {0.5, 0.3, 1.0}});
  std::vector<std::int32_t> labels = {1, 0, 0};  // cluster 0 = rows 1,2
  std::vector<double> f(3 * 2);
  std::vector<std::int64_t> counts = {2, 1};
  compute_similarity(k, labels, all_rows(3), counts, 0, 3, f.data());
  CHECK(f[0 * 2 + 0] == 0.5);  // row 0 vs both members of cluster 0
  CHECK(f[0 * 2 + 1] == 1.0);  // row 0 is the sole member of cluster 1

  // constant kernel: f equals the constant everywhere
  auto kc = block_from({{0.7, 0.7}, {0.7, 0.7}});
  std::vector<std::int32_t> l2 = {0, 1};
  std::vector<double> f2(2 * 2);
  std::vector<std::int64_t> c2 = {1, 1};
  compute_similarity(kc, l2, all_rows(2), c2, 0, 2, f2.data());
  for (const auto v : f2) CHECK(v == 0.7);

  // empty cluster: sentinel
  std::vector<std::int64_t> c3 = {2, 1, 0};
  std::vector<double> f3(3 * 3);
  compute_similarity(k, labels, all_rows(3), c3, 0, 3, f3.data());
  CHECK(f3[2] == -kInf);
}

TEST_CASE("label update rules") {
  std::vector<double> g = {0.75, 1.0};
  std::vector<double> f = {0.5, 0.2};
  std::vector<std::int32_t> prev = {1}, out = {-1};
  const auto changes = update_labels(g, f.data(), 0, 1, 2, prev.data(), out.data());
  CHECK(out[0] == 0);  // scores (-0.25, 0.6)
  CHECK(changes == 1);

  // exact tie goes to the lowest index
  std::vector<double> gt = {0.5, 0.5};
  std::vector<double> ft = {0.25, 0.25};
  update_labels(gt, ft.data(), 0, 1, 2, prev.data(), out.data());
  CHECK(out[0] == 0);

  // single cluster
  std::vector<double> g1 = {1.0};
  std::vector<double> f1 = {0.9};
  update_labels(g1, f1.data(), 0, 1, 1, prev.data(), out.data());
  CHECK(out[0] == 0);

  // sentinel cluster never wins
  std::vector<double> gs = {kInf, 1.0};
  std::vector<double> fs = {-kInf, 0.4};
  update_labels(gs, fs.data(), 0, 1, 2, prev.data(), out.data());
  CHECK(out[0] == 1);

  // every cluster empty is fatal
  std::vector<double> ge = {kInf, kInf};
  std::vector<double> fe = {-kInf, -kInf};
  CHECK_THROWS_AS(update_labels(ge, fe.data(), 0, 1, 2, prev.data(), out.data()),
                  InternalError);
}

TEST_CASE("correct labeling is a fixed point") {
  // two well-separated pairs
  auto data = kkmtest::from_rows({{0.0f, 0.0f}, {0.1f, 0.0f}, {5.0f, 5.0f}, {5.1f, 5.0f}});
  KernelSpec spec{KernelKind::rbf, 1.0, 2048};
  auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
  auto diag = kernel_diag(spec, Samples::of(data));

  std::vector<std::int32_t> labels = {0, 0, 1, 1};
  WorkerPool pool(1);
  ClusterState state;
  GdConfig cfg;
  auto trace = inner_gd_loop(k, diag, all_rows(4), labels, 2, cfg, pool, state,
                             nullptr, 0, 8);
  CHECK(trace.iterations == 1);
  CHECK_FALSE(trace.truncated);
  CHECK(labels == std::vector<std::int32_t>{0, 0, 1, 1});
  CHECK(trace.inner_supersteps == 2);  // one reduction + one gather
}

TEST_CASE("inner loop matches the dense reference bitwise at every iteration") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull, 14ull}) {
    auto data = kkmtest::planted_mixture(64, 4, 2, 0.25, seed);
    KernelSpec spec{KernelKind::rbf, 0.8, 2048};
    auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
    auto diag = kernel_diag(spec, Samples::of(data));

    // deliberately poor U0 so the loop has work to do
    std::vector<std::int32_t> u0(64);
    for (std::size_t i = 0; i < 64; ++i) u0[i] = static_cast<std::int32_t>(i % 2);

    auto ref = kkmtest::reference_kernel_kmeans(k, diag, u0, 2, 300);

    std::vector<std::int32_t> labels = u0;
    WorkerPool pool(1);
    ClusterState state;
    GdConfig cfg;
    cfg.collect_history = true;
    auto trace = inner_gd_loop(k, diag, all_rows(64), labels, 2, cfg, pool, state,
                               nullptr, 0, 8);

    REQUIRE(trace.iterations == ref.iterations);
    for (int t = 0; t < trace.iterations; ++t) CHECK(trace.history[t] == ref.history[t]);
    for (int t = 0; t < trace.iterations; ++t) CHECK(trace.costs[t] == ref.costs[t]);
    CHECK(labels == ref.history.back());
  }
}

TEST_CASE("cost trace is non-increasing and matches brute force") {
  for (std::uint64_t seed : {3ull, 4ull, 5ull}) {
    auto data = kkmtest::planted_mixture(48, 3, 3, 0.3, seed);
    KernelSpec spec{KernelKind::rbf, 0.7, 2048};
    auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
    auto diag = kernel_diag(spec, Samples::of(data));

    std::vector<std::int32_t> labels(48);
    for (std::size_t i = 0; i < 48; ++i) labels[i] = static_cast<std::int32_t>(i % 3);
    const auto u0 = labels;

    WorkerPool pool(1);
    ClusterState state;
    GdConfig cfg;
    cfg.collect_history = true;
    auto trace = inner_gd_loop(k, diag, all_rows(48), labels, 3, cfg, pool, state,
                               nullptr, 0, 8);

    for (std::size_t t = 1; t < trace.costs.size(); ++t)
      CHECK(trace.costs[t] <= trace.costs[t - 1] + 1e-9 * std::abs(trace.costs[t - 1]));

    // identity against direct evaluation for the entering labeling
    CHECK(trace.costs[0] ==
          doctest::Approx(brute_force_cost(k, diag, u0, 3)).epsilon(1e-9));
    if (trace.iterations > 1) {
      std::vector<std::int64_t> counts(3, 0);
      for (const auto u : trace.history[0]) counts[u] += 1;
      if (std::find(counts.begin(), counts.end(), 0) == counts.end())
        CHECK(trace.costs[1] ==
              doctest::Approx(brute_force_cost(k, diag, trace.history[0], 3))
                  .epsilon(1e-9));
    }
  }
}

TEST_CASE("truncation flags a non-converged loop and refreshes state") {
  auto data = kkmtest::planted_mixture(60, 3, 3, 0.5, 21);
  KernelSpec spec{KernelKind::rbf, 0.6, 2048};
  auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
  auto diag = kernel_diag(spec, Samples::of(data));

  std::vector<std::int32_t> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = static_cast<std::int32_t>(i % 3);

  WorkerPool pool(1);
  ClusterState state;
  GdConfig cfg;
  cfg.max_iters = 1;
  auto trace = inner_gd_loop(k, diag, all_rows(60), labels, 3, cfg, pool, state,
                             nullptr, 0, 8);
  CHECK(trace.truncated);
  CHECK(trace.iterations == 1);
  // state must describe the final labels even though the loop was cut short
  std::vector<std::int64_t> counts(3, 0);
  for (const auto u : labels) counts[u] += 1;
  CHECK(state.cardinalities == counts);
  CHECK(state.labels == labels);
}

TEST_CASE("cluster that empties keeps its sentinel") {
  // one far outlier initially alone in cluster 2; it joins a real cluster and
  // cluster 2 stays empty
  auto data = kkmtest::from_rows({{0.0f, 0.0f}, {0.1f, 0.1f}, {4.0f, 4.0f},
                                  {4.1f, 4.1f}, {2.0f, 2.0f}});
  KernelSpec spec{KernelKind::rbf, 1.5, 2048};
  auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
  auto diag = kernel_diag(spec, Samples::of(data));

  std::vector<std::int32_t> labels = {0, 0, 1, 1, 2};
  WorkerPool pool(1);
  ClusterState state;
  GdConfig cfg;
  auto trace = inner_gd_loop(k, diag, all_rows(5), labels, 3, cfg, pool, state,
                             nullptr, 0, 8);
  CHECK(trace.iterations >= 1);
  if (state.cardinalities[2] == 0) {
    CHECK(state.compactness[2] == kInf);
    for (const auto u : labels) CHECK(u != 2);
  }
}

TEST_CASE("two barriers per iteration for any worker count") {
  auto data = kkmtest::planted_mixture(96, 3, 2, 0.3, 8);
  KernelSpec spec{KernelKind::rbf, 0.9, 2048};
  auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
  auto diag = kernel_diag(spec, Samples::of(data));

  for (int p : {1, 2, 4}) {
    std::vector<std::int32_t> labels(96);
    for (std::size_t i = 0; i < 96; ++i) labels[i] = static_cast<std::int32_t>(i % 2);
    WorkerPool pool(p);
    ClusterState state;
    GdConfig cfg;
    auto trace = inner_gd_loop(k, diag, all_rows(96), labels, 2, cfg, pool, state,
                               nullptr, 0, 8);
    CHECK(trace.inner_supersteps == 2 * static_cast<std::uint64_t>(trace.iterations));
  }
}

TEST_CASE("results are bitwise identical across worker counts") {
  // 2500 rows span three accumulation chunks, so the fold order is exercised
  const std::size_t n = 2500;
  auto data = kkmtest::planted_mixture(n, 5, 3, 0.4, 31);
  KernelSpec spec{KernelKind::rbf, 1.0, 2048};
  auto k = kernel_block<double>(spec, Samples::of(data), Samples::of(data));
  auto diag = kernel_diag(spec, Samples::of(data));

  std::vector<std::int32_t> u0(n);
  for (std::size_t i = 0; i < n; ++i) u0[i] = static_cast<std::int32_t>(i % 3);

  std::vector<std::int32_t> labels1;
  std::vector<double> costs1;
  for (int p : {1, 2, 4, 8}) {
    auto labels = u0;
    WorkerPool pool(p);
    ClusterState state;
    GdConfig cfg;
    auto trace = inner_gd_loop(k, diag, all_rows(n), labels, 3, cfg, pool, state,
                               nullptr, 0, 8);
    if (p == 1) {
      labels1 = labels;
      costs1 = trace.costs;
    } else {
      CHECK(labels == labels1);
      CHECK(trace.costs == costs1);
    }
  }
}

}  // TEST_SUITE
