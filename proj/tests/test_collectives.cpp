#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>

#include "kkm/collectives.hpp"
#include "kkm/common.hpp"

using namespace kkm;

TEST_SUITE("collectives") {

TEST_CASE("balanced partition tiles the range") {
  for (std::size_t n : {0u, 1u, 5u, 17u, 100u}) {
    for (int p : {1, 2, 3, 8}) {
      const auto part = WorkerPartition::balanced(n, p);
      std::size_t lo = n + 1, hi = 0, cursor = 0;
      for (const auto& [b, e] : part.ranges) {
        CHECK(b == cursor);
        cursor = e;
        lo = std::min<std::size_t>(lo, e - b);
        hi = std::max<std::size_t>(hi, e - b);
      }
      CHECK(cursor == n);
      CHECK(hi - lo <= 1);
    }
  }
}

TEST_CASE("worker pool runs every lane and counts supersteps") {
  WorkerPool pool(4);
  std::atomic<int> hits{0};
  pool.parallel([&](int) { hits.fetch_add(1); });
  pool.parallel([&](int) { hits.fetch_add(1); });
  CHECK(hits.load() == 8);
  CHECK(pool.supersteps() == 2);
}

TEST_CASE("worker pool propagates lane exceptions") {
  WorkerPool pool(3);
  CHECK_THROWS_AS(pool.parallel([](int p) {
    if (p == 2) throw InternalError("lane failure");
  }),
                  InternalError);
  // pool still usable afterwards
  std::atomic<int> hits{0};
  pool.parallel([&](int) { hits.fetch_add(1); });
  CHECK(hits.load() == 3);
}

TEST_CASE("allreduce_sum examples") {
  std::vector<std::vector<double>> single = {{1.0, 2.0}};
  CHECK(allreduce_sum(single) == std::vector<double>{1.0, 2.0});

  std::vector<std::vector<double>> two = {{1.0, 2.0}, {3.0, 4.0}};
  CHECK(allreduce_sum(two) == std::vector<double>{4.0, 6.0});

  std::vector<std::vector<double>> bad = {{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(allreduce_sum(bad), InternalError);
}

TEST_CASE("allgather assembles slices by range") {
  auto part1 = WorkerPartition::balanced(3, 1);
  std::vector<std::vector<std::int32_t>> one = {{5, 6, 7}};
  CHECK(allgather_labels(part1, one) == std::vector<std::int32_t>{5, 6, 7});

  WorkerPartition part;
  part.P = 2;
  part.ranges = {{0, 2}, {2, 3}};
  std::vector<std::vector<std::int32_t>> slices = {{10, 11}, {12}};
  CHECK(allgather_labels(part, slices) == std::vector<std::int32_t>{10, 11, 12});

  // identical assembly for any worker count
  std::vector<std::int32_t> reference(23);
  std::iota(reference.begin(), reference.end(), 100);
  for (int p : {1, 2, 4}) {
    const auto pp = WorkerPartition::balanced(reference.size(), p);
    std::vector<std::vector<std::int32_t>> sl(p);
    for (int w = 0; w < p; ++w)
      sl[w].assign(reference.begin() + pp.ranges[w].first,
                   reference.begin() + pp.ranges[w].second);
    CHECK(allgather_labels(pp, sl) == reference);
  }

  WorkerPartition gap;
  gap.P = 2;
  gap.ranges = {{0, 2}, {3, 4}};
  std::vector<std::vector<std::int32_t>> gap_slices = {{1, 2}, {3}};
  CHECK_THROWS_AS(allgather_labels(gap, gap_slices), InternalError);
}

TEST_CASE("allreduce_argmin follows value then index, absent loses") {
  std::vector<std::vector<ArgminCandidate>> one = {{{0.5, 9}}};
  CHECK(allreduce_argmin(one)[0].index == 9);

  std::vector<std::vector<ArgminCandidate>> tie = {{{0.3, 7}}, {{0.3, 2}}};
  CHECK(allreduce_argmin(tie)[0].index == 2);

  std::vector<std::vector<ArgminCandidate>> absent = {{{0.0, -1}}, {{7.5, 4}}};
  CHECK(allreduce_argmin(absent)[0].index == 4);

  std::vector<std::vector<ArgminCandidate>> all_absent = {{{0.0, -1}}, {{0.0, -1}}};
  CHECK_FALSE(allreduce_argmin(all_absent)[0].present());

  // random candidates match a serial scan
  Rng rng(42);
  for (int rep = 0; rep < 50; ++rep) {
    const int c = 3;
    std::vector<std::vector<ArgminCandidate>> per_worker(4);
    std::vector<ArgminCandidate> serial(c);
    for (auto& w : per_worker) {
      w.resize(c);
      for (int j = 0; j < c; ++j) {
        if (rng.next_unit() < 0.2) continue;  // absent
        w[j] = {std::floor(rng.next_unit() * 8) / 8.0,
                static_cast<std::int64_t>(rng.next_below(100))};
        if (w[j].beats(serial[j])) serial[j] = w[j];
      }
    }
    const auto fold = allreduce_argmin(per_worker);
    for (int j = 0; j < c; ++j) {
      CHECK(fold[j].index == serial[j].index);
      CHECK(fold[j].value == serial[j].value);
    }
  }
}

TEST_CASE("footprint and message formulas") {
  // N = BP, C = 1: one row per worker -> Q * (1 + 2)
  CHECK(message_size_bound(8, 2, 4, 1, 8) == 8 * 3);
  // doubling P halves the row term exactly when P | N/B
  CHECK(message_size_bound(64, 2, 2, 4, 4) - 4 * 8 ==
        2 * (message_size_bound(64, 2, 4, 4, 4) - 4 * 8));
  CHECK(footprint_bytes(100, 3, 2, 5, 8) ==
        8u * (10 * (20 + 3) + 20 + 6));
}

TEST_CASE("planner examples") {
  ResourceModel roomy{8, footprint_bytes(1000, 2, 1, 1, 8)};
  CHECK(plan_min_batches(1000, 2, 1, roomy).b_min == 1);

  ResourceModel spec_case{8, 80000};
  const auto res = plan_min_batches(1000, 2, 1, spec_case);
  CHECK(footprint_bytes(1000, 2, 1, res.b_min, 8) <= spec_case.R);
  if (res.b_min > 1)
    CHECK(footprint_bytes(1000, 2, 1, res.b_min - 1, 8) > spec_case.R);
  // scan result never exceeds the ceiling of the closed form + 1
  CHECK(std::isfinite(res.closed_form));
  CHECK(res.b_min <= static_cast<int>(std::ceil(res.closed_form)) + 1);

  ResourceModel hopeless{8, 16};
  CHECK_THROWS_AS(plan_min_batches(1000, 2, 1, hopeless), CapacityError);
  CHECK_THROWS_AS(plan_min_batches(1000, 2, 1, ResourceModel{5, 1000}), InputError);
}

TEST_CASE("planner scan is brute-force minimal") {
  Rng rng(7);
  for (int rep = 0; rep < 60; ++rep) {
    const std::uint64_t n = 1 + rng.next_below(3000);
    const int c = 1 + static_cast<int>(rng.next_below(12));
    const int p = 1 + static_cast<int>(rng.next_below(8));
    const int q = rng.next_unit() < 0.5 ? 4 : 8;
    const std::uint64_t r = 64 + rng.next_below(1u << 20);
    ResourceModel model{q, r};
    int expect = 0;
    for (std::uint64_t b = 1; b <= n; ++b)
      if (footprint_bytes(n, c, p, static_cast<int>(b), q) <= r) {
        expect = static_cast<int>(b);
        break;
      }
    if (expect == 0) {
      CHECK_THROWS_AS(plan_min_batches(n, c, p, model), CapacityError);
    } else {
      CHECK(plan_min_batches(n, c, p, model).b_min == expect);
    }
  }
}

TEST_CASE("traffic recorder aggregates per slot") {
  TrafficRecorder rec;
  rec.add(0, 0, CollectiveOp::allreduce_sum, 80, 160);
  rec.add(0, 0, CollectiveOp::allgather_labels, 400, 800);
  rec.add(0, 1, CollectiveOp::allreduce_sum, 80, 160);
  rec.add(1, -1, CollectiveOp::allreduce_min, 80, 160);
  CHECK(rec.max_slot_bytes_per_worker() == 480);
  CHECK(rec.total() == 1280);
}

}  // TEST_SUITE
