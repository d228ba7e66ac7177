#include "kkm/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kkm {

namespace {

void check_args(std::size_t n, int b) {
  if (n == 0) throw InputError("cannot partition an empty dataset");
  if (b < 1) throw InputError("batch count must be >= 1");
  if (static_cast<std::size_t>(b) > n)
    throw InputError("batch count " + std::to_string(b) +
                     " exceeds sample count " + std::to_string(n));
}

}  // namespace

BatchPlan stride_partition(std::size_t n, int b) {
  check_args(n, b);
  BatchPlan plan;
  plan.strategy = SamplingStrategy::stride;
  plan.B = b;
  plan.assignments.resize(b);
  for (int i = 0; i < b; ++i)
    for (std::size_t x = static_cast<std::size_t>(i); x < n; x += static_cast<std::size_t>(b))
      plan.assignments[i].push_back(static_cast<std::uint32_t>(x));
  return plan;
}

BatchPlan block_partition(std::size_t n, int b) {
  check_args(n, b);
  BatchPlan plan;
  plan.strategy = SamplingStrategy::block;
  plan.B = b;
  plan.assignments.resize(b);
  // ceiling-sized chunks first, floor-sized after the remainder runs out, so
  // contiguous batches never differ by more than one sample
  const std::size_t chunk = n / static_cast<std::size_t>(b);
  const std::size_t remainder = n % static_cast<std::size_t>(b);
  std::size_t begin = 0;
  for (int i = 0; i < b; ++i) {
    const std::size_t end =
        begin + chunk + (static_cast<std::size_t>(i) < remainder ? 1 : 0);
    for (std::size_t x = begin; x < end; ++x)
      plan.assignments[i].push_back(static_cast<std::uint32_t>(x));
    begin = end;
  }
  return plan;
}

Landmarks sample_landmarks(const BatchPlan& plan, double s, int c,
                           std::uint64_t seed) {
  if (!(s > 0.0) || s > 1.0) throw InputError("sparsity must be in (0, 1]");
  if (c < 1) throw InputError("cluster count must be >= 1");
  Landmarks lm;
  lm.s = s;
  lm.per_batch.resize(plan.assignments.size());
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    const std::size_t batch_n = plan.assignments[i].size();
    auto& out = lm.per_batch[i];
    if (s == 1.0) {
      out.resize(batch_n);
      std::iota(out.begin(), out.end(), 0u);
      continue;
    }
    std::size_t want = static_cast<std::size_t>(
        std::llround(s * static_cast<double>(batch_n)));
    if (want < static_cast<std::size_t>(c)) {
      want = static_cast<std::size_t>(c);
      lm.clamped = true;
    }
    want = std::min(want, batch_n);
    std::vector<std::uint32_t> pool(batch_n);
    std::iota(pool.begin(), pool.end(), 0u);
    Rng rng(derive_seed(seed, "landmarks", i));
    for (std::size_t k = 0; k < want; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.next_below(batch_n - k));
      std::swap(pool[k], pool[j]);
    }
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
    std::sort(out.begin(), out.end());
  }
  return lm;
}

}  // namespace kkm
