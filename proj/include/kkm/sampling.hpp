#pragma once

#include <cstdint>
#include <vector>

#include "kkm/common.hpp"

namespace kkm {

enum class SamplingStrategy { stride, block };

// Disjoint mini-batches covering [0, N); sizes differ by at most one.
struct BatchPlan {
  SamplingStrategy strategy = SamplingStrategy::stride;
  int B = 1;
  std::vector<std::vector<std::uint32_t>> assignments;  // global ids, ascending

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& a : assignments) t += a.size();
    return t;
  }
};

// Batch i gets {i + jB}: interleaved, decorrelates sorted inputs.
BatchPlan stride_partition(std::size_t n, int b);

// Contiguous chunks of ceil(N/B), suitable for streaming input.
BatchPlan block_partition(std::size_t n, int b);

// Per-batch landmark positions (indices into the batch, ascending).
struct Landmarks {
  double s = 1.0;
  std::vector<std::vector<std::uint32_t>> per_batch;
  bool clamped = false;  // some batch hit the lower bound of C landmarks
};

// Uniform sampling without replacement within each batch; |L| =
// max(C, round(s * batch_size)), capped at the batch size. s = 1 keeps every
// index and draws nothing from the seed.
Landmarks sample_landmarks(const BatchPlan& plan, double s, int c,
                           std::uint64_t seed);

}  // namespace kkm
