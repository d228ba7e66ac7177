#pragma once

#include <cstdint>
#include <vector>

#include "kkm/dataset.hpp"

namespace kkm {

struct BaselineConfig {
  int C = 2;
  std::uint64_t seed = 1;
  int max_iters = 300;
  int sgd_batch_size = 1000;
  int sgd_iterations = 0;  // 0 = one pass worth of batches, N / batch_size
};

struct BaselineResult {
  std::vector<std::int32_t> labels;
  std::vector<double> centers;  // C x d row-major
  double cost = 0.0;            // sum of squared distances to owned center
  int iterations = 0;
  std::vector<double> cost_trace;           // Lloyd: SSE at each assignment
  std::vector<std::int64_t> center_counts;  // SGD per-center update counts
};

// Full-batch Lloyd iterations from a k-means++ seeding, to a fixed point or
// max_iters. Input-space Euclidean geometry.
BaselineResult lloyd_kmeans(const DataSet& data, const BaselineConfig& cfg);

// Mini-batch SGD k-means: per batch, assign against frozen centers, then pull
// each center toward its assigned points with step 1/(cumulative count).
BaselineResult sgd_minibatch_kmeans(const DataSet& data,
                                    const BaselineConfig& cfg);

}  // namespace kkm
