#pragma once

#include <cstdint>
#include <vector>

#include "kkm/collectives.hpp"
#include "kkm/kernels.hpp"

namespace kkm {

inline constexpr std::uint32_t kGChunkRows = 1024;
inline constexpr std::int32_t kUnassigned = -1;

struct GdConfig {
  int max_iters = 300;
  int label_change_tolerance = 0;  // stop when <= this many labels change
  bool collect_history = false;    // keep labels after every iteration
};

// Per-batch clustering state. Cardinalities count landmark members when the
// centroid representation is sparsified (the restricted sums normalize over
// landmark mass), all batch members otherwise.
struct ClusterState {
  int C = 0;
  std::vector<std::int32_t> labels;        // per batch row
  std::vector<std::int64_t> cardinalities; // per cluster
  std::vector<double> compactness;         // g_j, +inf when cluster empty
  std::vector<double> similarity;          // f, row-major rows x C, -inf when empty
};

// Partial sums over a row range: numerator of the compactness quotient plus
// member counts. Final g_j = numerator_j / counts_j^2 happens after the
// cross-worker reduction.
struct GfPartials {
  std::vector<double> g_numerator;
  std::vector<std::int64_t> counts;
};

template <class T>
GfPartials compute_compactness(const KernelBlockT<T>& block,
                               const std::vector<std::int32_t>& labels,
                               const std::vector<std::uint32_t>& landmark_rows,
                               int c, std::uint32_t row_begin,
                               std::uint32_t row_end);

// f rows for every owned row (landmark or not); the member sum runs over
// landmark columns. Empty cluster -> -inf so it never wins the argmin.
template <class T>
void compute_similarity(const KernelBlockT<T>& block,
                        const std::vector<std::int32_t>& labels,
                        const std::vector<std::uint32_t>& landmark_rows,
                        const std::vector<std::int64_t>& counts,
                        std::uint32_t row_begin, std::uint32_t row_end,
                        double* f_out);

// u_i = argmin_j g_j - 2 f_{i,j}, ties to the smallest j. Returns how many
// rows changed against `previous`. Throws InternalError when every cluster is
// a sentinel.
std::int64_t update_labels(const std::vector<double>& g, const double* f,
                           std::uint32_t row_begin, std::uint32_t row_end,
                           int c, const std::int32_t* previous,
                           std::int32_t* labels_out);

struct InnerLoopTrace {
  int iterations = 0;
  bool truncated = false;               // stopped by max_iters, not fixed point
  std::vector<double> costs;            // batch cost of the labeling entering
                                        // each iteration
  std::vector<std::vector<std::int32_t>> history;  // post-update labels per
                                                   // iteration when collected
  std::uint64_t inner_supersteps = 0;   // barriers spent inside iterations
};

// Synchronous GD loop on one mini-batch: compactness partials per fixed
// 1024-row chunk folded in ascending chunk order (bitwise independent of the
// lane count), then the g reduction, then per-row label updates, then the
// label gather. Two barriers per iteration. `labels` carries U0 in and the
// final labeling out; `state` is left consistent with the final labels.
template <class T>
InnerLoopTrace inner_gd_loop(const KernelBlockT<T>& block,
                             const std::vector<double>& diag,
                             const std::vector<std::uint32_t>& landmark_rows,
                             std::vector<std::int32_t>& labels, int c,
                             const GdConfig& cfg, WorkerPool& pool,
                             ClusterState& state, TrafficRecorder* traffic,
                             int batch_tag, int scalar_bytes);

}  // namespace kkm
