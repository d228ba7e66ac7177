#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kkm/collectives.hpp"
#include "kkm/dataset.hpp"
#include "kkm/engine.hpp"
#include "kkm/kernels.hpp"
#include "kkm/sampling.hpp"

namespace kkm {

// Cross-batch model: one medoid per cluster (global sample index, -1 while
// absent) plus the cumulative member counts feeding the merge coefficient.
struct GlobalState {
  std::vector<std::int64_t> medoids;
  std::vector<std::int64_t> counts;
  int batches_done = 0;

  explicit GlobalState(int c = 0)
      : medoids(static_cast<std::size_t>(c), -1),
        counts(static_cast<std::size_t>(c), 0) {}
};

struct RunConfig {
  int C = 2;
  int B = 1;
  double s = 1.0;
  int P = 1;
  KernelSpec kernel;
  SamplingStrategy sampling = SamplingStrategy::stride;
  std::uint64_t seed = 1;
  int restarts = 1;
  GdConfig gd;
  int block_scalar_bytes = 8;          // kernel block storage: 4 or 8
  std::uint64_t cache_capacity = 0;    // block cache budget, 0 = no cache
  bool prefetch = false;               // overlap next batch's kernel block
                                       // with the current inner loop
  bool admit_previous_medoid = false;  // let the merge keep the old medoid as
                                       // a candidate alongside the batch rows
  bool check_memory = true;            // refuse allocations beyond available
                                       // RAM with a CapacityError

  void validate(std::size_t n) const;
};

// First-batch seeding: kernel k-means++ over the batch, next medoid drawn
// proportionally to squared kernel distance from the chosen set. Returns
// batch-local row indices, all distinct.
std::vector<std::uint32_t> kernel_kmeanspp_init(const KernelSpec& spec,
                                                Samples batch, int c,
                                                std::uint64_t seed);

// Nearest-medoid assignment in kernel distance, ties to the lowest cluster.
// Absent medoids never win. Used both for batch initialization and for the
// final dataset-wide labeling.
std::vector<std::int32_t> assign_to_medoids(const KernelSpec& spec,
                                            Samples points,
                                            Samples medoid_source,
                                            const std::vector<std::int64_t>& medoids,
                                            WorkerPool* pool = nullptr);

// Batch medoid per cluster: argmin over all batch rows of K_ll - 2 f_{l,j},
// ties to the lowest global index; empty cluster -> absent.
std::vector<ArgminCandidate> extract_medoids(
    const std::vector<double>& diag, const ClusterState& state,
    const std::vector<std::uint32_t>& batch_ids, WorkerPool& pool,
    TrafficRecorder* traffic, int batch_tag, int scalar_bytes);

// Convex-combination merge. alpha_j = |w_j^i| / (n_j + |w_j^i|); the new
// global medoid re-approximates the combined centroid over the batch rows.
// Empty batch clusters leave the global medoid untouched.
struct MergeOutcome {
  std::vector<double> alpha;
};
MergeOutcome merge_medoids(GlobalState& global,
                           const std::vector<ArgminCandidate>& batch_medoids,
                           const std::vector<std::int64_t>& batch_cardinalities,
                           const DataSet& data,
                           const std::vector<std::uint32_t>& batch_ids,
                           const KernelSpec& spec, WorkerPool& pool,
                           TrafficRecorder* traffic, int batch_tag,
                           int scalar_bytes, bool admit_previous);

struct BatchTrace {
  int batch = 0;
  int iterations = 0;
  bool truncated = false;
  std::vector<double> costs;
  std::vector<double> alpha;
  std::vector<std::int64_t> cardinalities;
  std::vector<double> medoid_displacement;  // vs previous global medoids,
                                            // NaN where either side absent
  std::uint64_t inner_supersteps = 0;
  double seconds_kernel = 0.0;
  double seconds_inner = 0.0;
  double seconds_merge = 0.0;
};

struct RestartTrace {
  std::vector<BatchTrace> batches;
  double final_cost = 0.0;
};

struct FootprintReport {
  // Model-unit bytes (Q per scalar) for the tracked per-worker structures.
  std::uint64_t peak_block = 0;
  std::uint64_t peak_f = 0;
  std::uint64_t peak_labels = 0;
  std::uint64_t peak_g = 0;
  std::uint64_t peak_total() const {
    return peak_block + peak_f + peak_labels + peak_g;
  }
};

struct RunResult {
  std::vector<std::int32_t> labels;  // final nearest-medoid labels, size N
  GlobalState global{0};
  int chosen_restart = 0;
  std::vector<double> restart_costs;
  std::vector<RestartTrace> traces;  // one per restart
  TrafficRecorder traffic;           // winning restart
  FootprintReport footprint;
  std::vector<std::string> warnings;
  double seconds_total = 0.0;
  // Post-update labels per batch per iteration (winning restart), collected
  // only when cfg.gd.collect_history is set.
  std::vector<std::vector<std::vector<std::int32_t>>> history;
};

// The outer loop: fetch batch -> kernel block -> initialize -> inner GD loop
// -> medoid extraction -> merge; then a dataset-wide nearest-medoid labeling.
// Restarts rerun everything with a different init stream and keep the run
// with minimum final cost. Deterministic for fixed (seed, config), bitwise
// identical across worker counts.
RunResult run_clustering(const DataSet& data, const RunConfig& cfg,
                         BlockCache* cache = nullptr);

}  // namespace kkm
