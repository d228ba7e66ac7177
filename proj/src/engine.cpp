#include "kkm/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kkm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Row-major pass over one row range: per-cluster column sums (bins) feed the
// f row, and for landmark rows the own-cluster bin feeds the compactness
// numerator. Bins accumulate in ascending column order, so results do not
// depend on who runs the pass.
template <class T, class RowHook>
void binned_pass(const KernelBlockT<T>& block,
                 const std::vector<std::int32_t>& col_labels, int c,
                 std::uint32_t row_begin, std::uint32_t row_end,
                 RowHook&& hook) {
  const std::size_t cols = block.cols;
  std::vector<double> bins(static_cast<std::size_t>(c));
  for (std::uint32_t r = row_begin; r < row_end; ++r) {
    std::fill(bins.begin(), bins.end(), 0.0);
    const T* row = block.row(r);
    for (std::size_t l = 0; l < cols; ++l)
      bins[static_cast<std::size_t>(col_labels[l])] += static_cast<double>(row[l]);
    hook(r, bins);
  }
}

std::vector<std::int32_t> gather_col_labels(
    const std::vector<std::int32_t>& labels,
    const std::vector<std::uint32_t>& landmark_rows, int c) {
  std::vector<std::int32_t> col_labels(landmark_rows.size());
  for (std::size_t l = 0; l < landmark_rows.size(); ++l) {
    const std::int32_t j = labels[landmark_rows[l]];
    if (j < 0 || j >= c) throw InternalError("unassigned landmark label");
    col_labels[l] = j;
  }
  return col_labels;
}

}  // namespace

template <class T>
GfPartials compute_compactness(const KernelBlockT<T>& block,
                               const std::vector<std::int32_t>& labels,
                               const std::vector<std::uint32_t>& landmark_rows,
                               int c, std::uint32_t row_begin,
                               std::uint32_t row_end) {
  if (block.cols != landmark_rows.size())
    throw InternalError("block columns must match landmark count");
  const auto col_labels = gather_col_labels(labels, landmark_rows, c);

  GfPartials out;
  out.g_numerator.assign(static_cast<std::size_t>(c), 0.0);
  out.counts.assign(static_cast<std::size_t>(c), 0);

  std::vector<std::int32_t> lpos(block.rows, -1);
  for (std::size_t l = 0; l < landmark_rows.size(); ++l)
    lpos[landmark_rows[l]] = static_cast<std::int32_t>(l);

  binned_pass(block, col_labels, c, row_begin, row_end,
              [&](std::uint32_t r, const std::vector<double>& bins) {
                if (lpos[r] < 0) return;
                const std::int32_t j = labels[r];
                out.g_numerator[j] += bins[static_cast<std::size_t>(j)];
                out.counts[j] += 1;
              });
  return out;
}

template <class T>
void compute_similarity(const KernelBlockT<T>& block,
                        const std::vector<std::int32_t>& labels,
                        const std::vector<std::uint32_t>& landmark_rows,
                        const std::vector<std::int64_t>& counts,
                        std::uint32_t row_begin, std::uint32_t row_end,
                        double* f_out) {
  const int c = static_cast<int>(counts.size());
  const auto col_labels = gather_col_labels(labels, landmark_rows, c);
  binned_pass(block, col_labels, c, row_begin, row_end,
              [&](std::uint32_t r, const std::vector<double>& bins) {
                double* f = f_out + static_cast<std::size_t>(r) * c;
                for (int j = 0; j < c; ++j)
                  f[j] = counts[j] > 0
                             ? bins[j] / static_cast<double>(counts[j])
                             : -kInf;
              });
}

std::int64_t update_labels(const std::vector<double>& g, const double* f,
                           std::uint32_t row_begin, std::uint32_t row_end,
                           int c, const std::int32_t* previous,
                           std::int32_t* labels_out) {
  std::int64_t changes = 0;
  for (std::uint32_t r = row_begin; r < row_end; ++r) {
    const double* fr = f + static_cast<std::size_t>(r) * c;
    int best = -1;
    double best_score = kInf;
    for (int j = 0; j < c; ++j) {
      const double score = g[j] - 2.0 * fr[j];
      if (score < best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0) throw InternalError("label update with every cluster empty");
    labels_out[r] = best;
    if (previous[r] != best) ++changes;
  }
  return changes;
}

namespace {

// One synchronized g/f computation: chunk-grid pass A. Lanes own whole chunks
// so every chunk partial is a single fixed-order sum; the fold in ascending
// chunk order then makes g bitwise independent of the lane count.
template <class T>
struct GfPass {
  const KernelBlockT<T>& block;
  const std::vector<double>& diag;
  const std::vector<std::uint32_t>& landmark_rows;
  std::vector<std::int32_t> lpos;       // batch row -> landmark position
  double diag_landmark_sum = 0.0;
  std::uint32_t n;
  int c;
  std::uint32_t n_chunks;
  WorkerPartition chunk_part;
  std::vector<double> chunk_g;          // n_chunks x c
  std::vector<std::int32_t> col_labels;
  std::vector<std::int64_t> counts;
  std::vector<double> g_numerator;
  std::vector<double> g;

  GfPass(const KernelBlockT<T>& blk, const std::vector<double>& dg,
         const std::vector<std::uint32_t>& lms, int c_in, int pool_size)
      : block(blk), diag(dg), landmark_rows(lms),
        n(static_cast<std::uint32_t>(blk.rows)), c(c_in) {
    n_chunks = (n + kGChunkRows - 1) / kGChunkRows;
    chunk_part = WorkerPartition::balanced(n_chunks, pool_size);
    chunk_g.resize(static_cast<std::size_t>(n_chunks) * c);
    col_labels.resize(landmark_rows.size());
    counts.resize(c);
    g_numerator.resize(c);
    g.resize(c);
    lpos.assign(n, -1);
    for (std::size_t l = 0; l < landmark_rows.size(); ++l) {
      lpos[landmark_rows[l]] = static_cast<std::int32_t>(l);
      diag_landmark_sum += diag[landmark_rows[l]];
    }
  }

  // serial prologue: counts from the current labels
  void refresh_counts(const std::vector<std::int32_t>& labels) {
    for (std::size_t l = 0; l < landmark_rows.size(); ++l) {
      const std::int32_t j = labels[landmark_rows[l]];
      if (j < 0 || j >= c) throw InternalError("unassigned landmark label");
      col_labels[l] = j;
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto j : col_labels) counts[j] += 1;
  }

  // parallel body for lane p: f rows plus per-chunk g partials
  void run_lane(int p, const std::vector<std::int32_t>& labels, double* f_out) {
    const auto [cb, ce] = chunk_part.ranges[p];
    for (std::uint32_t chunk = cb; chunk < ce; ++chunk) {
      const std::uint32_t rb = chunk * kGChunkRows;
      const std::uint32_t re = std::min(n, rb + kGChunkRows);
      double* gacc = chunk_g.data() + static_cast<std::size_t>(chunk) * c;
      std::fill(gacc, gacc + c, 0.0);
      binned_pass(block, col_labels, c, rb, re,
                  [&](std::uint32_t r, const std::vector<double>& bins) {
                    double* f = f_out + static_cast<std::size_t>(r) * c;
                    for (int j = 0; j < c; ++j)
                      f[j] = counts[j] > 0
                                 ? bins[j] / static_cast<double>(counts[j])
                                 : -kInf;
                    if (lpos[r] >= 0) {
                      const std::int32_t j = labels[r];
                      gacc[j] += bins[static_cast<std::size_t>(j)];
                    }
                  });
    }
  }

  // serial epilogue: ascending-chunk fold, then the quotient
  double fold_and_finalize() {
    std::fill(g_numerator.begin(), g_numerator.end(), 0.0);
    for (std::uint32_t chunk = 0; chunk < n_chunks; ++chunk) {
      const double* gacc = chunk_g.data() + static_cast<std::size_t>(chunk) * c;
      for (int j = 0; j < c; ++j) g_numerator[j] += gacc[j];
    }
    double cost = diag_landmark_sum;
    for (int j = 0; j < c; ++j) {
      if (counts[j] > 0) {
        const double cnt = static_cast<double>(counts[j]);
        g[j] = g_numerator[j] / (cnt * cnt);
        cost -= g_numerator[j] / cnt;
      } else {
        g[j] = kInf;
      }
    }
    return cost;
  }
};

}  // namespace

template <class T>
InnerLoopTrace inner_gd_loop(const KernelBlockT<T>& block,
                             const std::vector<double>& diag,
                             const std::vector<std::uint32_t>& landmark_rows,
                             std::vector<std::int32_t>& labels, int c,
                             const GdConfig& cfg, WorkerPool& pool,
                             ClusterState& state, TrafficRecorder* traffic,
                             int batch_tag, int scalar_bytes) {
  const auto n = static_cast<std::uint32_t>(block.rows);
  if (labels.size() != n) throw InternalError("U0 must cover every batch row");
  if (block.cols != landmark_rows.size())
    throw InternalError("block columns must match landmark count");
  if (cfg.max_iters < 1) throw InputError("max_iters must be >= 1");

  state.C = c;
  state.similarity.assign(static_cast<std::size_t>(n) * c, 0.0);
  double* f = state.similarity.data();

  GfPass<T> pass(block, diag, landmark_rows, c, pool.size());
  const auto row_part = WorkerPartition::balanced(n, pool.size());
  const std::uint64_t q = static_cast<std::uint64_t>(scalar_bytes);
  const std::uint64_t gather_max = row_part.max_rows() * q;
  const std::uint64_t reduce_each = static_cast<std::uint64_t>(c) * q;

  std::vector<std::int32_t> next_labels(n);
  std::vector<std::int64_t> lane_changes(pool.size());

  InnerLoopTrace trace;
  const std::uint64_t steps0 = pool.supersteps();
  bool state_stale = false;

  for (int t = 0; t < cfg.max_iters; ++t) {
    pass.refresh_counts(labels);
    bool any = false;
    for (const auto cnt : pass.counts) any = any || cnt > 0;
    if (!any) throw InternalError("every cluster empty at iteration start");

    pool.parallel([&](int p) { pass.run_lane(p, labels, f); });
    if (traffic)
      traffic->add(batch_tag, t, CollectiveOp::allreduce_sum, reduce_each,
                   reduce_each * pool.size());
    trace.costs.push_back(pass.fold_and_finalize());

    pool.parallel([&](int p) {
      const auto [rb, re] = row_part.ranges[p];
      lane_changes[p] =
          update_labels(pass.g, f, rb, re, c, labels.data(), next_labels.data());
    });
    if (traffic)
      traffic->add(batch_tag, t, CollectiveOp::allgather_labels, gather_max,
                   static_cast<std::uint64_t>(n) * q);

    std::int64_t changes = 0;
    for (const auto ch : lane_changes) changes += ch;
    labels.swap(next_labels);
    trace.iterations = t + 1;
    if (cfg.collect_history) trace.history.push_back(labels);

    if (changes <= cfg.label_change_tolerance) {
      state_stale = changes != 0;
      break;
    }
    if (t + 1 == cfg.max_iters) {
      trace.truncated = true;
      state_stale = true;
    }
  }
  trace.inner_supersteps = pool.supersteps() - steps0;

  if (state_stale) {
    // refresh g/f/counts so the state matches the final labeling
    pass.refresh_counts(labels);
    pool.parallel([&](int p) { pass.run_lane(p, labels, f); });
    pass.fold_and_finalize();
  }

  state.labels = labels;
  state.cardinalities = pass.counts;
  state.compactness = pass.g;
  return trace;
}

template GfPartials compute_compactness<float>(const KernelBlockT<float>&,
                                               const std::vector<std::int32_t>&,
                                               const std::vector<std::uint32_t>&,
                                               int, std::uint32_t, std::uint32_t);
template GfPartials compute_compactness<double>(const KernelBlockT<double>&,
                                                const std::vector<std::int32_t>&,
                                                const std::vector<std::uint32_t>&,
                                                int, std::uint32_t, std::uint32_t);
template void compute_similarity<float>(const KernelBlockT<float>&,
                                        const std::vector<std::int32_t>&,
                                        const std::vector<std::uint32_t>&,
                                        const std::vector<std::int64_t>&,
                                        std::uint32_t, std::uint32_t, double*);
template void compute_similarity<double>(const KernelBlockT<double>&,
                                         const std::vector<std::int32_t>&,
                                         const std::vector<std::uint32_t>&,
                                         const std::vector<std::int64_t>&,
                                         std::uint32_t, std::uint32_t, double*);
template InnerLoopTrace inner_gd_loop<float>(const KernelBlockT<float>&,
                                             const std::vector<double>&,
                                             const std::vector<std::uint32_t>&,
                                             std::vector<std::int32_t>&, int,
                                             const GdConfig&, WorkerPool&,
                                             ClusterState&, TrafficRecorder*,
                                             int, int);
template InnerLoopTrace inner_gd_loop<double>(const KernelBlockT<double>&,
                                              const std::vector<double>&,
                                              const std::vector<std::uint32_t>&,
                                              std::vector<std::int32_t>&, int,
                                              const GdConfig&, WorkerPool&,
                                              ClusterState&, TrafficRecorder*,
                                              int, int);

}  // namespace kkm
