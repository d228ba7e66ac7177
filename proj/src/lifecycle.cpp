#include "kkm/lifecycle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "kkm/metrics.hpp"

namespace kkm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t available_memory_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::uint64_t kb = 0;
  while (in >> key >> kb) {
    if (key == "MemAvailable:") return kb * 1024;
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  }
  return 0;  // unknown -> no enforcement
}

}  // namespace

void RunConfig::validate(std::size_t n) const {
  if (C < 1) throw InputError("cluster count must be >= 1");
  if (B < 1) throw InputError("batch count must be >= 1");
  if (!(s > 0.0) || s > 1.0) throw InputError("sparsity must be in (0, 1]");
  if (P < 1) throw InputError("worker count must be >= 1");
  if (restarts < 1) throw InputError("restarts must be >= 1");
  if (n < static_cast<std::size_t>(C))
    throw InputError("dataset smaller than the cluster count");
  if (static_cast<std::size_t>(B) * static_cast<std::size_t>(C) > n)
    throw InputError("batch count " + std::to_string(B) +
                     " exceeds N/C; batches would not cover every cluster");
  if (block_scalar_bytes != 4 && block_scalar_bytes != 8)
    throw InputError("block scalar size must be 4 or 8 bytes");
  kernel.validate();
}

std::vector<std::uint32_t> kernel_kmeanspp_init(const KernelSpec& spec,
                                                Samples batch, int c,
                                                std::uint64_t seed) {
  if (batch.n < static_cast<std::size_t>(c))
    throw InputError("batch smaller than the cluster count");
  Rng rng(seed);
  const std::vector<double> diag = kernel_diag(spec, batch);

  std::vector<std::uint32_t> chosen;
  chosen.reserve(c);
  std::vector<char> is_chosen(batch.n, 0);
  std::vector<double> min_d2(batch.n, kInf);

  auto admit = [&](std::uint32_t m) {
    chosen.push_back(m);
    is_chosen[m] = 1;
    const float* xm = batch.row(m);
    const double k_mm = diag[m];
    for (std::size_t i = 0; i < batch.n; ++i) {
      const double k_im = eval_kernel_unchecked(spec, batch.row(i), xm, batch.d);
      const double d2 = std::max(0.0, diag[i] - 2.0 * k_im + k_mm);
      min_d2[i] = std::min(min_d2[i], d2);
    }
  };

  admit(static_cast<std::uint32_t>(rng.next_below(batch.n)));
  while (chosen.size() < static_cast<std::size_t>(c)) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.n; ++i)
      if (!is_chosen[i]) total += min_d2[i];
    if (total > 0.0) {
      const double target = rng.next_unit() * total;
      double acc = 0.0;
      std::uint32_t pick = 0;
      bool found = false;
      for (std::size_t i = 0; i < batch.n && !found; ++i) {
        if (is_chosen[i] || min_d2[i] <= 0.0) continue;
        acc += min_d2[i];
        if (acc > target) {
          pick = static_cast<std::uint32_t>(i);
          found = true;
        }
      }
      if (!found) {
        // summation round-off: take the last positive-mass candidate
        for (std::size_t i = batch.n; i-- > 0;) {
          if (!is_chosen[i] && min_d2[i] > 0.0) {
            pick = static_cast<std::uint32_t>(i);
            found = true;
            break;
          }
        }
      }
      if (!found) throw InternalError("k-means++ lost its candidate mass");
      admit(pick);
    } else {
      // all remaining points coincide with chosen medoids; pick uniformly
      std::uint64_t remaining = 0;
      for (std::size_t i = 0; i < batch.n; ++i) remaining += !is_chosen[i];
      std::uint64_t skip = rng.next_below(remaining);
      for (std::size_t i = 0; i < batch.n; ++i) {
        if (is_chosen[i]) continue;
        if (skip-- == 0) {
          admit(static_cast<std::uint32_t>(i));
          break;
        }
      }
    }
  }
  return chosen;
}

std::vector<std::int32_t> assign_to_medoids(const KernelSpec& spec,
                                            Samples points,
                                            Samples medoid_source,
                                            const std::vector<std::int64_t>& medoids,
                                            WorkerPool* pool) {
  const int c = static_cast<int>(medoids.size());
  bool any_present = false;
  std::vector<double> medoid_self(medoids.size(), 0.0);
  for (std::size_t j = 0; j < medoids.size(); ++j) {
    if (medoids[j] < 0) continue;
    any_present = true;
    const float* m = medoid_source.row(static_cast<std::size_t>(medoids[j]));
    medoid_self[j] = eval_kernel_unchecked(spec, m, m, medoid_source.d);
  }
  if (!any_present) throw InternalError("no medoid available for assignment");
  if (points.d != medoid_source.d)
    throw InputError("sample dimension mismatch in medoid assignment");

  std::vector<std::int32_t> labels(points.n, kUnassigned);
  auto body = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const float* x = points.row(i);
      const double k_xx = eval_kernel_unchecked(spec, x, x, points.d);
      int best = -1;
      double best_d2 = kInf;
      for (int j = 0; j < c; ++j) {
        if (medoids[j] < 0) continue;
        const float* m = medoid_source.row(static_cast<std::size_t>(medoids[j]));
        const double k_xm = eval_kernel_unchecked(spec, x, m, points.d);
        const double d2 = k_xx - 2.0 * k_xm + medoid_self[j];
        if (d2 < best_d2) {
          best_d2 = d2;
          best = j;
        }
      }
      labels[i] = best;
    }
  };
  if (pool && pool->size() > 1) {
    const auto part = WorkerPartition::balanced(points.n, pool->size());
    pool->parallel([&](int p) { body(part.ranges[p].first, part.ranges[p].second); });
  } else {
    body(0, points.n);
  }
  return labels;
}

std::vector<ArgminCandidate> extract_medoids(
    const std::vector<double>& diag, const ClusterState& state,
    const std::vector<std::uint32_t>& batch_ids, WorkerPool& pool,
    TrafficRecorder* traffic, int batch_tag, int scalar_bytes) {
  const std::size_t n = batch_ids.size();
  const int c = state.C;
  if (state.similarity.size() != n * static_cast<std::size_t>(c))
    throw InternalError("similarity matrix shape mismatch");

  const auto part = WorkerPartition::balanced(n, pool.size());
  std::vector<std::vector<ArgminCandidate>> per_worker(
      pool.size(), std::vector<ArgminCandidate>(c, {kInf, -1}));
  pool.parallel([&](int p) {
    const auto [rb, re] = part.ranges[p];
    auto& local = per_worker[p];
    for (std::uint32_t r = rb; r < re; ++r) {
      const double* f = state.similarity.data() + static_cast<std::size_t>(r) * c;
      for (int j = 0; j < c; ++j) {
        const double score = diag[r] - 2.0 * f[j];
        if (std::isfinite(score) && score < local[j].value) {
          local[j].value = score;
          local[j].index = static_cast<std::int64_t>(batch_ids[r]);
        }
      }
    }
  });
  if (traffic)
    traffic->add(batch_tag, -1, CollectiveOp::allreduce_min,
                 static_cast<std::uint64_t>(c) * scalar_bytes,
                 static_cast<std::uint64_t>(c) * scalar_bytes * pool.size());
  return allreduce_argmin(per_worker);
}

MergeOutcome merge_medoids(GlobalState& global,
                           const std::vector<ArgminCandidate>& batch_medoids,
                           const std::vector<std::int64_t>& batch_cardinalities,
                           const DataSet& data,
                           const std::vector<std::uint32_t>& batch_ids,
                           const KernelSpec& spec, WorkerPool& pool,
                           TrafficRecorder* traffic, int batch_tag,
                           int scalar_bytes, bool admit_previous) {
  const int c = static_cast<int>(global.medoids.size());
  if (static_cast<int>(batch_medoids.size()) != c ||
      static_cast<int>(batch_cardinalities.size()) != c)
    throw InternalError("merge inputs disagree on the cluster count");

  MergeOutcome outcome;
  outcome.alpha.assign(c, 0.0);

  if (global.batches_done == 0) {
    for (int j = 0; j < c; ++j) {
      global.medoids[j] = batch_medoids[j].index;
      global.counts[j] = batch_medoids[j].present() ? batch_cardinalities[j] : 0;
      outcome.alpha[j] = batch_medoids[j].present() ? 1.0 : 0.0;
    }
    global.batches_done = 1;
    return outcome;
  }

  const std::size_t n = batch_ids.size();
  const auto part = WorkerPartition::balanced(n, pool.size());
  std::vector<std::vector<ArgminCandidate>> per_worker(
      pool.size(), std::vector<ArgminCandidate>(c, {kInf, -1}));

  struct ClusterTerms {
    bool update = false;
    double coeff_prev = 0.0;   // 2 (1 - alpha)
    double coeff_batch = 0.0;  // 2 alpha
    const float* prev = nullptr;
    const float* batch = nullptr;
  };
  std::vector<ClusterTerms> terms(c);
  for (int j = 0; j < c; ++j) {
    const std::int64_t wj = batch_cardinalities[j];
    if (wj <= 0 || !batch_medoids[j].present()) continue;  // alpha = 0, keep m_j
    const double alpha =
        static_cast<double>(wj) / static_cast<double>(global.counts[j] + wj);
    outcome.alpha[j] = alpha;
    terms[j].update = true;
    terms[j].coeff_prev = 2.0 * (1.0 - alpha);
    terms[j].coeff_batch = 2.0 * alpha;
    terms[j].batch = data.row(static_cast<std::size_t>(batch_medoids[j].index));
    if (global.medoids[j] >= 0)
      terms[j].prev = data.row(static_cast<std::size_t>(global.medoids[j]));
  }

  pool.parallel([&](int p) {
    const auto [rb, re] = part.ranges[p];
    auto& local = per_worker[p];
    for (std::uint32_t r = rb; r < re; ++r) {
      const float* x = data.row(batch_ids[r]);
      const double k_xx = eval_kernel_unchecked(spec, x, x, data.d);
      for (int j = 0; j < c; ++j) {
        if (!terms[j].update) continue;
        double score = k_xx;
        if (terms[j].prev && terms[j].coeff_prev != 0.0)
          score -= terms[j].coeff_prev *
                   eval_kernel_unchecked(spec, x, terms[j].prev, data.d);
        score -= terms[j].coeff_batch *
                 eval_kernel_unchecked(spec, x, terms[j].batch, data.d);
        if (score < local[j].value) {
          local[j].value = score;
          local[j].index = static_cast<std::int64_t>(batch_ids[r]);
        }
      }
    }
  });
  if (traffic)
    traffic->add(batch_tag, -1, CollectiveOp::allreduce_min,
                 static_cast<std::uint64_t>(c) * scalar_bytes,
                 static_cast<std::uint64_t>(c) * scalar_bytes * pool.size());
  auto winners = allreduce_argmin(per_worker);

  for (int j = 0; j < c; ++j) {
    if (!terms[j].update) continue;
    if (admit_previous && global.medoids[j] >= 0 && terms[j].prev) {
      const float* m = terms[j].prev;
      const double k_mm = eval_kernel_unchecked(spec, m, m, data.d);
      double score = k_mm - terms[j].coeff_batch *
                                eval_kernel_unchecked(spec, m, terms[j].batch, data.d);
      if (terms[j].coeff_prev != 0.0) score -= terms[j].coeff_prev * k_mm;
      ArgminCandidate keep{score, global.medoids[j]};
      if (keep.beats(winners[j])) winners[j] = keep;
    }
    if (!winners[j].present())
      throw InternalError("merge argmin produced no candidate");
    global.medoids[j] = winners[j].index;
    global.counts[j] += batch_cardinalities[j];
  }
  global.batches_done += 1;
  return outcome;
}

namespace {

struct BatchContext {
  std::vector<std::uint32_t> ids;
  std::vector<float> samples;    // gathered rows
  std::vector<float> landmarks;  // gathered landmark rows (cols of the block)
  Samples batch_view(std::size_t d) const {
    return {samples.data(), ids.size(), d};
  }
};

void gather_rows(const DataSet& data, const std::vector<std::uint32_t>& ids,
                 std::vector<float>& out) {
  out.resize(ids.size() * data.d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(data.row(ids[i]), data.row(ids[i]) + data.d,
              out.data() + i * data.d);
}

std::uint64_t block_key(std::uint64_t data_fp, const std::vector<std::uint32_t>& ids,
                        const std::vector<std::uint32_t>& landmark_rows,
                        const KernelSpec& spec, int scalar_bytes) {
  std::uint64_t h = data_fp;
  h = fnv1a64(ids.data(), ids.size() * sizeof(std::uint32_t), h);
  h = fnv1a64(landmark_rows.data(), landmark_rows.size() * sizeof(std::uint32_t), h);
  const int kind = static_cast<int>(spec.kind);
  h = fnv1a64(&kind, sizeof kind, h);
  h = fnv1a64(&spec.sigma, sizeof spec.sigma, h);
  h = fnv1a64(&scalar_bytes, sizeof scalar_bytes, h);
  return h;
}

template <class T>
std::shared_ptr<const BlockCache::Entry> obtain_block(
    const DataSet& data, const RunConfig& cfg, BatchContext& ctx,
    const std::vector<std::uint32_t>& landmark_rows, std::uint64_t key,
    WorkerPool& pool, BlockCache* cache) {
  if (cache) {
    if (auto hit = cache->find(key)) return hit;
  }
  const std::size_t n = ctx.ids.size();
  const std::size_t cols = landmark_rows.size();
  if (cfg.check_memory) {
    const std::uint64_t need = static_cast<std::uint64_t>(n) * cols * sizeof(T);
    const std::uint64_t avail = available_memory_bytes();
    if (avail > 0 && need + (512ull << 20) > avail) {
      char msg[256];
      std::snprintf(msg, sizeof msg,
                    "kernel block needs %.2f GiB but only %.2f GiB is available; "
                    "increase the batch count (see `kkm plan`)",
                    static_cast<double>(need) / (1ull << 30),
                    static_cast<double>(avail) / (1ull << 30));
      throw CapacityError(msg);
    }
  }

  BlockCache::Entry entry;
  Samples batch = ctx.batch_view(data.d);
  Samples cols_view = batch;
  if (cols < n) {
    ctx.landmarks.resize(cols * data.d);
    for (std::size_t l = 0; l < cols; ++l)
      std::copy(batch.row(landmark_rows[l]), batch.row(landmark_rows[l]) + data.d,
                ctx.landmarks.data() + l * data.d);
    cols_view = {ctx.landmarks.data(), cols, data.d};
  }
  KernelBlockT<T> block;
  kernel_block_fill(cfg.kernel, batch, cols_view, pool, block);
  entry.block = std::move(block);
  entry.diag = kernel_diag(cfg.kernel, batch);
  if (cache) return cache->insert(key, std::move(entry));
  auto holder = std::make_shared<BlockCache::Entry>(std::move(entry));
  holder->bytes = std::visit([](const auto& b) { return b.bytes(); }, holder->block);
  return holder;
}

template <class T>
RunResult run_impl(const DataSet& data, const RunConfig& cfg, BlockCache* cache) {
  const auto t_start = std::chrono::steady_clock::now();
  data.validate();
  cfg.validate(data.n);

  const BatchPlan plan = cfg.sampling == SamplingStrategy::stride
                             ? stride_partition(data.n, cfg.B)
                             : block_partition(data.n, cfg.B);
  // landmark draws hang off (seed, batch) and not the restart counter:
  // restarts re-randomize the initialization only, so kernel blocks are
  // shared across restarts
  const Landmarks landmarks = sample_landmarks(plan, cfg.s, cfg.C, cfg.seed);
  const std::uint64_t data_fp = dataset_fingerprint(data);

  WorkerPool pool(cfg.P);
  RunResult result;
  if (landmarks.clamped)
    result.warnings.push_back("landmark count clamped to the cluster count");

  double best_cost = kInf;
  const std::uint64_t q = static_cast<std::uint64_t>(cfg.block_scalar_bytes);

  for (int r = 0; r < cfg.restarts; ++r) {
    TrafficRecorder traffic;
    FootprintReport fp;
    GlobalState global(cfg.C);
    RestartTrace rtrace;
    std::vector<std::vector<std::vector<std::int32_t>>> history;
    BatchContext ctx;
    std::thread prefetcher;
    auto join_prefetch = [&] {
      if (prefetcher.joinable()) prefetcher.join();
    };

    for (int i = 0; i < cfg.B; ++i) {
      BatchTrace btrace;
      btrace.batch = i;
      const auto t_fetch = std::chrono::steady_clock::now();

      ctx.ids = plan.assignments[i];
      gather_rows(data, ctx.ids, ctx.samples);
      const auto& lrows = landmarks.per_batch[i];
      const std::uint64_t key =
          block_key(data_fp, ctx.ids, lrows, cfg.kernel, cfg.block_scalar_bytes);
      join_prefetch();
      auto entry = obtain_block<T>(data, cfg, ctx, lrows, key, pool, cache);
      const auto& block = std::get<KernelBlockT<T>>(entry->block);
      const auto& diag = entry->diag;
      btrace.seconds_kernel = seconds_since(t_fetch);

      if (cfg.prefetch && cache && i + 1 < cfg.B) {
        prefetcher = std::thread([&, next = i + 1] {
          try {
            BatchContext nctx;
            nctx.ids = plan.assignments[next];
            gather_rows(data, nctx.ids, nctx.samples);
            const auto& nl = landmarks.per_batch[next];
            const std::uint64_t nkey = block_key(data_fp, nctx.ids, nl, cfg.kernel,
                                                 cfg.block_scalar_bytes);
            WorkerPool lane(1);
            RunConfig quiet = cfg;
            quiet.check_memory = false;
            obtain_block<T>(data, quiet, nctx, nl, nkey, lane, cache);
          } catch (...) {
            // the main path recomputes (and reports) on the next batch
          }
        });
      }

      // footprint of the tracked per-worker structures, in model units
      const std::size_t n_i = ctx.ids.size();
      const std::uint64_t rows_p = (n_i + cfg.P - 1) / cfg.P;
      fp.peak_block = std::max(fp.peak_block, rows_p * lrows.size() * q);
      fp.peak_f = std::max(fp.peak_f, rows_p * cfg.C * q);
      fp.peak_labels = std::max<std::uint64_t>(fp.peak_labels, n_i * q);
      fp.peak_g = std::max<std::uint64_t>(fp.peak_g, 2ull * cfg.C * q);

      const auto t_init = std::chrono::steady_clock::now();
      std::vector<std::int32_t> labels;
      if (i == 0) {
        const auto seeds = kernel_kmeanspp_init(cfg.kernel, ctx.batch_view(data.d),
                                                cfg.C, derive_seed(cfg.seed, "init", r));
        std::vector<std::int64_t> local_medoids(seeds.begin(), seeds.end());
        labels = assign_to_medoids(cfg.kernel, ctx.batch_view(data.d),
                                   ctx.batch_view(data.d), local_medoids, &pool);
      } else {
        labels = assign_to_medoids(cfg.kernel, ctx.batch_view(data.d),
                                   Samples::of(data), global.medoids, &pool);
      }

      ClusterState state;
      const auto t_inner = std::chrono::steady_clock::now();
      InnerLoopTrace itrace =
          inner_gd_loop<T>(block, diag, lrows, labels, cfg.C, cfg.gd, pool, state,
                           &traffic, i, cfg.block_scalar_bytes);
      btrace.seconds_inner = seconds_since(t_inner);
      btrace.iterations = itrace.iterations;
      btrace.truncated = itrace.truncated;
      btrace.costs = std::move(itrace.costs);
      btrace.inner_supersteps = itrace.inner_supersteps;
      if (cfg.gd.collect_history) history.push_back(std::move(itrace.history));
      if (itrace.truncated)
        result.warnings.push_back("batch " + std::to_string(i) + " restart " +
                                  std::to_string(r) + " hit max_iters");

      const auto t_merge = std::chrono::steady_clock::now();
      const auto batch_medoids = extract_medoids(diag, state, ctx.ids, pool, &traffic,
                                                 i, cfg.block_scalar_bytes);
      const auto before = global.medoids;
      const MergeOutcome merged =
          merge_medoids(global, batch_medoids, state.cardinalities, data, ctx.ids,
                        cfg.kernel, pool, &traffic, i, cfg.block_scalar_bytes,
                        cfg.admit_previous_medoid);
      btrace.seconds_merge = seconds_since(t_merge);
      btrace.alpha = merged.alpha;
      btrace.cardinalities = state.cardinalities;
      if (i > 0)
        btrace.medoid_displacement =
            medoid_displacement(cfg.kernel, data, before, global.medoids);
      (void)t_init;
      rtrace.batches.push_back(std::move(btrace));
    }
    join_prefetch();

    for (int j = 0; j < cfg.C; ++j)
      if (global.medoids[j] < 0)
        result.warnings.push_back("cluster " + std::to_string(j) + " restart " +
                                  std::to_string(r) +
                                  " never absorbed a sample; dropped from the model");

    auto final_labels =
        assign_to_medoids(cfg.kernel, Samples::of(data), Samples::of(data),
                          global.medoids, &pool);
    const double cost =
        global_cost(cfg.kernel, data, global.medoids, final_labels, &pool);
    rtrace.final_cost = cost;
    result.restart_costs.push_back(cost);
    result.traces.push_back(std::move(rtrace));

    if (cost < best_cost) {
      best_cost = cost;
      result.chosen_restart = r;
      result.labels = std::move(final_labels);
      result.global = global;
      result.traffic = std::move(traffic);
      result.footprint = fp;
      result.history = std::move(history);
    }
  }

  result.seconds_total = seconds_since(t_start);
  return result;
}

}  // namespace

RunResult run_clustering(const DataSet& data, const RunConfig& cfg,
                         BlockCache* cache) {
  if (cfg.block_scalar_bytes == 4) return run_impl<float>(data, cfg, cache);
  return run_impl<double>(data, cfg, cache);
}

}  // namespace kkm
