#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kkm/baselines.hpp"
#include "kkm/io_formats.hpp"
#include "kkm/lifecycle.hpp"
#include "kkm/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct InputOpts {
  std::string path;
  std::string format = "auto";  // csv | csv-labeled | idx | libsvm
  std::string idx_labels;
  std::size_t libsvm_dim = 0;
};

void add_input_opts(CLI::App* cmd, InputOpts& in) {
  cmd->add_option("--input", in.path, "input dataset")->required();
  cmd->add_option("--format", in.format,
                  "auto|csv|csv-labeled|idx|libsvm (auto: by extension)");
  cmd->add_option("--idx-labels", in.idx_labels, "label file for idx input");
  cmd->add_option("--libsvm-dim", in.libsvm_dim, "dense dimension for libsvm input");
}

kkm::DataSet load_input(const InputOpts& in) {
  std::string format = in.format;
  if (format == "auto") {
    const auto ext = fs::path(in.path).extension().string();
    if (ext == ".csv") format = "csv-labeled";
    else if (ext == ".svm" || ext == ".libsvm") format = "libsvm";
    else format = "idx";
  }
  if (format == "csv") return kkm::load_csv(in.path, false);
  if (format == "csv-labeled") return kkm::load_csv(in.path, true);
  if (format == "libsvm") {
    if (in.libsvm_dim == 0) throw kkm::InputError("libsvm input needs --libsvm-dim");
    return kkm::load_libsvm(in.path, in.libsvm_dim);
  }
  if (format == "idx") return kkm::load_idx(in.path, in.idx_labels);
  throw kkm::InputError("unknown input format '" + format + "'");
}

struct ClusterOpts {
  InputOpts in;
  int clusters = 10;
  int batches = 1;
  double sparsity = 1.0;
  int workers = 1;
  std::string kernel = "rbf";
  std::string sigma = "auto";
  std::string sampling = "stride";
  int restarts = 1;
  std::uint64_t seed = 1;
  int max_iters = 300;
  int scalar_bytes = 8;
  std::uint64_t cache_mb = 0;
  bool prefetch = false;
  bool trace_comm = false;
  std::string out_dir = "kkm-out";
  std::string test_input;
  std::string test_idx_labels;
};

kkm::RunConfig make_config(const ClusterOpts& o, const kkm::DataSet& data) {
  kkm::RunConfig cfg;
  cfg.C = o.clusters;
  cfg.B = o.batches;
  cfg.s = o.sparsity;
  cfg.P = o.workers;
  if (const char* env = std::getenv("KKM_WORKERS"); env && *env)
    cfg.P = std::max(1, std::atoi(env));
  cfg.sampling = o.sampling == "block" ? kkm::SamplingStrategy::block
                                       : kkm::SamplingStrategy::stride;
  cfg.seed = o.seed;
  cfg.restarts = o.restarts;
  cfg.gd.max_iters = o.max_iters;
  cfg.block_scalar_bytes = o.scalar_bytes;
  cfg.cache_capacity = o.cache_mb << 20;
  cfg.prefetch = o.prefetch;
  cfg.kernel.kind = o.kernel == "linear" ? kkm::KernelKind::linear
                                         : kkm::KernelKind::rbf;
  if (cfg.kernel.kind == kkm::KernelKind::rbf) {
    if (o.sigma == "auto") {
      bool single = false;
      const double d_max = kkm::estimate_d_max(data, cfg.kernel, cfg.seed, &single);
      if (single || d_max == 0.0)
        throw kkm::InputError("cannot derive sigma from a degenerate dataset; "
                              "pass --sigma explicitly");
      cfg.kernel.sigma = 4.0 * d_max;
      std::fprintf(stderr, "sigma = 4 * d_max = %.6g\n", cfg.kernel.sigma);
    } else {
      cfg.kernel.sigma = std::stod(o.sigma);
    }
  }
  return cfg;
}

int cmd_cluster(const ClusterOpts& o) {
  const kkm::DataSet data = load_input(o.in);
  const kkm::RunConfig cfg = make_config(o, data);
  std::optional<kkm::BlockCache> cache;
  if (cfg.cache_capacity > 0) cache.emplace(cfg.cache_capacity);

  const kkm::RunResult result =
      kkm::run_clustering(data, cfg, cache ? &*cache : nullptr);

  fs::create_directories(o.out_dir);
  kkm::write_labels_csv(o.out_dir + "/labels.csv", result.labels);
  kkm::write_medoids_csv(o.out_dir + "/medoids.csv", result.global.medoids);
  kkm::write_json(o.out_dir + "/manifest.json", kkm::manifest_json(cfg, data, result));
  json trace = kkm::trace_json(result);
  if (!o.trace_comm) trace.erase("traffic");
  kkm::write_json(o.out_dir + "/trace.json", trace);

  json metrics{{"final_cost", result.restart_costs[result.chosen_restart]},
               {"chosen_restart", result.chosen_restart}};
  if (data.has_labels()) {
    metrics["train_accuracy"] = kkm::clustering_accuracy(data.labels, result.labels);
    metrics["train_nmi"] = kkm::nmi(data.labels, result.labels);
  }
  if (!o.test_input.empty()) {
    InputOpts tin;
    tin.path = o.test_input;
    tin.format = o.in.format;
    tin.idx_labels = o.test_idx_labels;
    tin.libsvm_dim = o.in.libsvm_dim;
    const kkm::DataSet test = load_input(tin);
    kkm::WorkerPool pool(cfg.P);
    const auto test_labels =
        kkm::assign_to_medoids(cfg.kernel, kkm::Samples::of(test),
                               kkm::Samples::of(data), result.global.medoids, &pool);
    kkm::write_labels_csv(o.out_dir + "/labels_test.csv", test_labels);
    if (test.has_labels()) {
      metrics["test_accuracy"] = kkm::clustering_accuracy(test.labels, test_labels);
      metrics["test_nmi"] = kkm::nmi(test.labels, test_labels);
    }
  }
  kkm::write_json(o.out_dir + "/metrics.json", metrics);
  for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("cost %.9g restart %d -> %s\n",
              result.restart_costs[result.chosen_restart], result.chosen_restart,
              o.out_dir.c_str());
  return 0;
}

int cmd_evaluate(const std::string& labels_path, const std::string& truth_path) {
  const auto predicted = kkm::read_labels_csv(labels_path);
  const auto truth = kkm::read_labels_csv(truth_path);
  json report{{"accuracy", kkm::clustering_accuracy(truth, predicted)},
              {"nmi", kkm::nmi(truth, predicted)},
              {"samples", truth.size()}};
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_plan(std::uint64_t n, int c, int p, int q, std::uint64_t memory) {
  kkm::ResourceModel model{q, memory};
  const auto res = kkm::plan_min_batches(n, c, p, model);
  std::printf("B_min (exact scan)   : %d\n", res.b_min);
  std::printf("B_min (closed form)  : %.3f\n", res.closed_form);
  std::printf("footprint at B_min   : %llu bytes\n",
              static_cast<unsigned long long>(res.footprint));
  std::printf("message bound        : %llu bytes/worker/iteration\n",
              static_cast<unsigned long long>(res.message_bound));
  std::printf("\n%8s %16s %16s\n", "B", "footprint", "message bound");
  for (int b = std::max(1, res.b_min / 2); b <= res.b_min * 2 && b <= static_cast<int>(n);
       b = b < 8 ? b + 1 : b * 2) {
    std::printf("%8d %16llu %16llu\n", b,
                static_cast<unsigned long long>(kkm::footprint_bytes(n, c, p, b, q)),
                static_cast<unsigned long long>(kkm::message_size_bound(n, b, p, c, q)));
  }
  return 0;
}

int cmd_elbow(const ClusterOpts& o, int c_lo, int c_hi, int c_step) {
  if (c_lo < 1 || c_hi < c_lo || c_step < 1)
    throw kkm::InputError("bad --c-range; expected a:b[:step] with 1 <= a <= b");
  const kkm::DataSet data = load_input(o.in);
  kkm::RunConfig base = make_config(o, data);
  // one shared cache: the kernel blocks do not depend on C
  kkm::BlockCache cache(base.cache_capacity > 0 ? base.cache_capacity
                                                : (1ull << 30));
  std::map<int, double> costs;
  for (int c = c_lo; c <= c_hi; c += c_step) {
    kkm::RunConfig cfg = base;
    cfg.C = c;
    const auto result = kkm::run_clustering(data, cfg, &cache);
    costs[c] = result.restart_costs[result.chosen_restart];
    std::printf("C=%-4d cost=%.9g\n", c, costs[c]);
  }
  const auto res = kkm::elbow_select(costs);
  if (res.no_knee)
    std::fprintf(stderr, "warning: no knee in the cost curve; reporting smallest C\n");
  std::printf("selected C = %d\n", res.selected_c);
  return 0;
}

int cmd_baseline(const ClusterOpts& o, const std::string& method, int sgd_batch,
                 int sgd_iters) {
  const kkm::DataSet data = load_input(o.in);
  kkm::BaselineConfig cfg;
  cfg.C = o.clusters;
  cfg.seed = o.seed;
  cfg.max_iters = o.max_iters;
  cfg.sgd_batch_size = sgd_batch;
  cfg.sgd_iterations = sgd_iters;
  const kkm::BaselineResult res = method == "sgd" ? kkm::sgd_minibatch_kmeans(data, cfg)
                                                  : kkm::lloyd_kmeans(data, cfg);
  fs::create_directories(o.out_dir);
  kkm::write_labels_csv(o.out_dir + "/labels.csv", res.labels);
  json metrics{{"method", method}, {"cost", res.cost}, {"iterations", res.iterations}};
  if (data.has_labels()) {
    metrics["train_accuracy"] = kkm::clustering_accuracy(data.labels, res.labels);
    metrics["train_nmi"] = kkm::nmi(data.labels, res.labels);
  }
  kkm::write_json(o.out_dir + "/metrics.json", metrics);
  std::printf("cost %.9g -> %s\n", res.cost, o.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"approximate mini-batch kernel k-means"};
  app.require_subcommand(1);

  ClusterOpts cluster_opts;
  auto* cluster = app.add_subcommand("cluster", "run the clustering pipeline");
  add_input_opts(cluster, cluster_opts.in);
  cluster->add_option("--clusters,-C", cluster_opts.clusters, "cluster count");
  cluster->add_option("--batches,-B", cluster_opts.batches, "mini-batch count");
  cluster->add_option("--sparsity,-s", cluster_opts.sparsity, "landmark fraction (0,1]");
  cluster->add_option("--workers,-P", cluster_opts.workers, "worker lanes");
  cluster->add_option("--kernel", cluster_opts.kernel, "rbf|linear");
  cluster->add_option("--sigma", cluster_opts.sigma, "rbf width or 'auto' (4*d_max)");
  cluster->add_option("--sampling", cluster_opts.sampling, "stride|block");
  cluster->add_option("--restarts,-R", cluster_opts.restarts, "restarts, keep min cost");
  cluster->add_option("--seed,-S", cluster_opts.seed, "run seed");
  cluster->add_option("--max-iters", cluster_opts.max_iters, "inner loop cap");
  cluster->add_option("--scalar-bytes", cluster_opts.scalar_bytes,
                      "kernel block storage: 4 or 8");
  cluster->add_option("--cache-mb", cluster_opts.cache_mb, "kernel block cache size");
  cluster->add_flag("--prefetch", cluster_opts.prefetch,
                    "compute the next batch's kernel block during the inner loop");
  cluster->add_flag("--trace-comm", cluster_opts.trace_comm,
                    "include per-iteration collective traffic in trace.json");
  cluster->add_option("--out", cluster_opts.out_dir, "output directory");
  cluster->add_option("--test-input", cluster_opts.test_input,
                      "held-out samples assigned to the final medoids");
  cluster->add_option("--test-idx-labels", cluster_opts.test_idx_labels,
                      "label file for idx test input");

  std::string eval_labels, eval_truth;
  auto* evaluate = app.add_subcommand("evaluate", "score a labeling against truth");
  evaluate->add_option("--labels", eval_labels, "predicted labels csv")->required();
  evaluate->add_option("--truth", eval_truth, "true labels csv")->required();

  std::uint64_t plan_n = 0, plan_mem = 0;
  int plan_c = 10, plan_p = 1, plan_q = 8;
  auto* plan = app.add_subcommand("plan", "memory planner: minimum batch count");
  plan->add_option("--samples,-N", plan_n, "sample count")->required();
  plan->add_option("--clusters,-C", plan_c, "cluster count");
  plan->add_option("--workers,-P", plan_p, "worker count");
  plan->add_option("--scalar-bytes,-Q", plan_q, "bytes per scalar (4|8)");
  plan->add_option("--memory,-R", plan_mem, "memory budget per worker, bytes")
      ->required();

  ClusterOpts elbow_opts;
  std::string c_range = "2:10";
  auto* elbow = app.add_subcommand("elbow", "scan C and select the knee");
  add_input_opts(elbow, elbow_opts.in);
  elbow->add_option("--c-range", c_range, "a:b[:step]");
  elbow->add_option("--batches,-B", elbow_opts.batches, "mini-batch count");
  elbow->add_option("--sparsity,-s", elbow_opts.sparsity, "landmark fraction");
  elbow->add_option("--workers,-P", elbow_opts.workers, "worker lanes");
  elbow->add_option("--kernel", elbow_opts.kernel, "rbf|linear");
  elbow->add_option("--sigma", elbow_opts.sigma, "rbf width or 'auto'");
  elbow->add_option("--sampling", elbow_opts.sampling, "stride|block");
  elbow->add_option("--restarts,-R", elbow_opts.restarts, "restarts per C");
  elbow->add_option("--seed,-S", elbow_opts.seed, "run seed");
  elbow->add_option("--max-iters", elbow_opts.max_iters, "inner loop cap");
  elbow->add_option("--scalar-bytes", elbow_opts.scalar_bytes, "4 or 8");
  elbow->add_option("--cache-mb", elbow_opts.cache_mb, "kernel block cache size");

  ClusterOpts base_opts;
  std::string method = "lloyd";
  int sgd_batch = 1000, sgd_iters = 0;
  auto* baseline = app.add_subcommand("baseline", "lloyd / sgd mini-batch k-means");
  add_input_opts(baseline, base_opts.in);
  baseline->add_option("--method", method, "lloyd|sgd")->required();
  baseline->add_option("--clusters,-C", base_opts.clusters, "cluster count");
  baseline->add_option("--seed,-S", base_opts.seed, "seed");
  baseline->add_option("--max-iters", base_opts.max_iters, "lloyd iteration cap");
  baseline->add_option("--sgd-batch", sgd_batch, "sgd mini-batch size");
  baseline->add_option("--sgd-iters", sgd_iters, "sgd batches (0 = one pass)");
  baseline->add_option("--out", base_opts.out_dir, "output directory");

  std::size_t toy_n = 10000;
  std::uint64_t toy_seed = 1;
  std::string toy_out = "toy2d.csv";
  auto* gen_toy = app.add_subcommand("gen-toy", "generate the 2D four-Gaussian set");
  gen_toy->add_option("--per-cluster-n", toy_n, "samples per cluster");
  gen_toy->add_option("--seed", toy_seed, "seed");
  gen_toy->add_option("--out", toy_out, "output csv (features + label column)");

  InputOpts noisy_in;
  int noisy_copies = 20;
  double noisy_fraction = 0.2;
  std::uint64_t noisy_seed = 1;
  std::string noisy_out = "noisy";
  auto* gen_noisy = app.add_subcommand("gen-noisy", "replicate samples with feature noise");
  add_input_opts(gen_noisy, noisy_in);
  gen_noisy->add_option("--copies", noisy_copies, "replicas per sample");
  gen_noisy->add_option("--noise-fraction", noisy_fraction, "fraction of noised features");
  gen_noisy->add_option("--seed", noisy_seed, "seed");
  gen_noisy->add_option("--out", noisy_out, "output prefix (.idx/.labels.idx)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cluster->parsed()) return cmd_cluster(cluster_opts);
    if (evaluate->parsed()) return cmd_evaluate(eval_labels, eval_truth);
    if (plan->parsed()) return cmd_plan(plan_n, plan_c, plan_p, plan_q, plan_mem);
    if (elbow->parsed()) {
      int lo = 2, hi = 10, step = 1;
      if (std::sscanf(c_range.c_str(), "%d:%d:%d", &lo, &hi, &step) < 2)
        throw kkm::InputError("bad --c-range '" + c_range + "'");
      return cmd_elbow(elbow_opts, lo, hi, step);
    }
    if (baseline->parsed()) return cmd_baseline(base_opts, method, sgd_batch, sgd_iters);
    if (gen_toy->parsed()) {
      const auto data = kkm::generate_toy2d(toy_n, toy_seed);
      kkm::save_csv(data, toy_out, true);
      std::printf("%zu samples -> %s\n", data.n, toy_out.c_str());
      return 0;
    }
    if (gen_noisy->parsed()) {
      const auto base = load_input(noisy_in);
      const auto noisy =
          kkm::generate_noisy_copies(base, noisy_copies, noisy_fraction, noisy_seed);
      kkm::save_idx(noisy, noisy_out + ".idx",
                    noisy.has_labels() ? noisy_out + ".labels.idx" : "");
      std::printf("%zu samples -> %s.idx\n", noisy.n, noisy_out.c_str());
      return 0;
    }
  } catch (const kkm::CapacityError& e) {
    std::fprintf(stderr, "capacity error: %s\n", e.what());
    return 3;
  } catch (const kkm::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const kkm::InternalError& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
