#include "kkm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kkm {

namespace {

double sq_dist_f(const float* x, const double* c, std::size_t d) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = static_cast<double>(x[k]) - c[k];
    acc += t * t;
  }
  return acc;
}

int nearest_center(const float* x, const std::vector<double>& centers, int c,
                   std::size_t d, double* dist_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < c; ++j) {
    const double dd = sq_dist_f(x, centers.data() + static_cast<std::size_t>(j) * d, d);
    if (dd < best_d) {
      best_d = dd;
      best = j;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

// Euclidean k-means++ seeding with the same deterministic draw scheme as the
// kernelized variant.
std::vector<std::size_t> kmeanspp_seeds(const DataSet& data, int c, Rng& rng) {
  std::vector<std::size_t> chosen;
  std::vector<char> is_chosen(data.n, 0);
  std::vector<double> min_d2(data.n, std::numeric_limits<double>::infinity());
  auto admit = [&](std::size_t m) {
    chosen.push_back(m);
    is_chosen[m] = 1;
    const float* xm = data.row(m);
    for (std::size_t i = 0; i < data.n; ++i) {
      double acc = 0.0;
      const float* xi = data.row(i);
      for (std::size_t k = 0; k < data.d; ++k) {
        const double t = static_cast<double>(xi[k]) - static_cast<double>(xm[k]);
        acc += t * t;
      }
      min_d2[i] = std::min(min_d2[i], acc);
    }
  };
  admit(rng.next_below(data.n));
  while (chosen.size() < static_cast<std::size_t>(c)) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.n; ++i)
      if (!is_chosen[i]) total += min_d2[i];
    bool found = false;
    if (total > 0.0) {
      const double target = rng.next_unit() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < data.n && !found; ++i) {
        if (is_chosen[i] || min_d2[i] <= 0.0) continue;
        acc += min_d2[i];
        if (acc > target) {
          admit(i);
          found = true;
        }
      }
      if (!found)
        for (std::size_t i = data.n; i-- > 0 && !found;)
          if (!is_chosen[i] && min_d2[i] > 0.0) {
            admit(i);
            found = true;
          }
    }
    if (!found) {
      std::uint64_t remaining = 0;
      for (std::size_t i = 0; i < data.n; ++i) remaining += !is_chosen[i];
      std::uint64_t skip = rng.next_below(remaining);
      for (std::size_t i = 0; i < data.n; ++i) {
        if (is_chosen[i]) continue;
        if (skip-- == 0) {
          admit(i);
          break;
        }
      }
    }
  }
  return chosen;
}

void check(const DataSet& data, const BaselineConfig& cfg) {
  data.validate();
  if (cfg.C < 1) throw InputError("cluster count must be >= 1");
  if (data.n < static_cast<std::size_t>(cfg.C))
    throw InputError("dataset smaller than the cluster count");
  if (cfg.max_iters < 1) throw InputError("max_iters must be >= 1");
}

}  // namespace

BaselineResult lloyd_kmeans(const DataSet& data, const BaselineConfig& cfg) {
  check(data, cfg);
  Rng rng(derive_seed(cfg.seed, "baseline-lloyd"));
  const auto seeds = kmeanspp_seeds(data, cfg.C, rng);

  BaselineResult res;
  res.centers.resize(static_cast<std::size_t>(cfg.C) * data.d);
  for (int j = 0; j < cfg.C; ++j)
    for (std::size_t k = 0; k < data.d; ++k)
      res.centers[static_cast<std::size_t>(j) * data.d + k] = data.row(seeds[j])[k];
  res.labels.assign(data.n, -1);

  std::vector<double> sums(res.centers.size());
  std::vector<std::int64_t> sizes(cfg.C);
  for (int t = 0; t < cfg.max_iters; ++t) {
    std::int64_t changes = 0;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    double sse = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      double dd = 0.0;
      const int j = nearest_center(data.row(i), res.centers, cfg.C, data.d, &dd);
      sse += dd;
      if (res.labels[i] != j) ++changes;
      res.labels[i] = j;
      sizes[j] += 1;
      const float* x = data.row(i);
      double* s = sums.data() + static_cast<std::size_t>(j) * data.d;
      for (std::size_t k = 0; k < data.d; ++k) s[k] += x[k];
    }
    res.cost_trace.push_back(sse);
    res.iterations = t + 1;
    if (changes == 0 && t > 0) break;
    for (int j = 0; j < cfg.C; ++j) {
      if (sizes[j] == 0) continue;  // empty cluster keeps its center
      double* ctr = res.centers.data() + static_cast<std::size_t>(j) * data.d;
      const double* s = sums.data() + static_cast<std::size_t>(j) * data.d;
      for (std::size_t k = 0; k < data.d; ++k)
        ctr[k] = s[k] / static_cast<double>(sizes[j]);
    }
    if (changes == 0) break;
  }

  res.cost = 0.0;
  for (std::size_t i = 0; i < data.n; ++i)
    res.cost += sq_dist_f(data.row(i),
                          res.centers.data() +
                              static_cast<std::size_t>(res.labels[i]) * data.d,
                          data.d);
  return res;
}

BaselineResult sgd_minibatch_kmeans(const DataSet& data, const BaselineConfig& cfg) {
  check(data, cfg);
  if (cfg.sgd_batch_size < 1) throw InputError("sgd batch size must be >= 1");
  Rng rng(derive_seed(cfg.seed, "baseline-sgd"));
  const auto seeds = kmeanspp_seeds(data, cfg.C, rng);

  BaselineResult res;
  res.centers.resize(static_cast<std::size_t>(cfg.C) * data.d);
  for (int j = 0; j < cfg.C; ++j)
    for (std::size_t k = 0; k < data.d; ++k)
      res.centers[static_cast<std::size_t>(j) * data.d + k] = data.row(seeds[j])[k];
  res.center_counts.assign(cfg.C, 0);

  const int iters = cfg.sgd_iterations > 0
                        ? cfg.sgd_iterations
                        : std::max<int>(1, static_cast<int>(data.n /
                                                            static_cast<std::size_t>(
                                                                cfg.sgd_batch_size)));
  std::vector<std::size_t> batch(cfg.sgd_batch_size);
  std::vector<int> assignment(cfg.sgd_batch_size);
  for (int t = 0; t < iters; ++t) {
    for (auto& b : batch) b = rng.next_below(data.n);
    // assign against frozen centers, then per-sample center pulls
    for (int b = 0; b < cfg.sgd_batch_size; ++b)
      assignment[b] = nearest_center(data.row(batch[b]), res.centers, cfg.C, data.d);
    for (int b = 0; b < cfg.sgd_batch_size; ++b) {
      const int j = assignment[b];
      res.center_counts[j] += 1;
      const double eta = 1.0 / static_cast<double>(res.center_counts[j]);
      double* ctr = res.centers.data() + static_cast<std::size_t>(j) * data.d;
      const float* x = data.row(batch[b]);
      for (std::size_t k = 0; k < data.d; ++k)
        ctr[k] = (1.0 - eta) * ctr[k] + eta * static_cast<double>(x[k]);
    }
    res.iterations = t + 1;
  }

  res.labels.resize(data.n);
  res.cost = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    double dd = 0.0;
    res.labels[i] = nearest_center(data.row(i), res.centers, cfg.C, data.d, &dd);
    res.cost += dd;
  }
  return res;
}

}  // namespace kkm
