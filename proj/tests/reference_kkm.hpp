#pragma once

// Test-only dense reference: a straight single-threaded translation of the
// label-update equations, kept independent of the engine's chunked path. Used
// as the oracle for iteration-level equivalence checks.

#include <cstdint>
#include <limits>
#include <vector>

#include "kkm/kernels.hpp"

namespace kkmtest {

struct ReferenceTrace {
  std::vector<std::vector<std::int32_t>> history;  // labels after each update
  std::vector<double> costs;  // cost of the labeling entering each iteration
  int iterations = 0;
  bool converged = false;
};

inline ReferenceTrace reference_kernel_kmeans(const kkm::KernelBlock& k,
                                              const std::vector<double>& diag,
                                              std::vector<std::int32_t> labels,
                                              int c, int max_iters) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = k.rows;
  ReferenceTrace res;
  for (int t = 0; t < max_iters; ++t) {
    std::vector<std::int64_t> cnt(c, 0);
    for (const auto u : labels) cnt[u] += 1;

    std::vector<double> gnum(c, 0.0), g(c, inf);
    for (std::size_t m = 0; m < n; ++m) {
      const std::int32_t j = labels[m];
      double s = 0.0;
      for (std::size_t l = 0; l < n; ++l)
        if (labels[l] == j) s += k.at(m, l);
      gnum[j] += s;
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) cost += diag[i];
    for (int j = 0; j < c; ++j) {
      if (cnt[j] > 0) {
        const double cj = static_cast<double>(cnt[j]);
        g[j] = gnum[j] / (cj * cj);
        cost -= gnum[j] / cj;
      }
    }
    res.costs.push_back(cost);

    std::vector<std::int32_t> next(n);
    std::int64_t changes = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = -1;
      double best_score = inf;
      for (int j = 0; j < c; ++j) {
        double f;
        if (cnt[j] > 0) {
          double s = 0.0;
          for (std::size_t l = 0; l < n; ++l)
            if (labels[l] == j) s += k.at(i, l);
          f = s / static_cast<double>(cnt[j]);
        } else {
          f = -inf;
        }
        const double score = g[j] - 2.0 * f;
        if (score < best_score) {
          best_score = score;
          best = j;
        }
      }
      next[i] = best;
      if (next[i] != labels[i]) ++changes;
    }
    labels = next;
    res.history.push_back(labels);
    res.iterations = t + 1;
    if (changes == 0) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace kkmtest
