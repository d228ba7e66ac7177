#include "kkm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace kkm {

namespace {

void check_pair(const std::vector<std::int32_t>& truth,
                const std::vector<std::int32_t>& predicted) {
  if (truth.empty() || predicted.empty())
    throw InputError("label vectors must be non-empty");
  if (truth.size() != predicted.size())
    throw InputError("label vectors differ in length");
}

// contingency counts o[cluster][class] with marginals
struct Contingency {
  std::unordered_map<std::int32_t, std::unordered_map<std::int32_t, std::int64_t>> o;
  std::unordered_map<std::int32_t, std::int64_t> cluster_size;
  std::unordered_map<std::int32_t, std::int64_t> class_size;
  std::int64_t n = 0;
};

Contingency tabulate(const std::vector<std::int32_t>& truth,
                     const std::vector<std::int32_t>& predicted) {
  Contingency t;
  t.n = static_cast<std::int64_t>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    t.o[predicted[i]][truth[i]] += 1;
    t.cluster_size[predicted[i]] += 1;
    t.class_size[truth[i]] += 1;
  }
  return t;
}

}  // namespace

double clustering_accuracy(const std::vector<std::int32_t>& truth,
                           const std::vector<std::int32_t>& predicted) {
  check_pair(truth, predicted);
  const Contingency t = tabulate(truth, predicted);
  std::unordered_map<std::int32_t, std::int32_t> mapping;
  for (const auto& [cluster, classes] : t.o) {
    std::int64_t best_count = -1;
    std::int32_t best_class = 0;
    for (const auto& [cls, count] : classes) {
      if (count > best_count || (count == best_count && cls < best_class)) {
        best_count = count;
        best_class = cls;
      }
    }
    mapping[cluster] = best_class;
  }
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (mapping[predicted[i]] == truth[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(t.n);
}

double nmi(const std::vector<std::int32_t>& truth,
           const std::vector<std::int32_t>& predicted) {
  check_pair(truth, predicted);
  const Contingency t = tabulate(truth, predicted);
  const double n = static_cast<double>(t.n);

  double h_u = 0.0, h_y = 0.0;
  for (const auto& [c, sz] : t.cluster_size) {
    const double p = static_cast<double>(sz) / n;
    h_u -= p * std::log(p);
  }
  for (const auto& [c, sz] : t.class_size) {
    const double p = static_cast<double>(sz) / n;
    h_y -= p * std::log(p);
  }

  if (h_u <= 0.0 || h_y <= 0.0) {
    // zero-entropy degenerate: identical single-group partitions score 1
    const bool identical = t.cluster_size.size() == 1 && t.class_size.size() == 1;
    return identical ? 1.0 : 0.0;
  }

  double mi = 0.0;
  for (const auto& [cluster, classes] : t.o) {
    const double nc = static_cast<double>(t.cluster_size.at(cluster));
    for (const auto& [cls, count] : classes) {
      const double o = static_cast<double>(count);
      if (o <= 0.0) continue;
      mi += (o / n) * std::log(n * o / (nc * static_cast<double>(t.class_size.at(cls))));
    }
  }
  const double value = mi / std::sqrt(h_u * h_y);
  return std::clamp(value, 0.0, 1.0);
}

double global_cost(const KernelSpec& spec, const DataSet& data,
                   const std::vector<std::int64_t>& medoids,
                   const std::vector<std::int32_t>& labels,
                   WorkerPool* pool) {
  if (labels.size() != data.n) throw InputError("label count mismatch");
  const int c = static_cast<int>(medoids.size());
  std::vector<double> medoid_self(medoids.size());
  for (std::size_t j = 0; j < medoids.size(); ++j)
    medoid_self[j] = medoids[j] >= 0
                         ? eval_kernel_unchecked(
                               spec, data.row(static_cast<std::size_t>(medoids[j])),
                               data.row(static_cast<std::size_t>(medoids[j])), data.d)
                         : 0.0;

  std::vector<double> per_row(data.n);
  auto body = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::int32_t u = labels[i];
      if (u < 0 || u >= c || medoids[u] < 0)
        throw InternalError("label references an absent medoid");
      const float* x = data.row(i);
      const float* m = data.row(static_cast<std::size_t>(medoids[u]));
      const double k_xx = eval_kernel_unchecked(spec, x, x, data.d);
      const double k_xm = eval_kernel_unchecked(spec, x, m, data.d);
      per_row[i] = k_xx - 2.0 * k_xm + medoid_self[u];
    }
  };
  if (pool && pool->size() > 1) {
    const auto part = WorkerPartition::balanced(data.n, pool->size());
    pool->parallel([&](int p) { body(part.ranges[p].first, part.ranges[p].second); });
  } else {
    body(0, data.n);
  }
  // serial ascending fold keeps the total independent of the worker count
  double total = 0.0;
  for (const auto v : per_row) total += v;
  return total;
}

std::vector<double> medoid_displacement(const KernelSpec& spec,
                                        const DataSet& data,
                                        const std::vector<std::int64_t>& before,
                                        const std::vector<std::int64_t>& after) {
  if (before.size() != after.size())
    throw InputError("medoid sets must have equal cluster counts");
  std::vector<double> out(before.size());
  for (std::size_t j = 0; j < before.size(); ++j) {
    if (before[j] < 0 || after[j] < 0) {
      out[j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (before[j] == after[j]) {
      out[j] = 0.0;
      continue;
    }
    const float* m = data.row(static_cast<std::size_t>(before[j]));
    const float* m2 = data.row(static_cast<std::size_t>(after[j]));
    const double k_mm = eval_kernel_unchecked(spec, m, m, data.d);
    const double k_m2m2 = eval_kernel_unchecked(spec, m2, m2, data.d);
    const double k_mm2 = eval_kernel_unchecked(spec, m, m2, data.d);
    out[j] = std::sqrt(std::max(0.0, k_mm + k_m2m2 - 2.0 * k_mm2));
  }
  return out;
}

ElbowResult elbow_select(const std::map<int, double>& costs) {
  if (costs.size() < 3) throw InputError("elbow selection needs >= 3 cost points");
  double scale = 0.0;
  for (const auto& [c, cost] : costs) {
    if (!(cost > 0.0)) throw InputError("elbow costs must be positive");
    scale = std::max(scale, cost);
  }

  std::vector<std::pair<int, double>> pts(costs.begin(), costs.end());
  ElbowResult res;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < pts.size(); ++k) {
    const double second_diff = pts[k - 1].second + pts[k + 1].second - 2.0 * pts[k].second;
    if (second_diff > best) {
      best = second_diff;
      res.selected_c = pts[k].first;
    }
  }
  if (best <= 1e-12 * scale) {
    res.no_knee = true;
    res.selected_c = pts.front().first;
  }
  return res;
}

}  // namespace kkm
