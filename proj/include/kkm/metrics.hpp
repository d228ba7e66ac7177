#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "kkm/collectives.hpp"
#include "kkm/dataset.hpp"
#include "kkm/kernels.hpp"

namespace kkm {

// Majority-vote accuracy: each cluster maps to the most frequent true class
// among its members (ties to the smallest class id); several clusters may map
// to the same class.
double clustering_accuracy(const std::vector<std::int32_t>& truth,
                           const std::vector<std::int32_t>& predicted);

// Mutual information normalized by the geometric mean of the two entropies;
// 1 for identical partitions, 0 for independent ones.
double nmi(const std::vector<std::int32_t>& truth,
           const std::vector<std::int32_t>& predicted);

// Cost of a labeling against medoid prototypes:
// sum_i K(x_i,x_i) - 2 K(x_i, m_{u_i}) + K(m_{u_i}, m_{u_i}).
// Every label must reference a present medoid.
double global_cost(const KernelSpec& spec, const DataSet& data,
                   const std::vector<std::int64_t>& medoids,
                   const std::vector<std::int32_t>& labels,
                   WorkerPool* pool = nullptr);

// Kernel-space distance between consecutive medoid sets, per cluster:
// sqrt(K(m,m) + K(m',m') - 2 K(m,m')), NaN where either side is absent.
std::vector<double> medoid_displacement(const KernelSpec& spec,
                                        const DataSet& data,
                                        const std::vector<std::int64_t>& before,
                                        const std::vector<std::int64_t>& after);

struct ElbowResult {
  int selected_c = 0;
  bool no_knee = false;  // cost curve had no positive curvature
};

// Knee of the cost-vs-C curve: the C maximizing the discrete second
// difference, ties to the smallest C. Requires at least 3 entries.
ElbowResult elbow_select(const std::map<int, double>& costs);

}  // namespace kkm
