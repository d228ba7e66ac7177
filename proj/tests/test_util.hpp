#pragma once

#include <cstdint>
#include <vector>

#include "kkm/common.hpp"
#include "kkm/dataset.hpp"

namespace kkmtest {

// Gaussian blobs around random centers, grouped by cluster, planted labels.
inline kkm::DataSet planted_mixture(std::size_t n, std::size_t d, int c,
                                    double spread, std::uint64_t seed) {
  kkm::DataSet ds;
  ds.n = n;
  ds.d = d;
  ds.values.resize(n * d);
  ds.labels.resize(n);
  ds.provenance = "planted";
  kkm::Rng rng(kkm::derive_seed(seed, "planted"));
  std::vector<double> centers(static_cast<std::size_t>(c) * d);
  for (auto& v : centers) v = rng.next_unit();
  std::size_t i = 0;
  for (int j = 0; j < c; ++j) {
    const std::size_t take = n / c + (static_cast<std::size_t>(j) < n % c ? 1 : 0);
    for (std::size_t t = 0; t < take; ++t, ++i) {
      ds.labels[i] = j;
      for (std::size_t k = 0; k < d; ++k)
        ds.values[i * d + k] = static_cast<float>(
            centers[static_cast<std::size_t>(j) * d + k] + spread * rng.next_normal());
    }
  }
  return ds;
}

inline kkm::DataSet from_rows(const std::vector<std::vector<float>>& rows) {
  kkm::DataSet ds;
  ds.n = rows.size();
  ds.d = rows.empty() ? 0 : rows[0].size();
  for (const auto& r : rows) ds.values.insert(ds.values.end(), r.begin(), r.end());
  ds.provenance = "inline";
  return ds;
}

}  // namespace kkmtest
