#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kkm/common.hpp"

namespace kkm {

// Dense row-major sample matrix with optional ground-truth class ids.
struct DataSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> values;      // n * d
  std::vector<std::int32_t> labels;  // empty, or size n
  std::string provenance;

  bool has_labels() const { return !labels.empty(); }
  const float* row(std::size_t i) const { return values.data() + i * d; }
  float* row(std::size_t i) { return values.data() + i * d; }
  void validate() const;  // finite values, consistent label length
};

// Content hash covering shape, values and labels.
std::uint64_t dataset_fingerprint(const DataSet& data);

// CSV: one sample per line, comma-separated reals; when has_labels, the last
// column is an integer class id.
DataSet load_csv(const std::string& path, bool has_labels);
void save_csv(const DataSet& data, const std::string& path, bool with_labels);

// LIBSVM sparse lines "label idx:val ...", 1-based indices densified to dim.
DataSet load_libsvm(const std::string& path, std::size_t dim);

// IDX container. Images: u8 (magic 0x00000803, scaled to [0,1]) or float32
// (magic 0x00000D03, taken as-is). Labels: u8 (magic 0x00000801). labels_path
// may be empty for unlabeled data.
DataSet load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const DataSet& data, const std::string& images_path,
              const std::string& labels_path);

// Four isotropic Gaussians (sigma 0.2) at the corners of [0.25,0.75]^2,
// emitted sorted by cluster so block sampling sees one cluster at a time.
DataSet generate_toy2d(std::size_t per_cluster_n, std::uint64_t seed);

// Each base sample replicated `copies` times; every replica gets additive
// uniform noise in [-0.5, 0.5) on floor(noise_fraction * d) distinct
// features, clamped back to [0,1]. Labels inherited.
DataSet generate_noisy_copies(const DataSet& base, int copies,
                              double noise_fraction, std::uint64_t seed);

}  // namespace kkm
