#pragma once

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <variant>
#include <vector>

#include "kkm/common.hpp"
#include "kkm/dataset.hpp"

namespace kkm {

class WorkerPool;

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double sigma = 1.0;              // RBF width, data units
  int d_max_sample_size = 2048;    // points sampled when estimating d_max

  void validate() const;
};

// Contiguous view over rows of a sample matrix.
struct Samples {
  const float* data = nullptr;
  std::size_t n = 0;
  std::size_t d = 0;

  const float* row(std::size_t i) const { return data + i * d; }
  static Samples of(const DataSet& ds) { return {ds.values.data(), ds.n, ds.d}; }
};

double eval_kernel(const KernelSpec& spec, const float* x, std::size_t dx,
                   const float* y, std::size_t dy);

// Rectangular slab of kernel values, row-major so a worker's row slab is
// contiguous. T is float (Q=4) or double (Q=8).
template <class T>
struct KernelBlockT {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  T* row(std::size_t r) { return values.data() + r * cols; }
  const T* row(std::size_t r) const { return values.data() + r * cols; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t bytes() const { return values.size() * sizeof(T); }
};

using KernelBlock = KernelBlockT<double>;

template <class T>
KernelBlockT<T> kernel_block(const KernelSpec& spec, Samples a, Samples b);

// Same values as kernel_block, rows split across pool lanes.
template <class T>
void kernel_block_fill(const KernelSpec& spec, Samples a, Samples b,
                       WorkerPool& pool, KernelBlockT<T>& out);

// K(x_i, x_i) for every row.
std::vector<double> kernel_diag(const KernelSpec& spec, Samples a);

// Maximum pairwise Euclidean distance over a uniform subsample of
// spec.d_max_sample_size points (exact when n is at most that). Sets
// *single_sample_warning when n == 1 (result 0).
double estimate_d_max(const DataSet& data, const KernelSpec& spec,
                      std::uint64_t seed, bool* single_sample_warning = nullptr);

// Validated-inputs fast path used by the hot loops; same arithmetic as
// eval_kernel, so values match bitwise.
double eval_kernel_unchecked(const KernelSpec& spec, const float* x,
                             const float* y, std::size_t d);

// LRU cache of per-batch kernel blocks plus diagonals, keyed by batch
// content. Blocks only depend on the batch rows, landmark columns and kernel
// parameters, so restarts and repeated runs over the same plan reuse them.
// Entries are shared_ptr-pinned: eviction never invalidates a held block.
class BlockCache {
 public:
  explicit BlockCache(std::size_t capacity_bytes) : capacity_(capacity_bytes) {}

  struct Entry {
    std::variant<KernelBlockT<float>, KernelBlockT<double>> block;
    std::vector<double> diag;
    std::size_t bytes = 0;
  };

  std::shared_ptr<const Entry> find(std::uint64_t key);
  std::shared_ptr<const Entry> insert(std::uint64_t key, Entry entry);
  std::size_t size_bytes() const { return used_; }

 private:
  void evict_to_fit(std::size_t incoming);

  mutable std::mutex mu_;
  std::size_t capacity_ = 0;
  std::size_t used_ = 0;
  std::list<std::pair<std::uint64_t, std::shared_ptr<const Entry>>> lru_;
  std::unordered_map<
      std::uint64_t,
      std::list<std::pair<std::uint64_t, std::shared_ptr<const Entry>>>::iterator>
      index_;
};

}  // namespace kkm
