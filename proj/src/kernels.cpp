#include "kkm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kkm/collectives.hpp"

namespace kkm {

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && !(sigma > 0.0))
    throw InputError("rbf kernel requires sigma > 0");
  if (d_max_sample_size < 1)
    throw InputError("d_max_sample_size must be positive");
}

namespace {

// Shared arithmetic core: every kernel value in the project, whether from
// eval_kernel or a block fill, goes through these two functions so entries
// match bitwise.
inline double sq_dist(const float* x, const float* y, std::size_t d) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = static_cast<double>(x[k]) - static_cast<double>(y[k]);
    acc += t * t;
  }
  return acc;
}

inline double dot(const float* x, const float* y, std::size_t d) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k)
    acc += static_cast<double>(x[k]) * static_cast<double>(y[k]);
  return acc;
}

inline double eval_core(const KernelSpec& spec, const float* x, const float* y,
                        std::size_t d) {
  if (spec.kind == KernelKind::linear) return dot(x, y, d);
  return std::exp(-sq_dist(x, y, d) / (2.0 * spec.sigma * spec.sigma));
}

}  // namespace

double eval_kernel(const KernelSpec& spec, const float* x, std::size_t dx,
                   const float* y, std::size_t dy) {
  spec.validate();
  if (dx != dy)
    throw InputError("kernel arguments have dimensions " + std::to_string(dx) +
                     " and " + std::to_string(dy));
  if (dx == 0) throw InputError("kernel arguments must have dimension >= 1");
  for (std::size_t k = 0; k < dx; ++k)
    if (!std::isfinite(x[k]) || !std::isfinite(y[k]))
      throw InputError("non-finite kernel argument component");
  return eval_core(spec, x, y, dx);
}

template <class T>
void kernel_block_fill(const KernelSpec& spec, Samples a, Samples b,
                       WorkerPool& pool, KernelBlockT<T>& out) {
  spec.validate();
  if (a.n == 0 || b.n == 0) throw InputError("kernel block over empty sample set");
  if (a.d != b.d) throw InputError("kernel block sample dimension mismatch");
  out.rows = a.n;
  out.cols = b.n;
  out.values.resize(a.n * b.n);

  const auto part = WorkerPartition::balanced(a.n, pool.size());
  pool.parallel([&](int p) {
    const auto [begin, end] = part.ranges[p];
    // column tiling keeps the b rows hot while streaming a's rows
    constexpr std::size_t kColTile = 64;
    for (std::size_t c0 = 0; c0 < b.n; c0 += kColTile) {
      const std::size_t c1 = std::min(b.n, c0 + kColTile);
      for (std::uint32_t r = begin; r < end; ++r) {
        const float* xr = a.row(r);
        T* dst = out.row(r);
        for (std::size_t c = c0; c < c1; ++c)
          dst[c] = static_cast<T>(eval_core(spec, xr, b.row(c), a.d));
      }
    }
  });
}

template <class T>
KernelBlockT<T> kernel_block(const KernelSpec& spec, Samples a, Samples b) {
  WorkerPool pool(1);
  KernelBlockT<T> out;
  kernel_block_fill(spec, a, b, pool, out);
  return out;
}

template KernelBlockT<float> kernel_block<float>(const KernelSpec&, Samples, Samples);
template KernelBlockT<double> kernel_block<double>(const KernelSpec&, Samples, Samples);
template void kernel_block_fill<float>(const KernelSpec&, Samples, Samples,
                                       WorkerPool&, KernelBlockT<float>&);
template void kernel_block_fill<double>(const KernelSpec&, Samples, Samples,
                                        WorkerPool&, KernelBlockT<double>&);

std::vector<double> kernel_diag(const KernelSpec& spec, Samples a) {
  spec.validate();
  std::vector<double> diag(a.n);
  for (std::size_t i = 0; i < a.n; ++i)
    diag[i] = eval_core(spec, a.row(i), a.row(i), a.d);
  return diag;
}

double estimate_d_max(const DataSet& data, const KernelSpec& spec,
                      std::uint64_t seed, bool* single_sample_warning) {
  data.validate();
  if (single_sample_warning) *single_sample_warning = false;
  if (data.n == 1) {
    if (single_sample_warning) *single_sample_warning = true;
    return 0.0;
  }
  const std::size_t m =
      std::min<std::size_t>(data.n, static_cast<std::size_t>(spec.d_max_sample_size));
  std::vector<std::uint32_t> idx(data.n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (m < data.n) {
    Rng rng(derive_seed(seed, "dmax"));
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_below(data.n - i));
      std::swap(idx[i], idx[j]);
    }
  }
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const float* xi = data.row(idx[i]);
    for (std::size_t j = i + 1; j < m; ++j) {
      const double sq = sq_dist(xi, data.row(idx[j]), data.d);
      if (sq > best) best = sq;
    }
  }
  return std::sqrt(best);
}

double eval_kernel_unchecked(const KernelSpec& spec, const float* x,
                             const float* y, std::size_t d) {
  return eval_core(spec, x, y, d);
}

std::shared_ptr<const BlockCache::Entry> BlockCache::find(std::uint64_t key) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = index_.find(key);
  if (it == index_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->second;
}

void BlockCache::evict_to_fit(std::size_t incoming) {
  while (!lru_.empty() && used_ + incoming > capacity_) {
    auto& back = lru_.back();
    used_ -= back.second->bytes;
    index_.erase(back.first);
    lru_.pop_back();
  }
}

std::shared_ptr<const BlockCache::Entry> BlockCache::insert(std::uint64_t key,
                                                            Entry entry) {
  entry.bytes = std::visit([](const auto& b) { return b.bytes(); }, entry.block) +
                entry.diag.size() * sizeof(double);
  auto holder = std::make_shared<const Entry>(std::move(entry));
  std::lock_guard<std::mutex> lock(mu_);
  if (holder->bytes > capacity_) return holder;  // caller keeps it, uncached
  if (auto it = index_.find(key); it != index_.end()) return it->second->second;
  evict_to_fit(holder->bytes);
  used_ += holder->bytes;
  lru_.emplace_front(key, holder);
  index_[key] = lru_.begin();
  return holder;
}

}  // namespace kkm
