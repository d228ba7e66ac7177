#include "kkm/collectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace kkm {

WorkerPartition WorkerPartition::balanced(std::size_t n, int p) {
  if (p < 1) throw InputError("worker count must be >= 1");
  WorkerPartition part;
  part.P = p;
  part.ranges.resize(p);
  for (int i = 0; i < p; ++i) {
    const auto begin = static_cast<std::uint32_t>(n * static_cast<std::size_t>(i) / p);
    const auto end = static_cast<std::uint32_t>(n * (static_cast<std::size_t>(i) + 1) / p);
    part.ranges[i] = {begin, end};
  }
  return part;
}

std::size_t WorkerPartition::max_rows() const {
  std::size_t m = 0;
  for (const auto& [b, e] : ranges) m = std::max<std::size_t>(m, e - b);
  return m;
}

WorkerPool::WorkerPool(int p) : p_(p) {
  if (p < 1) throw InputError("worker count must be >= 1");
  lanes_.reserve(p_ - 1);
  for (int i = 1; i < p_; ++i) lanes_.emplace_back(&WorkerPool::lane_main, this, i);
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : lanes_) t.join();
}

void WorkerPool::parallel(const std::function<void(int)>& fn) {
  ++supersteps_;
  if (p_ == 1) {
    fn(0);
    return;
  }
  std::exception_ptr first_error;
  std::function<void(int)> guarded = [&](int id) {
    try {
      fn(id);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!first_error) first_error = std::current_exception();
    }
  };
  {
    std::lock_guard<std::mutex> lock(mu_);
    fn_ = &guarded;
    pending_ = p_ - 1;
    ++generation_;
  }
  cv_work_.notify_all();
  guarded(0);  // lane 0 is the caller
  {
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [&] { return pending_ == 0; });
    fn_ = nullptr;
  }
  if (first_error) std::rethrow_exception(first_error);
}

void WorkerPool::lane_main(int id) {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(int)>* fn = nullptr;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      fn = fn_;
    }
    (*fn)(id);
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }
}

std::uint64_t TrafficRecorder::max_slot_bytes_per_worker() const {
  std::map<std::pair<int, int>, std::uint64_t> per_slot;
  for (const auto& e : events)
    per_slot[{e.batch, e.iteration}] += e.max_bytes_per_worker;
  std::uint64_t worst = 0;
  for (const auto& [slot, bytes] : per_slot) worst = std::max(worst, bytes);
  return worst;
}

std::vector<double> allreduce_sum(std::span<const std::vector<double>> partials) {
  if (partials.empty()) return {};
  const std::size_t len = partials[0].size();
  std::vector<double> out(len, 0.0);
  for (std::size_t s = 0; s < partials.size(); ++s) {
    if (partials[s].size() != len)
      throw InternalError("allreduce_sum partial length mismatch");
    for (std::size_t k = 0; k < len; ++k) out[k] += partials[s][k];
  }
  return out;
}

std::vector<std::int32_t> allgather_labels(
    const WorkerPartition& part,
    std::span<const std::vector<std::int32_t>> slices) {
  if (slices.size() != part.ranges.size())
    throw InternalError("allgather slice count mismatch");
  std::size_t total = 0;
  std::uint32_t cursor = 0;
  for (std::size_t p = 0; p < slices.size(); ++p) {
    const auto [b, e] = part.ranges[p];
    if (b != cursor || slices[p].size() != e - b)
      throw InternalError("allgather ranges must tile [0, n) without gaps");
    cursor = e;
    total += slices[p].size();
  }
  std::vector<std::int32_t> out;
  out.reserve(total);
  for (const auto& s : slices) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::vector<ArgminCandidate> allreduce_argmin(
    std::span<const std::vector<ArgminCandidate>> per_worker) {
  if (per_worker.empty()) return {};
  const std::size_t c = per_worker[0].size();
  std::vector<ArgminCandidate> out(c);
  for (std::size_t p = 0; p < per_worker.size(); ++p) {
    if (per_worker[p].size() != c)
      throw InternalError("allreduce_argmin candidate count mismatch");
    for (std::size_t j = 0; j < c; ++j)
      if (per_worker[p][j].beats(out[j])) out[j] = per_worker[p][j];
  }
  return out;
}

void ResourceModel::validate() const {
  if (Q != 4 && Q != 8) throw InputError("scalar size Q must be 4 or 8");
  if (R == 0) throw InputError("memory budget R must be positive");
}

namespace {
inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return (a + b - 1) / b;
}
}  // namespace

std::uint64_t footprint_bytes(std::uint64_t n, int c, int p, int b, int q) {
  const std::uint64_t rows = ceil_div(n, static_cast<std::uint64_t>(b) * p);
  const std::uint64_t batch = ceil_div(n, static_cast<std::uint64_t>(b));
  const std::uint64_t cc = static_cast<std::uint64_t>(c);
  return static_cast<std::uint64_t>(q) * (rows * (batch + cc) + batch + 2 * cc);
}

std::uint64_t message_size_bound(std::uint64_t n, int b, int p, int c, int q) {
  const std::uint64_t rows = ceil_div(n, static_cast<std::uint64_t>(b) * p);
  return static_cast<std::uint64_t>(q) * (rows + 2 * static_cast<std::uint64_t>(c));
}

double plan_closed_form(std::uint64_t n, int c, int p,
                        const ResourceModel& model) {
  const double cp = static_cast<double>(c) / p;
  const double disc = (cp + 1.0) * (cp + 1.0) - 8.0 * cp +
                      static_cast<double>(model.R) / model.Q;
  if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double denom = -(cp + 1.0) + std::sqrt(disc);
  if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (2.0 * static_cast<double>(n) / p) / denom;
}

PlanResult plan_min_batches(std::uint64_t n, int c, int p,
                            const ResourceModel& model) {
  model.validate();
  if (n == 0 || c < 1 || p < 1) throw InputError("plan inputs must be positive");
  std::uint64_t best_seen = std::numeric_limits<std::uint64_t>::max();
  for (std::uint64_t b = 1; b <= n; ++b) {
    const std::uint64_t fp = footprint_bytes(n, c, p, static_cast<int>(b), model.Q);
    best_seen = std::min(best_seen, fp);
    if (fp <= model.R) {
      PlanResult res;
      res.b_min = static_cast<int>(b);
      res.footprint = fp;
      res.closed_form = plan_closed_form(n, c, p, model);
      res.message_bound = message_size_bound(n, static_cast<int>(b), p, c, model.Q);
      return res;
    }
  }
  throw CapacityError("no batch count fits the budget of " +
                      std::to_string(model.R) + " bytes; minimum achievable "
                      "footprint is " + std::to_string(best_seen) + " bytes");
}

}  // namespace kkm
