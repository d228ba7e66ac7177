#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kkm/common.hpp"

namespace kkm {

// Contiguous per-worker row ranges; sizes differ by at most one.
struct WorkerPartition {
  int P = 1;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;  // [begin, end)

  static WorkerPartition balanced(std::size_t n, int p);
  std::size_t max_rows() const;
};

// P persistent execution lanes over shared state. One parallel() call is a
// superstep: every lane runs fn(lane_id) and the caller resumes after all
// lanes finished, so each call is one synchronization barrier.
class WorkerPool {
 public:
  explicit WorkerPool(int p);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return p_; }
  void parallel(const std::function<void(int)>& fn);
  std::uint64_t supersteps() const { return supersteps_; }

 private:
  void lane_main(int id);

  int p_;
  std::uint64_t supersteps_ = 0;
  std::vector<std::thread> lanes_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(int)>* fn_ = nullptr;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

enum class CollectiveOp { allgather_labels, allreduce_sum, allreduce_min };

// Byte accounting for the modeled network traffic. Every transmitted element
// counts Q bytes (kernel scalar size), matching the footprint model where
// labels, g entries and medoid candidates are all Q-byte variables.
struct TrafficEvent {
  int batch = 0;
  int iteration = 0;  // inner iteration index, or -1 for the medoid phase
  CollectiveOp op{};
  std::uint64_t max_bytes_per_worker = 0;
  std::uint64_t total_bytes = 0;
};

struct TrafficRecorder {
  std::vector<TrafficEvent> events;
  void add(int batch, int iteration, CollectiveOp op,
           std::uint64_t max_bytes_per_worker, std::uint64_t total_bytes) {
    events.push_back({batch, iteration, op, max_bytes_per_worker, total_bytes});
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& e : events) t += e.total_bytes;
    return t;
  }
  // Worst per-worker byte count aggregated over the ops of one (batch, slot).
  std::uint64_t max_slot_bytes_per_worker() const;
};

// Element-wise sum of indexed partial vectors, folded in ascending slot
// order. The slot grid is fixed by the caller (chunk ids in the engine), so
// the result does not depend on which lane produced which partial.
std::vector<double> allreduce_sum(
    std::span<const std::vector<double>> partials);

// Concatenation of per-worker label slices by ascending range; validates
// that ranges tile [0, n) exactly.
std::vector<std::int32_t> allgather_labels(
    const WorkerPartition& part,
    std::span<const std::vector<std::int32_t>> slices);

// One candidate per cluster per worker; value then index decides, absent
// candidates (index < 0) lose to any present one.
struct ArgminCandidate {
  double value = 0.0;
  std::int64_t index = -1;  // global sample index, -1 = absent

  bool present() const { return index >= 0; }
  bool beats(const ArgminCandidate& other) const {
    if (!present()) return false;
    if (!other.present()) return true;
    if (value != other.value) return value < other.value;
    return index < other.index;
  }
};

std::vector<ArgminCandidate> allreduce_argmin(
    std::span<const std::vector<ArgminCandidate>> per_worker);

struct ResourceModel {
  int Q = 8;             // bytes per scalar, 4 or 8
  std::uint64_t R = 0;   // memory budget per worker, bytes

  void validate() const;
};

// Per-worker bytes for one mini-batch at the given split:
// Q * (ceil(N/(BP)) * (ceil(N/B) + C) + ceil(N/B) + 2C).
std::uint64_t footprint_bytes(std::uint64_t n, int c, int p, int b, int q);

// Worst-case per-worker traffic for one inner iteration:
// Q * (ceil(N/(BP)) + 2C).
std::uint64_t message_size_bound(std::uint64_t n, int b, int p, int c, int q);

struct PlanResult {
  int b_min = 0;                  // smallest B fitting the budget (exact scan)
  std::uint64_t footprint = 0;    // footprint at b_min
  double closed_form = 0.0;       // the algebraic estimate, NaN if undefined
  std::uint64_t message_bound = 0;
};

// Smallest B in [1, N] with footprint_bytes(B) <= R, by exact scan (the
// closed form ignores the integer ceilings and is reported for reference).
// Throws CapacityError when even B = N does not fit, reporting the minimal
// achievable footprint.
PlanResult plan_min_batches(std::uint64_t n, int c, int p,
                            const ResourceModel& model);

double plan_closed_form(std::uint64_t n, int c, int p,
                        const ResourceModel& model);

}  // namespace kkm
