#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace jiffy {

struct AutoscalerConfig {
  std::size_t min_size = 25;
  std::size_t max_size = 300;
  double split_factor = 1.5;
  double merge_factor = 0.5;
  // Reads are folded into the statistics once every this many per thread.
  std::uint32_t read_sample = 100;
};

// Exponential moving averages of read and update activity on a revision.
// Relaxed atomics: the numbers are heuristics and may be stale.
struct RevisionStats {
  std::atomic<double> p_reads{0.0};
  std::atomic<double> p_updates{0.0};

  RevisionStats() = default;
  RevisionStats(double r, double u) : p_reads(r), p_updates(u) {}

  double reads() const noexcept { return p_reads.load(std::memory_order_relaxed); }
  double updates() const noexcept {
    return p_updates.load(std::memory_order_relaxed);
  }

  void record_read(double t) noexcept {
    double r = reads(), u = updates();
    p_reads.store(t + (1 - t) * r, std::memory_order_relaxed);
    p_updates.store((1 - t) * u, std::memory_order_relaxed);
  }
};

// Values a new revision starts with, given its predecessor's stats and
// the weight t of the update that creates it.
inline void stats_after_update(double prev_reads, double prev_updates, double t,
                               double& reads, double& updates) {
  updates = t + (1 - t) * prev_updates;
  reads = (1 - t) * prev_reads;
}

// A batch spreads its weight evenly over the revisions it creates.
inline double batch_weight(double t, std::size_t revisions) {
  return t / double(std::max<std::size_t>(1, revisions));
}

inline double read_ratio(double reads, double updates) {
  double sum = reads + updates;
  return sum > 0 ? reads / sum : 0.0;
}

inline std::size_t target_size(const AutoscalerConfig& c, double reads,
                               double updates) {
  double r = read_ratio(reads, updates);
  double span = double(c.max_size) - double(c.min_size);
  return c.min_size + std::size_t(std::lround(span * r));
}

inline std::size_t split_threshold(const AutoscalerConfig& c, std::size_t target) {
  return std::size_t(std::ceil(c.split_factor * double(target)));
}

inline std::size_t merge_threshold(const AutoscalerConfig& c, std::size_t target) {
  return std::size_t(std::floor(c.merge_factor * double(target)));
}

enum class Resize { None, Split, Merge };

// Only a growing update may split and only a shrinking one may merge.
// The base node has no predecessor to merge into.
inline Resize decide_resize(const AutoscalerConfig& c, double reads,
                            double updates, std::size_t size_after,
                            bool is_base, bool grows, bool shrinks) {
  std::size_t target = target_size(c, reads, updates);
  if (grows && size_after >= 2 && size_after > split_threshold(c, target))
    return Resize::Split;
  if (shrinks && !is_base && size_after < merge_threshold(c, target))
    return Resize::Merge;
  return Resize::None;
}

// Per-thread elapsed time in seconds since the previous call, clamped to
// (0, 1]. The first call on a thread returns the minimum weight.
class ActivityTimer {
 public:
  double tick() noexcept {
    auto now = std::chrono::steady_clock::now();
    double t = kMin;
    if (started_) {
      t = std::chrono::duration<double>(now - last_).count();
      t = std::clamp(t, kMin, 1.0);
    }
    last_ = now;
    started_ = true;
    return t;
  }

 private:
  static constexpr double kMin = 1e-9;
  std::chrono::steady_clock::time_point last_{};
  bool started_ = false;
};

}  // namespace jiffy
