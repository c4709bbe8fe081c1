#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>

namespace jiffy {

using Version = std::int64_t;

struct SteadySource {
  std::int64_t read() const noexcept {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

// Monotone nanosecond clock. now() is never below 1, so negated
// optimistic stamps are always negative and 0 stays free as "unset".
template <class Source = SteadySource>
class BasicVersionClock {
 public:
  BasicVersionClock() : origin_(source_.read()) {}
  explicit BasicVersionClock(Source src)
      : source_(std::move(src)), origin_(source_.read()) {}

  Version now() const noexcept { return source_.read() - origin_ + 1; }

  Version optimistic() const noexcept { return -(now() + 1); }

  // The final stamp for a revision that carried `opt`. Must not be below
  // the optimistic bound so that every reader who skipped the revision
  // still skips it after it becomes final.
  Version choose_final(Version opt) const noexcept {
    Version t = now();
    return t > -opt ? t : -opt;
  }

  void wait_until(Version v) const noexcept {
    while (now() < v) std::this_thread::yield();
  }

  Source& source() noexcept { return source_; }

 private:
  Source source_;
  std::int64_t origin_;
};

using VersionClock = BasicVersionClock<>;

// Version cell shared by one or more revisions. Revisions that must
// become final atomically together (split pair, merge pair, batch)
// point at the same cell.
struct VersionCell {
  std::atomic<Version> value{0};
  std::atomic<std::uint32_t> refs{1};

  VersionCell() = default;
  VersionCell(const VersionCell&) = delete;
  VersionCell& operator=(const VersionCell&) = delete;
  virtual ~VersionCell() = default;

  Version load() const noexcept { return value.load(std::memory_order_acquire); }

  // Pending (negative) to final. Loser of a race leaves the winner's value.
  bool try_set(Version expected, Version final_v) noexcept {
    return value.compare_exchange_strong(expected, final_v,
                                         std::memory_order_acq_rel);
  }

  void acquire() noexcept { refs.fetch_add(1, std::memory_order_relaxed); }
  bool release() noexcept {
    return refs.fetch_sub(1, std::memory_order_acq_rel) == 1;
  }
};

template <class Clock>
Version finalize_cell(const Clock& clock, VersionCell& cell) {
  Version v = cell.load();
  if (v > 0) return v;
  Version f = clock.choose_final(v);
  clock.wait_until(f);
  cell.try_set(v, f);
  return cell.load();
}

}  // namespace jiffy
