#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>

#include "errors.hpp"
#include "version_clock.hpp"

namespace jiffy {

// Lock-free list of snapshot slots. Slots are recycled, never unlinked,
// and freed with the registry.
class SnapshotRegistry {
  struct Slot {
    std::atomic<Version> version{0};
    std::atomic<bool> in_use{true};
    Slot* next = nullptr;
  };

 public:
  class Handle {
   public:
    Handle() = default;
    bool registered() const noexcept { return slot_ != nullptr; }
    Version version() const {
      if (!slot_) throw UseAfterUnregister();
      return slot_->version.load();
    }

   private:
    friend class SnapshotRegistry;
    Slot* slot_ = nullptr;
  };

  SnapshotRegistry() = default;
  SnapshotRegistry(const SnapshotRegistry&) = delete;
  SnapshotRegistry& operator=(const SnapshotRegistry&) = delete;
  ~SnapshotRegistry() {
    Slot* s = head_.load();
    while (s) {
      Slot* n = s->next;
      delete s;
      s = n;
    }
  }

  // The slot starts at `now`; callers refresh before the first read.
  template <class Clock>
  Handle register_handle(const Clock& clock) {
    Handle h;
    h.slot_ = claim();
    h.slot_->version.store(clock.now());
    return h;
  }

  template <class Clock>
  Version refresh(Handle& h, const Clock& clock) {
    if (!h.slot_) throw UseAfterUnregister();
    Version v = clock.now();
    h.slot_->version.store(v);
    return v;
  }

  // Publishes an explicit version, e.g. the minimum of several logical
  // snapshots held by one thread.
  void publish(Handle& h, Version v) {
    if (!h.slot_) throw UseAfterUnregister();
    h.slot_->version.store(v);
  }

  // A second unregister is a no-op.
  void unregister(Handle& h) noexcept {
    if (!h.slot_) return;
    h.slot_->version.store(0);
    h.slot_->in_use.store(false);
    h.slot_ = nullptr;
  }

  // Oldest registered version, or now() when nothing is registered. The
  // clock is read before the list so that a snapshot registered after
  // the scan is at or above the result.
  template <class Clock>
  Version horizon(const Clock& clock) const {
    Version h = clock.now();
    std::atomic_thread_fence(std::memory_order_seq_cst);
    for (Slot* s = head_.load(); s; s = s->next) {
      if (!s->in_use.load()) continue;
      Version v = s->version.load();
      if (v > 0) h = std::min(h, v);
    }
    return h;
  }

  std::size_t active() const {
    std::size_t n = 0;
    for (Slot* s = head_.load(); s; s = s->next) n += s->in_use.load();
    return n;
  }

 private:
  Slot* claim() {
    for (Slot* s = head_.load(); s; s = s->next) {
      bool f = false;
      if (!s->in_use.load() && s->in_use.compare_exchange_strong(f, true))
        return s;
    }
    auto* s = new Slot;
    Slot* h = head_.load();
    do {
      s->next = h;
    } while (!head_.compare_exchange_weak(h, s));
    return s;
  }

  std::atomic<Slot*> head_{nullptr};
};

}  // namespace jiffy
