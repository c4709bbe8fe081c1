#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <unordered_set>
#include <utility>
#include <vector>

namespace jiffy {

// Epoch-based reclamation. A thread pins the current global epoch while
// it may hold references into shared structures; retired objects are
// freed once the global epoch has moved two steps past their retirement.
class EpochDomain {
  struct Retired {
    std::uint64_t epoch;
    void* ptr;
    void (*deleter)(void*);
  };

  struct Record {
    // (epoch << 1) | active
    std::atomic<std::uint64_t> state{0};
    std::atomic<bool> in_use{true};
    Record* next = nullptr;
    // Owner-thread only below.
    std::uint32_t depth = 0;
    std::uint32_t since_collect = 0;
    std::vector<Retired> limbo;
  };

 public:
  class Guard {
   public:
    Guard() = default;
    explicit Guard(EpochDomain& d) : domain_(&d), rec_(d.local()) {
      d.enter(rec_);
    }
    Guard(Guard&& o) noexcept
        : domain_(std::exchange(o.domain_, nullptr)), rec_(o.rec_) {}
    Guard& operator=(Guard&& o) noexcept {
      if (this != &o) {
        release();
        domain_ = std::exchange(o.domain_, nullptr);
        rec_ = o.rec_;
      }
      return *this;
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
    ~Guard() { release(); }

    void release() {
      if (domain_) domain_->leave(rec_);
      domain_ = nullptr;
    }

   private:
    EpochDomain* domain_ = nullptr;
    Record* rec_ = nullptr;
  };

  explicit EpochDomain(std::uint32_t collect_every = 64)
      : id_(next_id().fetch_add(1) + 1), collect_every_(collect_every) {
    std::lock_guard lk(registry_mutex());
    live_ids().insert(id_);
  }

  EpochDomain(const EpochDomain&) = delete;
  EpochDomain& operator=(const EpochDomain&) = delete;

  // No thread may be using the domain any more.
  ~EpochDomain() {
    {
      std::lock_guard lk(registry_mutex());
      live_ids().erase(id_);
    }
    Record* r = records_.load();
    while (r) {
      Record* n = r->next;
      for (auto& x : r->limbo) x.deleter(x.ptr);
      delete r;
      r = n;
    }
  }

  Guard pin() { return Guard(*this); }

  template <class T>
  void retire(T* p) {
    retire(static_cast<void*>(p), [](void* q) { delete static_cast<T*>(q); });
  }

  void retire(void* p, void (*deleter)(void*)) {
    Record* r = local();
    r->limbo.push_back({global_.load(), p, deleter});
    pending_.fetch_add(1, std::memory_order_relaxed);
    if (++r->since_collect >= collect_every_) {
      r->since_collect = 0;
      collect_record(r);
    }
  }

  // Tries to advance the epoch and frees this thread's eligible objects.
  std::size_t collect() { return collect_record(local()); }

  std::uint64_t epoch() const { return global_.load(); }

  // Retired objects not yet freed, over all threads.
  std::size_t pending() const { return pending_.load(std::memory_order_relaxed); }

  bool try_advance() {
    std::uint64_t e = global_.load();
    for (Record* r = records_.load(); r; r = r->next) {
      std::uint64_t s = r->state.load();
      if ((s & 1) && (s >> 1) != e) return false;
    }
    return global_.compare_exchange_strong(e, e + 1);
  }

 private:
  std::size_t collect_record(Record* r) {
    try_advance();
    std::uint64_t g = global_.load();
    auto keep = std::partition(r->limbo.begin(), r->limbo.end(),
                               [g](const Retired& x) { return x.epoch + 2 > g; });
    std::size_t freed = std::size_t(r->limbo.end() - keep);
    // Deleters may retire more objects into this same limbo.
    std::vector<Retired> doomed(keep, r->limbo.end());
    r->limbo.erase(keep, r->limbo.end());
    for (auto& x : doomed) x.deleter(x.ptr);
    pending_.fetch_sub(freed, std::memory_order_relaxed);
    return freed;
  }

  void enter(Record* r) {
    if (r->depth++ > 0) return;
    for (;;) {
      std::uint64_t e = global_.load();
      r->state.store((e << 1) | 1);
      if (global_.load() == e) break;
    }
  }

  void leave(Record* r) {
    if (--r->depth == 0) r->state.store(0);
  }

  struct LocalCache {
    std::vector<std::pair<std::uint64_t, Record*>> entries;
    ~LocalCache() {
      std::lock_guard lk(registry_mutex());
      for (auto& [id, rec] : entries)
        if (live_ids().count(id)) rec->in_use.store(false);
    }
  };

  static LocalCache& cache() {
    thread_local LocalCache c;
    return c;
  }

  Record* local() {
    auto& c = cache();
    for (auto& [id, rec] : c.entries)
      if (id == id_) return rec;
    if (c.entries.size() >= 16) prune(c);
    Record* rec = adopt();
    c.entries.emplace_back(id_, rec);
    return rec;
  }

  static void prune(LocalCache& c) {
    std::lock_guard lk(registry_mutex());
    std::erase_if(c.entries, [](auto& e) { return !live_ids().count(e.first); });
  }

  Record* adopt() {
    for (Record* r = records_.load(); r; r = r->next) {
      bool f = false;
      if (!r->in_use.load() && r->in_use.compare_exchange_strong(f, true)) {
        r->depth = 0;
        r->since_collect = 0;
        return r;
      }
    }
    auto* r = new Record;
    Record* head = records_.load();
    do {
      r->next = head;
    } while (!records_.compare_exchange_weak(head, r));
    return r;
  }

  static std::atomic<std::uint64_t>& next_id() {
    static std::atomic<std::uint64_t> n{0};
    return n;
  }
  static std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
  }
  static std::unordered_set<std::uint64_t>& live_ids() {
    static std::unordered_set<std::uint64_t> s;
    return s;
  }

  const std::uint64_t id_;
  const std::uint32_t collect_every_;
  std::atomic<std::uint64_t> global_{2};
  std::atomic<Record*> records_{nullptr};
  std::atomic<std::size_t> pending_{0};
};

}  // namespace jiffy
