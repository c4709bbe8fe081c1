#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "autoscaler.hpp"
#include "errors.hpp"
#include "version_clock.hpp"

namespace jiffy {

// 16-bit key hash: multiply-shift over std::hash.
template <class Key>
struct DefaultKeyHash {
  std::uint16_t operator()(const Key& k) const noexcept {
    std::uint64_t h = std::hash<Key>{}(k);
    return std::uint16_t((h * 0x9E3779B97F4A7C15ull) >> 48);
  }
};

enum class RevisionKind : std::uint8_t {
  Regular,
  LeftSplit,
  RightSplit,
  Merge,
  MergeTerminator,
  Bulk,
};

// One write in a batch. An empty value means remove.
template <class Key, class Value>
struct BatchOp {
  Key key;
  std::optional<Value> value;
};

// Sorted entries plus the operations on them that build new revisions.
template <class Key, class Value, class Compare = std::less<Key>>
struct Entries {
  std::vector<Key> keys;
  std::vector<Value> values;

  std::size_t size() const noexcept { return keys.size(); }

  std::size_t lower_bound(const Key& k) const {
    return std::size_t(std::lower_bound(keys.begin(), keys.end(), k, Compare{}) -
                       keys.begin());
  }

  bool contains(const Key& k) const {
    std::size_t i = lower_bound(k);
    return i < keys.size() && !Compare{}(k, keys[i]);
  }

  // Copy of [lo, hi) where an unset bound is open.
  Entries slice(const std::optional<Key>& lo, const std::optional<Key>& hi) const {
    std::size_t a = lo ? lower_bound(*lo) : 0;
    std::size_t b = hi ? lower_bound(*hi) : keys.size();
    Entries out;
    if (a < b) {
      out.keys.assign(keys.begin() + a, keys.begin() + b);
      out.values.assign(values.begin() + a, values.begin() + b);
    }
    return out;
  }

  // Applies sorted, key-unique ops. Returns whether any entry was removed.
  bool apply(std::span<const BatchOp<Key, Value>> ops) {
    Compare less;
    Entries out;
    out.keys.reserve(keys.size() + ops.size());
    out.values.reserve(keys.size() + ops.size());
    bool removed = false;
    std::size_t i = 0;
    for (const auto& op : ops) {
      while (i < keys.size() && less(keys[i], op.key)) {
        out.keys.push_back(std::move(keys[i]));
        out.values.push_back(std::move(values[i]));
        ++i;
      }
      bool hit = i < keys.size() && !less(op.key, keys[i]);
      if (hit) ++i;
      if (op.value) {
        out.keys.push_back(op.key);
        out.values.push_back(*op.value);
      } else if (hit) {
        removed = true;
      }
    }
    for (; i < keys.size(); ++i) {
      out.keys.push_back(std::move(keys[i]));
      out.values.push_back(std::move(values[i]));
    }
    *this = std::move(out);
    return removed;
  }

  void put(const Key& k, const Value& v) {
    BatchOp<Key, Value> op{k, v};
    apply(std::span(&op, 1));
  }

  bool remove(const Key& k) {
    BatchOp<Key, Value> op{k, std::nullopt};
    return apply(std::span(&op, 1));
  }

  // Left keeps ceil(n/2) entries.
  Entries split_upper() {
    std::size_t keep = (keys.size() + 1) / 2;
    Entries right;
    right.keys.assign(std::make_move_iterator(keys.begin() + keep),
                      std::make_move_iterator(keys.end()));
    right.values.assign(std::make_move_iterator(values.begin() + keep),
                        std::make_move_iterator(values.end()));
    keys.resize(keep);
    values.resize(keep);
    return right;
  }

  // Every key of `right` is above every key here.
  void append(const Entries& right) {
    keys.insert(keys.end(), right.keys.begin(), right.keys.end());
    values.insert(values.end(), right.values.begin(), right.values.end());
  }
};

// Result of a hash-index probe, for tests that check the probe path.
enum class ProbePath : std::uint8_t { First, Second, EmptySlot, Fallback, Empty };

template <class Key, class Value, class Compare = std::less<Key>,
          class Hash = DefaultKeyHash<Key>>
struct Revision {
  using EntrySet = Entries<Key, Value, Compare>;
  static constexpr std::uint16_t kEmptySlot = 0xFFFF;
  static constexpr std::size_t kMaxEntries = 0xFFFF;

  RevisionKind kind;
  VersionCell own_cell;
  VersionCell* cell;

  std::vector<Key> keys;
  std::vector<Value> values;
  std::vector<std::uint16_t> hashes;
  std::vector<std::uint16_t> indices;

  std::atomic<Revision*> next{nullptr};
  // Merge only: history of the merged-away node, for keys >= right_key.
  std::atomic<Revision*> right_next{nullptr};
  std::optional<Key> right_key;
  // Split pair partner. Not an owning link.
  Revision* sibling = nullptr;

  RevisionStats stats;
  // Links pointing here: a node head or a predecessor's next/right_next.
  std::atomic<std::uint32_t> in_links{1};

  // Merge: node it was installed on, and the terminator it completes.
  void* owner = nullptr;
  Revision* terminator = nullptr;
  // Set before the merged node is released; `terminator` may dangle after.
  std::atomic<bool> merge_done{false};

  // MergeTerminator: merging node, its upper bound, the key whose removal
  // triggered it (unset for batch merges) and the merge revision once made.
  void* node = nullptr;
  std::optional<Key> upper_key;
  std::optional<Key> removed_key;
  std::atomic<Revision*> merge_rev{nullptr};

  // Set when the revision was created by a batch; `cell` then points at it.
  void* batch = nullptr;

  Revision(RevisionKind k, EntrySet e, VersionCell* shared = nullptr)
      : kind(k), cell(shared ? shared : &own_cell),
        keys(std::move(e.keys)), values(std::move(e.values)) {
    if (shared) shared->acquire();
    build_index();
  }

  ~Revision() {
    if (cell != &own_cell && cell->release()) delete cell;
  }

  Revision(const Revision&) = delete;
  Revision& operator=(const Revision&) = delete;

  Version version() const noexcept { return cell->load(); }
  bool pending() const noexcept { return version() < 0; }
  std::size_t size() const noexcept { return keys.size(); }

  EntrySet entries() const { return EntrySet{keys, values}; }

  static Compare less() { return Compare{}; }

  const Value* find(const Key& k) const {
    auto [i, path] = probe(k);
    return i < 0 ? nullptr : &values[std::size_t(i)];
  }

  std::pair<long, ProbePath> probe(const Key& k) const {
    std::size_t n = keys.size();
    if (n == 0) return {-1, ProbePath::Empty};
    std::size_t t = Hash{}(k) % n;
    std::uint16_t a = indices[2 * t];
    if (a == kEmptySlot) return {-1, ProbePath::EmptySlot};
    if (equal(keys[a], k)) return {a, ProbePath::First};
    std::uint16_t b = indices[2 * t + 1];
    if (b == kEmptySlot) return {-1, ProbePath::EmptySlot};
    if (equal(keys[b], k)) return {b, ProbePath::Second};
    return {binary_search(k), ProbePath::Fallback};
  }

  long binary_search(const Key& k) const {
    auto it = std::lower_bound(keys.begin(), keys.end(), k, Compare{});
    if (it == keys.end() || Compare{}(k, *it)) return -1;
    return long(it - keys.begin());
  }

 private:
  static bool equal(const Key& a, const Key& b) {
    return !Compare{}(a, b) && !Compare{}(b, a);
  }

  void build_index() {
    std::size_t n = keys.size();
    if (n > kMaxEntries) throw CapacityExceeded();
    hashes.resize(n);
    indices.assign(2 * n, kEmptySlot);
    Hash h;
    for (std::size_t i = 0; i < n; ++i) {
      hashes[i] = h(keys[i]);
      std::size_t t = hashes[i] % n;
      if (indices[2 * t] == kEmptySlot)
        indices[2 * t] = std::uint16_t(i);
      else if (indices[2 * t + 1] == kEmptySlot)
        indices[2 * t + 1] = std::uint16_t(i);
    }
  }
};

// Emits the entries of [lo, hi) visible at snapshot `s`, starting from
// revision `r`; unset bounds are open. A merge revision that is too new is
// replaced by its two histories, each clipped to its side of the merge
// key. This is the bulk revision a range scan reads. `emit(key, value)`
// returns false to stop, and so does this function when stopped.
template <class Rev, class Key, class Emit>
bool snapshot_entries(const Rev* r, Version s, const std::optional<Key>& lo,
                      const std::optional<Key>& hi, Emit& emit) {
  auto less = Rev::less();
  while (r) {
    Version v = r->version();
    if (v > 0 && v <= s) {
      auto first = r->keys.begin(), last = r->keys.end();
      auto a = lo ? std::lower_bound(first, last, *lo, less) : first;
      auto b = hi ? std::lower_bound(first, last, *hi, less) : last;
      for (; a < b; ++a)
        if (!emit(*a, r->values[std::size_t(a - first)])) return false;
      return true;
    }
    if (r->kind == RevisionKind::Merge) {
      const Key& rk = *r->right_key;
      if (!lo || less(*lo, rk)) {
        std::optional<Key> h2 = (hi && less(*hi, rk)) ? hi : std::optional<Key>(rk);
        if (!snapshot_entries(r->next.load(), s, lo, h2, emit)) return false;
      }
      if (!hi || less(rk, *hi)) {
        std::optional<Key> l2 = (lo && less(rk, *lo)) ? lo : std::optional<Key>(rk);
        return snapshot_entries(r->right_next.load(), s, l2, hi, emit);
      }
      return true;
    }
    r = r->next.load();
  }
  return true;
}

// Read-only revision with everything `r` and its history show at `s`.
template <class Rev>
Rev* make_bulk(const Rev* r, Version s) {
  typename Rev::EntrySet e;
  auto emit = [&](const auto& k, const auto& v) {
    e.keys.push_back(k);
    e.values.push_back(v);
    return true;
  };
  using Key = typename decltype(e.keys)::value_type;
  snapshot_entries(r, s, std::optional<Key>{}, std::optional<Key>{}, emit);
  auto* b = new Rev(RevisionKind::Bulk, std::move(e));
  b->own_cell.value.store(s);
  return b;
}

// Shared version cell of a batch. Version goes 0, then optimistic, then
// final. Ops are sorted by key and unique.
template <class Key, class Value>
struct BatchDescriptor : VersionCell {
  std::vector<BatchOp<Key, Value>> ops;
  // Autoscaler weight for each revision the batch creates.
  double weight = 0;
};

}  // namespace jiffy
