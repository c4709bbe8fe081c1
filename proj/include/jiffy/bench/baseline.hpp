#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <utility>
#include <vector>

#include "../batch.hpp"

namespace jiffy::bench {

// Coarse-locked ordered map with the same surface as the benchmark
// adapter for Map. Comparison point and reference semantics.
template <class Key, class Value, class Compare = std::less<Key>>
class LockedMap {
 public:
  void put(const Key& k, const Value& v) {
    std::unique_lock lk(m_);
    map_.insert_or_assign(k, v);
  }

  void remove(const Key& k) {
    std::unique_lock lk(m_);
    map_.erase(k);
  }

  void batch_update(const Batch<Key, Value, Compare>& b) {
    std::unique_lock lk(m_);
    for (const auto& op : b.ops()) {
      if (op.value)
        map_.insert_or_assign(op.key, *op.value);
      else
        map_.erase(op.key);
    }
  }

  std::optional<Value> get(const Key& k) const {
    std::shared_lock lk(m_);
    auto it = map_.find(k);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::pair<Key, Value>> scan(const Key& from, const Key& to) const {
    std::shared_lock lk(m_);
    std::vector<std::pair<Key, Value>> out;
    for (auto it = map_.lower_bound(from); it != map_.end() && Compare{}(it->first, to); ++it)
      out.emplace_back(*it);
    return out;
  }

  // Calls emit(key, value) from `from` on, at most n times.
  template <class Emit>
  std::size_t scan_n(const Key& from, std::size_t n, Emit&& emit) const {
    std::shared_lock lk(m_);
    std::size_t c = 0;
    for (auto it = map_.lower_bound(from); it != map_.end() && c < n; ++it, ++c)
      emit(it->first, it->second);
    return c;
  }

  std::size_t size() const {
    std::shared_lock lk(m_);
    return map_.size();
  }

 private:
  mutable std::shared_mutex m_;
  std::map<Key, Value, Compare> map_;
};

}  // namespace jiffy::bench
