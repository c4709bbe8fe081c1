#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "revision.hpp"

namespace jiffy {

// A set of puts and removes applied atomically. A later write to the same
// key replaces an earlier one.
template <class Key, class Value, class Compare = std::less<Key>>
class Batch {
 public:
  void put(const Key& k, const Value& v) { ops_.insert_or_assign(k, v); }
  void remove(const Key& k) { ops_.insert_or_assign(k, std::nullopt); }

  bool empty() const noexcept { return ops_.empty(); }
  std::size_t size() const noexcept { return ops_.size(); }

  // Ascending by key.
  std::vector<BatchOp<Key, Value>> ops() const {
    std::vector<BatchOp<Key, Value>> out;
    out.reserve(ops_.size());
    for (const auto& [k, v] : ops_) out.push_back({k, v});
    return out;
  }

 private:
  std::map<Key, std::optional<Value>, Compare> ops_;
};

}  // namespace jiffy
