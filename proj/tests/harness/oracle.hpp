#pragma once

#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <jiffy/revision.hpp>

namespace jiffy::testing {

// Sequential reference: an ordered map plus, per key, the history of its
// values by update number. A snapshot is the update number it was taken
// at.
template <class Key, class Value>
class OracleModel {
 public:
  using Snap = std::uint64_t;

  void put(const Key& k, const Value& v) {
    ++version_;
    record(k, v);
  }

  void remove(const Key& k) {
    ++version_;
    record(k, std::nullopt);
  }

  // Ops are applied as one update.
  void batch(const std::vector<BatchOp<Key, Value>>& ops) {
    ++version_;
    for (const auto& op : ops) record(op.key, op.value);
  }

  Snap snapshot() const { return version_; }

  std::optional<Value> get(const Key& k) const { return get(k, version_); }

  std::optional<Value> get(const Key& k, Snap s) const {
    auto it = history_.find(k);
    if (it == history_.end()) return std::nullopt;
    return at(it->second, s);
  }

  std::vector<std::pair<Key, Value>> scan(const Key& from, const Key& to,
                                          Snap s) const {
    std::vector<std::pair<Key, Value>> out;
    for (auto it = history_.lower_bound(from); it != history_.end() && it->first < to;
         ++it)
      if (auto v = at(it->second, s)) out.emplace_back(it->first, *v);
    return out;
  }

  std::vector<std::pair<Key, Value>> scan_n(const Key& from, std::size_t n,
                                            Snap s) const {
    std::vector<std::pair<Key, Value>> out;
    for (auto it = history_.lower_bound(from); it != history_.end() && out.size() < n;
         ++it)
      if (auto v = at(it->second, s)) out.emplace_back(it->first, *v);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [k, h] : history_) n += h.back().second.has_value();
    return n;
  }

 private:
  using History = std::vector<std::pair<Snap, std::optional<Value>>>;

  void record(const Key& k, std::optional<Value> v) {
    auto& h = history_[k];
    if (!h.empty() && h.back().first == version_)
      h.back().second = std::move(v);
    else
      h.emplace_back(version_, std::move(v));
  }

  static std::optional<Value> at(const History& h, Snap s) {
    auto it = std::upper_bound(h.begin(), h.end(), s,
                               [](Snap x, const auto& e) { return x < e.first; });
    if (it == h.begin()) return std::nullopt;
    return std::prev(it)->second;
  }

  Snap version_ = 0;
  std::map<Key, History> history_;
};

}  // namespace jiffy::testing
