#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "autoscaler.hpp"
#include "batch.hpp"
#include "errors.hpp"
#include "hooks.hpp"
#include "reclamation.hpp"
#include "revision.hpp"
#include "snapshot_registry.hpp"
#include "version_clock.hpp"

namespace jiffy {

struct MapConfig {
  AutoscalerConfig autoscaler;
  // Index tower promotion probability and height cap.
  double promotion = 0.25;
  int max_level = 32;
  // Forces every new tower to this height when non-negative.
  int fixed_height = -1;
  // Updates per thread between recomputations of the GC horizon.
  std::uint32_t horizon_refresh = 128;
  // Retires per thread between reclamation attempts.
  std::uint32_t collect_every = 64;
};

// Structure report. Under concurrency the numbers are approximate and
// `problems` is only meaningful when the map is quiescent.
struct MapInspection {
  std::size_t nodes = 0;
  std::size_t temps = 0;
  std::size_t pending_heads = 0;
  std::size_t entries = 0;
  std::size_t max_list_length = 0;
  std::vector<std::size_t> sizes;
  std::vector<std::string> problems;

  double median_size() const {
    if (sizes.empty()) return 0;
    auto v = sizes;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return double(v[v.size() / 2]);
  }
};

template <class Key, class Value, class Compare = std::less<Key>,
          class Hash = DefaultKeyHash<Key>, class Hooks = NoHooks,
          class Clock = VersionClock>
class Map {
 public:
  using Rev = Revision<Key, Value, Compare, Hash>;
  using EntrySet = Entries<Key, Value, Compare>;
  using Op = BatchOp<Key, Value>;
  using BatchType = Batch<Key, Value, Compare>;
  using Handle = SnapshotRegistry::Handle;

 private:
  static constexpr int kMaxLevels = 64;
  using Desc = BatchDescriptor<Key, Value>;

  struct Elem {
    Elem(bool temp, std::optional<Key> k) : is_temp(temp), key(std::move(k)) {}
    const bool is_temp;
    // Unset only for the base node.
    const std::optional<Key> key;
  };

  struct Node : Elem {
    Node(std::optional<Key> k, Rev* h, Elem* n, int levels)
        : Elem(false, std::move(k)), head(h), next(n), height(levels),
          tower(new std::atomic<std::uintptr_t>[std::size_t(levels)]()) {}
    std::atomic<Rev*> head;
    std::atomic<Elem*> next;
    std::atomic<bool> terminated{false};
    // Tower inserter and terminator. The last to let go retires the node.
    std::atomic<int> owners{2};
    const int height;
    // Index links; the low bit marks this node as leaving that level.
    std::unique_ptr<std::atomic<std::uintptr_t>[]> tower;
  };

  // Placeholder linked after a node while its split is in progress.
  struct Temp : Elem {
    Temp(const Key& k, Elem* n, Rev* l, Node* o)
        : Elem(true, k), next(n), left_rev(l), owner(o) {}
    Elem* const next;
    // Counted link, released when the temp leaves the list.
    Rev* const left_rev;
    Node* const owner;
  };

 public:
  explicit Map(MapConfig cfg = {}, Hooks hooks = {}, Clock clock = {})
      : cfg_(cfg), hooks_(std::move(hooks)), clock_(std::move(clock)),
        epochs_(cfg.collect_every) {
    cfg_.max_level = std::clamp(cfg_.max_level, 1, kMaxLevels);
    auto* r = new Rev(RevisionKind::Regular, EntrySet{});
    r->own_cell.value.store(1);
    base_ = new Node(std::nullopt, r, nullptr, cfg_.max_level);
  }

  Map(const Map&) = delete;
  Map& operator=(const Map&) = delete;

  // No other thread may be using the map.
  ~Map() {
    std::unordered_set<Rev*> revs;
    std::vector<Rev*> stack;
    std::vector<Elem*> elems;
    for (Elem* e = base_; e;) {
      elems.push_back(e);
      if (e->is_temp) {
        auto* t = static_cast<Temp*>(e);
        stack.push_back(t->left_rev);
        e = t->next;
      } else {
        auto* n = static_cast<Node*>(e);
        stack.push_back(n->head.load());
        e = n->next.load();
      }
    }
    while (!stack.empty()) {
      Rev* r = stack.back();
      stack.pop_back();
      if (!r || !revs.insert(r).second) continue;
      stack.push_back(r->next.load());
      stack.push_back(r->right_next.load());
    }
    for (Rev* r : revs) delete r;
    for (Elem* e : elems) {
      if (e->is_temp)
        delete static_cast<Temp*>(e);
      else
        delete static_cast<Node*>(e);
    }
  }

  // RAII snapshot: registered and refreshed on construction.
  class Snapshot {
   public:
    explicit Snapshot(Map& m) : map_(&m), handle_(m.register_snapshot()) {
      version_ = m.refresh(handle_);
    }
    Snapshot(Snapshot&& o) noexcept
        : map_(std::exchange(o.map_, nullptr)), handle_(o.handle_),
          version_(o.version_) {}
    Snapshot(const Snapshot&) = delete;
    Snapshot& operator=(const Snapshot&) = delete;
    Snapshot& operator=(Snapshot&&) = delete;
    ~Snapshot() {
      if (map_) map_->unregister(handle_);
    }

    Version version() const noexcept { return version_; }
    Version refresh() { return version_ = map_->refresh(handle_); }

   private:
    Map* map_;
    Handle handle_;
    Version version_ = 0;
  };

  void put(const Key& key, const Value& value) { update(key, value); }
  void remove(const Key& key) { update(key, std::nullopt); }

  void batch_update(const BatchType& batch) {
    if (batch.empty()) return;
    auto g = epochs_.pin();
    double t = update_timer().tick();
    auto* d = new Desc;
    d->ops = batch.ops();
    d->weight = batch_weight(t, count_nodes(d->ops));
    d->value.store(clock_.optimistic());
    std::vector<Node*> touched;
    help_batch(d, &touched);
    hooks_.on(Step::BeforeFinalize);
    finalize_cell(clock_, *d);
    for (Node* n : touched) perform_gc(n);
    if (d->release()) delete d;
  }

  std::optional<Value> get(const Key& key) {
    auto g = epochs_.pin();
    return read(key, clock_.now(), true);
  }

  std::optional<Value> get(const Key& key, Version snap) {
    check_snapshot(snap);
    auto g = epochs_.pin();
    return read(key, snap, false);
  }

  std::optional<Value> get(const Key& key, const Snapshot& s) {
    return get(key, s.version());
  }

  std::optional<Value> get(const Key& key, const Handle& h) {
    return get(key, h.version());
  }

  // Entries in [from, to) at snapshot `snap`.
  std::vector<std::pair<Key, Value>> scan(const Key& from, const Key& to,
                                          Version snap) {
    std::vector<std::pair<Key, Value>> out;
    if (!Compare{}(from, to)) return out;
    visit(from, std::optional<Key>(to), snap, [&](const Key& k, const Value& v) {
      out.emplace_back(k, v);
      return true;
    });
    return out;
  }

  std::vector<std::pair<Key, Value>> scan(const Key& from, const Key& to,
                                          const Snapshot& s) {
    return scan(from, to, s.version());
  }

  // Scan on a private snapshot.
  std::vector<std::pair<Key, Value>> scan(const Key& from, const Key& to) {
    Snapshot s(*this);
    return scan(from, to, s.version());
  }

  // Up to `n` entries starting at `from`.
  std::vector<std::pair<Key, Value>> scan_n(const Key& from, std::size_t n,
                                            Version snap) {
    std::vector<std::pair<Key, Value>> out;
    if (n == 0) return out;
    out.reserve(n);
    visit(from, std::nullopt, snap, [&](const Key& k, const Value& v) {
      out.emplace_back(k, v);
      return out.size() < n;
    });
    return out;
  }

  // Calls emit(key, value) over [from, to) at `snap` until it returns false.
  template <class Emit>
  void visit(const Key& from, const std::optional<Key>& to, Version snap,
             Emit&& emit) {
    check_snapshot(snap);
    auto g = epochs_.pin();
    double t = scan_timer().tick();
    Key cursor = from;
    for (;;) {
      Spot sp = locate(cursor);
      Version v = sp.head->version();
      if (v < 0 && -v <= snap) {
        help_pending(sp.node, sp.head);
        continue;
      }
      std::optional<Key> hi = sp.next ? sp.next->key : std::nullopt;
      if (to && (!hi || Compare{}(*to, *hi))) hi = to;
      sp.head->stats.record_read(t);
      if (!snapshot_entries(sp.head, snap, std::optional<Key>(cursor), hi, emit))
        return;
      if (!sp.next || (to && !Compare{}(*sp.next->key, *to))) return;
      cursor = *sp.next->key;
    }
  }

  // Snapshot handles. A handle must be refreshed before its first read.
  Handle register_snapshot() { return registry_.register_handle(clock_); }
  Version refresh(Handle& h) { return registry_.refresh(h, clock_); }
  void unregister(Handle& h) { registry_.unregister(h); }

  // Oldest version a registered reader may still use.
  Version gc_horizon() const { return registry_.horizon(clock_); }

  // Raises the cached horizon to `h` and collects every node. Testing aid:
  // a horizon above a live snapshot makes that snapshot stale.
  void force_gc(Version h) {
    raise_horizon(h);
    auto g = epochs_.pin();
    for (Elem* e = base_; e;) {
      if (e->is_temp) {
        e = static_cast<Temp*>(e)->next;
        continue;
      }
      auto* n = static_cast<Node*>(e);
      gc_from(n->head.load(), horizon_cache_.load());
      e = n->next.load();
    }
  }

  MapInspection inspect() {
    auto g = epochs_.pin();
    MapInspection out;
    std::unordered_set<const Node*> level0;
    std::optional<Key> prev;
    bool first = true;
    for (Elem* e = base_; e;) {
      if (!first && e->key && prev && !Compare{}(*prev, *e->key))
        out.problems.push_back("level-0 keys not increasing");
      if (!first && !e->key) out.problems.push_back("unkeyed node after base");
      first = false;
      prev = e->key;
      if (e->is_temp) {
        ++out.temps;
        out.problems.push_back("temp split node present");
        e = static_cast<Temp*>(e)->next;
        continue;
      }
      auto* n = static_cast<Node*>(e);
      level0.insert(n);
      Rev* head = n->head.load();
      Elem* next = n->next.load();
      ++out.nodes;
      out.sizes.push_back(head->size());
      out.entries += head->size();
      if (head->pending()) {
        ++out.pending_heads;
        out.problems.push_back("pending head revision");
      }
      if (n->terminated.load()) out.problems.push_back("terminated node linked");
      if (head->kind == RevisionKind::MergeTerminator)
        out.problems.push_back("merge terminator head on linked node");
      for (const Key& k : head->keys) {
        if (n->key && Compare{}(k, *n->key))
          out.problems.push_back("entry below node key");
        if (next && next->key && !Compare{}(k, *next->key))
          out.problems.push_back("entry at or above next node key");
      }
      std::string why;
      std::size_t len = list_length(head, 0, why);
      if (!why.empty()) out.problems.push_back(why);
      out.max_list_length = std::max(out.max_list_length, len);
      e = next;
    }
    for (int l = 0; l < base_->height; ++l) {
      std::optional<Key> p;
      for (std::uintptr_t raw = base_->tower[l].load(); raw & ~std::uintptr_t(1);) {
        auto* n = untag(raw);
        if (!level0.count(n)) out.problems.push_back("index node not on level 0");
        if (p && !Compare{}(*p, *n->key)) out.problems.push_back("index level unsorted");
        p = n->key;
        raw = n->tower[l].load();
        if (raw & 1) out.problems.push_back("marked index link");
      }
    }
    return out;
  }

  struct RevisionView {
    RevisionKind kind;
    Version version;
    std::size_t size;
    std::optional<Key> right_key;
    double reads;
    double updates;
  };
  struct NodeView {
    std::optional<Key> key;
    int height;
    // Head first, following the left branch.
    std::vector<RevisionView> history;
  };

  // Level-0 nodes and their revision lists. For quiescent maps.
  std::vector<NodeView> layout() {
    auto g = epochs_.pin();
    std::vector<NodeView> out;
    for (Elem* e = base_; e;) {
      if (e->is_temp) {
        e = static_cast<Temp*>(e)->next;
        continue;
      }
      auto* n = static_cast<Node*>(e);
      NodeView v{n->key, n->height, {}};
      for (Rev* r = n->head.load(); r; r = r->next.load())
        v.history.push_back({r->kind, r->version(), r->size(), r->right_key,
                             r->stats.reads(), r->stats.updates()});
      out.push_back(std::move(v));
      e = n->next.load();
    }
    return out;
  }

  // Key of the node whose range holds `key`; unset for the base node.
  std::optional<Key> node_key_for(const Key& key) {
    auto g = epochs_.pin();
    return locate(key).node->key;
  }

  std::size_t retired_pending() const { return epochs_.pending(); }
  EpochDomain& epochs() noexcept { return epochs_; }
  Clock& clock() noexcept { return clock_; }
  Hooks& hooks() noexcept { return hooks_; }
  const MapConfig& config() const noexcept { return cfg_; }

 private:
  struct Spot {
    Node* node;
    Rev* head;
    Elem* next;
  };

  static bool lt(const Key& a, const Key& b) { return Compare{}(a, b); }
  // `k` lies below the start of `e`'s range.
  static bool below(const Key& k, const Elem* e) {
    return e && e->key && lt(k, *e->key);
  }
  static bool node_le(const std::optional<Key>& nk, const Key& k) {
    return !nk || !lt(k, *nk);
  }
  static bool node_lt(const std::optional<Key>& nk, const Key& k) {
    return !nk || lt(*nk, k);
  }
  static Node* untag(std::uintptr_t raw) {
    return reinterpret_cast<Node*>(raw & ~std::uintptr_t(1));
  }

  static ActivityTimer& update_timer() {
    thread_local ActivityTimer t;
    return t;
  }
  static ActivityTimer& read_timer() {
    thread_local ActivityTimer t;
    return t;
  }
  static ActivityTimer& scan_timer() {
    thread_local ActivityTimer t;
    return t;
  }

  void check_snapshot(Version snap) const {
    if (snap < horizon_cache_.load()) throw StaleSnapshot();
  }

  // Reclamation of revisions. A revision is freed once nothing links to it.

  static bool acquire_link(Rev* r) {
    auto c = r->in_links.load();
    while (c != 0)
      if (r->in_links.compare_exchange_weak(c, c + 1)) return true;
    return false;
  }

  void release_link(Rev* r) {
    while (r) {
      if (r->in_links.fetch_sub(1) != 1) return;
      Rev* left = r->next.exchange(nullptr);
      Rev* right = r->right_next.exchange(nullptr);
      epochs_.retire(r);
      if (right) release_link(right);
      r = left;
    }
  }

  void retire_temp(Temp* t) {
    release_link(t->left_rev);
    epochs_.retire(t);
  }

  void release_owner(Node* n) {
    if (n->owners.fetch_sub(1) != 1) return;
    release_link(n->head.load());
    epochs_.retire(n);
  }

  // Index levels.

  int random_height() {
    if (cfg_.fixed_height >= 0) return std::min(cfg_.fixed_height, cfg_.max_level);
    thread_local std::minstd_rand rng{std::random_device{}()};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int h = 0;
    while (h < cfg_.max_level && u(rng) < cfg_.promotion) ++h;
    return h;
  }

  // Last index node with key <= `key` (< when strict), unlinking nodes that
  // are leaving the index on the way. Fills per-level predecessors and
  // their successors when asked.
  Node* index_search(const Key& key, bool strict, Node** preds,
                     std::uintptr_t* succs) {
  retry:
    Node* pred = base_;
    for (int l = base_->height - 1; l >= 0; --l) {
      std::uintptr_t cur_raw = pred->tower[l].load();
      if (cur_raw & 1) goto retry;
      Node* cur = untag(cur_raw);
      while (cur) {
        std::uintptr_t succ = cur->tower[l].load();
        if (!(succ & 1) && cur->terminated.load())
          succ = cur->tower[l].fetch_or(1) | 1;
        if (succ & 1) {
          std::uintptr_t exp = reinterpret_cast<std::uintptr_t>(cur);
          if (!pred->tower[l].compare_exchange_strong(exp, succ & ~std::uintptr_t(1)))
            goto retry;
          cur_raw = succ & ~std::uintptr_t(1);
          cur = untag(cur_raw);
          continue;
        }
        if (strict ? node_lt(cur->key, key) : node_le(cur->key, key)) {
          pred = cur;
          cur_raw = succ;
          cur = untag(succ);
        } else {
          break;
        }
      }
      if (preds) {
        preds[l] = pred;
        succs[l] = cur_raw;
      }
    }
    return pred;
  }

  void insert_tower(Node* o) {
    if (o->height > 0) {
      Node* preds[kMaxLevels];
      std::uintptr_t succs[kMaxLevels];
      index_search(*o->key, true, preds, succs);
      for (int l = 0; l < o->height;) {
        if (o->terminated.load()) break;
        std::uintptr_t mine = o->tower[l].load();
        if (mine & 1) break;
        if (!o->tower[l].compare_exchange_strong(mine, succs[l])) break;
        std::uintptr_t exp = succs[l];
        if (preds[l]->tower[l].compare_exchange_strong(
                exp, reinterpret_cast<std::uintptr_t>(o))) {
          ++l;
          continue;
        }
        index_search(*o->key, true, preds, succs);
      }
      if (o->terminated.load()) index_search(*o->key, false, nullptr, nullptr);
    }
    release_owner(o);
  }

  // Level 0.

  // Successor of a node, unlinking stale temps left by late split helpers.
  Elem* read_next(Node* n) {
    for (;;) {
      Elem* e = n->next.load();
      if (!e || !e->is_temp) return e;
      auto* t = static_cast<Temp*>(e);
      if (t->left_rev->pending()) return e;
      if (n->next.compare_exchange_strong(e, t->next)) retire_temp(t);
    }
  }

  Elem* step(Elem* e) {
    return e->is_temp ? static_cast<Temp*>(e)->next
                      : read_next(static_cast<Node*>(e));
  }

  // Node or temp whose range holds `key`.
  Elem* find(const Key& key) {
    Elem* cur = index_search(key, false, nullptr, nullptr);
    for (;;) {
      Elem* n = step(cur);
      if (!n || below(key, n)) return cur;
      cur = n;
    }
  }

  // Live node holding `key`, its head and successor, with structure
  // changes in the way completed.
  Spot locate(const Key& key) {
    for (;;) {
      Elem* e = find(key);
      if (e->is_temp) {
        help_temp(static_cast<Temp*>(e));
        continue;
      }
      auto* n = static_cast<Node*>(e);
      Rev* head = n->head.load();
      if (head->kind == RevisionKind::MergeTerminator) {
        help_terminator(n, head);
        continue;
      }
      Elem* next = read_next(n);
      if (next && next->is_temp) {
        help_temp(static_cast<Temp*>(next));
        continue;
      }
      if (next && !below(key, next)) continue;
      if (n->head.load() != head) continue;
      return {n, head, next};
    }
  }

  // Helping.

  void help_temp(Temp* t) {
    if (t->left_rev->pending())
      help_split(t->owner, t->left_rev);
    else
      read_next(t->owner);
  }

  void help_terminator(Node* n, Rev* mt) {
    if (mt->pending())
      help_pending(n, mt);
    else
      help_merge(mt);
  }

  // Drives the operation that installed pending revision `r` on `n` to
  // completion and finalizes it.
  void help_pending(Node* n, Rev* r) {
    if (r->batch) {
      help_batch(static_cast<Desc*>(r->batch), nullptr);
    } else {
      switch (r->kind) {
        case RevisionKind::LeftSplit:
          help_split(n, r);
          break;
        case RevisionKind::MergeTerminator:
          help_merge(r);
          break;
        case RevisionKind::Merge: {
          if (r->merge_done.load()) break;
          Rev* none = nullptr;
          r->terminator->merge_rev.compare_exchange_strong(none, r);
          help_merge(r->terminator);
          break;
        }
        default:
          break;
      }
    }
    finalize(r);
  }

  Version finalize(Rev* r) {
    hooks_.on(Step::BeforeFinalize);
    return finalize_cell(clock_, *r->cell);
  }

  // Links the node for the right half of a split of `k`.
  void help_split(Node* k, Rev* lsr) {
    Rev* rsr = lsr->sibling;
    for (;;) {
      if (!lsr->pending()) {
        read_next(k);
        return;
      }
      Elem* n = k->next.load();
      if (n && !n->is_temp && static_cast<Node*>(n)->head.load() == rsr) return;
      if (n && n->is_temp) {
        auto* t = static_cast<Temp*>(n);
        if (t->left_rev == lsr) {
          auto* o = new Node(t->key, rsr, t->next, random_height());
          Elem* exp = t;
          if (k->next.compare_exchange_strong(exp, o)) {
            hooks_.on(Step::SplitNodeCreated);
            retire_temp(t);
            insert_tower(o);
            return;
          }
          delete o;
          continue;
        }
        read_next(k);
        continue;
      }
      if (!acquire_link(lsr)) continue;
      auto* t = new Temp(rsr->keys.front(), n, lsr, k);
      hooks_.on(Step::SplitBeforeTempCas);
      Elem* exp = n;
      if (k->next.compare_exchange_strong(exp, t)) {
        hooks_.on(Step::SplitTempInserted);
        continue;
      }
      release_link(lsr);
      delete t;
    }
  }

  // Level-0 predecessor of `o`, or null if `o` is not linked.
  Node* find_pred(Node* o) {
  restart:
    Elem* cur = index_search(*o->key, true, nullptr, nullptr);
    for (;;) {
      Elem* n = step(cur);
      if (n == o) {
        if (cur->is_temp) {
          help_temp(static_cast<Temp*>(cur));
          goto restart;
        }
        return static_cast<Node*>(cur);
      }
      if (!n || !node_lt(n->key, *o->key)) return nullptr;
      cur = n;
    }
  }

  // Completes the merge begun by terminator `mt`; returns its merge revision.
  Rev* help_merge(Rev* mt) {
    auto* o = static_cast<Node*>(mt->node);
    Rev* mr;
    for (;;) {
      mr = mt->merge_rev.load();
      if (mr) break;
      Node* k = find_pred(o);
      if (!k) continue;
      Rev* kh = k->head.load();
      // An older merge revision may hold a freed terminator whose address
      // was reused by mt. The shared cell is alive in both, so it tells them apart.
      if (kh->kind == RevisionKind::Merge && kh->terminator == mt && kh->cell == mt->cell) {
        Rev* none = nullptr;
        mt->merge_rev.compare_exchange_strong(none, kh);
        continue;
      }
      if (kh->kind == RevisionKind::MergeTerminator) {
        help_terminator(k, kh);
        continue;
      }
      if (kh->pending()) {
        help_pending(k, kh);
        continue;
      }
      if (read_next(k) != o) continue;
      Rev* right = mt->next.load();
      if (mt->merge_rev.load() || !right) continue;

      EntrySet e = kh->entries();
      EntrySet r = right->entries();
      if (mt->removed_key) r.remove(*mt->removed_key);
      e.append(r);
      if (mt->batch) {
        const auto& ops = static_cast<Desc*>(mt->batch)->ops;
        auto a = k->key ? lower(ops, *k->key) : 0;
        auto b = mt->upper_key ? lower(ops, *mt->upper_key) : ops.size();
        e.apply(std::span<const Op>(ops.data() + a, b - a));
      }
      if (!acquire_link(right)) continue;
      auto* m = new Rev(RevisionKind::Merge, std::move(e), mt->cell);
      m->next.store(kh);
      m->right_next.store(right);
      m->right_key = o->key;
      m->owner = k;
      m->terminator = mt;
      m->batch = mt->batch;
      m->stats.p_reads.store(kh->stats.reads() + mt->stats.reads());
      m->stats.p_updates.store(kh->stats.updates() + mt->stats.updates());
      hooks_.on(Step::MergeBeforeRevisionCas);
      Rev* exp = kh;
      if (k->head.compare_exchange_strong(exp, m)) {
        hooks_.on(Step::MergeRevisionInstalled);
        Rev* none = nullptr;
        mt->merge_rev.compare_exchange_strong(none, m);
        continue;
      }
      release_link(right);
      m->next.store(nullptr);
      m->right_next.store(nullptr);
      delete m;
    }

    auto* k = static_cast<Node*>(mr->owner);
    for (;;) {
      Elem* n = read_next(k);
      if (n != o) break;
      Elem* succ = read_next(o);
      if (k->next.compare_exchange_strong(n, succ)) break;
    }
    hooks_.on(Step::MergeUnlinked);
    mr->merge_done.store(true);
    if (!o->terminated.exchange(true)) {
      for (int l = 0; l < o->height; ++l) o->tower[l].fetch_or(1);
      if (o->height > 0) index_search(*o->key, false, nullptr, nullptr);
      release_owner(o);
    }
    return mr;
  }

  static std::size_t lower(const std::vector<Op>& ops, const Key& k) {
    return std::size_t(std::lower_bound(ops.begin(), ops.end(), k,
                                        [](const Op& op, const Key& x) {
                                          return lt(op.key, x);
                                        }) -
                       ops.begin());
  }

  // Applies a batch node by node from the highest key down. Safe to run
  // from any number of threads at once.
  void help_batch(Desc* d, std::vector<Node*>* touched) {
    const auto& ops = d->ops;
    std::size_t i = ops.size();
    auto first_in = [&](Node* n) { return n->key ? lower(ops, *n->key) : 0; };
    while (i > 0) {
      if (d->load() > 0) return;
      const Key& key = ops[i - 1].key;
      Elem* e = find(key);
      if (e->is_temp) {
        help_temp(static_cast<Temp*>(e));
        continue;
      }
      auto* n = static_cast<Node*>(e);
      Rev* head = n->head.load();
      if (head->cell == d) {
        switch (head->kind) {
          case RevisionKind::LeftSplit:
            help_split(n, head);
            break;
          case RevisionKind::MergeTerminator:
            n = static_cast<Node*>(help_merge(head)->owner);
            break;
          case RevisionKind::Merge:
            if (!head->merge_done.load()) help_merge(head->terminator);
            break;
          default:
            break;
        }
        i = std::min(i, first_in(n));
        continue;
      }
      if (head->kind == RevisionKind::MergeTerminator) {
        help_terminator(n, head);
        continue;
      }
      if (head->pending()) {
        help_pending(n, head);
        continue;
      }
      Elem* next = read_next(n);
      if (next && next->is_temp) {
        help_temp(static_cast<Temp*>(next));
        continue;
      }
      if (next && !below(key, next)) continue;
      if (n->head.load() != head) continue;
      // A batch finished by others must not be applied again on top of
      // newer revisions.
      if (d->load() > 0) return;

      std::size_t lo = first_in(n);
      EntrySet es = head->entries();
      std::size_t before = es.size();
      bool removed = es.apply(std::span<const Op>(ops.data() + lo, i - lo));
      Resize act = decide(head, es.size(), !n->key, es.size() > before, removed);
      Rev* r = install(n, head, std::move(es), act, d, next, nullptr, d->weight);
      if (!r) continue;
      hooks_.on(Step::BatchNodeApplied);
      n = complete(n, r);
      if (touched) touched->push_back(n);
      i = std::min(i, first_in(n));
    }
  }

  // Number of nodes the sorted ops fall into, for the stats weight.
  std::size_t count_nodes(const std::vector<Op>& ops) {
    std::size_t count = 0;
    Elem* last = nullptr;
    for (const auto& op : ops) {
      Elem* e = find(op.key);
      if (e != last) ++count;
      last = e;
    }
    return count;
  }

  Resize decide(const Rev* head, std::size_t size_after, bool is_base,
                bool grows, bool shrinks) const {
    return decide_resize(cfg_.autoscaler, head->stats.reads(),
                         head->stats.updates(), size_after, is_base, grows,
                         shrinks);
  }

  // `share` scales the result; split halves each take half, so a node's
  // accumulated activity is divided rather than copied.
  static void init_stats(Rev* r, const Rev* pred, double t, double share = 1) {
    double reads, updates;
    stats_after_update(pred->stats.reads(), pred->stats.updates(), t, reads,
                       updates);
    r->stats.p_reads.store(share * reads, std::memory_order_relaxed);
    r->stats.p_updates.store(share * updates, std::memory_order_relaxed);
  }

  // Installs the successor of `head` on `n`. For single operations `d` is
  // null. Returns the new head or null if another thread got there first.
  Rev* install(Node* n, Rev* head, EntrySet es, Resize act, Desc* d,
               Elem* next, const Key* removed_key, double t) {
    VersionCell* cell = d;
    bool fresh = false;
    if (!cell && act != Resize::None) {
      cell = new VersionCell;
      cell->value.store(clock_.optimistic());
      fresh = true;
    }
    auto drop_fresh = [&] {
      if (fresh && cell->release()) delete cell;
    };
    Rev* exp = head;
    switch (act) {
      case Resize::None: {
        auto* r = new Rev(RevisionKind::Regular, std::move(es), cell);
        if (!d) r->own_cell.value.store(clock_.optimistic());
        r->batch = d;
        r->next.store(head);
        init_stats(r, head, t);
        if (n->head.compare_exchange_strong(exp, r)) return r;
        r->next.store(nullptr);
        delete r;
        return nullptr;
      }
      case Resize::Split: {
        EntrySet right = es.split_upper();
        auto* l = new Rev(RevisionKind::LeftSplit, std::move(es), cell);
        auto* r = new Rev(RevisionKind::RightSplit, std::move(right), cell);
        drop_fresh();
        l->sibling = r;
        r->sibling = l;
        l->batch = r->batch = d;
        init_stats(l, head, t, 0.5);
        init_stats(r, head, t, 0.5);
        l->next.store(head);
        if (acquire_link(head)) {
          r->next.store(head);
          if (n->head.compare_exchange_strong(exp, l)) {
            hooks_.on(Step::SplitLeftInstalled);
            return l;
          }
          release_link(head);
        }
        l->next.store(nullptr);
        r->next.store(nullptr);
        delete l;
        delete r;
        return nullptr;
      }
      case Resize::Merge: {
        auto* mt = new Rev(RevisionKind::MergeTerminator, EntrySet{}, cell);
        drop_fresh();
        mt->node = n;
        mt->upper_key = next ? next->key : std::nullopt;
        if (removed_key) mt->removed_key = *removed_key;
        mt->batch = d;
        mt->next.store(head);
        init_stats(mt, head, t);
        if (n->head.compare_exchange_strong(exp, mt)) {
          hooks_.on(Step::MergeTerminatorInstalled);
          return mt;
        }
        mt->next.store(nullptr);
        delete mt;
        return nullptr;
      }
    }
    return nullptr;
  }

  // Finishes a structure change started by installing `r` on `n`; returns
  // the node now holding the updated range.
  Node* complete(Node* n, Rev* r) {
    if (r->kind == RevisionKind::LeftSplit) help_split(n, r);
    if (r->kind == RevisionKind::MergeTerminator)
      return static_cast<Node*>(help_merge(r)->owner);
    return n;
  }

  void update(const Key& key, const std::optional<Value>& value) {
    auto g = epochs_.pin();
    double t = update_timer().tick();
    for (;;) {
      Elem* e = find(key);
      if (e->is_temp) {
        help_temp(static_cast<Temp*>(e));
        continue;
      }
      auto* n = static_cast<Node*>(e);
      Rev* head = n->head.load();
      if (head->kind == RevisionKind::MergeTerminator) {
        help_terminator(n, head);
        continue;
      }
      if (head->pending()) {
        help_pending(n, head);
        continue;
      }
      Elem* next = read_next(n);
      if (next && next->is_temp) {
        help_temp(static_cast<Temp*>(next));
        continue;
      }
      if (next && !below(key, next)) continue;
      if (n->head.load() != head) continue;
      bool present = head->find(key) != nullptr;
      if (!value && !present) return;
      EntrySet es = head->entries();
      if (value)
        es.put(key, *value);
      else
        es.remove(key);
      Resize act = decide(head, es.size(), !n->key, value && !present, !value);
      Rev* r = install(n, head, std::move(es), act, nullptr, next,
                       value ? nullptr : &key, t);
      if (!r) continue;
      Node* target = complete(n, r);
      finalize(r);
      perform_gc(target);
      return;
    }
  }

  // Latest reads use s = now() and return the first final revision. They
  // skip pending regular updates and only help structure changes; snapshot
  // reads help any pending head whose stamp they can reach.
  std::optional<Value> read(const Key& key, Version s, bool latest) {
    for (;;) {
      Spot sp = locate(key);
      Rev* r = sp.head;
      Version v = r->version();
      if (v < 0 && -v <= s && (!latest || r->kind != RevisionKind::Regular)) {
        help_pending(sp.node, r);
        continue;
      }
      note_read(r);
      while (r) {
        v = r->version();
        if (v > 0 && (latest || v <= s)) {
          const Value* p = r->find(key);
          return p ? std::optional<Value>(*p) : std::nullopt;
        }
        if (r->kind == RevisionKind::Merge && !lt(key, *r->right_key))
          r = r->right_next.load();
        else
          r = r->next.load();
      }
      return std::nullopt;
    }
  }

  void note_read(Rev* head) {
    thread_local std::uint32_t count = 0;
    if (++count < cfg_.autoscaler.read_sample) return;
    count = 0;
    head->stats.record_read(read_timer().tick());
  }

  // Revision-list GC.

  void raise_horizon(Version h) {
    Version cur = horizon_cache_.load();
    while (cur < h && !horizon_cache_.compare_exchange_weak(cur, h)) {
    }
  }

  Version cached_horizon() {
    thread_local std::uint32_t count = 0;
    Version h = horizon_cache_.load();
    if (h == 0 || ++count >= cfg_.horizon_refresh) {
      count = 0;
      raise_horizon(registry_.horizon(clock_));
      h = horizon_cache_.load();
    }
    return h;
  }

  // A long surviving list means the cached horizon may be lagging, so it
  // is recomputed on the spot.
  void perform_gc(Node* n) {
    if (gc_from(n->head.load(), cached_horizon()) <= 2) return;
    raise_horizon(registry_.horizon(clock_));
    gc_from(n->head.load(), horizon_cache_.load());
  }

  // Everything behind the first final revision at or below the horizon is
  // unreachable for current and future readers. Returns how many revisions
  // were kept on the left branch.
  std::size_t gc_from(Rev* r, Version h) {
    std::size_t kept = 0;
    while (r) {
      ++kept;
      Version v = r->version();
      if (v > 0 && v <= h) {
        cut(r->next);
        cut(r->right_next);
        return kept;
      }
      if (r->kind == RevisionKind::Merge) gc_from(r->right_next.load(), h);
      r = r->next.load();
    }
    return kept;
  }

  void cut(std::atomic<Rev*>& link) {
    Rev* t = link.load();
    if (t && link.compare_exchange_strong(t, nullptr)) release_link(t);
  }

  std::size_t list_length(const Rev* r, std::size_t depth, std::string& why) const {
    std::size_t best = 0;
    Version prev = 0;
    while (r) {
      ++depth;
      Version v = r->version();
      Version a = v < 0 ? -v : v;
      if (prev && a >= prev) why = "revision versions not decreasing";
      prev = a;
      best = depth;
      if (r->kind == RevisionKind::Merge)
        best = std::max(best, list_length(r->right_next.load(), depth, why));
      r = r->next.load();
    }
    return best;
  }

  MapConfig cfg_;
  Hooks hooks_;
  Clock clock_;
  EpochDomain epochs_;
  SnapshotRegistry registry_;
  std::atomic<Version> horizon_cache_{0};
  Node* base_;
};

}  // namespace jiffy
