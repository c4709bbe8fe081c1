#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "../map.hpp"
#include "baseline.hpp"
#include "fixed_bytes.hpp"
#include "zipf.hpp"

namespace jiffy::bench {

enum class Scenario { UpdateOnly, UpdateLookup, MixedShort, MixedLong };
enum class KeyDist { Uniform, Zipfian };
enum class IndexKind { Jiffy, Baseline };

struct WorkloadConfig {
  Scenario scenario = Scenario::UpdateOnly;
  IndexKind index = IndexKind::Jiffy;
  int threads = 1;
  // Updates per batch: 1 means single puts and removes.
  int batch = 1;
  // Batches on consecutive present keys instead of random ones.
  bool sequential = false;
  KeyDist dist = KeyDist::Uniform;
  double zipf_theta = 0.99;
  int key_bytes = 4;
  int value_bytes = 4;
  // Key universe; half of it is present after population.
  std::size_t dataset = 100000;
  double seconds = 10;
  double warmup = 2;
  // When non-zero, each thread runs exactly this many operations and the
  // duration and warm-up are ignored.
  std::uint64_t ops_per_thread = 0;
  std::uint64_t seed = 1;
};

struct Roles {
  int updaters = 0;
  int getters = 0;
  int scanners = 0;
  std::size_t scan_length = 0;
};

// A quarter of the threads update (at least one); mixed scenarios give
// another quarter to scans and the rest to gets.
inline Roles roles_for(const WorkloadConfig& c) {
  Roles r;
  int quarter = std::max(1, int(std::lround(c.threads / 4.0)));
  switch (c.scenario) {
    case Scenario::UpdateOnly:
      r.updaters = c.threads;
      break;
    case Scenario::UpdateLookup:
      r.updaters = std::min(quarter, c.threads);
      r.getters = c.threads - r.updaters;
      break;
    case Scenario::MixedShort:
    case Scenario::MixedLong:
      r.updaters = std::min(quarter, c.threads);
      r.scanners = std::min(quarter, c.threads - r.updaters);
      r.getters = c.threads - r.updaters - r.scanners;
      r.scan_length = c.scenario == Scenario::MixedShort ? 100 : 10000;
      break;
  }
  return r;
}

inline void validate(const WorkloadConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (c.threads < 1 || c.threads > 1024) fail("threads must be in [1, 1024]");
  if (c.batch != 1 && c.batch != 10 && c.batch != 100) fail("batch must be 1, 10 or 100");
  if (c.sequential && c.batch == 1) fail("sequential order needs batch 10 or 100");
  if (!(c.key_bytes == 4 && c.value_bytes == 4) && !(c.key_bytes == 16 && c.value_bytes == 100))
    fail("key/value bytes must be 4/4 or 16/100");
  if (c.dataset < 2 || c.dataset > (std::size_t(1) << 32)) fail("dataset must be in [2, 2^32]");
  if (!(c.zipf_theta > 0)) fail("zipf theta must be positive");
  if (c.ops_per_thread == 0 && !(c.seconds > 0)) fail("seconds must be positive");
  if (c.warmup < 0) fail("warmup must not be negative");
}

template <class T>
T encode(std::uint64_t v) {
  if constexpr (std::is_integral_v<T>)
    return T(v);
  else
    return T::from_u64(v);
}

// Benchmark surface over Map.
template <class Key, class Value>
class JiffyIndex {
 public:
  using M = Map<Key, Value>;

  void put(const Key& k, const Value& v) { m_.put(k, v); }
  void remove(const Key& k) { m_.remove(k); }
  void batch_update(const Batch<Key, Value>& b) { m_.batch_update(b); }
  std::optional<Value> get(const Key& k) { return m_.get(k); }

  template <class Emit>
  std::size_t scan_n(const Key& from, std::size_t n, Emit&& emit) {
    if (n == 0) return 0;
    typename M::Snapshot s(m_);
    std::size_t c = 0;
    m_.visit(from, std::nullopt, s.version(), [&](const Key& k, const Value& v) {
      emit(k, v);
      return ++c < n;
    });
    return c;
  }

  M& map() { return m_; }

 private:
  M m_;
};

template <class Key, class Value>
using BaselineIndex = LockedMap<Key, Value>;

struct RoleReport {
  std::string role;
  int threads = 0;
  // Basic operations: one per put, remove or get, one per batch entry and
  // one per scanned entry.
  std::uint64_t ops = 0;
  double ops_per_sec = 0;
  double p50_us = 0, p90_us = 0, p99_us = 0, max_us = 0;
};

struct Report {
  WorkloadConfig config;
  double seconds = 0;
  std::vector<RoleReport> roles;
  std::uint64_t total_ops = 0;
  double total_ops_per_sec = 0;
  std::size_t nodes = 0;
  double median_revision_size = 0;
  // (lower bound of power-of-two bucket, node count).
  std::vector<std::pair<std::size_t, std::size_t>> size_histogram;
  std::size_t final_entries = 0;
};

namespace detail {

enum class Role { Update, Get, Scan };

struct ThreadStats {
  std::uint64_t ops = 0;
  std::vector<std::uint32_t> latency_ns;
};

inline void percentiles(std::vector<std::uint32_t>& v, RoleReport& r) {
  if (v.empty()) return;
  std::sort(v.begin(), v.end());
  auto at = [&](double q) { return v[std::min(v.size() - 1, std::size_t(q * double(v.size())))] / 1000.0; };
  r.p50_us = at(0.5);
  r.p90_us = at(0.9);
  r.p99_us = at(0.99);
  r.max_us = v.back() / 1000.0;
}

inline std::vector<std::pair<std::size_t, std::size_t>> histogram(const std::vector<std::size_t>& sizes) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s : sizes) {
    std::size_t lo = 0;
    if (s > 0) {
      lo = 1;
      while (lo * 2 <= s) lo *= 2;
    }
    auto it = std::find_if(out.begin(), out.end(), [&](auto& p) { return p.first == lo; });
    if (it == out.end())
      out.emplace_back(lo, 1);
    else
      ++it->second;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Runs one workload on `index` and reports throughput per role.
template <class Key, class Value, class Index>
Report run(const WorkloadConfig& cfg, Index& index) {
  validate(cfg);
  using Clock = std::chrono::steady_clock;
  const Roles roles = roles_for(cfg);
  const std::uint64_t universe = cfg.dataset;

  {
    std::vector<std::uint64_t> keys(universe);
    for (std::uint64_t i = 0; i < universe; ++i) keys[i] = i;
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(keys.begin(), keys.end(), rng);
    for (std::uint64_t i = 0; i < universe / 2; ++i)
      index.put(encode<Key>(keys[i]), encode<Value>(keys[i]));
  }

  // Zipf ranks map to keys through a fixed permutation so hot keys are
  // spread over the key space.
  std::vector<std::uint32_t> perm;
  std::optional<ZipfGenerator> zipf;
  if (cfg.dist == KeyDist::Zipfian) {
    perm.resize(universe);
    for (std::uint64_t i = 0; i < universe; ++i) perm[i] = std::uint32_t(i);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(cfg.seed + 1));
    zipf.emplace(universe, cfg.zipf_theta);
  }

  std::vector<detail::Role> role_of;
  for (int i = 0; i < roles.updaters; ++i) role_of.push_back(detail::Role::Update);
  for (int i = 0; i < roles.getters; ++i) role_of.push_back(detail::Role::Get);
  for (int i = 0; i < roles.scanners; ++i) role_of.push_back(detail::Role::Scan);

  const bool by_count = cfg.ops_per_thread > 0;
  std::atomic<int> ready{0};
  std::atomic<bool> go{false}, measuring{by_count}, stop{false};
  std::vector<detail::ThreadStats> stats(role_of.size());

  auto worker = [&](std::size_t t) {
    std::mt19937_64 rng(cfg.seed * 1000003 + t);
    std::optional<ZipfGenerator> z = zipf;
    auto pick = [&]() -> std::uint64_t {
      if (z) return perm[(*z)(rng)];
      return rng() % universe;
    };
    auto& st = stats[t];
    st.latency_ns.reserve(1 << 16);
    detail::Role role = role_of[t];
    std::uint64_t value_seq = t << 40;
    std::vector<Key> keys;
    ready.fetch_add(1);
    while (!go.load()) std::this_thread::yield();
    for (std::uint64_t i = 0;; ++i) {
      if (by_count ? i >= cfg.ops_per_thread : stop.load(std::memory_order_relaxed)) break;
      bool sample = (i & 15) == 0;
      auto t0 = sample ? Clock::now() : Clock::time_point{};
      std::uint64_t basic = 0;
      switch (role) {
        case detail::Role::Update:
          if (cfg.batch == 1) {
            Key k = encode<Key>(pick());
            if (rng() & 1)
              index.put(k, encode<Value>(++value_seq));
            else
              index.remove(k);
            basic = 1;
          } else {
            keys.clear();
            if (cfg.sequential)
              index.scan_n(encode<Key>(pick()), std::size_t(cfg.batch),
                           [&](const Key& k, const Value&) { keys.push_back(k); });
            else
              for (int j = 0; j < cfg.batch; ++j) keys.push_back(encode<Key>(pick()));
            if (keys.empty()) keys.push_back(encode<Key>(pick()));
            Batch<Key, Value> b;
            for (const Key& k : keys) {
              if (rng() & 1)
                b.put(k, encode<Value>(++value_seq));
              else
                b.remove(k);
            }
            index.batch_update(b);
            basic = b.size();
          }
          break;
        case detail::Role::Get:
          (void)index.get(encode<Key>(pick()));
          basic = 1;
          break;
        case detail::Role::Scan:
          basic = index.scan_n(encode<Key>(pick()), roles.scan_length,
                               [](const Key&, const Value&) {});
          break;
      }
      if (measuring.load(std::memory_order_relaxed)) {
        st.ops += basic;
        if (sample)
          st.latency_ns.push_back(std::uint32_t(std::min<std::int64_t>(
              std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count(),
              UINT32_MAX)));
      }
    }
  };

  std::vector<std::thread> ts;
  for (std::size_t t = 0; t < role_of.size(); ++t) ts.emplace_back(worker, t);
  while (ready.load() < int(ts.size())) std::this_thread::yield();
  auto dur = [](double s) {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s));
  };
  go.store(true);
  Clock::time_point start;
  if (by_count) {
    start = Clock::now();
    for (auto& t : ts) t.join();
  } else {
    std::this_thread::sleep_for(dur(cfg.warmup));
    start = Clock::now();
    measuring.store(true);
    std::this_thread::sleep_for(dur(cfg.seconds));
    measuring.store(false);
  }
  double secs = std::chrono::duration<double>(Clock::now() - start).count();
  stop.store(true);
  if (!by_count)
    for (auto& t : ts) t.join();

  Report rep;
  rep.config = cfg;
  rep.seconds = secs;
  const char* names[] = {"update", "get", "scan"};
  int counts[] = {roles.updaters, roles.getters, roles.scanners};
  for (int r = 0; r < 3; ++r) {
    if (counts[r] == 0) continue;
    RoleReport rr;
    rr.role = names[r];
    rr.threads = counts[r];
    std::vector<std::uint32_t> lat;
    for (std::size_t t = 0; t < role_of.size(); ++t) {
      if (int(role_of[t]) != r) continue;
      rr.ops += stats[t].ops;
      lat.insert(lat.end(), stats[t].latency_ns.begin(), stats[t].latency_ns.end());
    }
    rr.ops_per_sec = secs > 0 ? double(rr.ops) / secs : 0;
    detail::percentiles(lat, rr);
    rep.total_ops += rr.ops;
    rep.roles.push_back(std::move(rr));
  }
  rep.total_ops_per_sec = secs > 0 ? double(rep.total_ops) / secs : 0;
  if constexpr (requires { index.map().inspect(); }) {
    auto in = index.map().inspect();
    rep.nodes = in.nodes;
    rep.median_revision_size = in.median_size();
    rep.size_histogram = detail::histogram(in.sizes);
    rep.final_entries = in.entries;
  } else {
    rep.final_entries = index.size();
  }
  return rep;
}

// Picks key/value types and the index from the configuration.
inline Report run(const WorkloadConfig& cfg) {
  validate(cfg);
  auto go = [&]<class K, class V>() {
    if (cfg.index == IndexKind::Jiffy) {
      JiffyIndex<K, V> idx;
      return run<K, V>(cfg, idx);
    }
    BaselineIndex<K, V> idx;
    return run<K, V>(cfg, idx);
  };
  if (cfg.key_bytes == 4) return go.template operator()<std::uint32_t, std::uint32_t>();
  return go.template operator()<FixedBytes<16>, FixedBytes<100>>();
}

}  // namespace jiffy::bench
