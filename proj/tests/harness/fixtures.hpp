#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <jiffy/jiffy.hpp>

#include "schedule.hpp"
#include "workloads.hpp"

// Scripted interleavings of the split, merge and batch protocols. Each
// fixture pauses one thread at a protocol step, runs another thread
// through the paused state, then checks the end state.
namespace jiffy::testing {

using FMap = Map<int, int, std::less<int>, DefaultKeyHash<int>, CallbackHooks>;

// Target size 4: a node splits above 6 entries and merges below 2.
inline MapConfig fixture_config() {
  MapConfig c = tiny_nodes(4);
  c.fixed_height = 1;
  return c;
}

inline std::thread with_role(int role, std::function<void()> f) {
  return std::thread([role, f = std::move(f)] {
    thread_role() = role;
    f();
  });
}

struct Checker {
  std::ostringstream out;
  bool ok = true;

  void expect(bool c, const std::string& what) {
    if (!c) {
      ok = false;
      out << what << "; ";
    }
  }
  Outcome result() { return {ok, out.str()}; }
};

inline std::vector<std::pair<int, int>> as_vector(const std::map<int, int>& m) {
  return {m.begin(), m.end()};
}

inline void expect_contents(Checker& c, FMap& m, const std::map<int, int>& want,
                            const std::string& tag) {
  c.expect(m.scan(0, 1000) == as_vector(want), tag + ": scan differs");
  for (int k = 0; k < 100; k += 5) {
    auto it = want.find(k);
    auto got = m.get(k);
    bool same = it == want.end() ? !got : got == it->second;
    c.expect(same, tag + ": get " + std::to_string(k));
  }
}

inline void expect_clean(Checker& c, FMap& m) {
  auto in = m.inspect();
  for (auto& p : in.problems) c.expect(false, "audit: " + p);
}

inline std::vector<std::optional<int>> node_keys(FMap& m) {
  std::vector<std::optional<int>> out;
  for (auto& n : m.layout()) out.push_back(n.key);
  return out;
}

// A splits the base node and stops at `step`; B then updates the same
// node and must finish the split for A. Exactly one right node appears.
inline Outcome split_race(Step step) {
  Script script;
  FMap m(fixture_config(), script.hooks());
  std::map<int, int> want;
  for (int k = 10; k <= 60; k += 10) m.put(k, k), want[k] = k;
  auto pa = script.pause(1, step);
  auto a = with_role(1, [&] { m.put(70, 70); });
  want[70] = 70;
  Checker c;
  c.expect(pa->wait_arrival(), "A never reached the step");
  auto b = with_role(2, [&] { m.put(15, 15); });
  want[15] = 15;
  b.join();
  pa->resume();
  a.join();
  int created = script.count(1, Step::SplitNodeCreated) +
                script.count(2, Step::SplitNodeCreated);
  c.expect(created == 1, "split nodes created: " + std::to_string(created));
  c.expect(node_keys(m) == std::vector<std::optional<int>>{std::nullopt, 50},
           "node keys are not {base, 50}");
  expect_contents(c, m, want, "end");
  expect_clean(c, m);
  return c.result();
}

// Builds base [10, 40] and node 50 holding {50, 70}.
inline void two_nodes(FMap& m, std::map<int, int>& want) {
  for (int k = 10; k <= 70; k += 10) m.put(k, k), want[k] = k;
  m.remove(60);
  want.erase(60);
}

// A put on the base node is pending when the node after it starts to
// merge; the merging thread must complete the put first and build the
// merge revision on top of it.
inline Outcome merge_over_pending_put() {
  Script script;
  FMap m(fixture_config(), script.hooks());
  std::map<int, int> want;
  two_nodes(m, want);
  Checker c;
  c.expect(node_keys(m) == std::vector<std::optional<int>>{std::nullopt, 50},
           "setup layout");
  // Keeps the base node's history from being collected.
  FMap::Snapshot hold(m);
  auto pp = script.pause(1, Step::BeforeFinalize);
  auto p = with_role(1, [&] { m.put(20, 99); });
  want[20] = 99;
  c.expect(pp->wait_arrival(), "P never paused");
  auto mth = with_role(2, [&] { m.remove(70); });
  want.erase(70);
  mth.join();
  auto lay = m.layout();
  c.expect(lay.size() == 1, "merged node still linked");
  if (!lay.empty() && lay[0].history.size() >= 2) {
    auto& h = lay[0].history;
    c.expect(h[0].kind == RevisionKind::Merge, "base head is not a merge");
    c.expect(h[0].right_key == 50, "merge right key is not 50");
    c.expect(h[1].kind == RevisionKind::Regular && h[1].version > 0,
             "merge does not sit on the finished put");
    c.expect(h[1].version < h[0].version, "put not ordered before merge");
  } else {
    c.expect(false, "base history too short");
  }
  c.expect(m.get(20) == 99, "pending put lost");
  pp->resume();
  p.join();
  expect_contents(c, m, want, "end");
  expect_clean(c, m);
  return c.result();
}

// Two threads complete the same merge; only one merge revision wins.
inline Outcome merge_race() {
  Script script;
  FMap m(fixture_config(), script.hooks());
  std::map<int, int> want;
  two_nodes(m, want);
  auto pa = script.pause(1, Step::MergeBeforeRevisionCas);
  auto a = with_role(1, [&] { m.remove(70); });
  want.erase(70);
  Checker c;
  c.expect(pa->wait_arrival(), "A never paused");
  std::optional<int> seen;
  auto b = with_role(2, [&] { seen = m.get(50); });
  b.join();
  c.expect(seen == 50, "helper read wrong value");
  pa->resume();
  a.join();
  int installed = script.count(1, Step::MergeRevisionInstalled) +
                  script.count(2, Step::MergeRevisionInstalled);
  c.expect(installed == 1, "merge revisions installed: " + std::to_string(installed));
  auto lay = m.layout();
  c.expect(lay.size() == 1, "merged node still linked");
  if (!lay.empty() && lay[0].history.size() >= 2) {
    c.expect(lay[0].history[0].kind == RevisionKind::Merge, "head is not a merge");
    c.expect(lay[0].history[1].kind != RevisionKind::Merge, "merge applied twice");
  }
  expect_contents(c, m, want, "end");
  expect_clean(c, m);
  return c.result();
}

// A stalls just before linking its temp split node. B completes the
// split and merges the new node back, so the base node's successor is
// the same as when A read it. A's link then succeeds on a finished
// split; the stale temp must be dropped without creating a node.
// With `reads_while_stale`, B reads while the stale temp is linked.
inline Outcome aba_replay(bool reads_while_stale) {
  Script script;
  FMap m(fixture_config(), script.hooks());
  std::map<int, int> want;
  for (int k = 10; k <= 60; k += 10) m.put(k, k), want[k] = k;
  auto before_cas = script.pause(1, Step::SplitBeforeTempCas);
  auto inserted = script.pause(1, Step::SplitTempInserted);
  auto a = with_role(1, [&] { m.put(70, 70); });
  want[70] = 70;
  Checker c;
  c.expect(before_cas->wait_arrival(), "A never paused before its CAS");
  auto b = with_role(2, [&] {
    m.put(15, 15);
    c.expect(node_keys(m) == std::vector<std::optional<int>>{std::nullopt, 50},
             "B did not finish the split");
    m.remove(60);
    m.remove(70);
  });
  b.join();
  want[15] = 15;
  want.erase(60);
  want.erase(70);
  c.expect(node_keys(m) == std::vector<std::optional<int>>{std::nullopt},
           "B did not merge the node back");
  before_cas->resume();
  c.expect(inserted->wait_arrival(), "A's stale temp was not linked");
  if (reads_while_stale) {
    auto r = with_role(3, [&] { expect_contents(c, m, want, "stale temp"); });
    r.join();
  }
  inserted->resume();
  a.join();
  int created = script.count(1, Step::SplitNodeCreated);
  c.expect(created == 0, "A created a node from a stale temp");
  c.expect(node_keys(m) == std::vector<std::optional<int>>{std::nullopt},
           "layout changed by stale temp");
  expect_contents(c, m, want, "end");
  expect_clean(c, m);
  return c.result();
}

// Batch B1 = {remove 25, put 60} spans two nodes; 25 is absent when B1
// starts. Batch B2 = {put 25} runs while B1 is stopped at `step`. The
// outcome must follow the order of the two final versions, and a
// snapshot that includes both must agree with it.
inline Outcome lost_remove_replay(Step step) {
  Script script;
  FMap m(fixture_config(), script.hooks());
  std::map<int, int> want;
  two_nodes(m, want);
  auto p1 = script.pause(1, step);
  auto t1 = with_role(1, [&] {
    FMap::BatchType b;
    b.remove(25);
    b.put(60, 600);
    m.batch_update(b);
  });
  Checker c;
  c.expect(p1->wait_arrival(), "B1 never paused");
  std::optional<FMap::Snapshot> between;
  auto t2 = with_role(2, [&] {
    FMap::BatchType b;
    b.put(25, 250);
    m.batch_update(b);
    between.emplace(m);
  });
  t2.join();
  p1->resume();
  t1.join();
  FMap::Snapshot after(m);
  bool b1_last = step == Step::BatchNodeApplied;
  auto latest25 = m.get(25);
  if (b1_last) {
    // B1 was still being applied when B2 finished: B1 is later.
    c.expect(!latest25, "lost remove: 25 still present after B1");
    c.expect(!m.get(25, after), "lost remove visible in snapshot");
    c.expect(m.get(25, *between) == 250, "snapshot between batches lost B2");
    c.expect(!m.get(60, *between), "snapshot between batches saw half of B1");
  } else {
    // B1 was fully applied and B2 had to finish it first.
    c.expect(latest25 == 250, "B2 lost");
    c.expect(m.get(25, after) == 250, "snapshot disagrees on 25");
    c.expect(m.get(60, *between) == 600, "snapshot after B1 missed its put");
  }
  c.expect(m.get(60) == 600, "B1 put lost");
  between.reset();
  expect_clean(c, m);
  return c.result();
}

struct NamedFixture {
  const char* name;
  std::function<Outcome()> run;
};

inline std::vector<NamedFixture> all_fixtures() {
  return {
      {"split race, stop before temp CAS", [] { return split_race(Step::SplitBeforeTempCas); }},
      {"split race, stop after temp linked", [] { return split_race(Step::SplitTempInserted); }},
      {"split race, stop after node created", [] { return split_race(Step::SplitNodeCreated); }},
      {"split race, stop after left split installed",
       [] { return split_race(Step::SplitLeftInstalled); }},
      {"merge over pending put", [] { return merge_over_pending_put(); }},
      {"merge race", [] { return merge_race(); }},
      {"aba replay", [] { return aba_replay(false); }},
      {"aba replay, reads on stale temp", [] { return aba_replay(true); }},
      {"lost remove, B1 mid-apply", [] { return lost_remove_replay(Step::BatchNodeApplied); }},
      {"lost remove, B1 before finalize",
       [] { return lost_remove_replay(Step::BeforeFinalize); }},
  };
}

}  // namespace jiffy::testing
