// Runs every acceptance check and prints one PASS/FAIL line each.
// Exit status covers checks 1-8; check 9 is informational.
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "workloads.hpp"

using namespace jiffy;
using namespace jiffy::testing;

namespace {

struct Line {
  bool pass;
  std::string detail;
};

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

Line linearizability() {
  auto t0 = Clock::now();
  int violations = 0, inconclusive = 0;
  std::uint64_t max_steps = 0;
  std::string first;
  constexpr int kRuns = 500;
  for (int s = 1; s <= kRuns; ++s) {
    auto r = lin_run({.seed = std::uint64_t(s), .threads = 4, .ops_per_thread = 50, .keys = 8});
    max_steps = std::max(max_steps, r.check.steps);
    if (r.check.verdict == Verdict::Violation || !r.problems.empty()) {
      if (first.empty())
        first = "seed " + std::to_string(s) + ": " +
                (r.problems.empty() ? r.check.detail : r.problems.front());
      ++violations;
    }
    inconclusive += r.check.verdict == Verdict::Inconclusive;
  }
  double secs = since(t0);
  std::ostringstream o;
  o << kRuns << " runs x 200 ops, violations " << violations << ", inconclusive "
    << inconclusive << ", max checker steps " << max_steps << ", " << secs << " s";
  if (!first.empty()) o << "; first: " << first;
  return {violations == 0 && inconclusive * 50 <= kRuns && secs <= 600, o.str()};
}

Line differential() {
  auto t0 = Clock::now();
  int failed = 0;
  std::string first;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    auto r = differential_run(s, 10000);
    if (!r.ok && ++failed == 1) first = "seed " + std::to_string(s) + ": " + r.detail;
  }
  double secs = since(t0);
  std::ostringstream o;
  o << "100 seeds x 10000 ops, failures " << failed << ", " << secs << " s";
  if (!first.empty()) o << "; first: " << first;
  return {failed == 0 && secs <= 60, o.str()};
}

Line atomicity() {
  auto r = batch_atomicity(std::chrono::seconds(60), 8);
  std::ostringstream o;
  o << "60 s, 8 threads, batches " << r.batches << ", observations " << r.observations
    << ", mixed " << r.mixed;
  if (!r.example.empty()) o << "; " << r.example;
  return {r.mixed == 0 && r.observations > 0 && r.batches > 0, o.str()};
}

Line stability() {
  auto r = snapshot_stability(1000);
  std::ostringstream o;
  o << r.trials << " trials, failures " << r.failures << ", concurrent writes " << r.writes;
  return {r.trials == 1000 && r.failures == 0, o.str()};
}

Line fixtures() {
  int failed = 0;
  std::string detail;
  auto all = all_fixtures();
  for (auto& f : all) {
    auto r = f.run();
    if (!r.ok) {
      ++failed;
      detail += std::string("; ") + f.name + ": " + r.detail;
    }
  }
  return {failed == 0,
          std::to_string(all.size() - std::size_t(failed)) + "/" + std::to_string(all.size()) +
              " fixtures" + detail};
}

struct ConstantHash {
  std::uint16_t operator()(std::uint64_t) const noexcept { return 7; }
};
struct ModThreeHash {
  std::uint16_t operator()(std::uint64_t k) const noexcept { return std::uint16_t(k % 3); }
};

Line hash_index() {
  auto a = hash_index_property(10000, 1);
  auto b = hash_index_property<ModThreeHash>(1000, 2);
  auto c = hash_index_property<ConstantHash>(1000, 3);
  std::uint64_t failures = a.failures + b.failures + c.failures;
  std::ostringstream o;
  o << a.revisions << " revisions (" << a.lookups << " lookups), plus " << b.revisions + c.revisions
    << " with forced collisions (" << b.lookups + c.lookups << " lookups), failures "
    << failures;
  return {failures == 0 && a.revisions == 10000, o.str()};
}

Line autoscaler() {
  double w = autoscaler_median(0, 4, std::chrono::seconds(10));
  double r = autoscaler_median(3, 1, std::chrono::seconds(10));
  std::ostringstream o;
  o << "write-only median " << w << " (<= 50), 75% readers median " << r << " (>= 100)";
  return {w <= 50 && r >= 100, o.str()};
}

int run_stress(const std::string& path) {
  if (path.empty()) return -1;
  std::string cmd = "\"" + path + "\" --seconds 20 > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return rc;
}

Line gc(const std::string& asan, const std::string& tsan) {
  auto r = gc_boundedness(std::chrono::seconds(60), 2, 2, 128, 1000000);
  bool bounded = r.retired_bounded();
  std::size_t peak_retired = 0;
  for (auto x : r.retired_samples) peak_retired = std::max(peak_retired, x);
  int a = run_stress(asan), t = run_stress(tsan);
  std::ostringstream o;
  o << "60 s, max list length " << r.max_list_length << " (<= 8), retired peak " << peak_retired
    << (bounded ? " bounded" : " growing") << ", audit problems " << r.final_problems.size()
    << ", asan stress " << (a == 0 ? "clean" : a < 0 ? "not run" : "FAILED") << ", tsan stress "
    << (t == 0 ? "clean" : t < 0 ? "not run" : "FAILED");
  return {r.max_list_length <= 8 && bounded && r.final_problems.empty() && a == 0 && t == 0,
          o.str()};
}

Line scalability() {
  unsigned cores = std::thread::hardware_concurrency();
  double one = read_throughput(1, std::chrono::seconds(5));
  double eight = read_throughput(8, std::chrono::seconds(5));
  double ratio = eight / one;
  std::ostringstream o;
  o << "1 thread " << one << " ops/s, 8 threads " << eight << " ops/s, ratio " << ratio
    << " (>= 3), " << cores << " cores";
  if (cores < 8) o << "; needs 8 cores, not gating";
  return {ratio >= 3 && cores >= 8, o.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string asan, tsan;
  std::vector<int> only;
  app.add_option("--asan-stress", asan, "ASan/UBSan stress binary");
  app.add_option("--tsan-stress", tsan, "TSan stress binary");
  app.add_option("--only", only, "run just these checks");
  CLI11_PARSE(app, argc, argv);
  std::set<int> pick(only.begin(), only.end());

  struct Check {
    int id;
    const char* name;
    std::function<Line()> run;
  };
  std::vector<Check> checks = {
      {1, "linearizability", linearizability},
      {2, "differential oracle", differential},
      {3, "batch atomicity", atomicity},
      {4, "snapshot stability", stability},
      {5, "scripted fixtures", fixtures},
      {6, "hash index equivalence", hash_index},
      {7, "autoscaler direction", autoscaler},
      {8, "gc boundedness", [&] { return gc(asan, tsan); }},
      {9, "scalability", scalability},
  };
  bool ok = true;
  for (auto& c : checks) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    Line l = c.run();
    std::printf("%s %d %s: %s\n", l.pass ? "PASS" : "FAIL", c.id, c.name, l.detail.c_str());
    std::fflush(stdout);
    if (c.id <= 8 && !l.pass) ok = false;
  }
  return ok ? 0 : 1;
}
