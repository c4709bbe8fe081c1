#include <atomic>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include <jiffy/version_clock.hpp>

#include "manual_clock.hpp"

using jiffy::Version;
using jiffy::VersionCell;
using jiffy::VersionClock;
using jiffy::testing::ManualClock;
using jiffy::testing::ManualSource;

namespace {

// Clock whose now() equals the source time: origin read at 0, plus one,
// so set(t - 1) makes now() return t.
struct Manual {
  ManualSource src;
  ManualClock clock{src};
  void now_is(Version t) { src.set(t - 1); }
};

}  // namespace

TEST(VersionClock, SequentialCallsNeverDecrease) {
  VersionClock c;
  Version prev = c.now();
  for (int i = 0; i < 100000; ++i) {
    Version t = c.now();
    ASSERT_GE(t, prev);
    prev = t;
  }
}

TEST(VersionClock, FirstCallIsPositive) {
  VersionClock c;
  EXPECT_GE(c.now(), 1);
}

TEST(VersionClock, HappensBeforeKeepsOrder) {
  VersionClock c;
  for (int round = 0; round < 2000; ++round) {
    std::atomic<Version> published{0};
    std::atomic<bool> flag{false};
    std::thread a([&] {
      published.store(c.now(), std::memory_order_relaxed);
      flag.store(true, std::memory_order_release);
    });
    std::thread b([&] {
      while (!flag.load(std::memory_order_acquire)) std::this_thread::yield();
      Version tb = c.now();
      EXPECT_LE(published.load(std::memory_order_relaxed), tb);
    });
    a.join();
    b.join();
  }
}

TEST(VersionClock, OptimisticFromRead41) {
  Manual m;
  m.now_is(41);
  EXPECT_EQ(m.clock.now(), 41);
  EXPECT_EQ(m.clock.optimistic(), -42);
}

TEST(VersionClock, OptimisticFromRead0) {
  // The formula on a raw read of 0, as if the clock had no offset.
  Version t = 0;
  EXPECT_EQ(-(t + 1), -1);
  Manual m;
  m.now_is(1);
  EXPECT_EQ(m.clock.optimistic(), -2);
}

TEST(VersionClock, OptimisticExceedsCompletedFinals) {
  VersionClock c;
  std::atomic<Version> max_final{0};
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t)
    ts.emplace_back([&] {
      for (int i = 0; i < 20000; ++i) {
        Version seen = max_final.load();
        Version opt = c.optimistic();
        ASSERT_GT(-opt, seen);
        VersionCell cell;
        cell.value.store(opt);
        Version f = jiffy::finalize_cell(c, cell);
        Version cur = max_final.load();
        while (cur < f && !max_final.compare_exchange_weak(cur, f)) {
        }
      }
    });
  for (auto& t : ts) t.join();
}

TEST(VersionClock, ChooseFinalTakesNowWhenLater) {
  Manual m;
  m.now_is(100);
  EXPECT_EQ(m.clock.choose_final(-42), 100);
}

TEST(VersionClock, ChooseFinalWaitsForOptimisticBound) {
  Manual m;
  m.now_is(40);
  EXPECT_EQ(m.clock.choose_final(-42), 42);
  std::atomic<bool> done{false};
  std::thread w([&] {
    m.clock.wait_until(42);
    done.store(true);
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_FALSE(done.load());
  m.now_is(42);
  w.join();
  EXPECT_TRUE(done.load());
  EXPECT_GE(m.clock.now(), 42);
}

TEST(VersionClock, FinalizeCellWaitsAndSets) {
  Manual m;
  m.now_is(40);
  VersionCell cell;
  cell.value.store(-42);
  *m.src.tick = 1;
  EXPECT_EQ(jiffy::finalize_cell(m.clock, cell), 42);
  EXPECT_GE(m.clock.now(), 42);
}

TEST(VersionClock, RepeatedFinalsNondecreasing) {
  VersionClock c;
  Version prev = 0;
  for (int i = 0; i < 10000; ++i) {
    Version f = c.choose_final(c.optimistic());
    ASSERT_GE(f, prev);
    prev = f;
  }
}

TEST(VersionClock, RacingFinalizersAgree) {
  VersionClock c;
  for (int round = 0; round < 500; ++round) {
    VersionCell cell;
    cell.value.store(c.optimistic());
    Version a = 0, b = 0;
    std::thread ta([&] { a = jiffy::finalize_cell(c, cell); });
    std::thread tb([&] { b = jiffy::finalize_cell(c, cell); });
    ta.join();
    tb.join();
    ASSERT_EQ(a, b);
    ASSERT_EQ(a, cell.load());
  }
}
