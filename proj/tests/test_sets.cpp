/*
 * Copyright 2026 The csetbench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <atomic>
#include <barrier>
#include <chrono>
#include <future>
#include <random>
#include <thread>

#include "csetbench/cset.hpp"
#include "csetbench/lockfree_bst.hpp"
#include "csetbench/registry.hpp"
#include "csetbench/ticket_bst.hpp"

namespace csetbench {
namespace {

TEST(WideSum, DecimalRoundTrip) {
  const WideSum big = static_cast<WideSum>(~std::uint64_t{0}) * 1000 + 7;
  EXPECT_EQ(to_string(big), "18446744073709551615007");
  EXPECT_EQ(parse_wide(to_string(big)), big);
  EXPECT_EQ(parse_wide(to_string(-big)), -big);
  EXPECT_EQ(to_string(WideSum{0}), "0");
  EXPECT_THROW(parse_wide("12a"), std::invalid_argument);
  EXPECT_THROW(parse_wide("-"), std::invalid_argument);
}

TEST(Ledger, AccumulatesOnlyWhatIsRecorded) {
  ChecksumLedger a, b;
  a.record_insert(5);
  a.record_delete(2);
  b.record_insert(~std::uint64_t{0});
  b.record_insert(~std::uint64_t{0});
  a += b;
  EXPECT_EQ(a.inserted_count, 3u);
  EXPECT_EQ(a.deleted_count, 1u);
  EXPECT_EQ(a.inserted_sum, WideSum{5} + 2 * static_cast<WideSum>(~std::uint64_t{0}));
  EXPECT_EQ(a.deleted_sum, 2);
}

TEST(Reference, SetSemantics) {
  SequentialReferenceSet s;
  EXPECT_FALSE(s.contains(5));
  EXPECT_TRUE(s.insert(5));
  EXPECT_FALSE(s.insert(5));
  EXPECT_TRUE(s.contains(5));
  EXPECT_TRUE(s.remove(5));
  EXPECT_FALSE(s.remove(5));
  EXPECT_EQ(s.size(), 0u);
}

TEST(Registry, NamesAndFactory) {
  const auto names = registered_sets();
  ASSERT_EQ(names.size(), 2u);
  for (auto n : names) {
    auto s = make_set(n);
    EXPECT_EQ(s->name(), n);
  }
  EXPECT_THROW(make_set("skiplist"), std::invalid_argument);
}

class SetTest : public ::testing::TestWithParam<std::string_view> {
 protected:
  std::unique_ptr<ConcurrentSet> make(ReclaimMode mode = ReclaimMode::kEpoch) {
    return make_set(GetParam(), SetOptions{mode, false});
  }
};

TEST_P(SetTest, BasicExamples) {
  auto s = make();
  EXPECT_FALSE(s->contains(5));
  EXPECT_TRUE(s->insert(5));
  EXPECT_TRUE(s->contains(5));
  EXPECT_FALSE(s->insert(5));
  EXPECT_TRUE(s->remove(5));
  EXPECT_FALSE(s->remove(5));
  EXPECT_FALSE(s->contains(5));
  EXPECT_TRUE(s->audit().ok);
}

TEST_P(SetTest, ExtremeKeys) {
  auto s = make();
  for (Key k : {Key{1}, kMaxUserKey, kMaxUserKey - 1, Key{2}}) EXPECT_TRUE(s->insert(k));
  EXPECT_EQ(s->keys(), (std::vector<Key>{1, 2, kMaxUserKey - 1, kMaxUserKey}));
  EXPECT_TRUE(s->remove(kMaxUserKey));
  EXPECT_TRUE(s->remove(1));
  EXPECT_EQ(s->keys(), (std::vector<Key>{2, kMaxUserKey - 1}));
}

TEST_P(SetTest, OracleReplay) {
  std::mt19937_64 rng(17);
  for (int trace = 0; trace < 5; ++trace) {
    auto s = make();
    SequentialReferenceSet ref;
    for (int i = 0; i < 10'000; ++i) {
      const Key k = rng() % 1000 + 1;
      switch (rng() % 3) {
        case 0: ASSERT_EQ(s->contains(k), ref.contains(k)) << i; break;
        case 1: ASSERT_EQ(s->insert(k), ref.insert(k)) << i; break;
        default: ASSERT_EQ(s->remove(k), ref.remove(k)) << i; break;
      }
    }
    EXPECT_EQ(s->keys(), ref.keys());
    const auto a = s->audit();
    EXPECT_TRUE(a.ok) << a.problem;
    EXPECT_EQ(a.key_sum, ref.key_sum());
    EXPECT_EQ(a.leaf_nodes, a.internal_nodes + 1);
  }
}

TEST_P(SetTest, SameKeyHammerExactlyOneWinner) {
  constexpr int kThreads = 64;
  auto s = make();
  for (Key k = 1; k <= 20; ++k) {
    std::atomic<int> wins{0};
    std::barrier sync(kThreads);
    std::vector<std::thread> ts;
    for (int t = 0; t < kThreads; ++t)
      ts.emplace_back([&] {
        sync.arrive_and_wait();
        if (s->insert(k)) wins.fetch_add(1);
      });
    for (auto& t : ts) t.join();
    ASSERT_EQ(wins.load(), 1) << "insert key " << k;

    std::atomic<int> removed{0};
    ts.clear();
    for (int t = 0; t < kThreads; ++t)
      ts.emplace_back([&] {
        sync.arrive_and_wait();
        if (s->remove(k)) removed.fetch_add(1);
      });
    for (auto& t : ts) t.join();
    ASSERT_EQ(removed.load(), 1) << "remove key " << k;
  }
  EXPECT_TRUE(s->keys().empty());
}

// Per-key ledgers on a tiny range: net effective inserts per key must equal
// final membership, starting from empty.
TEST_P(SetTest, ConcurrentConservation) {
  constexpr int kThreads = 8;
  constexpr Key kRange = 64;
  constexpr int kOpsPerThread = 100'000 / kThreads;
  for (ReclaimMode mode : {ReclaimMode::kEpoch, ReclaimMode::kNone}) {
    auto s = make(mode);
    std::vector<std::array<std::int64_t, kRange + 1>> net(kThreads);
    std::vector<std::thread> ts;
    for (int t = 0; t < kThreads; ++t)
      ts.emplace_back([&, t] {
        net[t].fill(0);
        std::mt19937_64 rng(1000 + t);
        for (int i = 0; i < kOpsPerThread; ++i) {
          const Key k = rng() % kRange + 1;
          if (rng() & 1) {
            if (s->insert(k)) ++net[t][k];
          } else if (s->remove(k)) {
            --net[t][k];
          }
        }
      });
    for (auto& t : ts) t.join();

    const auto final_keys = s->keys();
    for (Key k = 1; k <= kRange; ++k) {
      std::int64_t d = 0;
      for (const auto& n : net) d += n[k];
      const bool member = std::binary_search(final_keys.begin(), final_keys.end(), k);
      ASSERT_TRUE(d == 0 || d == 1) << "key " << k << " net " << d;
      ASSERT_EQ(d, member ? 1 : 0) << "key " << k;
    }
    const auto a = s->audit();
    EXPECT_TRUE(a.ok) << a.problem;
  }
}

TEST_P(SetTest, ChecksumArithmeticExample) {
  auto s = make();
  PrefillBaseline base;
  for (Key k = 1; k <= 10; ++k) {
    ASSERT_TRUE(s->insert(k));
    base.key_sum += k;
    ++base.count;
  }
  ChecksumLedger l;
  ASSERT_TRUE(s->insert(11));
  l.record_insert(11);
  ASSERT_TRUE(s->remove(3));
  l.record_delete(3);
  const auto r = validate_checksum(std::span<const ChecksumLedger>(&l, 1), base, *s);
  EXPECT_EQ(r.expected_sum, 63);
  EXPECT_EQ(r.final_sum, 63);
  EXPECT_EQ(r.expected_count, 10);
  EXPECT_TRUE(r.pass());
}

TEST_P(SetTest, ZeroOpChecksumPasses) {
  auto s = make();
  PrefillBaseline base;
  for (Key k : {4, 8, 15, 16, 23, 42}) {
    s->insert(k);
    base.key_sum += k;
    ++base.count;
  }
  const auto r = validate_checksum({}, base, *s);
  EXPECT_EQ(r.final_sum, base.key_sum);
  EXPECT_TRUE(r.pass());
}

TEST_P(SetTest, SkipUnlinkFaultCaught) {
  auto s = make_set(GetParam(), SetOptions{ReclaimMode::kEpoch, true});
  ASSERT_TRUE(s->insert(7));
  ChecksumLedger l;
  l.record_insert(7);
  ASSERT_TRUE(s->remove(7));  // lies
  l.record_delete(7);
  EXPECT_TRUE(s->contains(7));
  const auto r = validate_checksum(std::span<const ChecksumLedger>(&l, 1), {}, *s);
  EXPECT_FALSE(r.pass());
  EXPECT_TRUE(r.structure_ok);
  s->set_skip_unlink(false);
  EXPECT_TRUE(s->remove(7));
  EXPECT_FALSE(s->contains(7));
}

TEST_P(SetTest, EpochModeReturnsToSentinelBaseline) {
  auto s = make(ReclaimMode::kEpoch);
  const auto before = s->reclaimer().counters();
  for (int i = 0; i < 100'000; ++i) {
    const Key k = static_cast<Key>(i % 5000) + 1;
    ASSERT_TRUE(s->insert(k));
    ASSERT_TRUE(s->remove(k));
  }
  s->reclaimer().drain();
  const auto after = s->reclaimer().counters();
  EXPECT_EQ(after.live_estimate, before.live_estimate);
  EXPECT_EQ(after.freed, after.retired);
  EXPECT_EQ(after.retired, 200'000u);
}

TEST_P(SetTest, LeakModeNeverFrees) {
  auto s = make(ReclaimMode::kNone);
  for (Key k = 1; k <= 1000; ++k) {
    s->insert(k);
    s->remove(k);
  }
  s->reclaimer().drain();
  const auto c = s->reclaimer().counters();
  EXPECT_EQ(c.freed, 0u);
  EXPECT_EQ(c.retired, 2000u);
}

INSTANTIATE_TEST_SUITE_P(Registered, SetTest, ::testing::Values("lf-bst", "bst-tk"),
                         [](const auto& info) {
                           return info.param == "lf-bst" ? std::string("LfBst") : std::string("BstTk");
                         });

TEST(LockFreeBst, SeekExamples) {
  LockFreeBst t;
  auto v = t.seek(5);
  EXPECT_EQ(v.leaf, LockFreeBst::kInf0);
  t.insert(5);
  EXPECT_EQ(t.seek(5).leaf, 5u);

  std::mt19937_64 rng(3);
  SequentialReferenceSet ref;
  ref.insert(5);
  for (int i = 0; i < 1000; ++i) {
    const Key k = rng() % 2000 + 1;
    t.insert(k);
    ref.insert(k);
  }
  for (Key k = 1; k <= 2000; ++k) ASSERT_EQ(t.seek(k).leaf == k, ref.contains(k)) << k;
}

// A delete parked between FLAG and splice must not block anyone: other
// threads help finish it.
TEST(LockFreeBst, ParkedDeleteIsHelped) {
  LockFreeBst t;
  for (Key k = 1; k <= 64; ++k) t.insert(k);

  std::promise<void> parked;
  std::promise<void> release;
  auto release_f = release.get_future().share();
  std::atomic<std::thread::id> victim{};
  t.set_after_flag_hook([&](Key) {
    if (std::this_thread::get_id() != victim.load()) return;
    parked.set_value();
    release_f.wait();
  });

  std::thread slow([&] {
    victim.store(std::this_thread::get_id());
    EXPECT_TRUE(t.remove(32));
  });
  parked.get_future().wait();

  auto others = std::async(std::launch::async, [&] {
    t.contains(32);  // either answer linearizes: the parked remove is still in flight
    EXPECT_FALSE(t.remove(32));
    EXPECT_TRUE(t.remove(31));  // sibling: must splice through the flagged edge
    EXPECT_TRUE(t.insert(32));
    EXPECT_TRUE(t.insert(1000));
    for (Key k = 33; k <= 64; ++k) EXPECT_TRUE(t.remove(k));
  });
  const auto status = others.wait_for(std::chrono::seconds(20));
  EXPECT_EQ(status, std::future_status::ready) << "other threads blocked by a parked delete";
  release.set_value();
  slow.join();
  if (status != std::future_status::ready) others.wait();

  t.set_after_flag_hook(nullptr);
  std::vector<Key> expect;
  for (Key k = 1; k <= 30; ++k) expect.push_back(k);
  expect.push_back(32);
  expect.push_back(1000);
  EXPECT_EQ(t.keys(), expect);
  EXPECT_TRUE(t.audit().ok) << t.audit().problem;
}

TEST(TicketLock, VersionsAndTryLock) {
  TicketLock l;
  auto s = l.snapshot();
  EXPECT_FALSE(s.locked());
  EXPECT_EQ(s.version(), 0u);
  EXPECT_TRUE(l.try_lock_at(0));
  EXPECT_TRUE(l.snapshot().locked());
  EXPECT_FALSE(l.try_lock_at(0));
  l.unlock();
  EXPECT_EQ(l.snapshot().version(), 1u);
  EXPECT_FALSE(l.snapshot().locked());
  EXPECT_FALSE(l.try_lock_at(0));  // stale version
  l.lock();
  EXPECT_TRUE(l.snapshot().locked());
  l.unlock();
  EXPECT_EQ(l.snapshot().version(), 2u);
}

TEST(TicketLock, MutualExclusion) {
  TicketLock l;
  std::int64_t counter = 0;
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t)
    ts.emplace_back([&] {
      for (int i = 0; i < 20'000; ++i) {
        l.lock();
        ++counter;
        l.unlock();
      }
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(counter, 160'000);
}

TEST(TicketBst, LocksTakenRootToLeaf) {
  LockOrderChecker::reset();
  LockOrderChecker::enable(true);
  TicketBst t;
  std::vector<std::thread> ts;
  for (int j = 0; j < 8; ++j)
    ts.emplace_back([&, j] {
      std::mt19937_64 rng(j);
      for (int i = 0; i < 20'000; ++i) {
        const Key k = rng() % 128 + 1;
        (rng() & 1) ? t.insert(k) : t.remove(k);
      }
    });
  for (auto& th : ts) th.join();
  LockOrderChecker::enable(false);
  EXPECT_EQ(LockOrderChecker::violations(), 0u);
  EXPECT_TRUE(t.audit().ok) << t.audit().problem;
}

TEST(TicketBst, CheckerFlagsInversion) {
  LockOrderChecker::reset();
  LockOrderChecker::enable(true);
  LockOrderChecker::on_acquire(5);
  LockOrderChecker::on_acquire(3);
  LockOrderChecker::on_release(3);
  LockOrderChecker::on_release(5);
  LockOrderChecker::enable(false);
  EXPECT_EQ(LockOrderChecker::violations(), 1u);
  LockOrderChecker::reset();
}

}  // namespace
}  // namespace csetbench
