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

// Microbenchmarks for the generators and set operations, including the
// sequential reference set as a single-thread baseline.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "csetbench/cset.hpp"
#include "csetbench/prng.hpp"
#include "csetbench/registry.hpp"

namespace {

using namespace csetbench;

void BM_PrngNext(benchmark::State& state) {
  const auto kind = all_prng_kinds()[static_cast<std::size_t>(state.range(0))];
  Prng g(kind, 42);
  for (auto _ : state) benchmark::DoNotOptimize(g.next_u64());
  state.SetLabel(std::string(to_string(kind)));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PrngNext)->DenseRange(0, 3);

void BM_ReseedingPrng(benchmark::State& state) {
  ReseedingPrng g(PrngKind::kMix64, 42, EntropySource::os(), static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(g.next_u64());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ReseedingPrng)->Arg(1000)->Arg(1'000'000);

constexpr std::uint64_t kRange = 20'000;

// Random insertion order: sorted keys would turn an unbalanced tree into a list.
template <class S>
void half_fill(S& set) {
  Prng g(PrngKind::kMix64, 1);
  const KeyMapper map(kRange);
  std::uint64_t n = 0;
  while (n < kRange / 2) n += set.insert(map(g.next_u64()));
}

template <class S>
void mixed_ops(benchmark::State& state, S& set, std::uint64_t seed) {
  Prng g(PrngKind::kMix64, seed);
  const KeyMapper map(kRange);
  for (auto _ : state) {
    const Key k = map(g.next_u64());
    switch (g.next_u64() % 4) {
      case 0: benchmark::DoNotOptimize(set.insert(k)); break;
      case 1: benchmark::DoNotOptimize(set.remove(k)); break;
      default: benchmark::DoNotOptimize(set.contains(k)); break;
    }
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_ReferenceSet(benchmark::State& state) {
  SequentialReferenceSet ref;
  half_fill(ref);
  mixed_ops(state, ref, 7);
}
BENCHMARK(BM_ReferenceSet);

// One half-full set per structure, shared by all benchmark threads.
ConcurrentSet& shared_set(std::size_t idx) {
  static const auto sets = [] {
    std::vector<std::unique_ptr<ConcurrentSet>> v;
    for (auto name : registered_sets()) {
      v.push_back(make_set(name));
      half_fill(*v.back());
    }
    return v;
  }();
  return *sets[idx];
}

void BM_ConcurrentSet(benchmark::State& state) {
  const auto idx = static_cast<std::size_t>(state.range(0));
  mixed_ops(state, shared_set(idx), 100 + static_cast<std::uint64_t>(state.thread_index()));
  if (state.thread_index() == 0) state.SetLabel(std::string(registered_sets()[idx]));
}
BENCHMARK(BM_ConcurrentSet)->DenseRange(0, 1)->Threads(1)->Threads(4)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
