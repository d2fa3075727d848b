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

#include "csetbench/prng.hpp"

#include <sys/random.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cstring>
#include <string>

namespace csetbench {
namespace {

constexpr std::array<PrngKind, 4> kAllKinds = {
    PrngKind::kFnv1aStream, PrngKind::kXorshiftKiss, PrngKind::kMix64,
    PrngKind::kLcg64};

}  // namespace

std::string_view to_string(PrngKind kind) noexcept {
  switch (kind) {
    case PrngKind::kFnv1aStream: return "fnv1a-stream";
    case PrngKind::kXorshiftKiss: return "xorshift-kiss";
    case PrngKind::kMix64: return "mix64";
    case PrngKind::kLcg64: return "lcg64";
  }
  return "unknown";
}

std::optional<PrngKind> parse_prng_kind(std::string_view name) noexcept {
  for (PrngKind k : kAllKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::span<const PrngKind> all_prng_kinds() noexcept { return kAllKinds; }

void Prng::reseed(std::uint64_t seed) noexcept {
  seed_ = seed;
  s_ = {};
  switch (kind_) {
    case PrngKind::kFnv1aStream:
    case PrngKind::kMix64:
    case PrngKind::kLcg64:
      s_[0] = seed;
      break;
    case PrngKind::kXorshiftKiss: {
      std::uint64_t sm = seed;
      s_[0] = splitmix64_next(sm);
      s_[1] = splitmix64_next(sm) >> 7;  // MWC carry stays below 2^57
      s_[2] = splitmix64_next(sm);
      s_[3] = splitmix64_next(sm);
      // the xorshift component is absorbed at zero
      if (s_[2] == 0) s_[2] = 362436362436362436ULL;
      break;
    }
  }
}

std::string_view to_string(EntropyKind kind) noexcept {
  return kind == EntropyKind::kOs ? "os" : "fixed";
}

std::optional<EntropyKind> parse_entropy_kind(std::string_view name) noexcept {
  if (name == "os") return EntropyKind::kOs;
  if (name == "fixed") return EntropyKind::kFixedCounter;
  return std::nullopt;
}

std::uint64_t EntropySource::next() {
  if (kind_ == EntropyKind::kFixedCounter) return start_ + calls_++;
  std::uint64_t v = 0;
  const ssize_t got = ::getrandom(&v, sizeof v, 0);
  if (got != static_cast<ssize_t>(sizeof v)) {
    throw EntropyError(std::string("getrandom failed: ") +
                       (got < 0 ? std::strerror(errno) : "short read"));
  }
  ++calls_;
  return v;
}

ReseedingPrng::ReseedingPrng(PrngKind kind, std::uint64_t seed,
                             EntropySource entropy, std::uint64_t interval)
    : inner_(kind, seed), entropy_(entropy), interval_(interval) {
  if (interval_ == 0) throw std::invalid_argument("reseed interval must be >= 1");
}

void ReseedingPrng::reseed() {
  inner_.reseed(entropy_.next());
  counter_ = 0;
  ++reseeds_;
}

PregenArrayPrng::PregenArrayPrng(PrngKind kind, std::uint64_t seed,
                                 std::size_t length) {
  if (length == 0) throw std::invalid_argument("pre-generated table must be non-empty");
  Prng g(kind, seed);
  values_.resize(length);
  for (auto& v : values_) v = g.next_u64();
}

PregenArrayPrng::PregenArrayPrng(std::vector<std::uint64_t> values)
    : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("pre-generated table must be non-empty");
}

KeyMapper::KeyMapper(std::uint64_t range, RangeMode mode) : range_(range), mode_(mode) {
  if (range == 0) throw std::invalid_argument("key range must be >= 1");
  if (mode == RangeMode::kMask && !std::has_single_bit(range))
    throw std::invalid_argument("mask mode requires a power-of-two key range, got " +
                                std::to_string(range));
}

std::uint64_t derive_thread_seed(std::uint64_t master, std::uint64_t thread_id,
                                 SeedPolicy policy) noexcept {
  if (policy == SeedPolicy::kShared) return master;
  // odd multiplier keeps the counter injective; fmix64 is a bijection
  return fmix64(master ^ ((thread_id + 1) * kWeylGamma));
}

AnyGenerator make_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.reseed_interval != 0 && spec.pregen_length != 0)
    throw std::invalid_argument("reseeding and pre-generated tables cannot be combined");
  if (spec.reseed_interval != 0) {
    EntropySource entropy = spec.entropy == EntropyKind::kOs
                                ? EntropySource::os()
                                : EntropySource::fixed_counter(fmix64(seed ^ 0x5eed5eed5eed5eedULL));
    return ReseedingPrng(spec.kind, seed, entropy, spec.reseed_interval);
  }
  if (spec.pregen_length != 0) return PregenArrayPrng(spec.kind, seed, spec.pregen_length);
  return Prng(spec.kind, seed);
}

}  // namespace csetbench
