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

#pragma once

/// Pseudo-random generators used by the benchmark harness and the bit-pattern
/// analysis tool.
///
/// Every generator is a single-owner object exposing `next_u64()`. Worker
/// threads own their instances exclusively; nothing here is synchronized.

#include <array>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace csetbench {

/// Set element. 0 is reserved as "no key" inside the trees.
using Key = std::uint64_t;

template <class G>
concept BitSource64 = requires(G& g) {
  { g.next_u64() } -> std::same_as<std::uint64_t>;
};

enum class PrngKind : std::uint8_t {
  kFnv1aStream,   // iterated FNV1a; odd/even outputs strictly alternate
  kXorshiftKiss,  // Marsaglia KISS64 (MWC + xorshift + congruential)
  kMix64,         // Weyl counter through the MurmurHash3 64-bit finalizer
  kLcg64,         // Knuth MMIX linear congruential generator, raw output
};

std::string_view to_string(PrngKind kind) noexcept;
std::optional<PrngKind> parse_prng_kind(std::string_view name) noexcept;
std::span<const PrngKind> all_prng_kinds() noexcept;

/// MurmurHash3 fmix64. A bijection on 64-bit words with full avalanche.
constexpr std::uint64_t fmix64(std::uint64_t x) noexcept {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

constexpr std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
inline constexpr std::uint64_t kWeylGamma = 0x9e3779b97f4a7c15ULL;
inline constexpr std::uint64_t kLcgMultiplier = 6364136223846793005ULL;
inline constexpr std::uint64_t kLcgIncrement = 1442695040888963407ULL;

/// Per-thread generator state. The output sequence is a pure function of
/// (kind, seed).
class Prng {
 public:
  Prng(PrngKind kind, std::uint64_t seed) noexcept : kind_(kind) { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept {
    switch (kind_) {
      case PrngKind::kFnv1aStream:
        // xor-then-multiply by an odd prime: parity(out) = !parity(prev)
        s_[0] = (s_[0] ^ kFnvOffsetBasis) * kFnvPrime;
        return s_[0];
      case PrngKind::kXorshiftKiss: {
        std::uint64_t& x = s_[0];
        std::uint64_t& c = s_[1];
        std::uint64_t& y = s_[2];
        std::uint64_t& z = s_[3];
        const std::uint64_t t = (x << 58) + c;
        c = x >> 6;
        x += t;
        c += (x < t);
        y ^= y << 13;
        y ^= y >> 17;
        y ^= y << 43;
        z = 6906969069ULL * z + 1234567ULL;
        return x + y + z;
      }
      case PrngKind::kMix64:
        s_[0] += kWeylGamma;
        return fmix64(s_[0]);
      case PrngKind::kLcg64:
        s_[0] = s_[0] * kLcgMultiplier + kLcgIncrement;
        return s_[0];
    }
    return 0;
  }

  PrngKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

 private:
  PrngKind kind_;
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> s_{};
};

class EntropyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EntropyKind : std::uint8_t { kOs, kFixedCounter };

std::string_view to_string(EntropyKind kind) noexcept;
std::optional<EntropyKind> parse_entropy_kind(std::string_view name) noexcept;

/// Seed material for reseeding. `kOs` reads the kernel CSPRNG; `kFixedCounter`
/// returns start, start+1, start+2, ... so reseeded runs are reproducible.
class EntropySource {
 public:
  static EntropySource os() noexcept { return EntropySource(EntropyKind::kOs, 0); }
  static EntropySource fixed_counter(std::uint64_t start) noexcept {
    return EntropySource(EntropyKind::kFixedCounter, start);
  }

  /// Throws EntropyError if the OS source fails; never falls back silently.
  std::uint64_t next();

  EntropyKind kind() const noexcept { return kind_; }
  std::uint64_t calls() const noexcept { return calls_; }

 private:
  EntropySource(EntropyKind kind, std::uint64_t start) noexcept
      : kind_(kind), start_(start) {}

  EntropyKind kind_;
  std::uint64_t start_;
  std::uint64_t calls_ = 0;
};

/// Wraps a generator and replaces its seed with fresh entropy every
/// `interval` outputs. Between calls `counter < interval` holds.
class ReseedingPrng {
 public:
  static constexpr std::uint64_t kDefaultInterval = 1'000'000;

  ReseedingPrng(PrngKind kind, std::uint64_t seed, EntropySource entropy,
                std::uint64_t interval = kDefaultInterval);

  std::uint64_t next_u64() {
    const std::uint64_t v = inner_.next_u64();
    if (++counter_ == interval_) reseed();
    return v;
  }

  void reseed();

  const Prng& inner() const noexcept { return inner_; }
  std::uint64_t interval() const noexcept { return interval_; }
  std::uint64_t counter() const noexcept { return counter_; }
  std::uint64_t reseeds() const noexcept { return reseeds_; }

 private:
  Prng inner_;
  EntropySource entropy_;
  std::uint64_t interval_;
  std::uint64_t counter_ = 0;
  std::uint64_t reseeds_ = 0;
};

/// Replays a fixed table of pre-generated values; wraps silently, so the
/// period is exactly the table length.
class PregenArrayPrng {
 public:
  static constexpr std::size_t kDefaultLength = 10'000'000;

  PregenArrayPrng(PrngKind kind, std::uint64_t seed,
                  std::size_t length = kDefaultLength);
  explicit PregenArrayPrng(std::vector<std::uint64_t> values);

  std::uint64_t next_u64() noexcept {
    const std::uint64_t v = values_[cursor_];
    if (++cursor_ == values_.size()) cursor_ = 0;
    return v;
  }

  std::size_t length() const noexcept { return values_.size(); }
  std::size_t cursor() const noexcept { return cursor_; }

 private:
  std::vector<std::uint64_t> values_;
  std::size_t cursor_ = 0;
};

enum class RangeMode : std::uint8_t { kModulo, kMask };

/// Maps raw 64-bit outputs onto keys in [1, range]. Validated once so the
/// per-draw path is branch-free.
///
/// Modulo mode keeps the usual modulo bias; for ranges up to a few million
/// against a 64-bit draw the bias is below 2^-42. Mask mode requires a
/// power-of-two range and is rejected otherwise.
class KeyMapper {
 public:
  explicit KeyMapper(std::uint64_t range, RangeMode mode = RangeMode::kModulo);

  Key operator()(std::uint64_t raw) const noexcept {
    return mode_ == RangeMode::kMask ? (raw & (range_ - 1)) + 1 : raw % range_ + 1;
  }

  std::uint64_t range() const noexcept { return range_; }
  RangeMode mode() const noexcept { return mode_; }

 private:
  std::uint64_t range_;
  RangeMode mode_;
};

template <BitSource64 G>
Key next_in_range(G& g, std::uint64_t range, RangeMode mode = RangeMode::kModulo) {
  const KeyMapper mapper(range, mode);
  return mapper(g.next_u64());
}

/// Top 53 bits scaled into [0, 1).
constexpr double to_unit(std::uint64_t raw) noexcept {
  return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

template <BitSource64 G>
double next_unit(G& g) {
  return to_unit(g.next_u64());
}

enum class SeedPolicy : std::uint8_t { kDistinct, kShared };

/// Injective in `thread_id` for a fixed master. kShared hands every thread the
/// master seed itself (the classic per-thread seeding bug).
std::uint64_t derive_thread_seed(std::uint64_t master, std::uint64_t thread_id,
                                 SeedPolicy policy = SeedPolicy::kDistinct) noexcept;

struct GeneratorSpec {
  PrngKind kind = PrngKind::kMix64;
  std::uint64_t reseed_interval = 0;  // 0 disables reseeding
  EntropyKind entropy = EntropyKind::kOs;
  std::size_t pregen_length = 0;      // 0 generates in place
};

using AnyGenerator = std::variant<Prng, ReseedingPrng, PregenArrayPrng>;

/// Builds the generator described by `spec`. Reseeding and pre-generated
/// tables are mutually exclusive.
AnyGenerator make_generator(const GeneratorSpec& spec, std::uint64_t seed);

}  // namespace csetbench
