//
// Copyright 2026 The Fed-SGM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef FEDSGM_RANDOM_HPP_
#define FEDSGM_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace fedsgm {

// Counter-based random numbers. Every variate is a pure function of a 64-bit
// key and a 64-bit counter, so any entry of any stream can be regenerated in
// isolation (sketch rows on the fly, per-client noise independent of client
// scheduling).
namespace rng {

constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a; used to turn short purpose labels into derivation tags.
constexpr std::uint64_t HashLabel(std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Child key for (parent, tag). Distinct tags give statistically independent
// streams.
constexpr std::uint64_t DeriveKey(std::uint64_t parent, std::uint64_t tag) {
  return SplitMix64(SplitMix64(parent) ^ SplitMix64(tag ^ 0xD1B54A32D192ED03ULL));
}

constexpr std::uint64_t DeriveKey(std::uint64_t parent, std::string_view label) {
  return DeriveKey(parent, HashLabel(label));
}

constexpr std::uint64_t BitsAt(std::uint64_t key, std::uint64_t counter) {
  return SplitMix64(key + counter * 0x9E3779B97F4A7C15ULL);
}

// Uniform on the open interval (0, 1).
inline double UniformAt(std::uint64_t key, std::uint64_t counter) {
  return (static_cast<double>(BitsAt(key, counter) >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller on counters (2k, 2k+1).
inline double NormalAt(std::uint64_t key, std::uint64_t index) {
  const double u1 = UniformAt(key, 2 * index);
  const double u2 = UniformAt(key, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rng

// Sequential view over one counter-based stream.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key)
      : key_(key), normal_key_(rng::DeriveKey(key, "normal")) {}

  std::uint64_t key() const { return key_; }

  std::uint64_t NextBits() { return rng::BitsAt(key_, counter_++); }
  double NextUniform() { return rng::UniformAt(key_, counter_++); }
  // Normals come from a sibling key so they never reuse uniform counters.
  double NextNormal() { return rng::NormalAt(normal_key_, normal_counter_++); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t NextBelow(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = NextBits();
    while (x >= limit) x = NextBits();
    return x % n;
  }

  RandomStream Fork(std::uint64_t tag) const {
    return RandomStream(rng::DeriveKey(key_, tag));
  }
  RandomStream Fork(std::string_view label) const {
    return RandomStream(rng::DeriveKey(key_, label));
  }

 private:
  std::uint64_t key_;
  std::uint64_t normal_key_;
  std::uint64_t counter_ = 0;
  std::uint64_t normal_counter_ = 0;
};

}  // namespace fedsgm

#endif  // FEDSGM_RANDOM_HPP_
