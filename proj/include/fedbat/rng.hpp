// Copyright 2026 The fedbat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDBAT_RNG_HPP
#define FEDBAT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

#include "fedbat/errors.hpp"

namespace fedbat {

namespace detail {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// FNV-1a over a label string, used to derive child stream ids by name.
constexpr std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

// Counter-based deterministic RNG with named sub-streams.
//
// A stream is identified by (seed, stream id); the n-th output is a pure
// function of (seed, stream, n), so replaying a stream is exact on every
// platform. split() derives a child stream from the parent identity alone,
// never from how far the parent has been advanced, so per-(round, client,
// purpose) streams can be handed out without shared mutable state.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    base_ = detail::mix64(detail::mix64(seed + detail::kGolden) ^
                          detail::mix64(stream + 0x6A09E667F3BCC909ULL));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64() {
    counter_ += 1;
    return detail::mix64(base_ + counter_ * detail::kGolden);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_range(double lo, double hi) {
    return lo + uniform() * (hi - lo);
  }

  // N(0, sigma^2) via Box-Muller (cosine branch); two uniforms per draw.
  // The transform is fixed so golden vectors are portable.
  double gaussian(double sigma = 1.0) {
    if (sigma < 0.0) throw ArgumentError("gaussian: sigma must be >= 0");
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double z =
        std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return sigma * z;
  }

  // Integer in [0, n) via 128-bit multiply; deterministic across platforms.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Child stream derived from this stream's identity and a label.
  SeededRng split(std::uint64_t label) const {
    SeededRng child(seed_, detail::mix64(stream_ + detail::kGolden) ^
                               detail::mix64(label + 0xB7E151628AED2A6BULL));
    return child;
  }

  SeededRng split(std::string_view label) const {
    return split(detail::hash_label(label));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace fedbat

#endif  // FEDBAT_RNG_HPP
