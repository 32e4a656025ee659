// Copyright 2026 The DUQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DUQ_RANDOM_H_
#define DUQ_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace duq {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
constexpr std::uint64_t Fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for one component ("init", "shuffle", "data", ...) of a run seeded
// with `base`. Components never share a stream.
constexpr std::uint64_t DeriveSeed(std::uint64_t base, std::string_view component) {
  return SplitMix64(base ^ Fnv1a(component));
}

}  // namespace duq

#endif  // DUQ_RANDOM_H_
