// Copyright 2026 The PEPSI Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared oracles and instance generators for the test binaries.

#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <unordered_set>
#include <vector>

#include "pepsi/common.hpp"

namespace pepsi::testing_util {

/// C(n, k) in 128 bits; every intermediate C(n-k+i, i) * (n-k+i+1) must fit.
inline u128 binom128(u64 n, u32 k) {
  if (k > n) return 0;
  u128 r = 1;
  for (u32 i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// All length-l bit vectors of weight h, by brute force over 2^l masks.
inline std::vector<std::vector<u8>> all_codewords(u32 l, u32 h) {
  std::vector<std::vector<u8>> out;
  for (u64 mask = 0; mask < (u64{1} << l); ++mask) {
    if (static_cast<u32>(__builtin_popcountll(mask)) != h) continue;
    std::vector<u8> w(l);
    for (u32 j = 0; j < l; ++j) w[j] = (mask >> j) & 1;
    out.push_back(std::move(w));
  }
  return out;
}

struct Instance {
  std::vector<u64> client;
  std::vector<u64> server;
  std::vector<u64> expected;  // sorted intersection
};

/// Distinct random lambda-bit sets with `overlap` shared elements.
inline Instance random_instance(u64 m, u64 n, u64 overlap, u32 bitlength, std::mt19937_64& rng) {
  overlap = std::min({overlap, m, n});
  const u64 mask = low_mask(bitlength);
  std::unordered_set<u64> used;
  auto fresh = [&] {
    u64 x;
    do x = rng() & mask;
    while (!used.insert(x).second);
    return x;
  };
  Instance in;
  for (u64 i = 0; i < overlap; ++i) {
    const u64 x = fresh();
    in.client.push_back(x);
    in.server.push_back(x);
    in.expected.push_back(x);
  }
  while (in.client.size() < m) in.client.push_back(fresh());
  while (in.server.size() < n) in.server.push_back(fresh());
  std::shuffle(in.client.begin(), in.client.end(), rng);
  std::shuffle(in.server.begin(), in.server.end(), rng);
  std::sort(in.expected.begin(), in.expected.end());
  return in;
}

/// Cleartext intersection by brute-force comparison.
inline std::vector<u64> brute_force_intersection(const std::vector<u64>& a, const std::vector<u64>& b) {
  std::vector<u64> out;
  for (u64 x : a) {
    for (u64 y : b) {
      if (x == y) {
        out.push_back(x);
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pepsi::testing_util
