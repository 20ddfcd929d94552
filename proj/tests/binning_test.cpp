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

#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <random>
#include <set>

#include "pepsi/binning.hpp"
#include "test_util.hpp"

namespace pepsi {
namespace {

struct ConstHasher {
  u64 value = 0;
  u64 operator()(u32, u64) const { return value; }
};

TEST(BinningPlan, DerivedQuantities) {
  const auto p = BinningPlan::make(13, 32, 100, 5);
  EXPECT_EQ(p.bins(), 8192u);
  EXPECT_EQ(p.residue_bits(), 19u);
  EXPECT_EQ(p.index_bits, 2u);
  EXPECT_EQ(p.effective_bitlength(), 21u);
  EXPECT_EQ(p.hash_keys.size(), 3u);
  auto q = p;
  q.index_bits = 0;
  EXPECT_EQ(q.effective_bitlength(), 19u);
  EXPECT_NE(p.fingerprint(), q.fingerprint());
  EXPECT_EQ(p, BinningPlan::make(13, 32, 100, 5));
  EXPECT_NE(p.hash_keys, BinningPlan::make(13, 32, 100, 6).hash_keys);
}

TEST(BinningPlan, ValidateRejectsBadPlans) {
  auto p = BinningPlan::make(13, 13, 10, 1);
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = BinningPlan::make(13, 32, 10, 1);
  p.index_bits = 1;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = BinningPlan::make(13, 32, 10, 1);
  p.hash_keys.pop_back();
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Pbh, FixtureExample) {
  // x = 10110b, c = 2: x_H = 10b, x_L = 110b; H(110b) = 01b.
  const auto place = pbh_split(0b10110, 5, 2, 0, ConstHasher{0b01});
  EXPECT_EQ(place.bin, 0b11u);
  EXPECT_EQ(place.residue, 0b110u);
  EXPECT_EQ(pbh_join(place.bin, place.residue, 5, 2, 0, ConstHasher{0b01}), 0b10110u);
}

TEST(Pbh, RoundTripAndDeterminism) {
  const auto plan = BinningPlan::make(12, 40, 1, 9);
  const SipBinHasher h(plan);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20000; ++i) {
    const u64 x = rng() & low_mask(40);
    const u32 idx = static_cast<u32>(rng() % 3);
    const auto a = pbh_split(x, 40, 12, idx, h);
    const auto b = pbh_split(x, 40, 12, idx, h);
    ASSERT_EQ(a.bin, b.bin);
    ASSERT_EQ(a.residue, b.residue);
    ASSERT_LT(a.bin, plan.bins());
    ASSERT_EQ(pbh_join(a.bin, a.residue, 40, 12, idx, h), x);
  }
}

TEST(Pbh, FullWidthElements) {
  const auto plan = BinningPlan::make(13, 64, 1, 2);
  const SipBinHasher h(plan);
  const u64 x = 0xfedcba9876543210ull;
  const auto a = pbh_split(x, 64, 13, 1, h);
  EXPECT_EQ(pbh_join(a.bin, a.residue, 64, 13, 1, h), x);
}

// Cross-index triple collisions for x != y occur at rate 2^-lambda without
// index bits; with index bits they cannot occur, and same-index collisions
// are impossible because PBH is injective per hash function.
TEST(Pbh, PairCollisionRate) {
  constexpr u32 kLambda = 14;
  constexpr u32 kC = 6;
  constexpr int kPairs = 1000000;
  auto plan = BinningPlan::make(kC, kLambda, 1, 4);
  const SipBinHasher h(plan);
  std::mt19937_64 rng(11);
  int cross = 0, same = 0, indexed = 0;
  for (int i = 0; i < kPairs; ++i) {
    const u64 x = rng() & low_mask(kLambda);
    u64 y;
    do y = rng() & low_mask(kLambda);
    while (y == x);
    const u32 ix = static_cast<u32>(rng() % 3);
    const u32 iy = (ix + 1 + static_cast<u32>(rng() % 2)) % 3;
    const auto a = pbh_split(x, kLambda, kC, ix, h);
    const auto b = pbh_split(y, kLambda, kC, iy, h);
    const auto b_same = pbh_split(y, kLambda, kC, ix, h);
    cross += a.bin == b.bin && a.residue == b.residue;
    same += a.bin == b_same.bin && a.residue == b_same.residue;
    indexed += a.bin == b.bin && stored_value(plan, a.residue, ix) == stored_value(plan, b.residue, iy);
  }
  const double expected = kPairs * std::ldexp(1.0, -static_cast<int>(kLambda));  // about 61
  EXPECT_NEAR(cross, expected, 4 * std::sqrt(expected));
  EXPECT_EQ(same, 0);
  EXPECT_EQ(indexed, 0);
}

// Items hashed to lambda-bit strings and then binned: equal strings share
// their candidate bins, so every cross-set string collision is compared and
// the failure rate is 1 - exp(-m n 2^-lambda), independent of b and mu.
TEST(Pbh, HashedItemFailureRateFollowsSetSizes) {
  constexpr u32 kLogBins = 8, kLambda = 20;
  constexpr u64 kM = 128, kN = 256, kTrials = 5000;
  std::mt19937_64 rng(12);
  u64 item = 0, failures = 0, trials = 0;
  for (u64 t = 0; t < kTrials; ++t) {
    const auto plan = BinningPlan::make(kLogBins, kLambda, 16, rng());
    const HashKey key = derive_hash_key(rng(), 0);
    auto mapped = [&](u64 count) {
      std::vector<u64> out;
      for (u64 i = 0; i < count; ++i, ++item) {
        out.push_back(hash_to_bits(key, std::string_view(reinterpret_cast<const char*>(&item), 8), kLambda));
      }
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      return out;
    };
    const auto client = mapped(kM), server = mapped(kN);
    const SipBinHasher h(plan);
    const BinTable ct = cuckoo_insert(client, plan, h);
    BinTable st;
    try {
      st = simple_hash_insert(server, plan, h);
    } catch (const BinOverflow&) {
      continue;
    }
    ++trials;
    bool matched = false;
    for (u64 b = 0; b < ct.bins(); ++b) {
      const Slot& c = ct.at(b, 0);
      for (u32 i = 0; c.occupied && i < st.load(); ++i) matched |= st.at(b, i).occupied && st.at(b, i).value == c.value;
    }
    failures += matched;
  }
  const double p = -std::expm1(-static_cast<double>(kM * kN) * std::ldexp(1.0, -static_cast<int>(kLambda)));
  const double sd = std::sqrt(p * (1 - p) / static_cast<double>(trials));
  const double rate = static_cast<double>(failures) / static_cast<double>(trials);
  EXPECT_NEAR(rate, p, 4 * sd);
  // Well above b * gamma * mu * 2^-lambda = 2^-8 at this element width.
  EXPECT_GT(rate, 4 * std::ldexp(1.0, -8));
}

TEST(Cuckoo, SingleElementUsesFirstHash) {
  const auto plan = BinningPlan::make(13, 32, 1, 3);
  const SipBinHasher h(plan);
  const u64 x = 0xdeadbeef;
  const std::vector<u64> xs{x};
  const auto t = cuckoo_insert(std::span<const u64>(xs), plan, h);
  const auto place = pbh_split(x, 32, 13, 0, h);
  const Slot& s = t.at(place.bin, 0);
  ASSERT_TRUE(s.occupied);
  EXPECT_EQ(s.hash_index, 0);
  EXPECT_EQ(s.value, stored_value(plan, place.residue, 0));
  EXPECT_EQ(t.real_count(), 1u);
}

TEST(Cuckoo, EveryElementInOneCandidateBin) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto plan = BinningPlan::make(13, 40, 1, rng());
    const SipBinHasher h(plan);
    const auto in = testing_util::random_instance(6000, 0, 0, 40, rng);
    const auto t = cuckoo_insert(std::span<const u64>(in.client), plan, h, trial);
    ASSERT_EQ(t.real_count(), in.client.size());
    ASSERT_EQ(t.load(), 1u);
    std::vector<int> seen(in.client.size(), 0);
    for (u64 bin = 0; bin < t.bins(); ++bin) {
      const Slot& s = t.at(bin, 0);
      if (!s.occupied) continue;
      ++seen[s.source];
      const u64 x = in.client[s.source];
      const auto place = pbh_split(x, 40, 13, s.hash_index, h);
      ASSERT_EQ(place.bin, bin);
      ASSERT_EQ(recover_element(plan, bin, s, h), x);
    }
    for (int c : seen) ASSERT_EQ(c, 1);
  }
}

TEST(Cuckoo, NoFailuresAtPaperLoad) {
  // m = 1024 into b = 8192 with k = 3: failure probability is far below
  // 2^-40, so 10^4 independent keyings must all succeed.
  std::mt19937_64 rng(5);
  int failures = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto plan = BinningPlan::make(13, 32, 1, rng());
    const auto in = testing_util::random_instance(1024, 0, 0, 32, rng);
    try {
      cuckoo_insert(std::span<const u64>(in.client), plan, SipBinHasher(plan), trial);
    } catch (const InsertionFailure&) {
      ++failures;
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(Cuckoo, ConstructedCollisionFails) {
  // All candidate bins of both elements coincide: one bin, two elements.
  const auto plan = BinningPlan::make(2, 8, 1, 1);
  const std::vector<u64> xs{0b00000001, 0b00000010};  // same x_H, different x_L
  EXPECT_THROW(cuckoo_insert(std::span<const u64>(xs), plan, ConstHasher{0}), InsertionFailure);
}

TEST(Cuckoo, RequiresExpansion) {
  const auto plan = BinningPlan::make(4, 32, 1, 1);
  std::vector<u64> xs(13);
  for (u64 i = 0; i < xs.size(); ++i) xs[i] = i;
  EXPECT_THROW(cuckoo_insert(std::span<const u64>(xs), plan, SipBinHasher(plan)), InvalidArgument);
  auto wide = plan;
  wide.client_max_load = 2;
  xs.resize(12);
  EXPECT_THROW(cuckoo_insert(std::span<const u64>(xs), wide, SipBinHasher(wide)), InvalidArgument);
  const std::vector<u64> too_wide{u64{1} << 40};
  EXPECT_THROW(cuckoo_insert(std::span<const u64>(too_wide), plan, SipBinHasher(plan)), InvalidArgument);
}

TEST(SimpleHash, SingleElementHasKCopies) {
  auto plan = BinningPlan::make(13, 32, 4, 3);
  const std::vector<u64> xs{12345};
  const auto t = simple_hash_insert(std::span<const u64>(xs), plan, SipBinHasher(plan));
  EXPECT_EQ(t.real_count(), 3u);
  EXPECT_EQ(t.load(), 4u);
  std::set<u32> indices;
  for (u64 bin = 0; bin < t.bins(); ++bin) {
    for (u32 i = 0; i < t.load(); ++i) {
      const Slot& s = t.at(bin, i);
      if (!s.occupied) continue;
      indices.insert(s.hash_index);
      EXPECT_EQ(recover_element(plan, bin, s, SipBinHasher(plan)), 12345u);
    }
  }
  EXPECT_EQ(indices.size(), 3u);
}

TEST(SimpleHash, DuplicateCopiesCollapseWithoutIndexBits) {
  auto plan = BinningPlan::make(13, 32, 4, 3);
  const std::vector<u64> xs{777};
  EXPECT_EQ(simple_hash_insert(std::span<const u64>(xs), plan, ConstHasher{5}).real_count(), 3u);
  plan.index_bits = 0;
  EXPECT_EQ(simple_hash_insert(std::span<const u64>(xs), plan, ConstHasher{5}).real_count(), 1u);
  // Distinct elements sharing a bin and residue are never merged.
  const std::vector<u64> two{0x1000000, 0x2000000};
  EXPECT_EQ(simple_hash_insert(std::span<const u64>(two), plan, ConstHasher{0}).real_count(), 2u);
}

TEST(SimpleHash, PaddingAndOverflow) {
  std::mt19937_64 rng(8);
  const auto in = testing_util::random_instance(0, 4096, 0, 32, rng);
  auto plan = BinningPlan::make(10, 32, 64, 1);
  const auto t = simple_hash_insert(std::span<const u64>(in.server), plan, SipBinHasher(plan));
  EXPECT_EQ(t.load(), 64u);
  EXPECT_EQ(t.slots().size(), 1024u * 64u);
  EXPECT_EQ(t.real_count(), 3u * 4096u);
  auto loads = simple_hash_loads(std::span<const u64>(in.server), plan, SipBinHasher(plan));
  for (u64 b = 0; b < t.bins(); ++b) ASSERT_EQ(t.bin_size(b), loads[b]);
  plan.server_max_load = t.max_bin_size() - 1;
  EXPECT_THROW(simple_hash_insert(std::span<const u64>(in.server), plan, SipBinHasher(plan)), BinOverflow);
}

TEST(SimpleHash, CompletenessAgainstCuckoo) {
  std::mt19937_64 rng(21);
  const auto in = testing_util::random_instance(500, 5000, 200, 36, rng);
  auto plan = BinningPlan::make(10, 36, 40, 77);
  const SipBinHasher h(plan);
  const auto tc = cuckoo_insert(std::span<const u64>(in.client), plan, h);
  const auto ts = simple_hash_insert(std::span<const u64>(in.server), plan, h);
  std::set<u64> server(in.server.begin(), in.server.end());
  for (u64 bin = 0; bin < tc.bins(); ++bin) {
    const Slot& c = tc.at(bin, 0);
    if (!c.occupied) continue;
    bool match = false;
    for (u32 i = 0; i < ts.load(); ++i) match |= ts.at(bin, i).occupied && ts.at(bin, i).value == c.value;
    ASSERT_EQ(match, server.count(in.client[c.source]) == 1);
  }
}

TEST(BinTable, SerializationRoundTrip) {
  std::mt19937_64 rng(4);
  const auto in = testing_util::random_instance(0, 300, 0, 32, rng);
  auto plan = BinningPlan::make(8, 32, 16, 1);
  const auto t = simple_hash_insert(std::span<const u64>(in.server), plan, SipBinHasher(plan));
  ByteWriter w;
  t.serialize(w);
  ByteReader r(w.bytes());
  EXPECT_EQ(BinTable::deserialize(r), t);
  EXPECT_TRUE(r.done());
  Bytes cut = w.bytes();
  cut.resize(cut.size() / 2);
  ByteReader rc(cut);
  EXPECT_THROW(BinTable::deserialize(rc), FormatError);
}

// Oracle for the union bound: boost's incomplete-beta binomial tail.
long double boost_union_bound(u64 n, u64 bins, u32 k, u32 mu) {
  boost::math::binomial_distribution<long double> d(static_cast<long double>(n * k), 1.0L / bins);
  return bins * boost::math::cdf(boost::math::complement(d, static_cast<long double>(mu)));
}

TEST(MaxLoad, EstimateIsSmallestUnionBoundLoad) {
  const long double target = 0x1p-40L;
  for (auto [n, bins] : {std::pair<u64, u64>{1 << 20, 16384}, {1 << 18, 16384}, {1 << 20, 8192}, {1 << 13, 8192},
                         {1 << 24, 16384}}) {
    const u32 mu = estimate_server_max_load(n, bins, 3, target);
    EXPECT_LT(boost_union_bound(n, bins, 3, mu), target) << n << " " << bins;
    EXPECT_GE(boost_union_bound(n, bins, 3, mu - 1), target) << n << " " << bins;
  }
}

TEST(MaxLoad, EstimateNearPublishedLoads) {
  // Published loads, which come from tighter bounds plus simulation; the
  // union bound sits at or slightly above them.
  const long double target = 0x1p-40L;
  for (auto [n, bins, published] : {std::tuple<u64, u64, u32>{1 << 20, 16384, 296}, {1 << 24, 16384, 3487},
                                    {1 << 18, 16384, 100}, {1 << 20, 8192, 526}}) {
    const u32 mu = estimate_server_max_load(n, bins, 3, target);
    EXPECT_GE(mu, published) << n;
    EXPECT_LE(mu, published * 1.2) << n;
  }
  EXPECT_EQ(estimate_server_max_load(1 << 20, 16384, 3, target), 318u);
}

TEST(MaxLoad, EstimateCoversSimulation) {
  std::mt19937_64 rng(6);
  const u32 mu = estimate_server_max_load(1 << 18, 16384, 3, 0x1p-40L);
  for (int i = 0; i < 5; ++i) EXPECT_LE(simulate_max_load(1 << 18, 14, 3, 32, rng), mu);
}

}  // namespace
}  // namespace pepsi
