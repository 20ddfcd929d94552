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

#include <random>

#include "pepsi/simd_backend.hpp"

namespace pepsi {
namespace {

bool trial_division_prime(u64 n) {
  if (n < 2) return false;
  for (u64 d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

SimdVector random_plain(std::size_t n, u64 t, std::mt19937_64& rng) {
  SimdVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng() % t;
  return v;
}

HeParams small_params() {
  HeParams p = HeParams::for_weight(1);
  return p;
}

TEST(HeParams, RowsByWeight) {
  struct Want {
    u32 h, log_n, log_q, max_weight;
  };
  for (Want w : {Want{1, 12, 72, 1}, {2, 13, 144, 2}, {3, 13, 168, 4}, {4, 13, 168, 4}, {5, 13, 204, 8},
                 {8, 13, 204, 8}, {9, 14, 240, 16}, {16, 14, 240, 16}, {17, 14, 276, 32}, {32, 14, 276, 32},
                 {33, 14, 312, 64}, {64, 14, 312, 64}}) {
    const auto p = HeParams::for_weight(w.h);
    EXPECT_EQ(p.log_n, w.log_n) << w.h;
    EXPECT_EQ(p.coeff_modulus_bits, w.log_q) << w.h;
    EXPECT_EQ(p.max_weight, w.max_weight) << w.h;
    EXPECT_TRUE(p.meets_128bit_security()) << w.h;
    EXPECT_NO_THROW(p.validate());
  }
  EXPECT_EQ(HeParams::for_weight(8, QProfile::kPaperSec7).coeff_modulus_bits, 192u);
  EXPECT_EQ(HeParams::for_weight(4, QProfile::kPaperSec7).coeff_modulus_bits, 168u);
  EXPECT_EQ(HeParams::for_weight(16, QProfile::kPaperSec7).coeff_modulus_bits, 240u);
  EXPECT_THROW(HeParams::for_weight(0), InvalidArgument);
  EXPECT_THROW(HeParams::for_weight(65), InvalidArgument);
  EXPECT_EQ(qprofile_from_string(to_string(QProfile::kPaperSec7)), QProfile::kPaperSec7);
  EXPECT_THROW(qprofile_from_string("nope"), InvalidArgument);
}

TEST(HeParams, PlainModulusSupportsBatching) {
  EXPECT_TRUE(trial_division_prime(kDefaultPlainModulus));
  EXPECT_EQ(kDefaultPlainModulus % (u64{1} << 15), 1u);
  EXPECT_EQ(floor_log2(kDefaultPlainModulus), 39u);
  auto p = small_params();
  p.plain_modulus = 1099510054911ull;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p.plain_modulus = 65537;  // prime and 1 mod 2N for N = 4096
  EXPECT_NO_THROW(p.validate());
  p.plain_modulus = 12289;  // 1 mod 2^12 only, not 1 mod 2N = 8192
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(HeParams, LevelBudget) {
  EXPECT_EQ(HeParams::for_weight(1).fresh_levels(), 2u);
  EXPECT_EQ(HeParams::for_weight(8).fresh_levels(), 5u);
  EXPECT_EQ(HeParams::for_weight(64).fresh_levels(), 8u);
  auto p = HeParams::for_weight(8);
  const u64 f = p.fingerprint();
  p.variant_levels = 0;
  EXPECT_EQ(p.fresh_levels(), 4u);
  EXPECT_NE(p.fingerprint(), f);
}

TEST(ReferenceBackend, OperationsMatchModularOracle) {
  const ReferenceBackend be(small_params());
  const u64 t = be.plain_modulus();
  const std::size_t n = be.slot_count();
  std::mt19937_64 rng(1);
  const auto sk = be.keygen();
  const auto a = random_plain(n, t, rng), b = random_plain(n, t, rng), p = random_plain(n, t, rng);
  const u64 s = rng() % t;
  const auto ca = be.encrypt(a, sk), cb = be.encrypt(b, sk);
  const auto sum = be.decrypt(be.add(ca, cb), sk);
  const auto diff = be.decrypt(be.sub(ca, cb), sk);
  const auto addp = be.decrypt(be.add_plain(ca, p), sk);
  const auto adds = be.decrypt(be.add_scalar(ca, s), sk);
  const auto pm = be.decrypt(be.plain_mult(p, ca), sk);
  const auto mm = be.decrypt(be.mult(ca, cb), sk);
  const auto ms = be.decrypt(be.mult_scalar(ca, s), sk);
  auto inplace = ca;
  be.add_inplace(inplace, cb);
  const auto inp = be.decrypt(inplace, sk);
  for (std::size_t i = 0; i < n; ++i) {
    const u128 x = a[i], y = b[i], z = p[i];
    ASSERT_EQ(sum[i], static_cast<u64>((x + y) % t));
    ASSERT_EQ(inp[i], static_cast<u64>((x + y) % t));
    ASSERT_EQ(diff[i], static_cast<u64>((x + t - y) % t));
    ASSERT_EQ(addp[i], static_cast<u64>((x + z) % t));
    ASSERT_EQ(adds[i], static_cast<u64>((x + s) % t));
    ASSERT_EQ(pm[i], static_cast<u64>(x * z % t));
    ASSERT_EQ(mm[i], static_cast<u64>(x * y % t));
    ASSERT_EQ(ms[i], static_cast<u64>(x * s % t));
  }
  const auto zero = be.decrypt(be.encrypt_zero_like(ca), sk);
  for (u64 v : zero.slots()) ASSERT_EQ(v, 0u);
}

TEST(ReferenceBackend, EncodeReducesAndPads) {
  const ReferenceBackend be(small_params());
  const std::vector<u64> in{be.plain_modulus() + 5, 7};
  const auto v = be.encode(in);
  EXPECT_EQ(v.size(), be.slot_count());
  EXPECT_EQ(v[0], 5u);
  EXPECT_EQ(v[1], 7u);
  EXPECT_EQ(v[2], 0u);
  std::vector<u64> too_many(be.slot_count() + 1);
  EXPECT_THROW(be.encode(too_many), InvalidArgument);
  SimdVector unreduced(be.slot_count(), be.plain_modulus());
  EXPECT_THROW(be.encrypt(unreduced, be.keygen()), InvalidArgument);
  EXPECT_THROW(be.encrypt(SimdVector(3), be.keygen()), InvalidArgument);
}

TEST(ReferenceBackend, DepthIsEnforced) {
  const ReferenceBackend be(HeParams::for_weight(8));
  const auto sk = be.keygen();
  auto c = be.encrypt(SimdVector(be.slot_count(), 2), sk);
  const auto fresh = c;
  EXPECT_EQ(be.levels(c), 5u);
  for (u32 i = 0; i < 5; ++i) c = be.mult(c, fresh);
  EXPECT_EQ(be.levels(c), 0u);
  EXPECT_THROW(be.mult(c, fresh), DepthExhausted);
  EXPECT_THROW(be.plain_mult(SimdVector(be.slot_count(), 1), c), DepthExhausted);
  // Additions and constant scalings never consume levels.
  EXPECT_EQ(be.levels(be.add(c, fresh)), 0u);
  EXPECT_EQ(be.levels(be.mult_scalar(fresh, 3)), 5u);
  EXPECT_EQ(be.levels(be.add_plain(fresh, SimdVector(be.slot_count(), 1))), 5u);
  EXPECT_EQ(be.levels(be.plain_mult(SimdVector(be.slot_count(), 1), fresh)), 4u);
  EXPECT_EQ(be.decrypt(c, sk)[0], 64u);
}

TEST(ReferenceBackend, KeysAreIsolated) {
  const ReferenceBackend be(small_params());
  const auto k1 = be.keygen(), k2 = be.keygen();
  EXPECT_NE(k1, k2);
  const auto c1 = be.encrypt(SimdVector(be.slot_count(), 1), k1);
  const auto c2 = be.encrypt(SimdVector(be.slot_count(), 1), k2);
  EXPECT_THROW(be.decrypt(c1, k2), KeyMismatch);
  EXPECT_THROW(be.add(c1, c2), KeyMismatch);
  EXPECT_THROW(be.mult(c1, c2), KeyMismatch);
  EXPECT_THROW(be.encrypt(SimdVector(be.slot_count()), SecretKey{}), KeyMismatch);
  EXPECT_NO_THROW(be.decrypt(be.encrypt_zero_like(c2), k2));
}

TEST(ReferenceBackend, SerializedSizeMatchesRing) {
  for (u32 h : {1u, 2u, 4u, 8u, 16u, 64u}) {
    const ReferenceBackend be(HeParams::for_weight(h));
    const std::size_t expected = 21 + be.slot_count() * be.params().coeff_modulus_bits / 8;
    EXPECT_EQ(be.ciphertext_size_bytes(), expected) << h;
    const auto sk = be.keygen();
    EXPECT_EQ(be.serialize(be.encrypt(SimdVector(be.slot_count()), sk)).size(), expected);
  }
  EXPECT_EQ(ReferenceBackend(HeParams::for_weight(8)).ciphertext_size_bytes(), 21u + 8192u * 204u / 8u);
  EXPECT_EQ(ReferenceBackend(HeParams::for_weight(8, QProfile::kPaperSec7)).ciphertext_size_bytes(),
            21u + 8192u * 24u);
}

TEST(ReferenceBackend, SerializationRoundTrip) {
  std::mt19937_64 rng(3);
  for (u32 h : {1u, 8u, 16u}) {
    const ReferenceBackend be(HeParams::for_weight(h));
    const auto sk = be.keygen();
    const auto pt = random_plain(be.slot_count(), be.plain_modulus(), rng);
    auto c = be.encrypt(pt, sk);
    c = be.mult_scalar(be.plain_mult(SimdVector(be.slot_count(), 1), c), 1);
    const Bytes bytes = be.serialize(c);
    const auto back = be.deserialize(bytes);
    EXPECT_EQ(be.levels(back), be.levels(c));
    const auto dec = be.decrypt(back, sk);
    for (std::size_t i = 0; i < pt.size(); ++i) ASSERT_EQ(dec[i], pt[i]);
    EXPECT_EQ(be.serialize(back), bytes);
  }
}

TEST(ReferenceBackend, DeserializeRejectsForeignOrCorruptBlobs) {
  const ReferenceBackend be(HeParams::for_weight(2));
  auto other_params = HeParams::for_weight(2);
  other_params.variant_levels = 2;
  const ReferenceBackend other(other_params);
  const auto sk = be.keygen();
  const Bytes blob = be.serialize(be.encrypt(SimdVector(be.slot_count(), 9), sk));
  EXPECT_THROW(other.deserialize(blob), FingerprintMismatch);
  Bytes bad = blob;
  bad.pop_back();
  EXPECT_THROW(be.deserialize(bad), FormatError);
  bad = blob;
  bad[0] = 7;
  EXPECT_THROW(be.deserialize(bad), FormatError);
  bad = blob;
  for (std::size_t i = 0; i < 6; ++i) bad[21 + i] = 0xff;  // first slot >= t
  EXPECT_THROW(be.deserialize(bad), FormatError);
  bad = blob;
  bad[17] = 0xff;  // level field
  EXPECT_THROW(be.deserialize(bad), FormatError);
}

TEST(ReferenceBackend, CountersTrackEveryOperation) {
  const ReferenceBackend be(small_params());
  const auto sk = be.keygen();
  const SimdVector one(be.slot_count(), 1);
  const auto before = be.counters().snapshot();
  auto c = be.encrypt(one, sk);
  c = be.add(c, c);
  c = be.add_plain(c, one);
  c = be.plain_mult(one, c);
  c = be.mult(c, c);
  c = be.mult_scalar(c, 2);
  (void)be.decrypt(c, sk);
  const auto d = be.counters().snapshot() - before;
  EXPECT_EQ(d.encrypt, 1u);
  EXPECT_EQ(d.add, 1u);
  EXPECT_EQ(d.add_plain, 1u);
  EXPECT_EQ(d.pm_count(), 1u);
  EXPECT_EQ(d.m_count(), 2u);
  EXPECT_EQ(d.decrypt, 1u);
  be.counters().reset();
  EXPECT_EQ(be.counters().snapshot(), OpCountSnapshot{});
}

}  // namespace
}  // namespace pepsi
