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

#pragma once

#include <sodium.h>

#include <array>
#include <string>
#include <string_view>

#include "pepsi/common.hpp"

namespace pepsi {

/// 128-bit seed of one member of the keyed hash family. Seeds are public
/// protocol parameters shared by client and server.
using HashKey = std::array<u8, crypto_shorthash_KEYBYTES>;

inline void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error("libsodium initialisation failed");
}

inline HashKey random_hash_key() {
  ensure_sodium();
  HashKey k;
  randombytes_buf(k.data(), k.size());
  return k;
}

/// UniformRandomBitGenerator over the libsodium CSPRNG.
struct SodiumRng {
  using result_type = u64;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~u64{0}; }
  result_type operator()() {
    ensure_sodium();
    u64 v;
    randombytes_buf(&v, sizeof(v));
    return v;
  }
};

/// Deterministic key derivation, used by tests and by the planner when a
/// seed is given.
inline HashKey derive_hash_key(u64 seed, u32 index) {
  ensure_sodium();
  u8 in[12];
  for (int i = 0; i < 8; ++i) in[i] = static_cast<u8>(seed >> (8 * i));
  for (int i = 0; i < 4; ++i) in[8 + i] = static_cast<u8>(index >> (8 * i));
  HashKey k;
  crypto_generichash(k.data(), k.size(), in, sizeof(in), nullptr, 0);
  return k;
}

/// SipHash-2-4 of a 64-bit word.
inline u64 keyed_hash64(const HashKey& key, u64 x) {
  u8 in[8];
  for (int i = 0; i < 8; ++i) in[i] = static_cast<u8>(x >> (8 * i));
  u8 out[crypto_shorthash_BYTES];
  crypto_shorthash(out, in, sizeof(in), key.data());
  u64 v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<u64>(out[i]) << (8 * i);
  return v;
}

/// Keyed BLAKE2b of an arbitrary byte string, truncated to `bits` bits.
inline u64 hash_to_bits(const HashKey& key, std::span<const u8> data, u32 bits) {
  PEPSI_ENFORCE(bits >= 1 && bits <= 64, InvalidArgument, "hash_to_bits: bits must be in [1, 64]");
  ensure_sodium();
  u8 out[8];
  crypto_generichash(out, sizeof(out), data.data(), data.size(), key.data(), key.size());
  u64 v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<u64>(out[i]) << (8 * i);
  return v & low_mask(bits);
}

inline u64 hash_to_bits(const HashKey& key, std::string_view s, u32 bits) {
  return hash_to_bits(key, std::span(reinterpret_cast<const u8*>(s.data()), s.size()), bits);
}

/// Unkeyed 64-bit digest for parameter fingerprints.
inline u64 fingerprint64(std::span<const u8> data) {
  ensure_sodium();
  u8 out[8];
  crypto_generichash(out, sizeof(out), data.data(), data.size(), nullptr, 0);
  u64 v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<u64>(out[i]) << (8 * i);
  return v;
}

inline std::string to_hex(std::span<const u8> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (u8 b : data) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xf]);
  }
  return s;
}

inline HashKey hash_key_from_hex(std::string_view hex) {
  PEPSI_ENFORCE(hex.size() == 2 * sizeof(HashKey), FormatError, "hash key must be 32 hex digits");
  auto nibble = [](char c) -> u8 {
    if (c >= '0' && c <= '9') return static_cast<u8>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<u8>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<u8>(c - 'A' + 10);
    throw FormatError("bad hex digit in hash key");
  };
  HashKey k;
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = static_cast<u8>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return k;
}

}  // namespace pepsi
