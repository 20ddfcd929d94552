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

#include <algorithm>
#include <array>
#include <atomic>
#include <concepts>
#include <random>
#include <string>
#include <vector>

#include "pepsi/common.hpp"
#include "pepsi/hash.hpp"

namespace pepsi {

/// 40-bit prime, 1 mod 2^15, so it supports slot batching for every ring
/// degree up to 2^14.
inline constexpr u64 kDefaultPlainModulus = 1099510054913ull;

/// Which coefficient-modulus column to use for the h = 5..8 row.
/// `kPaperSec7` uses the 192-bit value quoted for the 32-bit experiments;
/// every other row is identical.
enum class QProfile : u8 { kTable3 = 0, kPaperSec7 = 1 };

inline std::string to_string(QProfile p) {
  return p == QProfile::kTable3 ? "table3" : "paper-sec7";
}

inline QProfile qprofile_from_string(std::string_view s) {
  if (s == "table3") return QProfile::kTable3;
  if (s == "paper-sec7") return QProfile::kPaperSec7;
  throw InvalidArgument("unknown q profile: " + std::string(s));
}

/// One row of the ring-parameter table: the largest Hamming weight the row
/// supports, log2 of the ring degree and the coefficient modulus bits.
struct HeRow {
  u32 max_weight;
  u32 log_n;
  u32 log_q;
};

inline constexpr std::array<HeRow, 7> kHeRows = {{
    {1, 12, 72},
    {2, 13, 144},
    {4, 13, 168},
    {8, 13, 204},
    {16, 14, 240},
    {32, 14, 276},
    {64, 14, 312},
}};

inline constexpr u32 kMaxSupportedWeight = 64;

inline HeRow he_row_for_weight(u32 h, QProfile profile = QProfile::kTable3) {
  PEPSI_ENFORCE(h >= 1 && h <= kMaxSupportedWeight, InvalidArgument,
                "Hamming weight outside the supported range 1..64");
  for (HeRow row : kHeRows) {
    if (h <= row.max_weight) {
      if (profile == QProfile::kPaperSec7 && row.max_weight == 8) row.log_q = 192;
      return row;
    }
  }
  throw InvalidArgument("unreachable");
}

// Largest log2(q) allowed at 128-bit classical security for a given ring
// degree (HomomorphicEncryption.org standard, ternary secrets).
inline u32 max_log_q_128(u32 log_n) {
  switch (log_n) {
    case 10: return 27;
    case 11: return 54;
    case 12: return 109;
    case 13: return 218;
    case 14: return 438;
    case 15: return 881;
    default: return 0;
  }
}

struct HeParams {
  u32 log_n = 13;
  u32 coeff_modulus_bits = 204;
  u64 plain_modulus = kDefaultPlainModulus;
  /// Largest Hamming weight whose equality circuit fits the level budget.
  u32 max_weight = 8;
  /// Levels reserved for post-equality work (labels, sums, inner products).
  u32 variant_levels = 1;
  /// Levels charged by a plaintext-ciphertext multiplication.
  u32 plain_mult_levels = 1;

  static HeParams for_weight(u32 h, QProfile profile = QProfile::kTable3,
                             u64 plain_modulus = kDefaultPlainModulus) {
    HeRow row = he_row_for_weight(h, profile);
    HeParams p;
    p.log_n = row.log_n;
    p.coeff_modulus_bits = row.log_q;
    p.plain_modulus = plain_modulus;
    p.max_weight = row.max_weight;
    return p;
  }

  std::size_t slot_count() const { return std::size_t{1} << log_n; }

  u32 fresh_levels() const {
    return plain_mult_levels + ceil_log2(max_weight) + variant_levels;
  }

  bool meets_128bit_security() const { return coeff_modulus_bits <= max_log_q_128(log_n); }

  void validate() const {
    PEPSI_ENFORCE(log_n >= 1 && log_n <= 16, InvalidArgument, "log_n out of range");
    PEPSI_ENFORCE(coeff_modulus_bits >= 64, InvalidArgument,
                  "coefficient modulus must be at least 64 bits");
    PEPSI_ENFORCE(is_prime(plain_modulus), InvalidArgument, "plaintext modulus must be prime");
    PEPSI_ENFORCE(plain_modulus % (2 * slot_count()) == 1, InvalidArgument,
                  "plaintext modulus must be 1 mod 2N for batching");
    PEPSI_ENFORCE(plain_modulus > max_weight, InvalidArgument,
                  "plaintext modulus must exceed the Hamming weight");
  }

  u64 fingerprint() const {
    ByteWriter w;
    w.raw(std::string_view("he-params"));
    w.u32_(log_n);
    w.u32_(coeff_modulus_bits);
    w.u64_(plain_modulus);
    w.u32_(max_weight);
    w.u32_(variant_levels);
    w.u32_(plain_mult_levels);
    return fingerprint64(w.bytes());
  }

  bool operator==(const HeParams&) const = default;
};

/// N values in Z_t.
class SimdVector {
 public:
  SimdVector() = default;
  explicit SimdVector(std::size_t n, u64 fill = 0) : slots_(n, fill) {}
  explicit SimdVector(std::vector<u64> slots) : slots_(std::move(slots)) {}

  std::size_t size() const { return slots_.size(); }
  u64 operator[](std::size_t i) const { return slots_[i]; }
  u64& operator[](std::size_t i) { return slots_[i]; }
  std::span<const u64> slots() const { return slots_; }
  std::span<u64> slots() { return slots_; }

  bool operator==(const SimdVector&) const = default;

 private:
  std::vector<u64> slots_;
};

struct SecretKey {
  u64 id = 0;
  bool operator==(const SecretKey&) const = default;
};

struct OpCountSnapshot {
  u64 add = 0;
  u64 add_plain = 0;
  u64 plain_mult = 0;
  u64 mult = 0;
  u64 mult_const = 0;
  u64 encrypt = 0;
  u64 decrypt = 0;

  /// Ciphertext-level multiplications, including constant scalings.
  u64 m_count() const { return mult + mult_const; }
  u64 pm_count() const { return plain_mult; }

  OpCountSnapshot operator-(const OpCountSnapshot& o) const {
    return {add - o.add,           add_plain - o.add_plain, plain_mult - o.plain_mult,
            mult - o.mult,         mult_const - o.mult_const, encrypt - o.encrypt,
            decrypt - o.decrypt};
  }
  bool operator==(const OpCountSnapshot&) const = default;
};

class OpCounters {
 public:
  std::atomic<u64> add{0}, add_plain{0}, plain_mult{0}, mult{0}, mult_const{0}, encrypt{0},
      decrypt{0};

  OpCountSnapshot snapshot() const {
    return {add.load(), add_plain.load(), plain_mult.load(), mult.load(),
            mult_const.load(), encrypt.load(), decrypt.load()};
  }
  void reset() {
    for (auto* c : {&add, &add_plain, &plain_mult, &mult, &mult_const, &encrypt, &decrypt}) {
      c->store(0);
    }
  }
};

/// Operations the protocol needs from a batched homomorphic scheme. A real
/// lattice backend plugs in by providing the same surface; nothing protocol
/// specific is required of it.
template <class B>
concept SimdBackend = requires(const B& be, const typename B::Ciphertext& c, const SimdVector& p,
                               const SecretKey& sk, u64 s, std::span<const u8> bytes) {
  typename B::Ciphertext;
  { be.params() } -> std::same_as<const HeParams&>;
  { be.slot_count() } -> std::convertible_to<std::size_t>;
  { be.plain_modulus() } -> std::convertible_to<u64>;
  { be.encrypt(p, sk) } -> std::same_as<typename B::Ciphertext>;
  { be.decrypt(c, sk) } -> std::same_as<SimdVector>;
  { be.add(c, c) } -> std::same_as<typename B::Ciphertext>;
  { be.sub(c, c) } -> std::same_as<typename B::Ciphertext>;
  { be.add_plain(c, p) } -> std::same_as<typename B::Ciphertext>;
  { be.add_scalar(c, s) } -> std::same_as<typename B::Ciphertext>;
  { be.plain_mult(p, c) } -> std::same_as<typename B::Ciphertext>;
  { be.mult(c, c) } -> std::same_as<typename B::Ciphertext>;
  { be.mult_scalar(c, s) } -> std::same_as<typename B::Ciphertext>;
  { be.encrypt_zero_like(c) } -> std::same_as<typename B::Ciphertext>;
  { be.levels(c) } -> std::convertible_to<u32>;
  { be.serialize(c) } -> std::same_as<Bytes>;
  { be.deserialize(bytes) } -> std::same_as<typename B::Ciphertext>;
  { be.ciphertext_size_bytes() } -> std::convertible_to<std::size_t>;
};

/// Exact cleartext implementation of the batched scheme with level
/// bookkeeping. Ciphertexts carry their slots in the clear; the serialized
/// form has the size of a real ciphertext (N * log2 q payload bits) so
/// communication accounting is faithful.
class ReferenceBackend {
 public:
  static constexpr u8 kBackendId = 1;
  static constexpr std::size_t kHeaderBytes = 1 + 8 + 8 + 4;

  class Ciphertext {
   public:
    Ciphertext() = default;
    std::size_t size() const { return slots_.size(); }

   private:
    friend class ReferenceBackend;
    std::vector<u64> slots_;
    u64 key_id_ = 0;
    u32 levels_ = 0;
  };

  explicit ReferenceBackend(HeParams params) : params_(params) {
    params_.validate();
    fingerprint_ = params_.fingerprint();
  }

  const HeParams& params() const { return params_; }
  std::size_t slot_count() const { return params_.slot_count(); }
  u64 plain_modulus() const { return params_.plain_modulus; }
  OpCounters& counters() const { return counters_; }

  SecretKey keygen() const {
    ensure_sodium();
    SecretKey sk;
    while (sk.id == 0) randombytes_buf(&sk.id, sizeof(sk.id));
    return sk;
  }

  /// Reduces arbitrary 64-bit inputs into a plaintext vector of length N.
  SimdVector encode(std::span<const u64> values) const {
    PEPSI_ENFORCE(values.size() <= slot_count(), InvalidArgument, "too many values for one plaintext");
    SimdVector v(slot_count());
    for (std::size_t i = 0; i < values.size(); ++i) v[i] = values[i] % plain_modulus();
    return v;
  }

  Ciphertext encrypt(const SimdVector& pt, const SecretKey& sk) const {
    check_plain(pt);
    PEPSI_ENFORCE(sk.id != 0, KeyMismatch, "invalid secret key");
    ++counters_.encrypt;
    Ciphertext c;
    c.slots_.assign(pt.slots().begin(), pt.slots().end());
    c.key_id_ = sk.id;
    c.levels_ = params_.fresh_levels();
    return c;
  }

  SimdVector decrypt(const Ciphertext& c, const SecretKey& sk) const {
    PEPSI_ENFORCE(c.key_id_ == sk.id, KeyMismatch, "ciphertext was encrypted under another key");
    ++counters_.decrypt;
    return SimdVector(c.slots_);
  }

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const {
    check_pair(a, b);
    ++counters_.add;
    Ciphertext r = a;
    const u64 t = plain_modulus();
    for (std::size_t i = 0; i < r.slots_.size(); ++i) r.slots_[i] = add_mod(r.slots_[i], b.slots_[i], t);
    r.levels_ = std::min(a.levels_, b.levels_);
    return r;
  }

  void add_inplace(Ciphertext& a, const Ciphertext& b) const {
    check_pair(a, b);
    ++counters_.add;
    const u64 t = plain_modulus();
    for (std::size_t i = 0; i < a.slots_.size(); ++i) a.slots_[i] = add_mod(a.slots_[i], b.slots_[i], t);
    a.levels_ = std::min(a.levels_, b.levels_);
  }

  Ciphertext sub(const Ciphertext& a, const Ciphertext& b) const {
    check_pair(a, b);
    ++counters_.add;
    Ciphertext r = a;
    const u64 t = plain_modulus();
    for (std::size_t i = 0; i < r.slots_.size(); ++i) r.slots_[i] = sub_mod(r.slots_[i], b.slots_[i], t);
    r.levels_ = std::min(a.levels_, b.levels_);
    return r;
  }

  Ciphertext add_plain(const Ciphertext& a, const SimdVector& p) const {
    check_plain(p, /*full_check=*/false);
    ++counters_.add_plain;
    Ciphertext r = a;
    const u64 t = plain_modulus();
    for (std::size_t i = 0; i < r.slots_.size(); ++i) r.slots_[i] = add_mod(r.slots_[i], p[i], t);
    return r;
  }

  Ciphertext add_scalar(const Ciphertext& a, u64 s) const {
    ++counters_.add_plain;
    Ciphertext r = a;
    const u64 t = plain_modulus();
    s %= t;
    for (auto& v : r.slots_) v = add_mod(v, s, t);
    return r;
  }

  Ciphertext plain_mult(const SimdVector& p, const Ciphertext& a) const {
    check_plain(p, /*full_check=*/false);
    PEPSI_ENFORCE(a.levels_ >= params_.plain_mult_levels, DepthExhausted,
                  "plain multiplication exceeds the level budget");
    ++counters_.plain_mult;
    Ciphertext r;
    r.key_id_ = a.key_id_;
    r.levels_ = a.levels_ - params_.plain_mult_levels;
    r.slots_.resize(a.slots_.size());
    const u64 t = plain_modulus();
    for (std::size_t i = 0; i < r.slots_.size(); ++i) r.slots_[i] = mul_mod(p[i], a.slots_[i], t);
    return r;
  }

  Ciphertext mult(const Ciphertext& a, const Ciphertext& b) const {
    check_pair(a, b);
    const u32 lv = std::min(a.levels_, b.levels_);
    PEPSI_ENFORCE(lv >= 1, DepthExhausted, "multiplication exceeds the level budget");
    ++counters_.mult;
    Ciphertext r;
    r.key_id_ = a.key_id_;
    r.levels_ = lv - 1;
    r.slots_.resize(a.slots_.size());
    const u64 t = plain_modulus();
    for (std::size_t i = 0; i < r.slots_.size(); ++i) r.slots_[i] = mul_mod(a.slots_[i], b.slots_[i], t);
    return r;
  }

  Ciphertext mult_scalar(const Ciphertext& a, u64 s) const {
    ++counters_.mult_const;
    Ciphertext r = a;
    const u64 t = plain_modulus();
    s %= t;
    for (auto& v : r.slots_) v = mul_mod(v, s, t);
    return r;
  }

  /// Encryption of zero under the key of `like`; the flooding seam.
  Ciphertext encrypt_zero_like(const Ciphertext& like) const {
    ++counters_.encrypt;
    Ciphertext r;
    r.key_id_ = like.key_id_;
    r.levels_ = params_.fresh_levels();
    r.slots_.assign(slot_count(), 0);
    return r;
  }

  u32 levels(const Ciphertext& c) const { return c.levels_; }

  std::size_t payload_bytes() const { return slot_count() * params_.coeff_modulus_bits / 8; }
  std::size_t ciphertext_size_bytes() const { return kHeaderBytes + payload_bytes(); }

  /// backend id | params fingerprint | key id | levels | N slots packed as
  /// log2(q)-bit little-endian fields.
  Bytes serialize(const Ciphertext& c) const {
    ByteWriter w;
    w.bytes().reserve(ciphertext_size_bytes());
    w.u8_(kBackendId);
    w.u64_(fingerprint_);
    w.u64_(c.key_id_);
    w.u32_(c.levels_);
    Bytes& out = w.bytes();
    const std::size_t base = out.size();
    out.resize(base + payload_bytes(), 0);
    const u32 q = params_.coeff_modulus_bits;
    for (std::size_t i = 0; i < c.slots_.size(); ++i) {
      const std::size_t bit = i * q;
      u128 v = static_cast<u128>(c.slots_[i]) << (bit % 8);
      for (std::size_t j = 0; j < 9 && v; ++j, v >>= 8) out[base + bit / 8 + j] |= static_cast<u8>(v);
    }
    return w.take();
  }

  Ciphertext deserialize(std::span<const u8> bytes) const {
    PEPSI_ENFORCE(bytes.size() == ciphertext_size_bytes(), FormatError,
                  "ciphertext blob has the wrong size");
    ByteReader r(bytes);
    PEPSI_ENFORCE(r.u8_() == kBackendId, FormatError, "ciphertext from another backend");
    PEPSI_ENFORCE(r.u64_() == fingerprint_, FingerprintMismatch,
                  "ciphertext encrypted under different parameters");
    Ciphertext c;
    c.key_id_ = r.u64_();
    c.levels_ = r.u32_();
    PEPSI_ENFORCE(c.levels_ <= params_.fresh_levels(), FormatError, "ciphertext level out of range");
    auto payload = r.raw(payload_bytes());
    const u32 q = params_.coeff_modulus_bits;
    c.slots_.resize(slot_count());
    for (std::size_t i = 0; i < c.slots_.size(); ++i) {
      const std::size_t bit = i * q;
      u128 v = 0;
      for (std::size_t j = 0; j < 9 && bit / 8 + j < payload.size(); ++j) {
        v |= static_cast<u128>(payload[bit / 8 + j]) << (8 * j);
      }
      const u64 slot = static_cast<u64>(v >> (bit % 8));
      PEPSI_ENFORCE(slot < plain_modulus(), FormatError, "ciphertext slot out of range");
      c.slots_[i] = slot;
    }
    return c;
  }

 private:
  void check_pair(const Ciphertext& a, const Ciphertext& b) const {
    PEPSI_ENFORCE(a.key_id_ == b.key_id_, KeyMismatch, "operands encrypted under different keys");
    PEPSI_ENFORCE(a.slots_.size() == b.slots_.size(), InvalidArgument, "operand length mismatch");
  }
  void check_plain(const SimdVector& p, bool full_check = true) const {
    PEPSI_ENFORCE(p.size() == slot_count(), InvalidArgument, "plaintext must have exactly N slots");
    if (full_check) {
      for (u64 v : p.slots()) {
        PEPSI_ENFORCE(v < plain_modulus(), InvalidArgument, "plaintext slot not reduced mod t");
      }
    }
  }

  HeParams params_;
  u64 fingerprint_ = 0;
  mutable OpCounters counters_;
};

static_assert(SimdBackend<ReferenceBackend>);

}  // namespace pepsi
