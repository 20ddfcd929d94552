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

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <limits>
#include <vector>

#include "pepsi/common.hpp"
#include "pepsi/hash.hpp"
#include "pepsi/simd_backend.hpp"

namespace pepsi {

using BigInt = boost::multiprecision::cpp_int;

inline BigInt binomial_exact(u64 n, u32 k) {
  if (k > n) return 0;
  BigInt r = 1;
  for (u32 i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

/// C(n, k) clamped to u64 max. The running product C(n-k+i, i) never
/// decreases in i, so once it passes the cap the final value does too.
inline u64 binomial_saturating(u64 n, u32 k) {
  if (k > n) return 0;
  constexpr u128 kCap = std::numeric_limits<u64>::max();
  u128 r = 1;
  for (u32 i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r >= kCap) return std::numeric_limits<u64>::max();
  }
  return static_cast<u64>(r);
}

/// Smallest l with C(l, h) >= 2^bitlength.
inline u64 code_length(u32 bitlength, u32 weight) {
  PEPSI_ENFORCE(bitlength >= 1 && weight >= 1, InvalidArgument,
                "code_length needs positive bitlength and weight");
  if (weight == 1) {
    PEPSI_ENFORCE(bitlength < 64, InvalidArgument, "code length does not fit in 64 bits");
    return u64{1} << bitlength;
  }
  const BigInt target = BigInt(1) << bitlength;
  u64 lo = weight;
  u64 hi = weight;
  while (binomial_exact(hi, weight) < target) hi *= 2;
  while (lo < hi) {
    const u64 mid = lo + (hi - lo) / 2;
    if (binomial_exact(mid, weight) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

struct CodeParams {
  u32 bitlength = 0;  // effective bits per element
  u32 weight = 0;     // h
  u64 length = 0;     // l

  static CodeParams make(u32 bitlength, u32 weight) {
    return CodeParams{bitlength, weight, code_length(bitlength, weight)};
  }

  bool operator==(const CodeParams&) const = default;
};

/// Constant-weight codeword stored as the ascending positions of its set
/// bits. The all-zero word (no positions) is the dummy.
class Codeword {
 public:
  Codeword() = default;
  Codeword(u64 length, std::vector<u32> ones) : length_(length), ones_(std::move(ones)) {}

  static Codeword dummy(u64 length) { return Codeword(length, {}); }

  u64 length() const { return length_; }
  std::size_t popcount() const { return ones_.size(); }
  bool is_dummy() const { return ones_.empty(); }
  std::span<const u32> ones() const { return ones_; }

  bool bit(u64 j) const { return std::binary_search(ones_.begin(), ones_.end(), static_cast<u32>(j)); }

  std::vector<u8> to_bits() const {
    std::vector<u8> bits(length_, 0);
    for (u32 p : ones_) bits[p] = 1;
    return bits;
  }

  bool operator==(const Codeword&) const = default;

 private:
  u64 length_ = 0;
  std::vector<u32> ones_;
};

/// Perfect mapping between [0, 2^bitlength) and CW(l, h) by colexicographic
/// ranking: x = sum_j C(c_j, j) for positions c_1 < ... < c_h.
class CwEncoder {
 public:
  static constexpr u64 kMaxTableEntries = u64{1} << 25;

  explicit CwEncoder(CodeParams params) : params_(params) {
    PEPSI_ENFORCE(params_.bitlength <= 62, InvalidArgument, "bitlength above 62 is not supported");
    PEPSI_ENFORCE(params_.length >= params_.weight, InvalidArgument, "code length below weight");
    PEPSI_ENFORCE(params_.length <= std::numeric_limits<u32>::max(), InvalidArgument,
                  "code length too large to encode");
    PEPSI_ENFORCE(params_.length * (params_.weight + 1) <= kMaxTableEntries, InvalidArgument,
                  "code too large for a binomial table");
    PEPSI_ENFORCE(binomial_exact(params_.length, params_.weight) >= (BigInt(1) << params_.bitlength),
                  InvalidArgument, "C(l, h) < 2^bitlength");
    const u64 l = params_.length;
    const u32 h = params_.weight;
    table_.assign(l * (h + 1), 0);
    for (u64 c = 0; c < l; ++c) {
      for (u32 j = 0; j <= h; ++j) table_[c * (h + 1) + j] = binomial_saturating(c, j);
    }
  }

  const CodeParams& params() const { return params_; }

  Codeword encode(u64 x) const {
    PEPSI_ENFORCE(x < (u64{1} << params_.bitlength), InvalidArgument,
                  "value does not fit the code bitlength");
    const u32 h = params_.weight;
    std::vector<u32> ones(h);
    u64 rest = x;
    u64 upper = params_.length;  // exclusive bound on the next position
    for (u32 j = h; j >= 1; --j) {
      // Largest c in [j-1, upper) with C(c, j) <= rest.
      u64 lo = j - 1;
      u64 hi = upper - 1;
      while (lo < hi) {
        const u64 mid = lo + (hi - lo + 1) / 2;
        if (binom(mid, j) <= rest) {
          lo = mid;
        } else {
          hi = mid - 1;
        }
      }
      ones[j - 1] = static_cast<u32>(lo);
      rest -= binom(lo, j);
      upper = lo;
    }
    return Codeword(params_.length, std::move(ones));
  }

  u64 decode(const Codeword& w) const {
    PEPSI_ENFORCE(w.length() == params_.length && w.popcount() == params_.weight, InvalidArgument,
                  "not a codeword of this code");
    auto ones = w.ones();
    for (u32 j = 0; j < params_.weight; ++j) {
      PEPSI_ENFORCE(ones[j] < params_.length && (j == 0 || ones[j - 1] < ones[j]), InvalidArgument,
                    "codeword positions must be strictly ascending and in range");
    }
    u64 rank = 0;
    for (u32 j = 1; j <= params_.weight; ++j) {
      const u64 term = binom(ones[j - 1], j);
      PEPSI_ENFORCE(term <= low_mask(params_.bitlength) - rank, InvalidArgument,
                    "codeword rank outside the element domain");
      rank += term;
    }
    PEPSI_ENFORCE(rank < (u64{1} << params_.bitlength), InvalidArgument,
                  "codeword rank outside the element domain");
    return rank;
  }

  /// Hashes an arbitrary byte string to `bitlength` bits, then encodes.
  Codeword encode_lossy(std::span<const u8> x, const HashKey& key) const {
    return encode(hash_to_bits(key, x, params_.bitlength));
  }
  Codeword encode_lossy(std::string_view x, const HashKey& key) const {
    return encode(hash_to_bits(key, x, params_.bitlength));
  }

 private:
  u64 binom(u64 c, u32 j) const { return table_[c * (params_.weight + 1) + j]; }

  CodeParams params_;
  std::vector<u64> table_;
};

/// Per-weight constants of the equality circuit.
struct EqualityConstants {
  u32 weight = 0;
  u64 inv_factorial = 1;  // (h!)^-1 mod t

  static EqualityConstants make(u32 h, u64 t) {
    PEPSI_ENFORCE(h >= 1 && t > h && is_prime(t), InvalidArgument,
                  "equality operator needs a prime t > h");
    u64 f = 1;
    for (u32 i = 2; i <= h; ++i) f = mul_mod(f, i, t);
    return {h, inv_mod_prime(f, t)};
  }
};

namespace detail {

// Left-balanced product tree; depth ceil(log2(size)).
template <SimdBackend B>
typename B::Ciphertext product_tree(const B& be, std::vector<typename B::Ciphertext>& f,
                                    std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return std::move(f[lo]);
  const std::size_t mid = lo + (hi - lo + 1) / 2;
  auto left = product_tree(be, f, lo, mid);
  auto right = product_tree(be, f, mid, hi);
  return be.mult(left, right);
}

}  // namespace detail

/// Slot-wise equality of an encrypted and a plaintext batch of codewords:
///   h' = sum_i x_i * y_i,  e = (1/h!) * prod_{i in [h]} (h' - i).
/// Costs l plaintext multiplications, h - 1 ciphertext multiplications and
/// one constant scaling; consumes plain_mult_levels + ceil(log2 h) levels.
/// `reserve_levels` are kept free for whatever the caller does next.
template <SimdBackend B>
typename B::Ciphertext arith_cw_eq(const B& be, std::span<const typename B::Ciphertext> x_bits,
                                   std::span<const SimdVector> y_bits, const EqualityConstants& k,
                                   u32 reserve_levels) {
  PEPSI_ENFORCE(!x_bits.empty() && x_bits.size() == y_bits.size(), InvalidArgument,
                "operands must both have l bit batches");
  const u32 needed = be.params().plain_mult_levels + ceil_log2(k.weight) + reserve_levels;
  for (const auto& x : x_bits) {
    PEPSI_ENFORCE(be.levels(x) >= needed, DepthExhausted,
                  "equality circuit for this Hamming weight exceeds the level budget");
  }

  auto inner = be.plain_mult(y_bits[0], x_bits[0]);
  for (std::size_t i = 1; i < x_bits.size(); ++i) {
    if constexpr (requires { be.add_inplace(inner, inner); }) {
      be.add_inplace(inner, be.plain_mult(y_bits[i], x_bits[i]));
    } else {
      inner = be.add(inner, be.plain_mult(y_bits[i], x_bits[i]));
    }
  }

  const u64 t = be.plain_modulus();
  std::vector<typename B::Ciphertext> factors;
  factors.reserve(k.weight);
  factors.push_back(inner);
  for (u32 i = 1; i < k.weight; ++i) factors.push_back(be.add_scalar(inner, t - i));
  auto prod = detail::product_tree(be, factors, 0, factors.size());
  return be.mult_scalar(prod, k.inv_factorial);
}

}  // namespace pepsi
