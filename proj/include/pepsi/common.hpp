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

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pepsi {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using u128 = unsigned __int128;

// Error hierarchy. Protocol failures (bin overflow, cuckoo failure) are the
// ones a caller may recover from by re-keying or re-planning.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ProtocolFailure : public Error {
 public:
  using Error::Error;
};

class InsertionFailure : public ProtocolFailure {
 public:
  using ProtocolFailure::ProtocolFailure;
};

class BinOverflow : public ProtocolFailure {
 public:
  using ProtocolFailure::ProtocolFailure;
};

class DepthExhausted : public Error {
 public:
  using Error::Error;
};

class KeyMismatch : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

#define PEPSI_ENFORCE(cond, ExcType, msg)       \
  do {                                          \
    if (!(cond)) throw ExcType(std::string(msg)); \
  } while (0)

// ---------------------------------------------------------------------------
// Integer helpers

constexpr u32 ceil_log2(u64 x) {
  return x <= 1 ? 0 : static_cast<u32>(64 - std::countl_zero(x - 1));
}

constexpr u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

constexpr u32 floor_log2(u64 x) {
  return x == 0 ? 0 : static_cast<u32>(63 - std::countl_zero(x));
}

constexpr u64 low_mask(u32 bits) {
  return bits >= 64 ? ~u64{0} : ((u64{1} << bits) - 1);
}

constexpr u64 add_mod(u64 a, u64 b, u64 m) {
  u64 s = a + b;
  if (s < a || s >= m) s -= m;
  return s;
}

constexpr u64 sub_mod(u64 a, u64 b, u64 m) { return a >= b ? a - b : m - (b - a); }

constexpr u64 mul_mod(u64 a, u64 b, u64 m) {
  return static_cast<u64>((static_cast<u128>(a) * b) % m);
}

constexpr u64 pow_mod(u64 base, u64 exp, u64 m) {
  u64 r = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) r = mul_mod(r, base, m);
    base = mul_mod(base, base, m);
    exp >>= 1;
  }
  return r;
}

// Deterministic Miller-Rabin for 64-bit inputs.
constexpr bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  u32 s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    u64 x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (u32 r = 1; r < s; ++r) {
      x = mul_mod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

// Inverse modulo a prime.
inline u64 inv_mod_prime(u64 a, u64 p) {
  PEPSI_ENFORCE(a % p != 0, InvalidArgument, "zero has no inverse");
  return pow_mod(a, p - 2, p);
}

// ---------------------------------------------------------------------------
// Little-endian byte buffers used by every on-disk and on-wire format.

using Bytes = std::vector<u8>;

class ByteWriter {
 public:
  void u8_(u8 v) { buf_.push_back(v); }
  void u32_(u32 v) { put_le(v, 4); }
  void u64_(u64 v) { put_le(v, 8); }
  void raw(std::span<const u8> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  // u32 length prefix followed by the bytes.
  void blob(std::span<const u8> data) {
    PEPSI_ENFORCE(data.size() <= 0xffffffffu, FormatError, "blob too large");
    u32_(static_cast<u32>(data.size()));
    raw(data);
  }
  void str(std::string_view s) {
    u32_(static_cast<u32>(s.size()));
    raw(s);
  }

  Bytes& bytes() { return buf_; }
  Bytes take() { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  void put_le(u64 v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<u8>(v >> (8 * i)));
  }
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const u8> data) : data_(data) {}

  u8 u8_() { return static_cast<u8>(get_le(1)); }
  u32 u32_() { return static_cast<u32>(get_le(4)); }
  u64 u64_() { return get_le(8); }
  std::span<const u8> raw(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::span<const u8> blob() { return raw(u32_()); }
  std::string str() {
    auto s = blob();
    return std::string(s.begin(), s.end());
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_done() const {
    PEPSI_ENFORCE(done(), FormatError, "trailing bytes after message");
  }

 private:
  void need(std::size_t n) const {
    PEPSI_ENFORCE(n <= data_.size() - pos_, FormatError, "truncated input");
  }
  u64 get_le(int n) {
    need(static_cast<std::size_t>(n));
    u64 v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<u64>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const u8> data_;
  std::size_t pos_ = 0;
};

}  // namespace pepsi
