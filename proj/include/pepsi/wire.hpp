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

#include <string>
#include <string_view>
#include <vector>

#include "pepsi/common.hpp"

namespace pepsi {

/// Message layout (all integers little-endian):
///   magic "PEPSIv01" | kind u8 | body
/// request body:  variant u8 | plan fp u64 | he fp u64 | k u32 | k blobs | v u32 | v blobs
/// response body: status u8 | variant u8 | error str | groups u32 | k u32 | k blobs
/// A blob is a u32 byte length followed by the bytes.
inline constexpr std::string_view kWireMagic = "PEPSIv01";

enum class Variant : u8 { kPsi = 0, kLabelled = 1, kSum = 2, kCardinality = 3, kInnerProduct = 4 };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kPsi: return "psi";
    case Variant::kLabelled: return "labelled";
    case Variant::kSum: return "sum";
    case Variant::kCardinality: return "cardinality";
    case Variant::kInnerProduct: return "inner-product";
  }
  return "unknown";
}

inline Variant variant_from_string(std::string_view s) {
  for (u8 i = 0; i <= 4; ++i) {
    if (to_string(static_cast<Variant>(i)) == s) return static_cast<Variant>(i);
  }
  throw InvalidArgument("unknown variant: " + std::string(s));
}

enum class Status : u8 { kOk = 0, kFingerprintMismatch = 1, kBadRequest = 2, kServerError = 3 };

enum class MessageKind : u8 { kRequest = 1, kResponse = 2 };

struct Request {
  Variant variant = Variant::kPsi;
  u64 plan_fingerprint = 0;
  u64 he_fingerprint = 0;
  std::vector<Bytes> ciphertexts;
  /// Encrypted client values; only used by inner-product queries.
  std::vector<Bytes> client_values;

  bool operator==(const Request&) const = default;
};

struct Response {
  Status status = Status::kOk;
  Variant variant = Variant::kPsi;
  std::string error;
  /// Number of result groups (label limbs); 1 for other variants.
  u32 groups = 1;
  std::vector<Bytes> ciphertexts;

  bool operator==(const Response&) const = default;
};

namespace detail {

inline void write_blobs(ByteWriter& w, const std::vector<Bytes>& blobs) {
  w.u32_(static_cast<u32>(blobs.size()));
  for (const auto& b : blobs) w.blob(b);
}

inline std::vector<Bytes> read_blobs(ByteReader& r) {
  const u32 n = r.u32_();
  // Each blob needs at least its 4-byte length.
  PEPSI_ENFORCE(u64{n} * 4 <= r.remaining(), FormatError, "blob count exceeds message size");
  std::vector<Bytes> out;
  out.reserve(n);
  for (u32 i = 0; i < n; ++i) {
    const auto b = r.blob();
    out.emplace_back(b.begin(), b.end());
  }
  return out;
}

inline MessageKind read_header(ByteReader& r) {
  const auto magic = r.raw(kWireMagic.size());
  PEPSI_ENFORCE(std::string_view(reinterpret_cast<const char*>(magic.data()), magic.size()) == kWireMagic,
                FormatError, "bad magic or unsupported version");
  const u8 kind = r.u8_();
  PEPSI_ENFORCE(kind == 1 || kind == 2, FormatError, "unknown message kind");
  return static_cast<MessageKind>(kind);
}

inline Variant read_variant(ByteReader& r) {
  const u8 v = r.u8_();
  PEPSI_ENFORCE(v <= 4, FormatError, "unknown variant tag");
  return static_cast<Variant>(v);
}

}  // namespace detail

inline Bytes serialize(const Request& m) {
  ByteWriter w;
  w.raw(kWireMagic);
  w.u8_(static_cast<u8>(MessageKind::kRequest));
  w.u8_(static_cast<u8>(m.variant));
  w.u64_(m.plan_fingerprint);
  w.u64_(m.he_fingerprint);
  detail::write_blobs(w, m.ciphertexts);
  detail::write_blobs(w, m.client_values);
  return w.take();
}

inline Bytes serialize(const Response& m) {
  ByteWriter w;
  w.raw(kWireMagic);
  w.u8_(static_cast<u8>(MessageKind::kResponse));
  w.u8_(static_cast<u8>(m.status));
  w.u8_(static_cast<u8>(m.variant));
  w.str(m.error);
  w.u32_(m.groups);
  detail::write_blobs(w, m.ciphertexts);
  return w.take();
}

inline MessageKind peek_kind(std::span<const u8> bytes) {
  ByteReader r(bytes);
  return detail::read_header(r);
}

inline Request deserialize_request(std::span<const u8> bytes) {
  ByteReader r(bytes);
  PEPSI_ENFORCE(detail::read_header(r) == MessageKind::kRequest, FormatError, "not a request");
  Request m;
  m.variant = detail::read_variant(r);
  m.plan_fingerprint = r.u64_();
  m.he_fingerprint = r.u64_();
  m.ciphertexts = detail::read_blobs(r);
  m.client_values = detail::read_blobs(r);
  r.expect_done();
  return m;
}

inline Response deserialize_response(std::span<const u8> bytes) {
  ByteReader r(bytes);
  PEPSI_ENFORCE(detail::read_header(r) == MessageKind::kResponse, FormatError, "not a response");
  Response m;
  const u8 status = r.u8_();
  PEPSI_ENFORCE(status <= 3, FormatError, "unknown status");
  m.status = static_cast<Status>(status);
  m.variant = detail::read_variant(r);
  m.error = r.str();
  m.groups = r.u32_();
  m.ciphertexts = detail::read_blobs(r);
  r.expect_done();
  return m;
}

}  // namespace pepsi
