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

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pepsi/planner.hpp"
#include "pepsi/protocol.hpp"
#include "pepsi/variants.hpp"
#include "pepsi/wire.hpp"

namespace pepsi {

using RefCiphertext = ReferenceBackend::Ciphertext;

// ---------------------------------------------------------------------------
// Preprocessed server tables on disk:
//   "PEPSITBL" | version u32 | plan fp u64 | set fp u64 | element count u64 | table

inline constexpr std::string_view kCacheMagic = "PEPSITBL";
inline constexpr u32 kCacheVersion = 1;
inline constexpr const char* kCacheDirEnv = "PEPSI_CACHE_DIR";

inline u64 set_fingerprint(std::span<const u64> elements) {
  ByteWriter w;
  for (u64 x : elements) w.u64_(x);
  return fingerprint64(w.bytes());
}

inline Bytes serialize_dataset(const ProtocolParams& params, const ServerDataset& ds, u64 set_fp) {
  ByteWriter w;
  w.raw(kCacheMagic);
  w.u32_(kCacheVersion);
  w.u64_(params.plan_fingerprint());
  w.u64_(set_fp);
  w.u64_(ds.element_count);
  ds.table.serialize(w);
  return w.take();
}

inline ServerDataset deserialize_dataset(const ProtocolParams& params, std::span<const u8> bytes,
                                         std::optional<u64> expected_set_fp = std::nullopt) {
  ByteReader r(bytes);
  const auto magic = r.raw(kCacheMagic.size());
  PEPSI_ENFORCE(std::string_view(reinterpret_cast<const char*>(magic.data()), magic.size()) == kCacheMagic,
                FormatError, "not a server table cache");
  PEPSI_ENFORCE(r.u32_() == kCacheVersion, FormatError, "unsupported cache version");
  PEPSI_ENFORCE(r.u64_() == params.plan_fingerprint(), FingerprintMismatch, "cache built for another plan");
  const u64 set_fp = r.u64_();
  PEPSI_ENFORCE(!expected_set_fp || *expected_set_fp == set_fp, FingerprintMismatch,
                "cache built for another set");
  const u64 count = r.u64_();
  BinTable table = BinTable::deserialize(r);
  r.expect_done();
  return server_dataset_from_table(params, std::move(table), count);
}

inline std::string default_cache_dir() {
  if (const char* dir = std::getenv(kCacheDirEnv); dir && *dir) return dir;
  return (std::filesystem::temp_directory_path() / "pepsi-cache").string();
}

inline std::string cache_path(const std::string& dir, const ProtocolParams& params, u64 set_fp) {
  char name[64];
  std::snprintf(name, sizeof(name), "%016llx-%016llx.tbl", static_cast<unsigned long long>(params.plan_fingerprint()),
                static_cast<unsigned long long>(set_fp));
  return (std::filesystem::path(dir) / name).string();
}

inline Bytes read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  PEPSI_ENFORCE(f.good(), Error, "cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(f), {});
}

inline void write_file(const std::string& path, std::span<const u8> data) {
  const auto tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    PEPSI_ENFORCE(f.good(), Error, "cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }
  std::filesystem::rename(tmp, path);
}

/// Loads the cached table for (plan, set) or builds and stores it.
inline ServerDataset load_or_prepare(const ProtocolParams& params, std::span<const u64> elements,
                                     const std::string& cache_dir, bool* cache_hit = nullptr) {
  const u64 set_fp = set_fingerprint(elements);
  const std::string path = cache_path(cache_dir, params, set_fp);
  if (std::filesystem::exists(path)) {
    if (cache_hit) *cache_hit = true;
    return deserialize_dataset(params, read_file(path), set_fp);
  }
  if (cache_hit) *cache_hit = false;
  ServerDataset ds = server_prepare(params, elements);
  std::filesystem::create_directories(cache_dir);
  write_file(path, serialize_dataset(params, ds, set_fp));
  return ds;
}

// ---------------------------------------------------------------------------

/// Server role: holds the preprocessed dataset and answers requests. handle()
/// is safe to call from several connections at once.
class ServerEngine {
 public:
  ServerEngine(ProtocolParams params, ServerDataset ds, u32 threads = 1)
      : params_(std::move(params)), ds_(std::move(ds)), be_(params_.he), threads_(threads) {}

  const ProtocolParams& params() const { return params_; }
  const ServerDataset& dataset() const { return ds_; }

  /// Per-element values for sum, inner-product and single-slot labelled queries.
  void set_values(std::span<const u64> values) {
    values_ = make_server_values(params_, ds_, values);
    nonzero_values_ = std::all_of(values.begin(), values.end(), [](u64 v) { return v != 0; });
  }
  void set_labels(std::span<const Bytes> labels) { labels_ = make_label_values(params_, ds_, labels); }

  /// Requests that reached homomorphic evaluation.
  u64 evaluations() const { return evaluations_.load(); }

  Response handle(const Request& req) const {
    Response resp;
    resp.variant = req.variant;
    if (req.plan_fingerprint != params_.plan_fingerprint() || req.he_fingerprint != params_.he.fingerprint()) {
      resp.status = Status::kFingerprintMismatch;
      resp.error = "request was built for a different plan or parameter set";
      return resp;
    }
    try {
      std::vector<RefCiphertext> ct_c = decode(req.ciphertexts);
      std::vector<RefCiphertext> out;
      ++evaluations_;
      switch (req.variant) {
        case Variant::kPsi:
          out = intersect(be_, params_, ds_, std::span<const RefCiphertext>(ct_c), threads_);
          break;
        case Variant::kLabelled: {
          const ServerValues* v = labelled_values();
          out = labelled_psi(be_, params_, ds_, *v, std::span<const RefCiphertext>(ct_c), threads_);
          resp.groups = v->limb_count;
          break;
        }
        case Variant::kSum:
          out.push_back(
              psi_sum(be_, params_, ds_, require(values_, "sum"), std::span<const RefCiphertext>(ct_c), threads_));
          break;
        case Variant::kCardinality:
          out.push_back(psi_cardinality(be_, params_, ds_, std::span<const RefCiphertext>(ct_c), threads_));
          break;
        case Variant::kInnerProduct: {
          std::vector<RefCiphertext> val_c = decode(req.client_values);
          out.push_back(psi_inner_product(be_, params_, ds_, require(values_, "inner-product"),
                                          std::span<const RefCiphertext>(ct_c),
                                          std::span<const RefCiphertext>(val_c), threads_));
          break;
        }
      }
      for (const auto& c : out) resp.ciphertexts.push_back(be_.serialize(c));
    } catch (const FormatError& e) {
      resp = error_response(req.variant, Status::kBadRequest, e.what());
    } catch (const FingerprintMismatch& e) {
      resp = error_response(req.variant, Status::kFingerprintMismatch, e.what());
    } catch (const InvalidArgument& e) {
      resp = error_response(req.variant, Status::kBadRequest, e.what());
    } catch (const Error& e) {
      resp = error_response(req.variant, Status::kServerError, e.what());
    }
    return resp;
  }

  /// Wire entry point. Malformed frames throw FormatError.
  Bytes handle_bytes(std::span<const u8> frame) const { return serialize(handle(deserialize_request(frame))); }

 private:
  static Response error_response(Variant v, Status s, std::string msg) {
    Response r;
    r.status = s;
    r.variant = v;
    r.error = std::move(msg);
    return r;
  }

  std::vector<RefCiphertext> decode(const std::vector<Bytes>& blobs) const {
    std::vector<RefCiphertext> out;
    out.reserve(blobs.size());
    for (const auto& b : blobs) out.push_back(be_.deserialize(b));
    return out;
  }

  const ServerValues& require(const std::optional<ServerValues>& v, const char* what) const {
    PEPSI_ENFORCE(v.has_value(), InvalidArgument, std::string("server has no values for ") + what + " queries");
    return *v;
  }

  const ServerValues* labelled_values() const {
    if (params_.label_bytes > 0) return &require(labels_, "labelled");
    PEPSI_ENFORCE(nonzero_values_, InvalidArgument, "labelled queries need nonzero labels");
    return &require(values_, "labelled");
  }

  ProtocolParams params_;
  ServerDataset ds_;
  ReferenceBackend be_;
  u32 threads_;
  std::optional<ServerValues> values_;
  std::optional<ServerValues> labels_;
  bool nonzero_values_ = false;
  mutable std::atomic<u64> evaluations_{0};
};

/// Client role: builds one request per query and interprets the response.
class ClientSession {
 public:
  explicit ClientSession(ProtocolParams params) : params_(std::move(params)), be_(params_.he), sk_(be_.keygen()) {}

  const ProtocolParams& params() const { return params_; }
  const ReferenceBackend& backend() const { return be_; }
  const BinTable& table() const { return query_.table; }

  Request make_request(Variant variant, std::span<const u64> elements, std::span<const u64> client_values = {}) {
    auto q = client_prepare(be_, params_, elements, sk_);
    Request req;
    req.variant = variant;
    req.plan_fingerprint = params_.plan_fingerprint();
    req.he_fingerprint = params_.he.fingerprint();
    for (const auto& c : q.ciphertexts) req.ciphertexts.push_back(be_.serialize(c));
    if (variant == Variant::kInnerProduct) {
      PEPSI_ENFORCE(client_values.size() == elements.size(), InvalidArgument,
                    "inner-product queries need one value per client element");
      for (const auto& c : encrypt_client_values(be_, params_, q.table, client_values, sk_)) {
        req.client_values.push_back(be_.serialize(c));
      }
    }
    query_.table = std::move(q.table);
    variant_ = variant;
    return req;
  }

  std::vector<u64> intersection(const Response& resp) const {
    auto cts = results(resp, Variant::kPsi);
    return extract_intersection(be_, params_, std::span<const RefCiphertext>(cts), query_.table, sk_);
  }

  std::map<u64, u64> labels(const Response& resp) const {
    auto cts = results(resp, Variant::kLabelled);
    return extract_labels(be_, params_, std::span<const RefCiphertext>(cts), query_.table, sk_);
  }

  std::map<u64, Bytes> label_bytes(const Response& resp) const {
    auto cts = results(resp, Variant::kLabelled);
    return extract_label_bytes(be_, params_, std::span<const RefCiphertext>(cts), query_.table, sk_);
  }

  /// Sum, cardinality or inner product.
  u64 scalar(const Response& resp) const {
    auto cts = results(resp, variant_);
    PEPSI_ENFORCE(cts.size() == 1, FormatError, "scalar responses carry one ciphertext");
    return extract_sum(be_, cts[0], sk_);
  }

 private:
  std::vector<RefCiphertext> results(const Response& resp, Variant expected) const {
    if (resp.status == Status::kFingerprintMismatch) throw FingerprintMismatch("server: " + resp.error);
    PEPSI_ENFORCE(resp.status == Status::kOk, ProtocolFailure, "server: " + resp.error);
    PEPSI_ENFORCE(resp.variant == expected && resp.variant == variant_, FormatError,
                  "response variant does not match the query");
    std::vector<RefCiphertext> out;
    for (const auto& b : resp.ciphertexts) out.push_back(be_.deserialize(b));
    return out;
  }

  ProtocolParams params_;
  ReferenceBackend be_;
  SecretKey sk_;
  ClientQuery<ReferenceBackend> query_;
  Variant variant_ = Variant::kPsi;
};

}  // namespace pepsi
