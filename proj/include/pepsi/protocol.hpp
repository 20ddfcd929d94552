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
#include <exception>
#include <mutex>
#include <optional>
#include <string_view>
#include <thread>
#include <vector>

#include "pepsi/binning.hpp"
#include "pepsi/cwcode.hpp"
#include "pepsi/hash.hpp"
#include "pepsi/simd_backend.hpp"

namespace pepsi {

/// Everything client and server must agree on before a query.
struct ProtocolParams {
  BinningPlan binning;
  CodeParams code;
  HeParams he;
  QProfile profile = QProfile::kTable3;
  /// Fixed label width for labelled queries; 0 when labels are unused.
  u32 label_bytes = 0;
  /// Elements are byte strings hashed to element_bitlength bits.
  bool large_elements = false;
  HashKey element_key{};

  static ProtocolParams make(BinningPlan binning, u32 hamming_weight, HeParams he) {
    ProtocolParams p;
    p.binning = std::move(binning);
    p.code = CodeParams::make(p.binning.effective_bitlength(), hamming_weight);
    p.he = he;
    return p;
  }

  u32 hamming_weight() const { return code.weight; }

  void validate() const {
    binning.validate();
    he.validate();
    PEPSI_ENFORCE(code.bitlength == binning.effective_bitlength(), InvalidArgument,
                  "code bitlength must equal the effective bitlength");
    PEPSI_ENFORCE(code.length == code_length(code.bitlength, code.weight), InvalidArgument,
                  "code length is not minimal for (bitlength, weight)");
  }

  /// Fingerprint of the protocol plan (binning, code, labels, element mode).
  u64 plan_fingerprint() const {
    ByteWriter w;
    w.raw(std::string_view("protocol-plan"));
    w.u64_(binning.fingerprint());
    w.u32_(code.bitlength);
    w.u32_(code.weight);
    w.u64_(code.length);
    w.u32_(label_bytes);
    w.u8_(large_elements ? 1 : 0);
    w.raw(element_key);
    return fingerprint64(w.bytes());
  }
};

/// Index arithmetic for batched tables: bin k lives in chunk k / N at slot
/// k % N; batches are stored chunk-major, then load slot, then code bit, so
/// the l bit batches of one (chunk, slot) pair are contiguous.
struct BatchLayout {
  u64 bins = 0;
  u64 slots = 0;
  u64 chunks = 0;
  u64 code_length = 0;

  static BatchLayout of(const ProtocolParams& p) {
    const u64 n = p.he.slot_count();
    return {p.binning.bins(), n, ceil_div(p.binning.bins(), n), p.code.length};
  }

  std::size_t batch_index(u64 chunk, u32 load_slot, u32 load, u64 bit = 0) const {
    return static_cast<std::size_t>((chunk * load + load_slot) * code_length + bit);
  }
  u64 chunk_of(u64 bin) const { return bin / slots; }
  u64 slot_of(u64 bin) const { return bin % slots; }
};

/// Number of plaintext and ciphertext multiplications of one intersection:
/// (l PM + h M) * ceil(b/N) * gamma * mu.
struct OpCounts {
  u64 pm = 0;
  u64 m = 0;
  bool operator==(const OpCounts&) const = default;
};

inline OpCounts count_operations(u64 code_length, u32 weight, u64 bins, u64 slots, u32 client_load,
                                 u32 server_load) {
  const u64 reps = ceil_div(bins, slots) * client_load * server_load;
  return {code_length * reps, static_cast<u64>(weight) * reps};
}

inline OpCounts count_operations(const ProtocolParams& p) {
  return count_operations(p.code.length, p.code.weight, p.binning.bins(), p.he.slot_count(),
                          p.binning.client_max_load, p.binning.server_max_load);
}

inline u64 map_large_element(const ProtocolParams& p, std::string_view element) {
  return hash_to_bits(p.element_key, element, p.binning.element_bitlength);
}

namespace detail {

inline void require_distinct(std::span<const u64> elements) {
  std::vector<u64> sorted(elements.begin(), elements.end());
  std::sort(sorted.begin(), sorted.end());
  PEPSI_ENFORCE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), InvalidArgument,
                "set elements must be distinct");
}

// Writes the codeword bits of every occupied slot into zeroed batches.
inline std::vector<SimdVector> encode_batches(const ProtocolParams& params, const BinTable& table) {
  const BatchLayout lay = BatchLayout::of(params);
  const u32 load = table.load();
  std::vector<SimdVector> batches(lay.chunks * load * lay.code_length, SimdVector(lay.slots));
  CwEncoder encoder(params.code);
  for (u64 bin = 0; bin < table.bins(); ++bin) {
    for (u32 i = 0; i < load; ++i) {
      const Slot& s = table.at(bin, i);
      if (!s.occupied) continue;  // dummies stay all-zero
      const Codeword cw = encoder.encode(s.value);
      for (u32 pos : cw.ones()) {
        batches[lay.batch_index(lay.chunk_of(bin), i, load, pos)][lay.slot_of(bin)] = 1;
      }
    }
  }
  return batches;
}

}  // namespace detail

/// Client side of one query: its cuckoo table (kept for extraction) and the
/// encrypted bit batches, gamma * l * ceil(b/N) ciphertexts.
template <SimdBackend B>
struct ClientQuery {
  BinTable table;
  std::vector<typename B::Ciphertext> ciphertexts;
};

template <SimdBackend B>
ClientQuery<B> client_prepare(const B& be, const ProtocolParams& params, std::span<const u64> elements,
                              const SecretKey& sk) {
  params.validate();
  PEPSI_ENFORCE(be.params() == params.he, InvalidArgument, "backend parameters differ from the plan");
  detail::require_distinct(elements);
  ClientQuery<B> q;
  q.table = cuckoo_insert(elements, params.binning, SipBinHasher(params.binning));
  auto batches = detail::encode_batches(params, q.table);
  q.ciphertexts.reserve(batches.size());
  for (const auto& pt : batches) q.ciphertexts.push_back(be.encrypt(pt, sk));
  return q;
}

/// Server preprocessing: simple-hash table and its plaintext bit batches,
/// mu * l * ceil(b/N) vectors. Needs no key and can be cached.
struct ServerDataset {
  BinTable table;
  std::vector<SimdVector> batches;
  u64 element_count = 0;
};

inline ServerDataset server_prepare(const ProtocolParams& params, std::span<const u64> elements) {
  params.validate();
  detail::require_distinct(elements);
  ServerDataset ds;
  ds.table = simple_hash_insert(elements, params.binning, SipBinHasher(params.binning));
  ds.batches = detail::encode_batches(params, ds.table);
  ds.element_count = elements.size();
  return ds;
}

/// Rebuilds the batches of a dataset whose table came from a cache.
inline ServerDataset server_dataset_from_table(const ProtocolParams& params, BinTable table,
                                               u64 element_count) {
  PEPSI_ENFORCE(table.bins() == params.binning.bins() && table.load() == params.binning.server_max_load,
                FormatError, "cached table does not match the plan");
  ServerDataset ds;
  ds.table = std::move(table);
  ds.batches = detail::encode_batches(params, ds.table);
  ds.element_count = element_count;
  return ds;
}

/// Per-worker partial sums, merged by ciphertext addition.
template <SimdBackend B>
class Accumulator {
 public:
  using Ct = typename B::Ciphertext;
  Accumulator(const B& be, std::size_t n) : be_(&be), sums_(n) {}

  void add(std::size_t k, Ct c) {
    if (!sums_[k]) {
      sums_[k] = std::move(c);
    } else {
      sums_[k] = be_->add(*sums_[k], c);
    }
  }
  void merge(Accumulator&& o) {
    for (std::size_t k = 0; k < sums_.size(); ++k) {
      if (o.sums_[k]) add(k, std::move(*o.sums_[k]));
    }
  }
  std::vector<std::optional<Ct>>& sums() { return sums_; }

 private:
  const B* be_;
  std::vector<std::optional<Ct>> sums_;
};

/// Runs the equality operator for every (client slot i, server slot i',
/// chunk w) and hands the gamma results of each (i', w) to `visit`, which
/// folds them into an Accumulator of `out_count` ciphertexts. Work over
/// (w, i') is split across `threads` workers.
template <SimdBackend B, class Visit>
std::vector<typename B::Ciphertext> evaluate_equalities(const B& be, const ProtocolParams& params,
                                                        const ServerDataset& ds,
                                                        std::span<const typename B::Ciphertext> ct_c,
                                                        std::size_t out_count, u32 threads, Visit&& visit) {
  using Ct = typename B::Ciphertext;
  PEPSI_ENFORCE(be.params() == params.he, InvalidArgument, "backend parameters differ from the plan");
  const BatchLayout lay = BatchLayout::of(params);
  const u32 gamma = params.binning.client_max_load;
  const u32 mu = params.binning.server_max_load;
  PEPSI_ENFORCE(ct_c.size() == lay.chunks * gamma * lay.code_length, InvalidArgument,
                "client ciphertext count does not match gamma * l * ceil(b/N)");
  PEPSI_ENFORCE(ds.batches.size() == lay.chunks * mu * lay.code_length, InvalidArgument,
                "server batches do not match the plan");
  const auto k = EqualityConstants::make(params.code.weight, params.he.plain_modulus);
  const u32 reserve = params.he.variant_levels;

  const u64 tasks = lay.chunks * mu;
  const u32 workers = static_cast<u32>(std::clamp<u64>(threads, 1, std::max<u64>(tasks, 1)));
  std::vector<Accumulator<B>> accs;
  for (u32 t = 0; t < workers; ++t) accs.emplace_back(be, out_count);

  auto run = [&](u32 worker) {
    std::vector<Ct> eqs;
    for (u64 task = worker; task < tasks; task += workers) {
      const u64 w = task / mu;
      const u32 ip = static_cast<u32>(task % mu);
      std::span<const SimdVector> y(&ds.batches[lay.batch_index(w, ip, mu)], lay.code_length);
      eqs.clear();
      for (u32 i = 0; i < gamma; ++i) {
        std::span<const Ct> x(&ct_c[lay.batch_index(w, i, gamma)], lay.code_length);
        eqs.push_back(arith_cw_eq(be, x, y, k, reserve));
      }
      visit(ip, w, std::span<const Ct>(eqs), accs[worker]);
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (u32 t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          run(t);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (u32 t = 1; t < workers; ++t) accs[0].merge(std::move(accs[t]));
  std::vector<Ct> out;
  out.reserve(out_count);
  for (auto& s : accs[0].sums()) out.push_back(s ? std::move(*s) : be.encrypt_zero_like(ct_c[0]));
  return out;
}

/// Encrypted indicator: gamma * ceil(b/N) ciphertexts, slot k of batch
/// (w, i) counts the server elements in bin w*N + k equal to client slot i.
template <SimdBackend B>
std::vector<typename B::Ciphertext> intersect(const B& be, const ProtocolParams& params,
                                              const ServerDataset& ds,
                                              std::span<const typename B::Ciphertext> ct_c, u32 threads = 1) {
  const u64 chunks = BatchLayout::of(params).chunks;
  const u32 gamma = params.binning.client_max_load;
  return evaluate_equalities(be, params, ds, ct_c, chunks * gamma, threads,
                             [&](u32, u64 w, std::span<const typename B::Ciphertext> eqs, Accumulator<B>& acc) {
                               for (u32 i = 0; i < gamma; ++i) acc.add(w * gamma + i, eqs[i]);
                             });
}

/// Decrypts an indicator and returns the client elements found, recovered
/// from (bin, stored residue, hash index).
template <SimdBackend B>
std::vector<u64> extract_intersection(const B& be, const ProtocolParams& params,
                                      std::span<const typename B::Ciphertext> ct_ind,
                                      const BinTable& client_table, const SecretKey& sk) {
  const BatchLayout lay = BatchLayout::of(params);
  const u32 gamma = params.binning.client_max_load;
  PEPSI_ENFORCE(ct_ind.size() == lay.chunks * gamma, InvalidArgument, "indicator has the wrong size");
  const SipBinHasher hasher(params.binning);
  std::vector<u64> out;
  for (u64 w = 0; w < lay.chunks; ++w) {
    for (u32 i = 0; i < gamma; ++i) {
      const SimdVector ind = be.decrypt(ct_ind[w * gamma + i], sk);
      for (u64 s = 0; s < lay.slots; ++s) {
        const u64 bin = w * lay.slots + s;
        if (bin >= lay.bins || ind[s] == 0) continue;
        const Slot& slot = client_table.at(bin, i);
        if (!slot.occupied) continue;
        out.push_back(recover_element(params.binning, bin, slot, hasher));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pepsi
