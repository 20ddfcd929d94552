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

#include <map>
#include <random>
#include <utility>
#include <vector>

#include "pepsi/protocol.hpp"

namespace pepsi {

/// Per-slot server values, L limbs each, laid out like the server batches:
/// vector (limb, chunk, load slot) holds slot k = value of that slot of bin
/// chunk * N + k, zero for dummies.
struct ServerValues {
  u32 limb_count = 1;
  u64 chunks = 0;
  u32 load = 0;
  std::vector<SimdVector> vectors;

  const SimdVector& at(u32 limb, u64 chunk, u32 slot) const {
    return vectors[(limb * chunks + chunk) * load + slot];
  }
  SimdVector& at(u32 limb, u64 chunk, u32 slot) { return vectors[(limb * chunks + chunk) * load + slot]; }
};

/// Bits per label limb: the largest s with 2^s <= t.
inline u32 label_limb_bits(u64 t) { return floor_log2(t); }

inline u32 label_limb_count(u32 label_bytes, u64 t) {
  PEPSI_ENFORCE(label_bytes >= 1, InvalidArgument, "labels need at least one byte");
  return static_cast<u32>(ceil_div(u64{label_bytes} * 8, label_limb_bits(t)));
}

/// Big-endian packing of a label into limbs, zero-padded at the end. The
/// first limb carries a +1 sentinel so a real label never reads as zero.
inline std::vector<u64> pack_label(std::span<const u8> label, u32 label_bytes, u64 t) {
  PEPSI_ENFORCE(label.size() == label_bytes, InvalidArgument, "label has the wrong width");
  const u32 bits = label_limb_bits(t);
  const u32 count = label_limb_count(label_bytes, t);
  std::vector<u64> limbs(count, 0);
  for (u64 pos = 0; pos < u64{label_bytes} * 8; ++pos) {
    const u64 bit = (label[pos / 8] >> (7 - pos % 8)) & 1;
    limbs[pos / bits] |= bit << (bits - 1 - pos % bits);
  }
  limbs[0] += 1;
  return limbs;
}

inline Bytes unpack_label(std::span<const u64> limbs, u32 label_bytes, u64 t) {
  const u32 bits = label_limb_bits(t);
  PEPSI_ENFORCE(limbs.size() == label_limb_count(label_bytes, t) && limbs[0] != 0, InvalidArgument,
                "not a packed label");
  Bytes out(label_bytes, 0);
  for (u64 pos = 0; pos < u64{label_bytes} * 8; ++pos) {
    const u64 limb = pos / bits == 0 ? limbs[0] - 1 : limbs[pos / bits];
    const u64 bit = (limb >> (bits - 1 - pos % bits)) & 1;
    out[pos / 8] |= static_cast<u8>(bit << (7 - pos % 8));
  }
  return out;
}

namespace detail {

inline ServerValues empty_values(const ProtocolParams& params, u32 limbs) {
  const BatchLayout lay = BatchLayout::of(params);
  ServerValues v;
  v.limb_count = limbs;
  v.chunks = lay.chunks;
  v.load = params.binning.server_max_load;
  v.vectors.assign(u64{limbs} * v.chunks * v.load, SimdVector(lay.slots));
  return v;
}

template <class F>
void for_each_real_slot(const ProtocolParams& params, const BinTable& table, F&& f) {
  const BatchLayout lay = BatchLayout::of(params);
  for (u64 bin = 0; bin < table.bins(); ++bin) {
    for (u32 i = 0; i < table.load(); ++i) {
      const Slot& s = table.at(bin, i);
      if (s.occupied) f(s, lay.chunk_of(bin), i, lay.slot_of(bin));
    }
  }
}

}  // namespace detail

/// One value in Z_t per server element, indexed like the server input set.
/// With `require_nonzero` (single-slot labels) a zero value is rejected.
inline ServerValues make_server_values(const ProtocolParams& params, const ServerDataset& ds,
                                       std::span<const u64> values, bool require_nonzero = false) {
  PEPSI_ENFORCE(values.size() == ds.element_count, InvalidArgument, "one value per server element required");
  const u64 t = params.he.plain_modulus;
  for (u64 v : values) {
    PEPSI_ENFORCE(v < t, InvalidArgument, "value outside Z_t");
    PEPSI_ENFORCE(!require_nonzero || v != 0, InvalidArgument, "labels of real elements must be nonzero");
  }
  ServerValues out = detail::empty_values(params, 1);
  detail::for_each_real_slot(params, ds.table, [&](const Slot& s, u64 w, u32 i, u64 k) {
    out.at(0, w, i)[k] = values[s.source];
  });
  return out;
}

inline ServerValues make_unit_values(const ProtocolParams& params, const ServerDataset& ds) {
  ServerValues out = detail::empty_values(params, 1);
  detail::for_each_real_slot(params, ds.table, [&](const Slot&, u64 w, u32 i, u64 k) { out.at(0, w, i)[k] = 1; });
  return out;
}

/// Fixed-width byte labels split into label_limb_count limbs.
inline ServerValues make_label_values(const ProtocolParams& params, const ServerDataset& ds,
                                      std::span<const Bytes> labels) {
  PEPSI_ENFORCE(labels.size() == ds.element_count, InvalidArgument, "one label per server element required");
  PEPSI_ENFORCE(params.label_bytes >= 1, InvalidArgument, "plan has no label width");
  const u64 t = params.he.plain_modulus;
  std::vector<std::vector<u64>> packed;
  packed.reserve(labels.size());
  for (const auto& l : labels) packed.push_back(pack_label(l, params.label_bytes, t));
  ServerValues out = detail::empty_values(params, label_limb_count(params.label_bytes, t));
  detail::for_each_real_slot(params, ds.table, [&](const Slot& s, u64 w, u32 i, u64 k) {
    for (u32 l = 0; l < out.limb_count; ++l) out.at(l, w, i)[k] = packed[s.source][l];
  });
  return out;
}

/// Sum over server slots of value * eq, per client slot: L * gamma * ceil(b/N)
/// ciphertexts indexed (limb * chunks + w) * gamma + i. The equality work is
/// done once; only the value products repeat per limb.
template <SimdBackend B>
std::vector<typename B::Ciphertext> labelled_psi(const B& be, const ProtocolParams& params, const ServerDataset& ds,
                                                 const ServerValues& values,
                                                 std::span<const typename B::Ciphertext> ct_c, u32 threads = 1) {
  using Ct = typename B::Ciphertext;
  const u64 chunks = BatchLayout::of(params).chunks;
  const u32 gamma = params.binning.client_max_load;
  PEPSI_ENFORCE(values.chunks == chunks && values.load == params.binning.server_max_load, InvalidArgument,
                "server values do not match the dataset layout");
  return evaluate_equalities(be, params, ds, ct_c, values.limb_count * chunks * gamma, threads,
                             [&](u32 ip, u64 w, std::span<const Ct> eqs, Accumulator<B>& acc) {
                               for (u32 l = 0; l < values.limb_count; ++l) {
                                 const SimdVector& v = values.at(l, w, ip);
                                 for (u32 i = 0; i < gamma; ++i) {
                                   acc.add((l * chunks + w) * gamma + i, be.plain_mult(v, eqs[i]));
                                 }
                               }
                             });
}

/// Alias that documents the multi-limb use.
template <SimdBackend B>
std::vector<typename B::Ciphertext> labelled_psi_large(const B& be, const ProtocolParams& params,
                                                       const ServerDataset& ds, const ServerValues& values,
                                                       std::span<const typename B::Ciphertext> ct_c,
                                                       u32 threads = 1) {
  return labelled_psi(be, params, ds, values, ct_c, threads);
}

/// Decrypts a labelled result and returns limbs per matched client element.
/// A slot matches when its first limb is nonzero.
template <SimdBackend B>
std::map<u64, std::vector<u64>> extract_label_limbs(const B& be, const ProtocolParams& params,
                                                    std::span<const typename B::Ciphertext> ct_res,
                                                    const BinTable& client_table, const SecretKey& sk) {
  const BatchLayout lay = BatchLayout::of(params);
  const u32 gamma = params.binning.client_max_load;
  PEPSI_ENFORCE(!ct_res.empty() && ct_res.size() % (lay.chunks * gamma) == 0, InvalidArgument,
                "labelled result has the wrong size");
  const u64 limbs = ct_res.size() / (lay.chunks * gamma);
  const SipBinHasher hasher(params.binning);
  std::map<u64, std::vector<u64>> out;
  for (u64 w = 0; w < lay.chunks; ++w) {
    for (u32 i = 0; i < gamma; ++i) {
      std::vector<SimdVector> dec;
      for (u64 l = 0; l < limbs; ++l) dec.push_back(be.decrypt(ct_res[(l * lay.chunks + w) * gamma + i], sk));
      for (u64 k = 0; k < lay.slots; ++k) {
        const u64 bin = w * lay.slots + k;
        if (bin >= lay.bins || dec[0][k] == 0) continue;
        const Slot& slot = client_table.at(bin, i);
        if (!slot.occupied) continue;
        std::vector<u64> v(limbs);
        for (u64 l = 0; l < limbs; ++l) v[l] = dec[l][k];
        out.emplace(recover_element(params.binning, bin, slot, hasher), std::move(v));
      }
    }
  }
  return out;
}

/// Single-slot labels: element -> label.
template <SimdBackend B>
std::map<u64, u64> extract_labels(const B& be, const ProtocolParams& params,
                                  std::span<const typename B::Ciphertext> ct_res, const BinTable& client_table,
                                  const SecretKey& sk) {
  std::map<u64, u64> out;
  for (auto& [x, limbs] : extract_label_limbs(be, params, ct_res, client_table, sk)) {
    PEPSI_ENFORCE(limbs.size() == 1, InvalidArgument, "result carries multi-limb labels");
    out.emplace(x, limbs[0]);
  }
  return out;
}

/// Byte labels: element -> label bytes, sentinel removed.
template <SimdBackend B>
std::map<u64, Bytes> extract_label_bytes(const B& be, const ProtocolParams& params,
                                         std::span<const typename B::Ciphertext> ct_res,
                                         const BinTable& client_table, const SecretKey& sk) {
  std::map<u64, Bytes> out;
  for (auto& [x, limbs] : extract_label_limbs(be, params, ct_res, client_table, sk)) {
    out.emplace(x, unpack_label(limbs, params.label_bytes, params.he.plain_modulus));
  }
  return out;
}

/// Uniform vector over Z_t^N whose slots sum to zero mod t.
struct ZeroSumMask {
  SimdVector r;

  template <class Rng>
  static ZeroSumMask sample(std::size_t slots, u64 t, Rng& rng) {
    PEPSI_ENFORCE(slots >= 1, InvalidArgument, "mask needs at least one slot");
    std::uniform_int_distribution<u64> dist(0, t - 1);
    ZeroSumMask m{SimdVector(slots)};
    u64 sum = 0;
    for (std::size_t i = 0; i + 1 < slots; ++i) {
      m.r[i] = dist(rng);
      sum = add_mod(sum, m.r[i], t);
    }
    m.r[slots - 1] = sub_mod(0, sum, t);
    return m;
  }
};

namespace detail {

// Adds the per-chunk partial sums slot-wise, then masks the slots.
template <SimdBackend B>
typename B::Ciphertext fold_and_mask(const B& be, std::vector<typename B::Ciphertext> parts) {
  auto total = std::move(parts[0]);
  for (std::size_t w = 1; w < parts.size(); ++w) total = be.add(total, parts[w]);
  SodiumRng rng;
  return be.add_plain(total, ZeroSumMask::sample(be.slot_count(), be.plain_modulus(), rng).r);
}

}  // namespace detail

/// One ciphertext whose slots sum to the total value of the matched server
/// elements; individual slots are masked.
template <SimdBackend B>
typename B::Ciphertext psi_sum(const B& be, const ProtocolParams& params, const ServerDataset& ds,
                               const ServerValues& values, std::span<const typename B::Ciphertext> ct_c,
                               u32 threads = 1) {
  using Ct = typename B::Ciphertext;
  const u64 chunks = BatchLayout::of(params).chunks;
  PEPSI_ENFORCE(values.limb_count == 1 && values.chunks == chunks &&
                    values.load == params.binning.server_max_load,
                InvalidArgument, "sum values must be single-limb and match the dataset layout");
  auto parts = evaluate_equalities(be, params, ds, ct_c, chunks, threads,
                                   [&](u32 ip, u64 w, std::span<const Ct> eqs, Accumulator<B>& acc) {
                                     Ct s = eqs[0];
                                     for (std::size_t i = 1; i < eqs.size(); ++i) s = be.add(s, eqs[i]);
                                     acc.add(w, be.plain_mult(values.at(0, w, ip), s));
                                   });
  return detail::fold_and_mask(be, std::move(parts));
}

template <SimdBackend B>
typename B::Ciphertext psi_cardinality(const B& be, const ProtocolParams& params, const ServerDataset& ds,
                                       std::span<const typename B::Ciphertext> ct_c, u32 threads = 1) {
  return psi_sum(be, params, ds, make_unit_values(params, ds), ct_c, threads);
}

/// Encrypts one value per client element into the client batch layout:
/// gamma * ceil(b/N) ciphertexts indexed w * gamma + i.
template <SimdBackend B>
std::vector<typename B::Ciphertext> encrypt_client_values(const B& be, const ProtocolParams& params,
                                                          const BinTable& client_table, std::span<const u64> values,
                                                          const SecretKey& sk) {
  const BatchLayout lay = BatchLayout::of(params);
  const u32 gamma = params.binning.client_max_load;
  const u64 t = params.he.plain_modulus;
  std::vector<SimdVector> pts(lay.chunks * gamma, SimdVector(lay.slots));
  for (u64 bin = 0; bin < client_table.bins(); ++bin) {
    for (u32 i = 0; i < gamma; ++i) {
      const Slot& s = client_table.at(bin, i);
      if (!s.occupied) continue;
      PEPSI_ENFORCE(s.source < values.size(), InvalidArgument, "one value per client element required");
      PEPSI_ENFORCE(values[s.source] < t, InvalidArgument, "value outside Z_t");
      pts[lay.chunk_of(bin) * gamma + i][lay.slot_of(bin)] = values[s.source];
    }
  }
  std::vector<typename B::Ciphertext> out;
  for (const auto& p : pts) out.push_back(be.encrypt(p, sk));
  return out;
}

/// Sum over matches of client value * server value, as one masked ciphertext.
/// Uses one plaintext and one ciphertext multiplication per equality on top
/// of the equality circuit.
template <SimdBackend B>
typename B::Ciphertext psi_inner_product(const B& be, const ProtocolParams& params, const ServerDataset& ds,
                                         const ServerValues& values, std::span<const typename B::Ciphertext> ct_c,
                                         std::span<const typename B::Ciphertext> val_c, u32 threads = 1) {
  using Ct = typename B::Ciphertext;
  const u64 chunks = BatchLayout::of(params).chunks;
  const u32 gamma = params.binning.client_max_load;
  PEPSI_ENFORCE(values.limb_count == 1 && values.chunks == chunks &&
                    values.load == params.binning.server_max_load,
                InvalidArgument, "values must be single-limb and match the dataset layout");
  PEPSI_ENFORCE(val_c.size() == chunks * gamma, InvalidArgument, "client values must be gamma * ceil(b/N)");
  auto parts = evaluate_equalities(be, params, ds, ct_c, chunks, threads,
                                   [&](u32 ip, u64 w, std::span<const Ct> eqs, Accumulator<B>& acc) {
                                     const SimdVector& v = values.at(0, w, ip);
                                     for (u32 i = 0; i < gamma; ++i) {
                                       acc.add(w, be.mult(be.plain_mult(v, val_c[w * gamma + i]), eqs[i]));
                                     }
                                   });
  return detail::fold_and_mask(be, std::move(parts));
}

/// Sum of all slots mod t.
template <SimdBackend B>
u64 extract_sum(const B& be, const typename B::Ciphertext& ct, const SecretKey& sk) {
  const u64 t = be.plain_modulus();
  u64 s = 0;
  const SimdVector dec = be.decrypt(ct, sk);
  for (u64 v : dec.slots()) s = add_mod(s, v, t);
  return s;
}

/// M[i] = r_i * (k * I[i] - 1 - sum_{j<i} I[j]) mod t with fresh r_i uniform
/// in Z_t \ {0}. M[i] = 0 exactly at the k-th one of I.
template <class Rng>
std::vector<u64> kth_match_mask(std::span<const u64> indicator, u64 k, u64 t, Rng& rng) {
  PEPSI_ENFORCE(k >= 1 && t >= 2, InvalidArgument, "k must be positive and t at least 2");
  std::uniform_int_distribution<u64> nonzero(1, t - 1);
  const u64 kk = k % t;
  std::vector<u64> out(indicator.size());
  u64 prefix = 0;
  for (std::size_t i = 0; i < indicator.size(); ++i) {
    PEPSI_ENFORCE(indicator[i] <= 1, InvalidArgument, "indicator entries must be 0 or 1");
    const u64 base = sub_mod(sub_mod(mul_mod(kk, indicator[i], t), 1, t), prefix, t);
    out[i] = mul_mod(nonzero(rng), base, t);
    prefix = add_mod(prefix, indicator[i], t);
  }
  return out;
}

/// Homomorphic kth-match over a sequence of indicator ciphertexts, each slot
/// position an independent sequence. Costs one plaintext multiplication per
/// element for the random nonzero multipliers.
template <SimdBackend B, class Rng>
std::vector<typename B::Ciphertext> kth_match_encrypted(const B& be, std::span<const typename B::Ciphertext> ind,
                                                        u64 k, Rng& rng) {
  using Ct = typename B::Ciphertext;
  PEPSI_ENFORCE(k >= 1, InvalidArgument, "k must be positive");
  const u64 t = be.plain_modulus();
  std::uniform_int_distribution<u64> nonzero(1, t - 1);
  std::vector<Ct> out;
  out.reserve(ind.size());
  std::optional<Ct> prefix;
  for (const Ct& c : ind) {
    Ct base = be.add_scalar(be.mult_scalar(c, k % t), t - 1);
    if (prefix) base = be.sub(base, *prefix);
    SimdVector r(be.slot_count());
    for (std::size_t s = 0; s < r.size(); ++s) r[s] = nonzero(rng);
    out.push_back(be.plain_mult(r, base));
    prefix = prefix ? be.add(*prefix, c) : c;
  }
  return out;
}

}  // namespace pepsi
