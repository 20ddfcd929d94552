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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "pepsi/common.hpp"
#include "pepsi/hash.hpp"

namespace pepsi {

/// Minimum bins-per-client-element ratio for 3-way cuckoo without a stash.
inline constexpr double kCuckooExpansion = 1.27;
inline constexpr u32 kDefaultHashCount = 3;
inline constexpr u32 kDefaultMaxEvictions = 500;

/// Layout shared by client and server. Bins are indexed by c = log_bins
/// bits; a lambda-bit element keeps only its low lambda - c bits in the
/// table (permutation-based hashing), optionally followed by the index of
/// the hash function that placed it.
struct BinningPlan {
  u32 log_bins = 13;
  u32 client_max_load = 1;
  u32 server_max_load = 0;
  u32 hash_count = kDefaultHashCount;
  u32 element_bitlength = 32;
  u32 index_bits = 2;
  u32 max_evictions = kDefaultMaxEvictions;
  std::vector<HashKey> hash_keys;

  static BinningPlan make(u32 log_bins, u32 element_bitlength, u32 server_max_load, u64 seed,
                          u32 hash_count = kDefaultHashCount) {
    BinningPlan p;
    p.log_bins = log_bins;
    p.element_bitlength = element_bitlength;
    p.server_max_load = server_max_load;
    p.hash_count = hash_count;
    p.index_bits = ceil_log2(hash_count);
    for (u32 i = 0; i < hash_count; ++i) p.hash_keys.push_back(derive_hash_key(seed, i));
    return p;
  }

  u64 bins() const { return u64{1} << log_bins; }
  u32 residue_bits() const { return element_bitlength - log_bins; }
  /// Bits compared per element (lambda-bar).
  u32 effective_bitlength() const { return residue_bits() + index_bits; }

  void validate() const {
    PEPSI_ENFORCE(log_bins >= 1 && log_bins <= 30, InvalidArgument, "log_bins out of range");
    PEPSI_ENFORCE(element_bitlength > log_bins && element_bitlength <= 64, InvalidArgument,
                  "element bitlength must exceed log_bins and be at most 64");
    PEPSI_ENFORCE(hash_count >= 1 && hash_keys.size() == hash_count, InvalidArgument,
                  "one hash key per hash function required");
    PEPSI_ENFORCE(index_bits == 0 || (u64{1} << index_bits) >= hash_count, InvalidArgument,
                  "index bits cannot hold the hash index");
    PEPSI_ENFORCE(effective_bitlength() <= 62, InvalidArgument, "effective bitlength above 62");
    PEPSI_ENFORCE(client_max_load >= 1, InvalidArgument, "client max load must be positive");
  }

  u64 fingerprint() const {
    ByteWriter w;
    w.raw(std::string_view("binning-plan"));
    w.u32_(log_bins);
    w.u32_(client_max_load);
    w.u32_(server_max_load);
    w.u32_(hash_count);
    w.u32_(element_bitlength);
    w.u32_(index_bits);
    w.u32_(max_evictions);
    for (const auto& k : hash_keys) w.raw(k);
    return fingerprint64(w.bytes());
  }

  bool operator==(const BinningPlan&) const = default;
};

/// Raw keyed hash H_i(residue); callers reduce it to log_bins bits.
template <class H>
concept BinHasher = requires(const H& h, u32 i, u64 x) {
  { h(i, x) } -> std::convertible_to<u64>;
};

class SipBinHasher {
 public:
  explicit SipBinHasher(const BinningPlan& plan) : keys_(plan.hash_keys) {}
  u64 operator()(u32 i, u64 residue) const { return keyed_hash64(keys_[i], residue); }

 private:
  std::vector<HashKey> keys_;
};

struct PbhPlacement {
  u64 bin = 0;
  u64 residue = 0;
};

/// x = x_H || x_L with |x_H| = c; bin = x_H xor H_i(x_L), stored = x_L.
template <BinHasher H>
PbhPlacement pbh_split(u64 x, u32 bitlength, u32 c, u32 i, const H& hash) {
  PEPSI_ENFORCE(bitlength > c && bitlength <= 64, InvalidArgument, "pbh needs lambda > c");
  const u32 low_bits = bitlength - c;
  const u64 x_low = x & low_mask(low_bits);
  const u64 x_high = (low_bits == 64 ? 0 : x >> low_bits) & low_mask(c);
  return {(x_high ^ static_cast<u64>(hash(i, x_low))) & low_mask(c), x_low};
}

template <BinHasher H>
u64 pbh_join(u64 bin, u64 residue, u32 bitlength, u32 c, u32 i, const H& hash) {
  const u32 low_bits = bitlength - c;
  const u64 x_high = (bin ^ static_cast<u64>(hash(i, residue))) & low_mask(c);
  return (x_high << low_bits) | residue;
}

struct Slot {
  u64 value = 0;     // stored residue, with the hash index appended
  u32 source = 0;    // index of the element in the caller's input
  u8 hash_index = 0;
  bool occupied = false;

  bool operator==(const Slot&) const = default;
};

/// b bins x fixed load; empty slots are dummies.
class BinTable {
 public:
  BinTable() = default;
  BinTable(u64 bins, u32 load) : bins_(bins), load_(load), slots_(bins * load) {}

  u64 bins() const { return bins_; }
  u32 load() const { return load_; }
  const Slot& at(u64 bin, u32 i) const { return slots_[bin * load_ + i]; }
  Slot& at(u64 bin, u32 i) { return slots_[bin * load_ + i]; }
  std::span<const Slot> slots() const { return slots_; }

  u32 bin_size(u64 bin) const {
    u32 n = 0;
    for (u32 i = 0; i < load_; ++i) n += at(bin, i).occupied ? 1 : 0;
    return n;
  }
  u64 real_count() const {
    u64 n = 0;
    for (const auto& s : slots_) n += s.occupied ? 1 : 0;
    return n;
  }
  u32 max_bin_size() const {
    u32 m = 0;
    for (u64 b = 0; b < bins_; ++b) m = std::max(m, bin_size(b));
    return m;
  }

  bool operator==(const BinTable&) const = default;

  void serialize(ByteWriter& w) const {
    w.u64_(bins_);
    w.u32_(load_);
    for (const auto& s : slots_) {
      w.u8_(s.occupied ? 1 : 0);
      if (!s.occupied) continue;
      w.u64_(s.value);
      w.u32_(s.source);
      w.u8_(s.hash_index);
    }
  }

  static BinTable deserialize(ByteReader& r) {
    const u64 bins = r.u64_();
    const u32 load = r.u32_();
    PEPSI_ENFORCE(bins <= (u64{1} << 30) && load <= (1u << 24), FormatError, "bin table header out of range");
    PEPSI_ENFORCE(bins * load <= r.remaining(), FormatError, "bin table truncated");
    BinTable t(bins, load);
    for (auto& s : t.slots_) {
      const u8 flag = r.u8_();
      PEPSI_ENFORCE(flag <= 1, FormatError, "bad slot flag");
      if (!flag) continue;
      s.occupied = true;
      s.value = r.u64_();
      s.source = r.u32_();
      s.hash_index = r.u8_();
    }
    return t;
  }

 private:
  u64 bins_ = 0;
  u32 load_ = 0;
  std::vector<Slot> slots_;
};

inline u64 stored_value(const BinningPlan& plan, u64 residue, u32 hash_index) {
  return plan.index_bits == 0 ? residue : (residue << plan.index_bits) | hash_index;
}

/// Reconstructs the original element of an occupied slot.
template <BinHasher H>
u64 recover_element(const BinningPlan& plan, u64 bin, const Slot& s, const H& hash) {
  const u64 residue = s.value >> plan.index_bits;
  return pbh_join(bin, residue, plan.element_bitlength, plan.log_bins, s.hash_index, hash);
}

namespace detail {
inline void check_elements(const BinningPlan& plan, std::span<const u64> elements) {
  PEPSI_ENFORCE(elements.size() < (u64{1} << 32), InvalidArgument, "too many elements");
  if (plan.element_bitlength < 64) {
    for (u64 x : elements) {
      PEPSI_ENFORCE(x <= low_mask(plan.element_bitlength), InvalidArgument,
                    "element wider than the plan's element bitlength");
    }
  }
}
}  // namespace detail

/// Cuckoo hashing without a stash, one element per bin. First placement uses
/// H_1; an evicted element moves to one of its other k - 1 hash functions,
/// chosen at random. Throws InsertionFailure after max_evictions.
template <BinHasher H>
BinTable cuckoo_insert(std::span<const u64> elements, const BinningPlan& plan, const H& hash,
                       u64 rng_seed = 0) {
  plan.validate();
  detail::check_elements(plan, elements);
  PEPSI_ENFORCE(plan.client_max_load == 1, InvalidArgument, "cuckoo tables hold one element per bin");
  PEPSI_ENFORCE(static_cast<double>(elements.size()) * kCuckooExpansion <= static_cast<double>(plan.bins()),
                InvalidArgument, "cuckoo hashing needs at least 1.27 m bins");

  BinTable table(plan.bins(), 1);
  std::mt19937_64 rng(rng_seed ^ plan.fingerprint());
  const u32 c = plan.log_bins;
  const u32 lam = plan.element_bitlength;

  for (std::size_t e = 0; e < elements.size(); ++e) {
    Slot cur;
    cur.source = static_cast<u32>(e);
    cur.occupied = true;
    u64 x = elements[e];
    u32 idx = 0;
    u32 evictions = 0;
    while (true) {
      const auto place = pbh_split(x, lam, c, idx, hash);
      cur.hash_index = static_cast<u8>(idx);
      cur.value = stored_value(plan, place.residue, idx);
      Slot& dst = table.at(place.bin, 0);
      if (!dst.occupied) {
        dst = cur;
        break;
      }
      if (++evictions > plan.max_evictions) {
        throw InsertionFailure("cuckoo insertion exceeded " + std::to_string(plan.max_evictions) +
                               " evictions");
      }
      const Slot evicted = dst;
      dst = cur;
      cur = evicted;
      x = elements[cur.source];
      if (plan.hash_count == 1) {
        idx = 0;
      } else {
        u32 pick = static_cast<u32>(rng() % (plan.hash_count - 1));
        idx = pick >= evicted.hash_index ? pick + 1 : pick;
      }
    }
  }
  return table;
}

/// Places every element once per hash function. Copies of one element that
/// land in the same bin with an identical stored value are kept once.
/// Throws BinOverflow when a bin exceeds server_max_load.
template <BinHasher H>
BinTable simple_hash_insert(std::span<const u64> elements, const BinningPlan& plan, const H& hash) {
  plan.validate();
  detail::check_elements(plan, elements);
  PEPSI_ENFORCE(plan.server_max_load >= 1, InvalidArgument, "server max load must be positive");
  const u32 mu = plan.server_max_load;
  BinTable table(plan.bins(), mu);
  std::vector<u32> fill(plan.bins(), 0);
  std::vector<std::pair<u64, u64>> placed;  // (bin, value) of the current element

  for (std::size_t e = 0; e < elements.size(); ++e) {
    placed.clear();
    for (u32 i = 0; i < plan.hash_count; ++i) {
      const auto place = pbh_split(elements[e], plan.element_bitlength, plan.log_bins, i, hash);
      const u64 value = stored_value(plan, place.residue, i);
      if (std::find(placed.begin(), placed.end(), std::pair{place.bin, value}) != placed.end()) continue;
      placed.emplace_back(place.bin, value);
      u32& f = fill[place.bin];
      if (f >= mu) {
        throw BinOverflow("server bin " + std::to_string(place.bin) + " exceeds max load " +
                          std::to_string(mu));
      }
      table.at(place.bin, f++) = Slot{value, static_cast<u32>(e), static_cast<u8>(i), true};
    }
  }
  return table;
}

/// Per-bin loads of simple hashing without materialising the table.
template <BinHasher H>
std::vector<u32> simple_hash_loads(std::span<const u64> elements, const BinningPlan& plan, const H& hash) {
  std::vector<u32> fill(plan.bins(), 0);
  u64 bins_seen[8];
  u64 values_seen[8];
  for (u64 x : elements) {
    u32 n = 0;
    for (u32 i = 0; i < plan.hash_count; ++i) {
      const auto place = pbh_split(x, plan.element_bitlength, plan.log_bins, i, hash);
      const u64 value = stored_value(plan, place.residue, i);
      bool dup = false;
      for (u32 j = 0; j < n; ++j) dup |= bins_seen[j] == place.bin && values_seen[j] == value;
      if (dup) continue;
      if (n < 8) {
        bins_seen[n] = place.bin;
        values_seen[n] = value;
        ++n;
      }
      ++fill[place.bin];
    }
  }
  return fill;
}

/// log P[Binomial(trials, p) = x].
inline long double log_binomial_pmf(u64 trials, long double p, u64 x) {
  const long double n = static_cast<long double>(trials);
  const long double k = static_cast<long double>(x);
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1) + k * std::log(p) +
         (n - k) * std::log1p(-p);
}

/// P[Binomial(trials, p) > x].
inline long double binomial_upper_tail(u64 trials, long double p, u64 x) {
  if (x >= trials) return 0;
  long double sum = 0;
  for (u64 j = x + 1; j <= trials; ++j) {
    const long double term = std::exp(log_binomial_pmf(trials, p, j));
    sum += term;
    if (static_cast<long double>(j) > p * static_cast<long double>(trials) && term < sum * 1e-30L) break;
  }
  return sum;
}

/// Smallest mu with b * P[Binomial(k n, 1/b) > mu] < target_failure, i.e. a
/// union bound over bins of the per-bin load tail.
inline u32 estimate_server_max_load(u64 n, u64 bins, u32 hash_count, long double target_failure) {
  PEPSI_ENFORCE(bins >= 1 && target_failure > 0, InvalidArgument, "bad load-estimate arguments");
  if (n == 0) return 1;
  const u64 balls = n * hash_count;
  const long double p = 1.0L / static_cast<long double>(bins);
  u64 mu = static_cast<u64>(static_cast<long double>(balls) * p);
  while (static_cast<long double>(bins) * binomial_upper_tail(balls, p, mu) >= target_failure) ++mu;
  return static_cast<u32>(std::max<u64>(mu, 1));
}

/// Maximum simple-hashing bin load for n random distinct elements under
/// freshly drawn hash keys.
inline u32 simulate_max_load(u64 n, u32 log_bins, u32 hash_count, u32 element_bitlength,
                             std::mt19937_64& rng) {
  BinningPlan plan = BinningPlan::make(log_bins, element_bitlength, 1, rng(), hash_count);
  std::vector<u64> elements(n);
  // Affine map with odd multiplier is a bijection mod 2^lambda.
  const u64 a = rng() | 1;
  const u64 b = rng();
  for (u64 i = 0; i < n; ++i) elements[i] = (a * i + b) & low_mask(element_bitlength);
  auto loads = simple_hash_loads(elements, plan, SipBinHasher(plan));
  return *std::max_element(loads.begin(), loads.end());
}

}  // namespace pepsi
