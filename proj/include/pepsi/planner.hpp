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

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pepsi/protocol.hpp"

namespace pepsi {

/// Default target for the server-load overflow probability.
inline constexpr long double kDefaultLoadFailure = 0x1p-40L;

/// lambda = alpha + ceil(log2(b * gamma * mu)).
inline u32 select_bitlength(u64 bins, u32 client_load, u32 server_load, u32 alpha) {
  PEPSI_ENFORCE(bins >= 1 && client_load >= 1 && server_load >= 1, InvalidArgument,
                "bins and loads must be positive");
  return alpha + ceil_log2(bins * client_load * server_load);
}

/// Union bound on a false match anywhere: b * gamma * mu / 2^lambda.
inline long double lemma1_bound(u64 bins, u32 client_load, u32 server_load, u32 bitlength) {
  return std::ldexp(static_cast<long double>(bins) * client_load * server_load, -static_cast<int>(bitlength));
}

/// ceil(b/N) * gamma * l * N * log2(q) bits.
inline u128 comm_bits(u64 bins, u32 client_load, u64 code_len, const HeParams& he) {
  return static_cast<u128>(ceil_div(bins, he.slot_count())) * client_load * code_len * he.slot_count() *
         he.coeff_modulus_bits;
}

inline long double to_megabytes(u128 bits) { return static_cast<long double>(bits) / 8.0L / 1e6L; }

/// Modeled cost of one equality batch: a plaintext multiplication costs N
/// limb products and a ciphertext multiplication (tensor plus
/// relinearisation) kModeledMultFactor * N * limbs^2, where limbs = number
/// of 60-bit RNS primes in q.
inline constexpr u32 kModeledLimbBits = 60;
inline constexpr u64 kModeledMultFactor = 4;

struct CostModel {
  u128 comm_bits = 0;
  OpCounts ops;
  long double modeled_op_cost = 0;
};

inline long double modeled_op_cost(u64 code_len, u32 weight, const HeParams& he, u64 repetitions = 1) {
  const long double n = static_cast<long double>(he.slot_count());
  const long double limbs = static_cast<long double>(ceil_div(he.coeff_modulus_bits, kModeledLimbBits));
  const long double pm = n * limbs;
  const long double m = kModeledMultFactor * n * limbs * limbs;
  return (static_cast<long double>(code_len) * pm + weight * m) * static_cast<long double>(repetitions);
}

inline CostModel cost_model(u32 eff_bitlength, u32 weight, u64 bins, u32 client_load, u32 server_load,
                            QProfile profile = QProfile::kTable3) {
  const HeParams he = HeParams::for_weight(weight, profile);
  const u64 len = code_length(eff_bitlength, weight);
  CostModel c;
  c.comm_bits = comm_bits(bins, client_load, len, he);
  c.ops = count_operations(len, weight, bins, he.slot_count(), client_load, server_load);
  c.modeled_op_cost =
      modeled_op_cost(len, weight, he, ceil_div(bins, he.slot_count()) * client_load * server_load);
  return c;
}

/// Code lengths of 2^40 and beyond are not buildable; such h are skipped.
inline constexpr u32 kMaxPlannableLengthBits = 40;

inline std::optional<u64> plannable_code_length(u32 eff_bitlength, u32 weight) {
  if (weight == 1 && eff_bitlength >= kMaxPlannableLengthBits) return std::nullopt;
  const u64 len = code_length(eff_bitlength, weight);
  if (len >= (u64{1} << kMaxPlannableLengthBits)) return std::nullopt;
  return len;
}

struct HammingChoice {
  u32 weight = 0;
  u64 code_length = 0;
  u128 comm_bits = 0;
  long double cost = 0;  // objective value (comm bits, modeled cost or seconds)
};

/// argmin over h in [1, max_weight] of the request size; ties go to the
/// smaller h. gamma is a common factor and does not move the minimum.
inline HammingChoice optimize_comm(u32 eff_bitlength, u64 bins, QProfile profile = QProfile::kTable3,
                                   u32 max_weight = kMaxSupportedWeight) {
  std::optional<HammingChoice> best;
  for (u32 h = 1; h <= max_weight; ++h) {
    const auto len = plannable_code_length(eff_bitlength, h);
    if (!len) continue;
    const u128 bits = comm_bits(bins, 1, *len, HeParams::for_weight(h, profile));
    if (!best || bits < best->comm_bits) best = HammingChoice{h, *len, bits, static_cast<long double>(bits)};
  }
  PEPSI_ENFORCE(best.has_value(), InvalidArgument, "no plannable Hamming weight");
  return *best;
}

/// Cost of one equality batch pair for weight h, in arbitrary units.
using TimingProbe = std::function<long double(u32 weight, u64 code_length, const HeParams& he)>;

inline long double modeled_probe(u32 weight, u64 code_length, const HeParams& he) {
  return modeled_op_cost(code_length, weight, he);
}

/// Wall-clock seconds of one equality batch on the reference backend,
/// median of `trials` single-threaded runs.
inline long double reference_timing_probe(u32 weight, u64 code_length, const HeParams& he, int trials = 5) {
  ReferenceBackend be(he);
  const SecretKey sk = be.keygen();
  std::mt19937_64 rng(weight * 0x9e3779b97f4a7c15ull + code_length);
  std::vector<ReferenceBackend::Ciphertext> x;
  std::vector<SimdVector> y;
  for (u64 j = 0; j < code_length; ++j) {
    SimdVector a(be.slot_count()), b(be.slot_count());
    for (std::size_t s = 0; s < a.size(); ++s) {
      a[s] = rng() & 1;
      b[s] = rng() & 1;
    }
    x.push_back(be.encrypt(a, sk));
    y.push_back(std::move(b));
  }
  const auto k = EqualityConstants::make(weight, he.plain_modulus);
  std::vector<long double> times;
  for (int t = 0; t < trials; ++t) {
    const auto start = std::chrono::steady_clock::now();
    auto e = arith_cw_eq(be, std::span<const ReferenceBackend::Ciphertext>(x), std::span<const SimdVector>(y), k, 0);
    (void)e;
    times.push_back(std::chrono::duration<long double>(std::chrono::steady_clock::now() - start).count());
  }
  std::nth_element(times.begin(), times.begin() + trials / 2, times.end());
  return times[trials / 2];
}

/// argmin over h of the probe's cost with gamma = mu = 1; `curve` receives
/// every evaluated point.
inline HammingChoice optimize_comp(u32 eff_bitlength, u64 bins, const TimingProbe& probe,
                                   QProfile profile = QProfile::kTable3, u32 max_weight = kMaxSupportedWeight,
                                   std::vector<HammingChoice>* curve = nullptr,
                                   u64 max_code_length = u64{1} << kMaxPlannableLengthBits) {
  std::optional<HammingChoice> best;
  for (u32 h = 1; h <= max_weight; ++h) {
    const auto len = plannable_code_length(eff_bitlength, h);
    if (!len || *len > max_code_length) continue;
    const HeParams he = HeParams::for_weight(h, profile);
    const long double cost = probe(h, *len, he) * static_cast<long double>(ceil_div(bins, he.slot_count()));
    HammingChoice c{h, *len, comm_bits(bins, 1, *len, he), cost};
    if (curve) curve->push_back(c);
    if (!best || cost < best->cost) best = c;
  }
  PEPSI_ENFORCE(best.has_value(), InvalidArgument, "no plannable Hamming weight");
  return *best;
}

/// CSV (lambda_bar, h, comm_MB, runtime_ms) over the given weights. The
/// runtime column is the probe value in milliseconds when the probe returns
/// seconds, or the modeled cost scaled by `runtime_scale` otherwise.
inline std::string emit_tradeoff(std::span<const u32> eff_bitlengths, u64 bins, u32 min_weight, u32 max_weight,
                                 const TimingProbe& probe, long double runtime_scale,
                                 QProfile profile = QProfile::kTable3) {
  std::ostringstream out;
  out << "lambda_bar,h,comm_MB,runtime_ms\n";
  for (u32 lb : eff_bitlengths) {
    for (u32 h = min_weight; h <= max_weight; ++h) {
      const auto len = plannable_code_length(lb, h);
      if (!len) continue;
      const HeParams he = HeParams::for_weight(h, profile);
      const long double ms =
          probe(h, *len, he) * static_cast<long double>(ceil_div(bins, he.slot_count())) * runtime_scale;
      char line[128];
      std::snprintf(line, sizeof(line), "%u,%u,%.6Lf,%.6Lf\n", lb, h, to_megabytes(comm_bits(bins, 1, *len, he)),
                    ms);
      out << line;
    }
  }
  return out.str();
}

enum class Objective : u8 { kCommunication = 0, kComputation = 1 };

struct PlanRequest {
  u64 client_size = 0;  // m
  u64 server_size = 0;  // n
  std::optional<u32> bitlength;  // lambda, when elements have a fixed width
  u32 alpha = 40;                // used when bitlength is absent
  Objective objective = Objective::kCommunication;
  QProfile profile = QProfile::kTable3;
  std::optional<u32> index_bits;  // default: enough bits for the hash index
  std::optional<u32> log_bins;    // default: smallest power of two >= max(1.27 m, N)
  std::optional<u32> weight;      // force h
  u32 label_bytes = 0;
  bool large_elements = false;
  u64 seed = 0;
  long double load_failure = kDefaultLoadFailure;
};

struct PlanResult {
  ProtocolParams params;
  u32 bitlength = 0;  // lambda
  u64 server_size = 0;
  CostModel cost;

  u32 weight() const { return params.code.weight; }
  u64 code_length() const { return params.code.length; }
  u32 eff_bitlength() const { return params.code.bitlength; }
  long double lemma1() const {
    return lemma1_bound(params.binning.bins(), params.binning.client_max_load, params.binning.server_max_load,
                        bitlength);
  }
};

/// Chooses b, mu, lambda, h and the ring row for an instance. b is a power
/// of two, so it is a multiple of N whenever b >= N.
inline PlanResult plan(const PlanRequest& req) {
  PEPSI_ENFORCE(req.server_size >= 1, InvalidArgument, "server set must not be empty");
  constexpr u32 kDefaultLogN = 13;
  u32 log_bins = req.log_bins.value_or(std::max<u32>(
      kDefaultLogN, ceil_log2(static_cast<u64>(std::ceil(static_cast<double>(req.client_size) * kCuckooExpansion)))));
  const u64 bins = u64{1} << log_bins;
  PEPSI_ENFORCE(static_cast<double>(req.client_size) * kCuckooExpansion <= static_cast<double>(bins),
                InvalidArgument, "too few bins for the client set");
  const u32 mu = estimate_server_max_load(req.server_size, bins, kDefaultHashCount, req.load_failure);
  const u32 lambda = req.bitlength.value_or(select_bitlength(bins, 1, mu, req.alpha));
  PEPSI_ENFORCE(lambda <= 64, InvalidArgument,
                "required element bitlength " + std::to_string(lambda) +
                    " exceeds 64; use fewer bins or a smaller alpha");
  PEPSI_ENFORCE(lambda > log_bins, InvalidArgument, "element bitlength must exceed log2(bins)");

  BinningPlan binning = BinningPlan::make(log_bins, lambda, mu, req.seed);
  if (req.index_bits) binning.index_bits = *req.index_bits;
  const u32 eff = binning.effective_bitlength();

  u32 h = 0;
  if (req.weight) {
    h = *req.weight;
  } else if (req.objective == Objective::kCommunication) {
    h = optimize_comm(eff, bins, req.profile).weight;
  } else {
    h = optimize_comp(eff, bins, modeled_probe, req.profile).weight;
  }
  ProtocolParams p = ProtocolParams::make(std::move(binning), h, HeParams::for_weight(h, req.profile));
  p.profile = req.profile;
  p.label_bytes = req.label_bytes;
  p.large_elements = req.large_elements;
  p.element_key = derive_hash_key(req.seed, 0xe1e0);
  p.validate();

  PlanResult r;
  r.params = std::move(p);
  r.bitlength = lambda;
  r.server_size = req.server_size;
  r.cost = cost_model(eff, h, bins, 1, mu, req.profile);
  return r;
}

// ---------------------------------------------------------------------------
// Plan files: one key=value per line, '#' starts a comment.

inline std::string to_plan_text(const ProtocolParams& p) {
  std::ostringstream o;
  o << "format=pepsi-plan-1\n";
  o << "log_bins=" << p.binning.log_bins << "\n";
  o << "client_max_load=" << p.binning.client_max_load << "\n";
  o << "server_max_load=" << p.binning.server_max_load << "\n";
  o << "hash_count=" << p.binning.hash_count << "\n";
  o << "element_bitlength=" << p.binning.element_bitlength << "\n";
  o << "index_bits=" << p.binning.index_bits << "\n";
  o << "max_evictions=" << p.binning.max_evictions << "\n";
  for (u32 i = 0; i < p.binning.hash_count; ++i) o << "hash_key." << i << "=" << to_hex(p.binning.hash_keys[i]) << "\n";
  o << "hamming_weight=" << p.code.weight << "\n";
  o << "code_length=" << p.code.length << "\n";
  o << "log_n=" << p.he.log_n << "\n";
  o << "coeff_modulus_bits=" << p.he.coeff_modulus_bits << "\n";
  o << "plain_modulus=" << p.he.plain_modulus << "\n";
  o << "max_weight=" << p.he.max_weight << "\n";
  o << "variant_levels=" << p.he.variant_levels << "\n";
  o << "plain_mult_levels=" << p.he.plain_mult_levels << "\n";
  o << "profile=" << to_string(p.profile) << "\n";
  o << "label_bytes=" << p.label_bytes << "\n";
  o << "large_elements=" << (p.large_elements ? 1 : 0) << "\n";
  o << "element_key=" << to_hex(p.element_key) << "\n";
  return o.str();
}

inline ProtocolParams parse_plan_text(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    PEPSI_ENFORCE(eq != std::string::npos, FormatError, "plan line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    PEPSI_ENFORCE(it != kv.end(), FormatError, "plan file lacks key " + key);
    return it->second;
  };
  auto num = [&](const std::string& key) -> u64 {
    const std::string& s = get(key);
    std::size_t used = 0;
    u64 v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    PEPSI_ENFORCE(used == s.size() && !s.empty(), FormatError, "plan key " + key + " is not a number");
    return v;
  };
  auto small = [&](const std::string& key) -> u32 {
    const u64 v = num(key);
    PEPSI_ENFORCE(v <= 0xffffffffu, FormatError, "plan key " + key + " out of range");
    return static_cast<u32>(v);
  };
  PEPSI_ENFORCE(get("format") == "pepsi-plan-1", FormatError, "unsupported plan format");

  ProtocolParams p;
  p.binning.log_bins = small("log_bins");
  p.binning.client_max_load = small("client_max_load");
  p.binning.server_max_load = small("server_max_load");
  p.binning.hash_count = small("hash_count");
  p.binning.element_bitlength = small("element_bitlength");
  p.binning.index_bits = small("index_bits");
  p.binning.max_evictions = small("max_evictions");
  PEPSI_ENFORCE(p.binning.hash_count >= 1 && p.binning.hash_count <= 64, FormatError, "hash_count out of range");
  for (u32 i = 0; i < p.binning.hash_count; ++i) {
    p.binning.hash_keys.push_back(hash_key_from_hex(get("hash_key." + std::to_string(i))));
  }
  p.he.log_n = small("log_n");
  p.he.coeff_modulus_bits = small("coeff_modulus_bits");
  p.he.plain_modulus = num("plain_modulus");
  p.he.max_weight = small("max_weight");
  p.he.variant_levels = small("variant_levels");
  p.he.plain_mult_levels = small("plain_mult_levels");
  p.profile = qprofile_from_string(get("profile"));
  p.label_bytes = small("label_bytes");
  p.large_elements = num("large_elements") != 0;
  p.element_key = hash_key_from_hex(get("element_key"));
  p.binning.validate();
  p.code = CodeParams::make(p.binning.effective_bitlength(), small("hamming_weight"));
  PEPSI_ENFORCE(p.code.length == num("code_length"), FormatError, "code_length disagrees with the weight");
  p.validate();
  return p;
}

inline void write_plan_file(const std::string& path, const ProtocolParams& p) {
  std::ofstream f(path);
  PEPSI_ENFORCE(f.good(), Error, "cannot write plan file " + path);
  f << to_plan_text(p);
}

inline ProtocolParams read_plan_file(const std::string& path) {
  std::ifstream f(path);
  PEPSI_ENFORCE(f.good(), Error, "cannot read plan file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_plan_text(ss.str());
}

}  // namespace pepsi
