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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "pepsi/planner.hpp"
#include "test_util.hpp"

namespace pepsi {
namespace {

TEST(SelectBitlength, Formula) {
  EXPECT_EQ(select_bitlength(16384, 1, 3487, 40), 66u);
  EXPECT_EQ(40 + ceil_log2(3487), 52u);  // lambda - log2 b
  EXPECT_EQ(select_bitlength(1, 1, 1, 0), 0u);
  EXPECT_EQ(lemma1_bound(1, 1, 1, 0), 1.0L);
  EXPECT_THROW(select_bitlength(0, 1, 1, 40), InvalidArgument);
}

TEST(SelectBitlength, BoundNeverExceedsTarget) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const u64 b = 1 + rng() % (1 << 20);
    const u32 g = 1 + static_cast<u32>(rng() % 4);
    const u32 mu = 1 + static_cast<u32>(rng() % 5000);
    const u32 alpha = static_cast<u32>(rng() % 60);
    const u32 lambda = select_bitlength(b, g, mu, alpha);
    ASSERT_LE(lemma1_bound(b, g, mu, lambda), std::ldexp(1.0L, -static_cast<int>(alpha)));
    // Minimality: one bit less would break the bound unless b*g*mu is 1.
    if (b * g * mu > 1) {
      ASSERT_GT(lemma1_bound(b, g, mu, lambda - 1), std::ldexp(1.0L, -static_cast<int>(alpha)));
    }
  }
}

TEST(CommBits, ConcreteFormula) {
  const auto he = HeParams::for_weight(8);
  EXPECT_EQ(comm_bits(8192, 1, 24, he), static_cast<u128>(24) * 8192 * 204);
  EXPECT_EQ(comm_bits(16384, 1, 24, he), static_cast<u128>(2) * 24 * 8192 * 204);
  EXPECT_EQ(comm_bits(100, 3, 10, he), static_cast<u128>(3) * 10 * 8192 * 204);
  const auto sec7 = HeParams::for_weight(8, QProfile::kPaperSec7);
  EXPECT_NEAR(static_cast<double>(to_megabytes(comm_bits(8192, 1, 24, sec7))), 4.718592, 1e-9);
}

TEST(CostModel, AgreesWithOperationCounts) {
  const auto c = cost_model(19, 8, 8192, 1, 526);
  EXPECT_EQ(c.ops, (OpCounts{12624, 4208}));
  EXPECT_EQ(c.comm_bits, comm_bits(8192, 1, 24, HeParams::for_weight(8)));
  EXPECT_EQ(c.modeled_op_cost, modeled_op_cost(24, 8, HeParams::for_weight(8), 526));
}

TEST(OptimizeComm, PublishedMinima) {
  for (u64 b : {u64{1024}, u64{4096}, u64{8192}}) {
    EXPECT_EQ(optimize_comm(16, b).weight, 8u) << b;
    EXPECT_EQ(optimize_comm(32, b).weight, 8u) << b;
    EXPECT_EQ(optimize_comm(48, b).weight, 23u) << b;
  }
}

TEST(OptimizeComm, IsTheExhaustiveArgmin) {
  for (u32 lb = 8; lb <= 64; ++lb) {
    const auto best = optimize_comm(lb, 4096);
    for (u32 h = 1; h <= kMaxSupportedWeight; ++h) {
      const auto len = plannable_code_length(lb, h);
      if (!len) continue;
      const u128 bits = comm_bits(4096, 1, *len, HeParams::for_weight(h));
      ASSERT_LE(best.comm_bits, bits) << lb << " " << h;
      if (h < best.weight) {
        ASSERT_LT(best.comm_bits, bits) << "tie must go to the smaller weight";
      }
    }
    ASSERT_EQ(best.code_length, code_length(lb, best.weight));
  }
}

TEST(OptimizeComm, WeightGrowsWithBitlength) {
  u32 prev = 0;
  for (u32 lb = 8; lb <= 64; ++lb) {
    const u32 h = optimize_comm(lb, 4096).weight;
    EXPECT_GE(h, prev) << lb;
    prev = h;
  }
}

TEST(OptimizeComm, CommunicationScalesWithLengthWithinEachRing) {
  // Within one ring row only l changes with h.
  for (u32 lb : {16u, 32u, 48u}) {
    for (u32 h = 3; h <= kMaxSupportedWeight; ++h) {
      const auto a = HeParams::for_weight(h - 1), b = HeParams::for_weight(h);
      if (!(a == b)) continue;
      const u64 la = code_length(lb, h - 1), lb_len = code_length(lb, h);
      EXPECT_EQ(comm_bits(4096, 1, lb_len, b) * la, comm_bits(4096, 1, la, a) * lb_len);
      if (lb_len < la) {
        EXPECT_LT(comm_bits(4096, 1, lb_len, b), comm_bits(4096, 1, la, a));
      }
    }
  }
}

TEST(OptimizeComp, ModeledMinima) {
  EXPECT_EQ(optimize_comp(16, 4096, modeled_probe).weight, 4u);
  EXPECT_EQ(optimize_comp(32, 4096, modeled_probe).weight, 8u);
  EXPECT_EQ(optimize_comp(48, 4096, modeled_probe).weight, 8u);
  std::vector<HammingChoice> curve;
  const auto best = optimize_comp(32, 4096, modeled_probe, QProfile::kTable3, 16, &curve);
  ASSERT_EQ(curve.size(), 16u);
  for (const auto& c : curve) EXPECT_LE(best.cost, c.cost);
}

TEST(Tradeoff, HighBitlengthObservation) {
  const auto c16 = cost_model(48, 16, 4096, 1, 1);
  const auto c23 = cost_model(48, 23, 4096, 1, 1);
  const double comm_ratio = static_cast<double>(c23.comm_bits) / static_cast<double>(c16.comm_bits);
  EXPECT_GE(comm_ratio, 0.94);
  EXPECT_LT(comm_ratio, 1.0);
  EXPECT_GT(c23.modeled_op_cost, 1.4L * c16.modeled_op_cost);
}

TEST(Tradeoff, CsvShape) {
  const std::vector<u32> lbs{16, 48};
  const std::string csv = emit_tradeoff(lbs, 4096, 2, 30, modeled_probe, 1e-6L);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "lambda_bar,h,comm_MB,runtime_ms");
  int rows = 0;
  double best_mb = 1e300;
  u32 best_h = 0;
  while (std::getline(in, line)) {
    ++rows;
    u32 lb = 0, h = 0;
    double mb = 0, ms = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%u,%u,%lf,%lf", &lb, &h, &mb, &ms), 4) << line;
    EXPECT_GT(mb, 0);
    EXPECT_GT(ms, 0);
    if (lb == 48 && mb < best_mb) {
      best_mb = mb;
      best_h = h;
    }
  }
  EXPECT_EQ(rows, 2 * 29);
  EXPECT_EQ(best_h, 23u);
}

TEST(TimingProbe, TracksOperationCount) {
  // Reference-backend time should rank weights like the unit-cost count
  // (l + h) * N of one equality batch.
  std::vector<std::pair<double, double>> pts;
  for (u32 h = 2; h <= 12; ++h) {
    const u64 len = code_length(16, h);
    const auto he = HeParams::for_weight(h);
    pts.emplace_back(static_cast<double>((len + h) * he.slot_count()),
                     static_cast<double>(reference_timing_probe(h, len, he)));
  }
  auto ranks = [&](bool second) {
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return second ? pts[a].second < pts[b].second : pts[a].first < pts[b].first;
    });
    std::vector<double> r(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  const auto ra = ranks(false), rb = ranks(true);
  double d2 = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double n = static_cast<double>(ra.size());
  const double spearman = 1 - 6 * d2 / (n * (n * n - 1));
  EXPECT_GT(spearman, 0.7);
}

TEST(Plan, SmallInstanceConfiguration) {
  PlanRequest req;
  req.client_size = 512;
  req.server_size = 8192;
  req.alpha = 20;
  req.log_bins = 13;
  const auto r = plan(req);
  const u32 mu = r.params.binning.server_max_load;
  EXPECT_EQ(mu, estimate_server_max_load(8192, 8192, 3, kDefaultLoadFailure));
  EXPECT_EQ(r.bitlength, 20 + ceil_log2(8192ull * mu));
  EXPECT_EQ(r.eff_bitlength(), r.bitlength - 13 + 2);
  EXPECT_EQ(r.weight(), optimize_comm(r.eff_bitlength(), 8192).weight);
  EXPECT_EQ(r.code_length(), code_length(r.eff_bitlength(), r.weight()));
  EXPECT_LE(r.lemma1(), 0x1p-20L);
  EXPECT_EQ(r.params.he, HeParams::for_weight(r.weight()));
  EXPECT_EQ(r.cost.ops, count_operations(r.params));
}

TEST(Plan, DefaultsAndOverrides) {
  PlanRequest req;
  req.client_size = 1024;
  req.server_size = 1 << 16;
  req.bitlength = 32;
  auto r = plan(req);
  EXPECT_EQ(r.params.binning.log_bins, 13u);
  EXPECT_EQ(r.bitlength, 32u);
  EXPECT_EQ(r.weight(), 8u);
  req.client_size = 10000;
  EXPECT_EQ(plan(req).params.binning.log_bins, 14u);
  req.client_size = 1024;
  req.weight = 4;
  EXPECT_EQ(plan(req).weight(), 4u);
  req.weight.reset();
  req.objective = Objective::kComputation;
  EXPECT_EQ(plan(req).weight(), optimize_comp(plan(req).eff_bitlength(), 8192, modeled_probe).weight);
  req.index_bits = 0;
  EXPECT_EQ(plan(req).eff_bitlength(), 19u);
  req.profile = QProfile::kPaperSec7;
  req.weight = 8;
  EXPECT_EQ(plan(req).params.he.coeff_modulus_bits, 192u);
}

TEST(Plan, RejectsImpossibleRequests) {
  PlanRequest req;
  req.client_size = 100;
  req.server_size = 0;
  EXPECT_THROW(plan(req), InvalidArgument);
  req.server_size = 1 << 20;
  req.alpha = 60;
  EXPECT_THROW(plan(req), InvalidArgument);  // lambda above 64
  req.alpha = 40;
  req.client_size = 20000;
  req.log_bins = 13;
  EXPECT_THROW(plan(req), InvalidArgument);
}

TEST(PlanFile, RoundTrip) {
  PlanRequest req;
  req.client_size = 300;
  req.server_size = 5000;
  req.bitlength = 40;
  req.label_bytes = 32;
  req.seed = 77;
  const auto p = plan(req).params;
  const auto text = to_plan_text(p);
  const auto back = parse_plan_text(text);
  EXPECT_EQ(back.plan_fingerprint(), p.plan_fingerprint());
  EXPECT_EQ(back.he, p.he);
  EXPECT_EQ(back.binning, p.binning);
  EXPECT_EQ(back.label_bytes, 32u);
  EXPECT_EQ(to_plan_text(back), text);

  const auto path = std::filesystem::temp_directory_path() / "pepsi-planner-test.plan";
  write_plan_file(path.string(), p);
  EXPECT_EQ(read_plan_file(path.string()).plan_fingerprint(), p.plan_fingerprint());
  std::filesystem::remove(path);
  EXPECT_THROW(read_plan_file(path.string()), Error);

  EXPECT_EQ(parse_plan_text("# comment\n" + text + "\n\n").plan_fingerprint(), p.plan_fingerprint());
}

TEST(PlanFile, RejectsMalformedText) {
  PlanRequest req;
  req.client_size = 100;
  req.server_size = 1000;
  req.bitlength = 32;
  const auto text = to_plan_text(plan(req).params);
  auto replace = [&](const std::string& from, const std::string& to) {
    std::string s = text;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  EXPECT_THROW(parse_plan_text(replace("format=pepsi-plan-1", "format=other")), FormatError);
  EXPECT_THROW(parse_plan_text(replace("log_bins=", "log_binz=")), FormatError);
  EXPECT_THROW(parse_plan_text(replace("hamming_weight=8", "hamming_weight=8x")), FormatError);
  EXPECT_THROW(parse_plan_text(replace("hamming_weight=8", "hamming_weight=7")), FormatError);
  EXPECT_THROW(parse_plan_text(replace("element_key=", "element_key=zz")), Error);
  EXPECT_THROW(parse_plan_text("garbage"), FormatError);
}

}  // namespace
}  // namespace pepsi
