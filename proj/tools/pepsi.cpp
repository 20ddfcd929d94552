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

// Command-line front end: params, preprocess, serve, query, bench.
// Exit codes: 0 ok, 1 usage or input error, 2 protocol failure, 3 network.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "pepsi/pepsi.hpp"

namespace {

using namespace pepsi;
using Clock = std::chrono::steady_clock;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitProtocol = 2;
constexpr int kExitNetwork = 3;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  PEPSI_ENFORCE(f.good(), InvalidArgument, "cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    line = trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

u64 parse_integer(const std::string& s) {
  std::size_t used = 0;
  u64 v = 0;
  try {
    v = std::stoull(s, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  PEPSI_ENFORCE(!s.empty() && used == s.size() && s[0] != '-', InvalidArgument, "not an integer: " + s);
  return v;
}

/// Set elements mapped to the u64 domain; `names` keeps the text for output.
struct LoadedSet {
  std::vector<u64> elements;
  std::unordered_map<u64, std::string> names;
};

u64 element_of(const ProtocolParams& p, const std::string& text) {
  return p.large_elements ? map_large_element(p, text) : parse_integer(text);
}

LoadedSet load_set(const ProtocolParams& p, const std::string& path) {
  LoadedSet s;
  for (const auto& line : read_lines(path)) {
    const u64 x = element_of(p, line);
    PEPSI_ENFORCE(s.names.emplace(x, line).second, InvalidArgument,
                  p.large_elements ? "two elements hash to the same value: " + line : "duplicate element: " + line);
    s.elements.push_back(x);
  }
  return s;
}

/// Tab-separated "element<TAB>value" lines keyed by mapped element.
std::unordered_map<u64, std::string> load_value_map(const ProtocolParams& p, const std::string& path) {
  std::unordered_map<u64, std::string> out;
  for (const auto& line : read_lines(path)) {
    const auto tab = line.find('\t');
    PEPSI_ENFORCE(tab != std::string::npos, InvalidArgument, "values line without a tab: " + line);
    out[element_of(p, trim(line.substr(0, tab)))] = line.substr(tab + 1);
  }
  return out;
}

std::vector<u64> values_for(const ProtocolParams& p, const LoadedSet& set, const std::string& path) {
  const auto map = load_value_map(p, path);
  std::vector<u64> out;
  for (u64 x : set.elements) {
    auto it = map.find(x);
    PEPSI_ENFORCE(it != map.end(), InvalidArgument, "no value for element " + set.names.at(x));
    const u64 v = parse_integer(trim(it->second));
    PEPSI_ENFORCE(v < p.he.plain_modulus, InvalidArgument, "value outside Z_t for " + set.names.at(x));
    out.push_back(v);
  }
  return out;
}

Bytes label_from_text(const std::string& text, u32 width) {
  Bytes b;
  if (text.rfind("hex:", 0) == 0) {
    const std::string hex = text.substr(4);
    PEPSI_ENFORCE(hex.size() % 2 == 0, InvalidArgument, "odd-length hex label");
    for (std::size_t i = 0; i < hex.size(); i += 2) {
      b.push_back(static_cast<u8>(std::stoul(hex.substr(i, 2), nullptr, 16)));
    }
  } else {
    b.assign(text.begin(), text.end());
  }
  PEPSI_ENFORCE(b.size() <= width, InvalidArgument, "label longer than " + std::to_string(width) + " bytes");
  b.resize(width, 0);
  return b;
}

std::string label_to_text(Bytes b) {
  while (!b.empty() && b.back() == 0) b.pop_back();
  const bool printable = std::all_of(b.begin(), b.end(), [](u8 c) { return c >= 0x20 && c < 0x7f && c != '\t'; });
  return printable ? std::string(b.begin(), b.end()) : "hex:" + to_hex(b);
}

std::vector<Bytes> labels_for(const ProtocolParams& p, const LoadedSet& set, const std::string& path) {
  const auto map = load_value_map(p, path);
  std::vector<Bytes> out;
  for (u64 x : set.elements) {
    auto it = map.find(x);
    PEPSI_ENFORCE(it != map.end(), InvalidArgument, "no label for element " + set.names.at(x));
    out.push_back(label_from_text(it->second, p.label_bytes));
  }
  return out;
}

void print_plan(const PlanResult& r, std::ostream& os) {
  const auto& p = r.params;
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "element bitlength lambda      %u\n"
                "effective bitlength           %u\n"
                "bins b                        %llu\n"
                "client load gamma             %u\n"
                "server load mu                %u\n"
                "Hamming weight h              %u\n"
                "code length l                 %llu\n"
                "ring degree N                 %zu\n"
                "log2 q                        %u\n"
                "plaintext modulus t           %llu\n"
                "false-match bound             %.3Le\n"
                "request size (model)          %.3Lf MB\n"
                "plaintext mults               %llu\n"
                "ciphertext mults              %llu\n",
                r.bitlength, r.eff_bitlength(), static_cast<unsigned long long>(p.binning.bins()),
                p.binning.client_max_load, p.binning.server_max_load, r.weight(),
                static_cast<unsigned long long>(r.code_length()), p.he.slot_count(), p.he.coeff_modulus_bits,
                static_cast<unsigned long long>(p.he.plain_modulus), r.lemma1(), to_megabytes(r.cost.comm_bits),
                static_cast<unsigned long long>(r.cost.ops.pm), static_cast<unsigned long long>(r.cost.ops.m));
  os << buf;
}

// ---------------------------------------------------------------------------

struct ParamsArgs {
  u64 m = 1024;
  u64 n = 1 << 16;
  std::optional<u32> lambda;
  u32 alpha = 40;
  std::string objective = "comm";
  std::string profile = "table3";
  std::optional<u32> index_bits;
  std::optional<u32> log_bins;
  std::optional<u32> weight;
  u32 label_bytes = 0;
  bool large = false;
  u64 seed = 0;
  std::string out;
};

int run_params(const ParamsArgs& a) {
  PlanRequest req;
  req.client_size = a.m;
  req.server_size = a.n;
  req.bitlength = a.lambda;
  req.alpha = a.alpha;
  PEPSI_ENFORCE(a.objective == "comm" || a.objective == "comp", InvalidArgument, "objective must be comm or comp");
  req.objective = a.objective == "comm" ? Objective::kCommunication : Objective::kComputation;
  req.profile = qprofile_from_string(a.profile);
  req.index_bits = a.index_bits;
  req.log_bins = a.log_bins;
  req.weight = a.weight;
  req.label_bytes = a.label_bytes;
  req.large_elements = a.large;
  if (a.seed != 0) {
    req.seed = a.seed;
  } else {
    SodiumRng rng;
    req.seed = rng();
  }
  const PlanResult r = plan(req);
  print_plan(r, std::cout);
  if (!a.out.empty()) {
    write_plan_file(a.out, r.params);
    std::cout << "plan written to " << a.out << "\n";
  }
  return kExitOk;
}

struct ServerArgs {
  std::string plan;
  std::string set_file;
  std::string values_file;
  std::string cache_dir;
  std::string host = "127.0.0.1";
  u16 port = 7766;
  u32 threads = 1;
  u64 max_queries = 0;
};

ServerDataset prepare_server(const ProtocolParams& p, const LoadedSet& set, const std::string& cache_dir,
                             double* seconds, bool* hit) {
  const auto t0 = Clock::now();
  ServerDataset ds = load_or_prepare(p, set.elements, cache_dir.empty() ? default_cache_dir() : cache_dir, hit);
  *seconds = seconds_since(t0);
  return ds;
}

int run_preprocess(const ServerArgs& a) {
  const ProtocolParams p = read_plan_file(a.plan);
  const LoadedSet set = load_set(p, a.set_file);
  double secs = 0;
  bool hit = false;
  const ServerDataset ds = prepare_server(p, set, a.cache_dir, &secs, &hit);
  const std::string dir = a.cache_dir.empty() ? default_cache_dir() : a.cache_dir;
  std::printf("table %s (%s)\nelements %llu, max bin load %u of %u\noffline_s %.3f\n",
              cache_path(dir, p, set_fingerprint(set.elements)).c_str(), hit ? "cached" : "built",
              static_cast<unsigned long long>(ds.element_count), ds.table.max_bin_size(),
              p.binning.server_max_load, secs);
  return kExitOk;
}

int run_serve(const ServerArgs& a) {
  const ProtocolParams p = read_plan_file(a.plan);
  const LoadedSet set = load_set(p, a.set_file);
  double secs = 0;
  bool hit = false;
  ServerDataset ds = prepare_server(p, set, a.cache_dir, &secs, &hit);
  ServerEngine engine(p, std::move(ds), a.threads);
  if (!a.values_file.empty()) {
    if (p.label_bytes > 0) {
      engine.set_labels(labels_for(p, set, a.values_file));
    } else {
      engine.set_values(values_for(p, set, a.values_file));
    }
  }
  TcpServer server(
      [&](std::span<const u8> frame) {
        const auto t0 = Clock::now();
        Bytes reply = engine.handle_bytes(frame);
        std::fprintf(stderr, "online_s %.3f\n", seconds_since(t0));
        return reply;
      },
      a.port, a.host, [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
  std::printf("offline_s %.3f (%s)\nlistening on %s:%u\n", secs, hit ? "cached" : "built", a.host.c_str(),
              server.port());
  std::fflush(stdout);
  if (a.max_queries == 0) {
    server.wait();
  } else {
    server.wait_for_replies(a.max_queries);
  }
  server.stop();
  return kExitOk;
}

struct QueryArgs {
  std::string plan;
  std::string set_file;
  std::string values_file;
  std::string variant = "psi";
  std::string host = "127.0.0.1";
  u16 port = 7766;
  std::string out;
};

int run_query(const QueryArgs& a) {
  const ProtocolParams p = read_plan_file(a.plan);
  const Variant variant = variant_from_string(a.variant);
  const LoadedSet set = load_set(p, a.set_file);
  std::vector<u64> client_values;
  if (variant == Variant::kInnerProduct) {
    PEPSI_ENFORCE(!a.values_file.empty(), InvalidArgument, "inner-product queries need --values-file");
    client_values = values_for(p, set, a.values_file);
  }
  ClientSession session(p);
  auto t0 = Clock::now();
  const Request req = session.make_request(variant, set.elements, client_values);
  const double offline = seconds_since(t0);
  t0 = Clock::now();
  const QueryExchange x = tcp_query(a.host, a.port, req);
  const double online = seconds_since(t0);

  std::ostringstream result;
  switch (variant) {
    case Variant::kPsi:
      for (u64 e : session.intersection(x.response)) result << set.names.at(e) << "\n";
      break;
    case Variant::kLabelled:
      if (p.label_bytes > 0) {
        for (auto& [e, l] : session.label_bytes(x.response)) {
          result << set.names.at(e) << "\t" << label_to_text(l) << "\n";
        }
      } else {
        for (auto& [e, l] : session.labels(x.response)) result << set.names.at(e) << "\t" << l << "\n";
      }
      break;
    case Variant::kSum:
    case Variant::kCardinality:
    case Variant::kInnerProduct:
      result << session.scalar(x.response) << "\n";
      break;
  }
  if (a.out.empty()) {
    std::cout << result.str();
  } else {
    std::ofstream f(a.out);
    PEPSI_ENFORCE(f.good(), InvalidArgument, "cannot write " + a.out);
    f << result.str();
  }
  std::fprintf(stderr, "request_bytes %llu\nresponse_bytes %llu\nmessages %u\nclient_offline_s %.3f\nonline_s %.3f\n",
               static_cast<unsigned long long>(x.request_bytes), static_cast<unsigned long long>(x.response_bytes),
               x.frames_sent + x.frames_received, offline, online);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench: each scenario line is "n m variant profile"; runs in process.

struct BenchArgs {
  std::string scenario_file;
  std::string out;
  u32 runs = 3;
  u32 threads = 1;
  u32 alpha = 40;
  u32 lambda = 0;  // 0 derives the bitlength from the set sizes
  u64 seed = 1;
};

struct BenchRow {
  u64 n = 0, m = 0;
  u32 mu = 0;
  double offline_s = 0, online_s = 0, req_mb = 0, resp_mb = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

BenchRow bench_scenario(u64 n, u64 m, Variant variant, QProfile profile, const BenchArgs& a) {
  PlanRequest req;
  req.client_size = m;
  req.server_size = n;
  req.alpha = a.alpha;
  req.bitlength = a.lambda;
  req.profile = profile;
  req.seed = a.seed;
  const PlanResult plan_result = plan(req);
  const ProtocolParams& p = plan_result.params;
  std::mt19937_64 rng(a.seed ^ (n * 31 + m));
  const u64 mask = low_mask(p.binning.element_bitlength);
  std::vector<u64> server(n), client(m);
  std::unordered_map<u64, bool> seen;
  for (auto& x : server) {
    do x = rng() & mask;
    while (!seen.emplace(x, true).second);
  }
  for (u64 i = 0; i < m; ++i) {
    if (i % 2 == 0 && i / 2 < n) {
      client[i] = server[i / 2];
    } else {
      u64 x;
      do x = rng() & mask;
      while (!seen.emplace(x, true).second);
      client[i] = x;
    }
  }
  std::vector<u64> values(n), client_values(m);
  for (auto& v : values) v = 1 + rng() % 1000;  // nonzero, so labelled scenarios work too
  for (auto& v : client_values) v = rng() % 1000;

  std::vector<double> offline, online, req_mb, resp_mb;
  for (u32 r = 0; r < a.runs; ++r) {
    auto t0 = Clock::now();
    ServerDataset ds = server_prepare(p, server);
    offline.push_back(seconds_since(t0));
    ServerEngine engine(p, std::move(ds), a.threads);
    engine.set_values(values);
    ClientSession session(p);
    const Bytes request = serialize(session.make_request(variant, client, client_values));
    t0 = Clock::now();
    const Bytes response = engine.handle_bytes(request);
    online.push_back(seconds_since(t0));
    const Response resp = deserialize_response(response);
    PEPSI_ENFORCE(resp.status == Status::kOk, ProtocolFailure, "bench query failed: " + resp.error);
    req_mb.push_back(static_cast<double>(request.size()) / 1e6);
    resp_mb.push_back(static_cast<double>(response.size()) / 1e6);
  }
  return {n, m, p.binning.server_max_load, median(offline), median(online), median(req_mb), median(resp_mb)};
}

int run_bench(const BenchArgs& a) {
  PEPSI_ENFORCE(a.runs >= 3, InvalidArgument, "bench needs at least 3 runs per scenario");
  std::ostringstream csv;
  csv << "n,m,mu,offline_s,online_s,req_MB,resp_MB\n";
  for (const auto& line : read_lines(a.scenario_file)) {
    if (line[0] == '#') continue;
    std::istringstream in(line);
    std::string n, m, variant, profile = "table3";
    in >> n >> m >> variant >> profile;
    PEPSI_ENFORCE(!variant.empty(), InvalidArgument, "scenario line needs n m variant [profile]: " + line);
    const BenchRow r = bench_scenario(parse_integer(n), parse_integer(m), variant_from_string(variant),
                                      qprofile_from_string(profile), a);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%llu,%llu,%u,%.4f,%.4f,%.4f,%.4f\n", static_cast<unsigned long long>(r.n),
                  static_cast<unsigned long long>(r.m), r.mu, r.offline_s, r.online_s, r.req_mb, r.resp_mb);
    csv << buf;
    std::fputs(buf, stderr);
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(a.out);
    PEPSI_ENFORCE(f.good(), InvalidArgument, "cannot write " + a.out);
    f << csv.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private set intersection with constant-weight codes over batched homomorphic encryption"};
  app.require_subcommand(1);

  ParamsArgs pa;
  auto* params = app.add_subcommand("params", "choose protocol parameters and write a plan file");
  params->add_option("--m", pa.m, "client set size")->default_val(pa.m);
  params->add_option("--n", pa.n, "server set size")->default_val(pa.n);
  auto* lambda_opt = params->add_option("--lambda", pa.lambda, "element bitlength");
  params->add_option("--alpha", pa.alpha, "target false-match exponent")->default_val(pa.alpha)->excludes(lambda_opt);
  params->add_option("--objective", pa.objective, "comm or comp")->default_val(pa.objective);
  params->add_option("--profile", pa.profile, "q profile: table3 or paper-sec7")->default_val(pa.profile);
  params->add_option("--index-bits", pa.index_bits, "hash-index bits appended to stored values");
  params->add_option("--log-bins", pa.log_bins, "log2 of the bin count");
  params->add_option("--weight", pa.weight, "force the Hamming weight");
  params->add_option("--label-bytes", pa.label_bytes, "label width for labelled queries");
  params->add_flag("--large-elements", pa.large, "elements are byte strings");
  params->add_option("--seed", pa.seed, "hash-key seed (random when 0)");
  params->add_option("--out", pa.out, "plan file to write");

  ServerArgs sa;
  auto* preprocess = app.add_subcommand("preprocess", "build and cache the server table");
  auto* serve = app.add_subcommand("serve", "answer queries over TCP");
  for (auto* sub : {preprocess, serve}) {
    sub->add_option("--plan", sa.plan, "plan file")->required();
    sub->add_option("--set-file", sa.set_file, "server set, one element per line")->required();
    sub->add_option("--cache-dir", sa.cache_dir, std::string("table cache directory (default $") + kCacheDirEnv + ")");
  }
  serve->add_option("--values-file", sa.values_file, "element<TAB>value or label lines");
  serve->add_option("--host", sa.host, "bind address")->default_val(sa.host);
  serve->add_option("--port", sa.port, "listen port (0 picks one)")->default_val(sa.port);
  serve->add_option("--threads", sa.threads, "workers per query")->default_val(sa.threads);
  serve->add_option("--max-queries", sa.max_queries, "exit after this many queries (0 = run forever)");

  QueryArgs qa;
  auto* query = app.add_subcommand("query", "run one query against a server");
  query->add_option("--plan", qa.plan, "plan file")->required();
  query->add_option("--set-file", qa.set_file, "client set, one element per line")->required();
  query->add_option("--values-file", qa.values_file, "client values for inner-product queries");
  query->add_option("--variant", qa.variant, "psi, labelled, sum, cardinality or inner-product")
      ->default_val(qa.variant);
  query->add_option("--host", qa.host, "server address")->default_val(qa.host);
  query->add_option("--port", qa.port, "server port")->default_val(qa.port);
  query->add_option("--out", qa.out, "result file (default stdout)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "time scenarios and write a CSV");
  bench->add_option("--scenario-file", ba.scenario_file, "lines of: n m variant [profile]")->required();
  bench->add_option("--out", ba.out, "CSV file (default stdout)");
  bench->add_option("--runs", ba.runs, "runs per scenario; the median is reported")->default_val(ba.runs);
  bench->add_option("--threads", ba.threads, "server workers")->default_val(ba.threads);
  auto* bench_lambda = bench->add_option("--lambda", ba.lambda, "fixed element bitlength");
  bench->add_option("--alpha", ba.alpha, "false-match exponent")->default_val(ba.alpha)->excludes(bench_lambda);
  bench->add_option("--seed", ba.seed, "instance seed")->default_val(ba.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*params) return run_params(pa);
    if (*preprocess) return run_preprocess(sa);
    if (*serve) return run_serve(sa);
    if (*query) return run_query(qa);
    if (*bench) return run_bench(ba);
  } catch (const NetworkError& e) {
    std::fprintf(stderr, "network error: %s\n", e.what());
    return kExitNetwork;
  } catch (const ProtocolFailure& e) {
    std::fprintf(stderr, "protocol failure: %s\n", e.what());
    return kExitProtocol;
  } catch (const FingerprintMismatch& e) {
    std::fprintf(stderr, "protocol failure: %s\n", e.what());
    return kExitProtocol;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return kExitOk;
}
