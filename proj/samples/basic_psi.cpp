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

// In-process walk through one plain PSI query and one PSI-Sum query.

#include <cstdio>
#include <vector>

#include "pepsi/pepsi.hpp"

int main() {
  using namespace pepsi;

  PlanRequest req;
  req.client_size = 100;
  req.server_size = 2000;
  req.alpha = 30;
  req.seed = 42;
  const PlanResult plan_result = plan(req);
  const ProtocolParams& params = plan_result.params;
  std::printf("lambda %u, h %u, l %llu, mu %u\n", plan_result.bitlength, params.code.weight,
              static_cast<unsigned long long>(params.code.length), params.binning.server_max_load);

  std::vector<u64> server, client;
  for (u64 i = 0; i < 2000; ++i) server.push_back(i * 7919 + 3);
  for (u64 i = 0; i < 100; ++i) client.push_back(i % 3 == 0 ? i * 7919 + 3 : i * 7919 + 4);  // 34 shared

  ServerEngine engine(params, server_prepare(params, server));
  std::vector<u64> values(server.size(), 5);
  engine.set_values(values);

  ClientSession session(params);
  const Request request = session.make_request(Variant::kPsi, client);
  const Response response = engine.handle(request);
  const auto found = session.intersection(response);
  std::printf("intersection size %zu, request %zu bytes, response %zu bytes\n", found.size(),
              serialize(request).size(), serialize(response).size());

  const Request sum_request = session.make_request(Variant::kSum, client);
  std::printf("sum of matched values %llu\n",
              static_cast<unsigned long long>(session.scalar(engine.handle(sum_request))));
  return 0;
}
