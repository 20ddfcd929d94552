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

#include "pepsi/binning.hpp"
#include "pepsi/common.hpp"
#include "pepsi/cwcode.hpp"
#include "pepsi/hash.hpp"
#include "pepsi/net.hpp"
#include "pepsi/planner.hpp"
#include "pepsi/protocol.hpp"
#include "pepsi/service.hpp"
#include "pepsi/simd_backend.hpp"
#include "pepsi/variants.hpp"
#include "pepsi/wire.hpp"
