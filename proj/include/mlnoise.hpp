// Copyright 2026 The mlnoise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mlnoise/config.hpp"
#include "mlnoise/core.hpp"
#include "mlnoise/csv.hpp"
#include "mlnoise/harness.hpp"
#include "mlnoise/matrix.hpp"
#include "mlnoise/metrics.hpp"
#include "mlnoise/nn.hpp"
#include "mlnoise/noise.hpp"
#include "mlnoise/objectives.hpp"
#include "mlnoise/rng.hpp"
#include "mlnoise/selfcheck.hpp"
