// Copyright 2026 The AirFL Authors
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

// Umbrella header.

#pragma once

#include "airfl/errors.hpp"
#include "airfl/numkit.hpp"
#include "airfl/linalg.hpp"
#include "airfl/tasks/objective.hpp"
#include "airfl/tasks/linear.hpp"
#include "airfl/tasks/dataset.hpp"
#include "airfl/tasks/idx.hpp"
#include "airfl/tasks/models.hpp"
#include "airfl/channel.hpp"
#include "airfl/lr.hpp"
#include "airfl/fedalgos.hpp"
#include "airfl/bounds.hpp"
#include "airfl/harness/config.hpp"
#include "airfl/harness/metrics.hpp"
#include "airfl/harness/analysis.hpp"
#include "airfl/harness/experiment.hpp"
