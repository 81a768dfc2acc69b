// Copyright 2026 The pulse Authors
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

#include "pulse/community.hpp"
#include "pulse/core.hpp"
#include "pulse/eval.hpp"
#include "pulse/graph.hpp"
#include "pulse/metrics.hpp"
#include "pulse/model.hpp"
#include "pulse/synthetic.hpp"
#include "pulse/training.hpp"
