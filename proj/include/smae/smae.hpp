// Copyright 2026 The SMAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "smae/attribution.hpp"
#include "smae/autodiff.hpp"
#include "smae/checkpoint.hpp"
#include "smae/error.hpp"
#include "smae/inference.hpp"
#include "smae/metrics.hpp"
#include "smae/model.hpp"
#include "smae/patch_mask.hpp"
#include "smae/rng.hpp"
#include "smae/spectra_io.hpp"
#include "smae/svg.hpp"
#include "smae/tensor.hpp"
#include "smae/train.hpp"
