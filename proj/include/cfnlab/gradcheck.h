// Copyright 2026 The cfnlab Authors.
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

// Central finite-difference check of bptt_window's analytic gradients.

#ifndef CFNLAB_GRADCHECK_H_
#define CFNLAB_GRADCHECK_H_

#include <string>
#include <vector>

#include "cfnlab/lm_stack.h"

namespace cfnlab {

struct GradcheckConfig {
  CellKind kind = CellKind::kCfn;
  size_t depth = 2;
  size_t hidden = 4;
  size_t vocab = 11;
  size_t unroll = 5;
  double eps = 1e-5;
  uint64_t seed = 0;
  // Dropout masks are drawn once and held fixed, so their paths are checked too.
  double p = 0.25;
  double q = 0.25;
  double init_scale = 0.5;
  // Negative control: perturb one analytic partial before comparing.
  bool corrupt = false;
};

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::vector<TensorCheck> tensors;
};

// |a − n| / max(|a|, |n|, kRelErrorFloor).
inline constexpr double kRelErrorFloor = 1e-3;
double relative_error(double analytic, double numeric);

GradcheckReport gradcheck(const GradcheckConfig& cfg);

}  // namespace cfnlab

#endif  // CFNLAB_GRADCHECK_H_
