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

// Fixed low-dimensional maps with known strange attractors.

#ifndef CFNLAB_REFERENCE_MAPS_H_
#define CFNLAB_REFERENCE_MAPS_H_

#include "cfnlab/cells.h"

namespace cfnlab {

// Two-unit LSTM, zero bias, no input. Integer weights obtained by rounding
// N(0, 5²) draws:
//   W_i = [[-1,-4],[-3,-2]]   W_o = [[4,1],[-9,-7]]
//   W_f = [[-2, 6],[ 0,-6]]   W_g = [[-1,-6],[6,-9]]
LstmParams chaotic_lstm2();

// Two-unit GRU, zero bias, no input:
//   W_z = [[0,1],[1,1]]   W_r = [[0,1],[1,0]]   U = [[-5,-8],[8,5]]
GruParams chaotic_gru2();

struct HenonParams {
  double a = 1.4;
  double b = 0.3;
};

}  // namespace cfnlab

#endif  // CFNLAB_REFERENCE_MAPS_H_
