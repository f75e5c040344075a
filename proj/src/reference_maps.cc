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

#include "cfnlab/reference_maps.h"

namespace cfnlab {

LstmParams chaotic_lstm2() {
  LstmParams p = LstmParams::zeros(2, 0);
  p.w_i = Matrix::from_rows({{-1, -4}, {-3, -2}});
  p.w_o = Matrix::from_rows({{4, 1}, {-9, -7}});
  p.w_f = Matrix::from_rows({{-2, 6}, {0, -6}});
  p.w_g = Matrix::from_rows({{-1, -6}, {6, -9}});
  return p;
}

GruParams chaotic_gru2() {
  GruParams p = GruParams::zeros(2, 0);
  p.w_z = Matrix::from_rows({{0, 1}, {1, 1}});
  p.w_r = Matrix::from_rows({{0, 1}, {1, 0}});
  p.u = Matrix::from_rows({{-5, -8}, {8, 5}});
  return p;
}

}  // namespace cfnlab
