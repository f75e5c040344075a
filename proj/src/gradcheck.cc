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

#include "cfnlab/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "cfnlab/train.h"

namespace cfnlab {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  Rng rng(cfg.seed);
  ModelStack m = init_stack(cfg.kind, cfg.depth, cfg.hidden, cfg.vocab, rng, cfg.init_scale);
  // Biases drawn too, so no partial sits at a symmetric point.
  for (auto v : m.params.views()) {
    for (auto& x : v) x = rng.uniform(-cfg.init_scale, cfg.init_scale);
  }
  m.p = cfg.p;
  m.q = cfg.q;

  StackState s0 = StackState::zeros(m);
  for (auto& l : s0.layers) {
    for (auto& x : l.h) x = rng.uniform(-0.5, 0.5);
    for (auto& x : l.c) x = rng.uniform(-0.5, 0.5);
  }
  std::vector<TokenId> tokens(cfg.unroll), targets(cfg.unroll);
  for (size_t t = 0; t < cfg.unroll; ++t) {
    tokens[t] = static_cast<TokenId>(rng.next_u64() % cfg.vocab);
    targets[t] = static_cast<TokenId>(rng.next_u64() % cfg.vocab);
  }
  std::vector<DropMaskSet> masks;
  if (cfg.p > 0.0 || cfg.q > 0.0) masks.push_back(make_masks(m, rng));

  WindowResult analytic = bptt_window(m, s0, tokens, targets, masks);
  auto grad_views = analytic.grads.views();
  if (cfg.corrupt) {
    auto& x = grad_views[grad_views.size() / 2][0];
    x += 1e-3 + 1e-2 * std::abs(x);
  }

  std::vector<std::string> names;
  m.params.visit([&](const std::string& name, const auto&) { names.push_back(name); });

  GradcheckReport rep;
  auto weights = m.params.views();
  for (size_t k = 0; k < weights.size(); ++k) {
    TensorCheck tc;
    tc.name = names[k];
    for (size_t j = 0; j < weights[k].size(); ++j) {
      double& w = weights[k][j];
      const double saved = w;
      w = saved + cfg.eps;
      const double up = window_loss(m, s0, tokens, targets, masks);
      w = saved - cfg.eps;
      const double down = window_loss(m, s0, tokens, targets, masks);
      w = saved;
      const double numeric = (up - down) / (2.0 * cfg.eps);
      const double err = relative_error(grad_views[k][j], numeric);
      if (j == 0 || err > tc.max_rel_error) {
        tc.max_rel_error = err;
        tc.worst_index = j;
        tc.analytic = grad_views[k][j];
        tc.numeric = numeric;
      }
    }
    if (k == 0 || tc.max_rel_error > rep.max_rel_error) {
      rep.max_rel_error = tc.max_rel_error;
      rep.worst_tensor = tc.name;
    }
    rep.tensors.push_back(tc);
  }
  return rep;
}

}  // namespace cfnlab
