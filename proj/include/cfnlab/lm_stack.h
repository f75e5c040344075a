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

// Multi-layer recurrent language model:
//
//   a⁰ = W⁰ x                      (embedding column of the token)
//   layer ℓ: carry path sees Drop(a^{ℓ-1}, p), gates see Drop(a^{ℓ-1}, q)
//            and Drop(h^ℓ_{t-1}, q)
//   y = LogSoftmax(W_out Drop(h^L, p) + b_out)
//
// Dropout is inverted (kept entries scaled by 1/(1 - rate)) so evaluation is
// the identity.

#ifndef CFNLAB_LM_STACK_H_
#define CFNLAB_LM_STACK_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cfnlab/cells.h"
#include "cfnlab/numkit.h"

namespace cfnlab {

using TokenId = uint32_t;

enum class CellKind { kCfn, kLstm, kGru };

std::string to_string(CellKind kind);
CellKind parse_cell_kind(const std::string& name);

using LayerParams = std::variant<CfnParams, LstmParams, GruParams>;

// All learnable tensors of a stack. Gradients use the same type.
struct StackParams {
  Matrix embedding;  // hidden x vocab
  std::vector<LayerParams> layers;
  Matrix out_w;  // vocab x hidden
  Vector out_b;

  // f(name, Matrix&) or f(name, Vector&), in checkpoint order.
  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

  // Flat views of every tensor, in visit order.
  std::vector<std::span<double>> views();
  std::vector<std::span<const double>> views() const;

  StackParams zeros_like() const;
  size_t parameter_count() const;

 private:
  template <class Self, class F> static void visit_impl(Self& s, F& f) {
    f(std::string("embedding"), s.embedding);
    for (size_t l = 0; l < s.layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      std::visit(
          [&](auto& cell) { cell.visit([&](const char* name, auto& t) { f(prefix + name, t); }); },
          s.layers[l]);
    }
    f(std::string("out_w"), s.out_w);
    f(std::string("out_b"), s.out_b);
  }
};

struct ModelStack {
  CellKind kind = CellKind::kCfn;
  size_t depth = 0;
  size_t hidden = 0;
  size_t vocab_size = 0;
  double p = 0.0;  // between-layer dropout
  double q = 0.0;  // in-gate dropout
  StackParams params;

  void check() const;
};

struct LayerState {
  Vector h;
  Vector c;  // LSTM only
};

struct StackState {
  std::vector<LayerState> layers;

  static StackState zeros(const ModelStack& m);
  // Concatenation [h¹; c¹; h²; c²; ...] (c only for LSTM).
  Vector flatten() const;
  static StackState unflatten(const ModelStack& m, std::span<const double> u);
};

struct DropMask {
  std::vector<uint8_t> keep;
  double scale = 1.0;

  static DropMask ones(size_t n);
  void apply(std::span<const double> in, std::span<double> out) const;
  double kept_fraction() const;
};

// Masks for one unroll window: `between[0]` follows the embedding,
// `between[l]` follows layer l (the last one precedes the output layer);
// `gate_state[l]` / `gate_input[l]` feed the sigmoid gates of layer l.
struct DropMaskSet {
  std::vector<DropMask> between;
  std::vector<DropMask> gate_state;
  std::vector<DropMask> gate_input;
};

// Independent Bernoulli(1 − rate) draws in a fixed order: between[0..L],
// then (gate_state[l], gate_input[l]) for l = 0..L-1.
DropMaskSet make_masks(const ModelStack& m, Rng& rng);
DropMaskSet unit_masks(const ModelStack& m);

// Per-layer intermediates kept for backpropagation.
struct LayerTape {
  Vector input;       // a^{ℓ-1} before dropout
  Vector input_main;  // Drop(a, p)
  Vector input_gate;  // Drop(a, q)
  Vector h_prev;
  Vector h_gate;      // Drop(h_prev, q)
  Vector c_prev;
  std::variant<CfnCache, LstmCache, GruCache> cache;
};

struct StepTape {
  std::vector<LayerTape> layers;
  Vector top;  // Drop(h^L, p)
};

struct ForwardResult {
  Vector logprobs;
  StackState next;
  std::vector<GateTrace> traces;
};

// One step on `token`. In training mode `masks` must be given; in evaluation
// mode it must be null and no dropout or scaling is applied.
ForwardResult stack_forward(const ModelStack& m, const StackState& s, TokenId token,
                            const DropMaskSet* masks, bool train, StepTape* tape = nullptr);

// Same, with the embedding output supplied directly (all zeros = no input).
ForwardResult stack_forward_embedded(const ModelStack& m, const StackState& s,
                                     std::span<const double> embedded,
                                     const DropMaskSet* masks, bool train,
                                     StepTape* tape = nullptr);

// Recurrent layers only (no output projection), evaluation mode.
StackState stack_advance(const ModelStack& m, const StackState& s,
                         std::span<const double> embedded,
                         std::vector<GateTrace>* traces = nullptr);

Vector log_softmax(std::span<const double> logits);
double logsumexp(std::span<const double> v);

// Weights uniform in [-init_scale, init_scale]; CFN b_θ = 1, b_η = -1;
// LSTM b_f = 1, b_i = -1; all other biases zero.
ModelStack init_stack(CellKind kind, size_t depth, size_t hidden, size_t vocab_size, Rng& rng,
                      double init_scale = 0.07);

// Hidden size whose parameter count is closest to `target` (larger on ties).
size_t matched_hidden(CellKind kind, size_t depth, size_t vocab_size, size_t target);

// Text checkpoint: "cfnlab-ckpt v1 <kind> <depth> <hidden> <vocab>", then for
// every tensor "tensor <name> <rows> <cols>" followed by rows of %.17g values.
void save_checkpoint(const ModelStack& m, std::ostream& os);
ModelStack load_checkpoint(std::istream& is);
void save_checkpoint_file(const ModelStack& m, const std::string& path);
ModelStack load_checkpoint_file(const std::string& path);

}  // namespace cfnlab

#endif  // CFNLAB_LM_STACK_H_
