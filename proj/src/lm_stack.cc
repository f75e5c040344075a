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

#include "cfnlab/lm_stack.h"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace cfnlab {
namespace {

template <class T> std::span<double> as_span(T& t) {
  if constexpr (std::is_same_v<std::remove_const_t<T>, Matrix>) {
    return t.values();
  } else {
    return {t.data(), t.size()};
  }
}

template <class T> std::span<const double> as_cspan(const T& t) {
  if constexpr (std::is_same_v<T, Matrix>) {
    return t.values();
  } else {
    return {t.data(), t.size()};
  }
}

LayerParams zero_layer(CellKind kind, size_t hidden, size_t input) {
  switch (kind) {
    case CellKind::kCfn:
      return CfnParams::zeros(hidden, input);
    case CellKind::kLstm:
      return LstmParams::zeros(hidden, input);
    case CellKind::kGru:
      return GruParams::zeros(hidden, input);
  }
  throw Error("unknown cell kind");
}

size_t layer_parameter_count(CellKind kind, size_t h) {
  switch (kind) {
    case CellKind::kCfn:
      return 5 * h * h + 2 * h;
    case CellKind::kLstm:
      return 8 * h * h + 4 * h;
    case CellKind::kGru:
      return 6 * h * h + 2 * h;
  }
  return 0;
}

size_t stack_parameter_count(CellKind kind, size_t depth, size_t h, size_t vocab) {
  return 2 * vocab * h + vocab + depth * layer_parameter_count(kind, h);
}

}  // namespace

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::kCfn:
      return "cfn";
    case CellKind::kLstm:
      return "lstm";
    case CellKind::kGru:
      return "gru";
  }
  return "?";
}

CellKind parse_cell_kind(const std::string& name) {
  if (name == "cfn") return CellKind::kCfn;
  if (name == "lstm") return CellKind::kLstm;
  if (name == "gru") return CellKind::kGru;
  throw Error("unknown cell kind '" + name + "' (expected cfn, lstm or gru)");
}

std::vector<std::span<double>> StackParams::views() {
  std::vector<std::span<double>> out;
  visit([&](const std::string&, auto& t) { out.push_back(as_span(t)); });
  return out;
}

std::vector<std::span<const double>> StackParams::views() const {
  std::vector<std::span<const double>> out;
  visit([&](const std::string&, const auto& t) { out.push_back(as_cspan(t)); });
  return out;
}

StackParams StackParams::zeros_like() const {
  StackParams z = *this;
  for (auto v : z.views()) std::fill(v.begin(), v.end(), 0.0);
  return z;
}

size_t StackParams::parameter_count() const {
  size_t n = 0;
  for (auto v : views()) n += v.size();
  return n;
}

void ModelStack::check() const {
  if (depth < 1) throw Error("ModelStack: depth must be >= 1");
  if (params.layers.size() != depth) throw Error("ModelStack: layer count != depth");
  if (!(p >= 0.0 && p < 1.0) || !(q >= 0.0 && q < 1.0)) {
    throw Error("ModelStack: dropout rates must lie in [0, 1)");
  }
  if (params.embedding.rows() != hidden || params.embedding.cols() != vocab_size) {
    throw Error("ModelStack: embedding is " + params.embedding.shape_string());
  }
  if (params.out_w.rows() != vocab_size || params.out_w.cols() != hidden ||
      params.out_b.size() != vocab_size) {
    throw Error("ModelStack: output projection is " + params.out_w.shape_string());
  }
  for (const auto& layer : params.layers) {
    std::visit([](const auto& cell) { cell.check_shapes(); }, layer);
  }
}

StackState StackState::zeros(const ModelStack& m) {
  StackState s;
  s.layers.resize(m.depth);
  for (auto& l : s.layers) {
    l.h.assign(m.hidden, 0.0);
    if (m.kind == CellKind::kLstm) l.c.assign(m.hidden, 0.0);
  }
  return s;
}

Vector StackState::flatten() const {
  Vector u;
  for (const auto& l : layers) {
    u.insert(u.end(), l.h.begin(), l.h.end());
    u.insert(u.end(), l.c.begin(), l.c.end());
  }
  return u;
}

StackState StackState::unflatten(const ModelStack& m, std::span<const double> u) {
  StackState s = zeros(m);
  size_t k = 0;
  for (auto& l : s.layers) {
    for (auto* v : {&l.h, &l.c}) {
      if (k + v->size() > u.size()) throw Error("StackState::unflatten: state too short");
      std::copy(u.begin() + k, u.begin() + k + v->size(), v->begin());
      k += v->size();
    }
  }
  if (k != u.size()) throw Error("StackState::unflatten: state too long");
  return s;
}

DropMask DropMask::ones(size_t n) { return {std::vector<uint8_t>(n, 1), 1.0}; }

void DropMask::apply(std::span<const double> in, std::span<double> out) const {
  if (in.size() != keep.size() || out.size() != keep.size()) {
    throw Error("DropMask: size mismatch");
  }
  for (size_t k = 0; k < keep.size(); ++k) out[k] = keep[k] ? in[k] * scale : 0.0;
}

double DropMask::kept_fraction() const {
  if (keep.empty()) return 1.0;
  size_t n = 0;
  for (auto k : keep) n += k;
  return static_cast<double>(n) / static_cast<double>(keep.size());
}

namespace {

DropMask draw_mask(size_t n, double rate, Rng& rng) {
  DropMask m;
  m.keep.resize(n);
  for (auto& k : m.keep) k = rng.uniform() >= rate ? 1 : 0;
  m.scale = 1.0 / (1.0 - rate);
  return m;
}

}  // namespace

DropMaskSet make_masks(const ModelStack& m, Rng& rng) {
  if (!(m.p >= 0.0 && m.p < 1.0) || !(m.q >= 0.0 && m.q < 1.0)) {
    throw Error("make_masks: dropout rates must lie in [0, 1)");
  }
  DropMaskSet set;
  for (size_t l = 0; l <= m.depth; ++l) set.between.push_back(draw_mask(m.hidden, m.p, rng));
  for (size_t l = 0; l < m.depth; ++l) {
    set.gate_state.push_back(draw_mask(m.hidden, m.q, rng));
    set.gate_input.push_back(draw_mask(m.hidden, m.q, rng));
  }
  return set;
}

DropMaskSet unit_masks(const ModelStack& m) {
  DropMaskSet set;
  set.between.assign(m.depth + 1, DropMask::ones(m.hidden));
  set.gate_state.assign(m.depth, DropMask::ones(m.hidden));
  set.gate_input.assign(m.depth, DropMask::ones(m.hidden));
  return set;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw Error("logsumexp of empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

Vector log_softmax(std::span<const double> logits) {
  const double lse = logsumexp(logits);
  Vector out(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

namespace {

void check_state(const ModelStack& m, const StackState& s) {
  if (s.layers.size() != m.depth) throw Error("StackState: wrong number of layers");
  for (const auto& l : s.layers) {
    if (l.h.size() != m.hidden) throw Error("StackState: wrong hidden size");
    if (m.kind == CellKind::kLstm && l.c.size() != m.hidden) {
      throw Error("StackState: wrong cell-state size");
    }
  }
}

// Runs the recurrent layers; returns the top hidden state before dropout.
Vector run_layers(const ModelStack& m, const StackState& s, std::span<const double> embedded,
                  const DropMaskSet* masks, StackState& next,
                  std::vector<GateTrace>* traces, StepTape* tape) {
  check_state(m, s);
  if (embedded.size() != m.hidden) throw Error("embedded input has wrong size");
  next.layers.resize(m.depth);
  if (traces) traces->resize(m.depth);
  if (tape) tape->layers.resize(m.depth);

  Vector a(embedded.begin(), embedded.end());
  Vector a_main(m.hidden), a_gate(m.hidden), h_gate(m.hidden);
  for (size_t l = 0; l < m.depth; ++l) {
    const LayerState& prev = s.layers[l];
    if (masks) {
      masks->between[l].apply(a, a_main);
      masks->gate_input[l].apply(a, a_gate);
      masks->gate_state[l].apply(prev.h, h_gate);
    } else {
      a_main = a;
      a_gate = a;
      h_gate = prev.h;
    }
    const StepInputs in{prev.h, h_gate, a_main, a_gate};
    LayerState& out = next.layers[l];
    GateTrace trace;
    std::variant<CfnCache, LstmCache, GruCache> cache;

    switch (m.kind) {
      case CellKind::kCfn: {
        auto& cc = cache.emplace<CfnCache>();
        out.h = cfn_forward(std::get<CfnParams>(m.params.layers[l]), in, cc);
        out.c.clear();
        trace = {cc.theta, cc.eta};
        break;
      }
      case CellKind::kLstm: {
        auto& lc = cache.emplace<LstmCache>();
        LstmState st = lstm_forward(std::get<LstmParams>(m.params.layers[l]), in, prev.c, lc);
        out.h = std::move(st.h);
        out.c = std::move(st.c);
        trace = {lc.f, lc.i};
        break;
      }
      case CellKind::kGru: {
        auto& gc = cache.emplace<GruCache>();
        out.h = gru_forward(std::get<GruParams>(m.params.layers[l]), in, gc);
        out.c.clear();
        trace = {gc.z, gc.r};
        break;
      }
    }
    if (traces) (*traces)[l] = std::move(trace);
    if (tape) {
      LayerTape& lt = tape->layers[l];
      lt.input = a;
      lt.input_main = a_main;
      lt.input_gate = a_gate;
      lt.h_prev = prev.h;
      lt.h_gate = h_gate;
      lt.c_prev = prev.c;
      lt.cache = std::move(cache);
    }
    a = out.h;
  }
  return a;
}

}  // namespace

ForwardResult stack_forward_embedded(const ModelStack& m, const StackState& s,
                                     std::span<const double> embedded,
                                     const DropMaskSet* masks, bool train, StepTape* tape) {
  if (train && masks == nullptr) throw Error("stack_forward: training mode requires masks");
  if (!train && masks != nullptr) throw Error("stack_forward: masks given in evaluation mode");
  ForwardResult r;
  Vector top = run_layers(m, s, embedded, masks, r.next, &r.traces, tape);
  if (masks) {
    Vector dropped(top.size());
    masks->between[m.depth].apply(top, dropped);
    top = std::move(dropped);
  }
  Vector logits = m.params.out_b;
  matvec_acc(m.params.out_w, top, logits);
  r.logprobs = log_softmax(logits);
  if (tape) tape->top = std::move(top);
  return r;
}

ForwardResult stack_forward(const ModelStack& m, const StackState& s, TokenId token,
                            const DropMaskSet* masks, bool train, StepTape* tape) {
  if (token >= m.vocab_size) {
    throw Error("token id " + std::to_string(token) + " out of range for vocabulary of " +
                std::to_string(m.vocab_size));
  }
  Vector embedded(m.hidden);
  for (size_t k = 0; k < m.hidden; ++k) embedded[k] = m.params.embedding(k, token);
  return stack_forward_embedded(m, s, embedded, masks, train, tape);
}

StackState stack_advance(const ModelStack& m, const StackState& s,
                         std::span<const double> embedded, std::vector<GateTrace>* traces) {
  StackState next;
  run_layers(m, s, embedded, nullptr, next, traces, nullptr);
  return next;
}

ModelStack init_stack(CellKind kind, size_t depth, size_t hidden, size_t vocab_size, Rng& rng,
                      double init_scale) {
  if (depth == 0 || hidden == 0 || vocab_size == 0) {
    throw Error("init_stack: dimensions must be positive");
  }
  ModelStack m;
  m.kind = kind;
  m.depth = depth;
  m.hidden = hidden;
  m.vocab_size = vocab_size;
  m.params.embedding = Matrix(hidden, vocab_size);
  for (size_t l = 0; l < depth; ++l) m.params.layers.push_back(zero_layer(kind, hidden, hidden));
  m.params.out_w = Matrix(vocab_size, hidden);
  m.params.out_b.assign(vocab_size, 0.0);

  // Matrices are drawn in checkpoint order; biases are set, not drawn.
  m.params.visit([&](const std::string&, auto& t) {
    if constexpr (std::is_same_v<std::remove_reference_t<decltype(t)>, Matrix>) {
      for (auto& x : t.values()) x = rng.uniform(-init_scale, init_scale);
    }
  });
  for (auto& layer : m.params.layers) {
    if (auto* c = std::get_if<CfnParams>(&layer)) {
      std::fill(c->b_theta.begin(), c->b_theta.end(), 1.0);
      std::fill(c->b_eta.begin(), c->b_eta.end(), -1.0);
    } else if (auto* c = std::get_if<LstmParams>(&layer)) {
      std::fill(c->b_f.begin(), c->b_f.end(), 1.0);
      std::fill(c->b_i.begin(), c->b_i.end(), -1.0);
    }
  }
  return m;
}

size_t matched_hidden(CellKind kind, size_t depth, size_t vocab_size, size_t target) {
  size_t h = 1;
  while (stack_parameter_count(kind, depth, h, vocab_size) < target) ++h;
  if (h > 1) {
    const size_t above = stack_parameter_count(kind, depth, h, vocab_size) - target;
    const size_t below = target - stack_parameter_count(kind, depth, h - 1, vocab_size);
    if (below < above) --h;
  }
  return h;
}

}  // namespace cfnlab
