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

#include "cfnlab/train.h"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <ostream>
#include <utility>

#include "cfnlab/parallel.h"

namespace cfnlab {
namespace {

void apply_mask(const DropMaskSet* masks, const std::vector<DropMask>& (*pick)(const DropMaskSet&),
                size_t idx, std::span<const double> in, std::span<double> out) {
  if (masks == nullptr) {
    std::copy(in.begin(), in.end(), out.begin());
  } else {
    pick(*masks)[idx].apply(in, out);
  }
}

const std::vector<DropMask>& between(const DropMaskSet& s) { return s.between; }
const std::vector<DropMask>& gate_state(const DropMaskSet& s) { return s.gate_state; }
const std::vector<DropMask>& gate_input(const DropMaskSet& s) { return s.gate_input; }

const DropMaskSet* mask_for_step(std::span<const DropMaskSet> masks, size_t t) {
  if (masks.empty()) return nullptr;
  return &masks[masks.size() == 1 ? 0 : t];
}

void check_window(const ModelStack& m, std::span<const TokenId> tokens,
                  std::span<const TokenId> targets, std::span<const DropMaskSet> masks) {
  if (tokens.empty() || tokens.size() != targets.size()) {
    throw Error("bptt_window: need equal, non-empty token and target windows");
  }
  if (!masks.empty() && masks.size() != 1 && masks.size() != tokens.size()) {
    throw Error("bptt_window: expected 0, 1 or T mask sets");
  }
  for (TokenId t : targets) {
    if (t >= m.vocab_size) throw Error("bptt_window: target id out of range");
  }
}

std::string first_nonfinite_tensor(const Grads& g) {
  std::string bad;
  g.visit([&](const std::string& name, const auto& t) {
    if (bad.empty() && !all_finite(std::span<const double>(t.data(), t.size()))) bad = name;
  });
  return bad;
}

}  // namespace

Schedule parse_schedule(const std::string& name) {
  if (name == "div3") return Schedule::kDivideBy3EachEpoch;
  if (name == "adaptive") return Schedule::kAdaptiveDivide1_1;
  throw Error("unknown schedule '" + name + "' (expected div3 or adaptive)");
}

std::string to_string(Schedule s) {
  return s == Schedule::kDivideBy3EachEpoch ? "div3" : "adaptive";
}

void TrainConfig::check() const {
  if (unroll < 1) throw Error("TrainConfig: unroll must be >= 1");
  if (batch < 1) throw Error("TrainConfig: batch must be >= 1");
  if (!(lr0 > 0.0)) throw Error("TrainConfig: lr0 must be > 0");
  if (!(p >= 0.0 && p < 1.0) || !(q >= 0.0 && q < 1.0)) {
    throw Error("TrainConfig: dropout rates must lie in [0, 1)");
  }
  if (threads < 1) throw Error("TrainConfig: threads must be >= 1");
}

double window_loss(const ModelStack& m, const StackState& s0, std::span<const TokenId> tokens,
                   std::span<const TokenId> targets, std::span<const DropMaskSet> masks) {
  check_window(m, tokens, targets, masks);
  StackState s = s0;
  double loss = 0.0;
  for (size_t t = 0; t < tokens.size(); ++t) {
    const DropMaskSet* mk = mask_for_step(masks, t);
    ForwardResult r = stack_forward(m, s, tokens[t], mk, mk != nullptr);
    loss -= r.logprobs[targets[t]];
    s = std::move(r.next);
  }
  return loss / static_cast<double>(tokens.size());
}

WindowResult bptt_window(const ModelStack& m, const StackState& s0,
                         std::span<const TokenId> tokens, std::span<const TokenId> targets,
                         std::span<const DropMaskSet> masks) {
  check_window(m, tokens, targets, masks);
  const size_t steps = tokens.size();
  const size_t depth = m.depth;
  const size_t hidden = m.hidden;
  const double inv_steps = 1.0 / static_cast<double>(steps);

  std::vector<StepTape> tapes(steps);
  std::vector<Vector> logprobs(steps);
  StackState s = s0;
  double loss = 0.0;
  for (size_t t = 0; t < steps; ++t) {
    const DropMaskSet* mk = mask_for_step(masks, t);
    ForwardResult r = stack_forward(m, s, tokens[t], mk, mk != nullptr, &tapes[t]);
    loss -= r.logprobs[targets[t]];
    logprobs[t] = std::move(r.logprobs);
    s = std::move(r.next);
  }
  loss *= inv_steps;

  WindowResult out;
  out.loss = loss;
  out.final_state = std::move(s);
  out.grads = m.params.zeros_like();
  Grads& g = out.grads;

  std::vector<Vector> dh_carry(depth, Vector(hidden, 0.0));
  std::vector<Vector> dc_carry(depth, Vector(m.kind == CellKind::kLstm ? hidden : 0, 0.0));
  Vector dlogits(m.vocab_size), dtop(hidden), dh(hidden), tmp(hidden);
  StepInputGrads ig;

  for (size_t t = steps; t-- > 0;) {
    const StepTape& tape = tapes[t];
    const DropMaskSet* mk = mask_for_step(masks, t);

    for (size_t v = 0; v < m.vocab_size; ++v) dlogits[v] = std::exp(logprobs[t][v]) * inv_steps;
    dlogits[targets[t]] -= inv_steps;

    std::fill(dtop.begin(), dtop.end(), 0.0);
    const double* top = tape.top.data();
    double* __restrict__ dt = dtop.data();
    for (size_t v = 0; v < m.vocab_size; ++v) {
      const double d = dlogits[v];
      g.out_b[v] += d;
      double* __restrict__ gw = g.out_w.row(v).data();
      const double* w = m.params.out_w.row(v).data();
      for (size_t k = 0; k < hidden; ++k) gw[k] += d * top[k];
      for (size_t k = 0; k < hidden; ++k) dt[k] += d * w[k];
    }
    apply_mask(mk, between, depth, dtop, dh);

    for (size_t l = depth; l-- > 0;) {
      const LayerTape& lt = tape.layers[l];
      for (size_t k = 0; k < hidden; ++k) dh[k] += dh_carry[l][k];
      const StepInputs in{lt.h_prev, lt.h_gate, lt.input_main, lt.input_gate};
      switch (m.kind) {
        case CellKind::kCfn:
          cfn_backward(std::get<CfnParams>(m.params.layers[l]), in,
                       std::get<CfnCache>(lt.cache), dh, std::get<CfnParams>(g.layers[l]), ig);
          break;
        case CellKind::kLstm:
          lstm_backward(std::get<LstmParams>(m.params.layers[l]), in,
                        std::get<LstmCache>(lt.cache), dh, dc_carry[l],
                        std::get<LstmParams>(g.layers[l]), ig);
          dc_carry[l] = ig.c_prev;
          break;
        case CellKind::kGru:
          gru_backward(std::get<GruParams>(m.params.layers[l]), in,
                       std::get<GruCache>(lt.cache), dh, std::get<GruParams>(g.layers[l]), ig);
          break;
      }
      // Gradient reaching h^l_{t-1}: carry path plus the gates' dropped copy.
      apply_mask(mk, gate_state, l, ig.h_gate, tmp);
      for (size_t k = 0; k < hidden; ++k) dh_carry[l][k] = ig.h_prev[k] + tmp[k];
      // Gradient reaching the layer input a^{l-1}_t.
      apply_mask(mk, between, l, ig.x_main, dh);
      apply_mask(mk, gate_input, l, ig.x_gate, tmp);
      for (size_t k = 0; k < hidden; ++k) dh[k] += tmp[k];
    }
    const TokenId tok = tokens[t];
    for (size_t k = 0; k < hidden; ++k) g.embedding(k, tok) += dh[k];
  }

  if (!std::isfinite(out.loss)) {
    throw Error("bptt_window: non-finite loss " + std::to_string(out.loss));
  }
  if (const std::string bad = first_nonfinite_tensor(g); !bad.empty()) {
    throw Error("bptt_window: non-finite gradient in tensor " + bad + " (loss " +
                std::to_string(out.loss) + ")");
  }
  return out;
}

double global_norm(const Grads& g) {
  double s = 0.0;
  for (auto v : g.views()) {
    for (double x : v) s += x * x;
  }
  return std::sqrt(s);
}

UpdateStats normalized_sgd_update(ModelStack& m, const Grads& g, double lr) {
  UpdateStats st;
  st.grad_norm = global_norm(g);
  if (st.grad_norm == 0.0) return st;
  if (!std::isfinite(st.grad_norm)) throw Error("normalized_sgd_update: non-finite gradient norm");
  const double factor = lr / st.grad_norm;
  auto w = m.params.views();
  const auto d = g.views();
  if (w.size() != d.size()) throw Error("normalized_sgd_update: gradient/model mismatch");
  double moved = 0.0;
  for (size_t k = 0; k < w.size(); ++k) {
    if (w[k].size() != d[k].size()) throw Error("normalized_sgd_update: tensor shape mismatch");
    for (size_t j = 0; j < w[k].size(); ++j) {
      const double old = w[k][j];
      w[k][j] = old - factor * d[k][j];
      const double delta = w[k][j] - old;
      moved += delta * delta;
    }
  }
  st.applied = true;
  st.step_norm = std::sqrt(moved);
  return st;
}

double schedule_lr(Schedule s, size_t epoch, double lr0, double lr_prev,
                   std::span<const double> val_history) {
  if (epoch == 0) return lr0;
  switch (s) {
    case Schedule::kDivideBy3EachEpoch:
      return lr0 / std::pow(3.0, static_cast<double>(epoch));
    case Schedule::kAdaptiveDivide1_1: {
      if (val_history.size() < 2) return lr_prev;
      double best = val_history[0];
      for (size_t k = 1; k + 1 < val_history.size(); ++k) best = std::min(best, val_history[k]);
      return val_history.back() > 0.99 * best ? lr_prev / 1.1 : lr_prev;
    }
  }
  return lr_prev;
}

EvalReport evaluate(const ModelStack& m, std::span<const TokenId> split) {
  if (split.size() < 2) throw Error("evaluate: split has fewer than two tokens");
  StackState s = StackState::zeros(m);
  double nll = 0.0;
  for (size_t t = 0; t + 1 < split.size(); ++t) {
    ForwardResult r = stack_forward(m, s, split[t], nullptr, false);
    const TokenId target = split[t + 1];
    if (target >= m.vocab_size) throw Error("evaluate: token id out of range");
    nll -= r.logprobs[target];
    s = std::move(r.next);
  }
  EvalReport rep;
  rep.tokens = split.size() - 1;
  rep.mean_nll = nll / static_cast<double>(rep.tokens);
  rep.perplexity = std::exp(rep.mean_nll);
  return rep;
}

double unigram_perplexity(std::span<const TokenId> train, std::span<const TokenId> split,
                          size_t vocab_size) {
  if (split.size() < 2) throw Error("unigram_perplexity: split too short");
  std::vector<double> counts(vocab_size, 1.0);
  for (TokenId t : train) counts.at(t) += 1.0;
  const double total = static_cast<double>(train.size() + vocab_size);
  double nll = 0.0;
  for (size_t t = 1; t < split.size(); ++t) nll -= std::log(counts.at(split[t]) / total);
  return std::exp(nll / static_cast<double>(split.size() - 1));
}

TrainLog train(ModelStack& m, const Corpus& corpus, const TrainConfig& cfg,
               const std::function<void(const StepEvent&)>& on_step) {
  cfg.check();
  m.p = cfg.p;
  m.q = cfg.q;
  m.check();
  if (corpus.vocab.size() != m.vocab_size) {
    throw Error("train: corpus vocabulary (" + std::to_string(corpus.vocab.size()) +
                ") does not match model (" + std::to_string(m.vocab_size) + ")");
  }
  const BatchIter it = batches(corpus, Split::kTrain, cfg.batch, cfg.unroll);
  Rng rng(cfg.seed);
  const bool dropout = cfg.p > 0.0 || cfg.q > 0.0;
  const size_t sets_per_window = cfg.mask_per_step ? cfg.unroll : 1;

  TrainLog log;
  std::vector<double> history;
  double lr = cfg.lr0;
  size_t step = 0;
  std::vector<WindowResult> results(cfg.batch);
  std::vector<std::vector<DropMaskSet>> lane_masks(cfg.batch);

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    lr = schedule_lr(cfg.schedule, epoch, cfg.lr0, lr, history);
    std::vector<StackState> states(cfg.batch, StackState::zeros(m));
    double loss_sum = 0.0;

    for (size_t w = 0; w < it.num_windows(); ++w) {
      for (auto& lm : lane_masks) {
        lm.clear();
        if (dropout) {
          for (size_t k = 0; k < sets_per_window; ++k) lm.push_back(make_masks(m, rng));
        }
      }
      try {
        parallel_for(cfg.batch, cfg.threads, [&](size_t b) {
          results[b] = bptt_window(m, states[b], it.inputs(w, b), it.targets(w, b), lane_masks[b]);
        });
      } catch (const Error& e) {
        throw Error("epoch " + std::to_string(epoch + 1) + ", window " + std::to_string(w) +
                    ": " + e.what());
      }
      // Reduce in lane order so the result is independent of the thread count.
      Grads g = std::move(results[0].grads);
      double loss = results[0].loss;
      auto acc = g.views();
      for (size_t b = 1; b < cfg.batch; ++b) {
        const auto add = std::as_const(results[b].grads).views();
        for (size_t k = 0; k < acc.size(); ++k) {
          for (size_t j = 0; j < acc[k].size(); ++j) acc[k][j] += add[k][j];
        }
        loss += results[b].loss;
      }
      const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
      for (auto v : acc) {
        for (auto& x : v) x *= inv_batch;
      }
      loss *= inv_batch;

      const UpdateStats up = normalized_sgd_update(m, g, lr);
      if (up.applied) {
        ++step;
      } else {
        std::cerr << "cfnlab: zero gradient at epoch " << epoch + 1 << " window " << w
                  << "; update skipped\n";
      }
      for (size_t b = 0; b < cfg.batch; ++b) states[b] = std::move(results[b].final_state);
      loss_sum += loss;
      if (on_step) on_step({epoch + 1, step, lr, loss, up});
    }

    EpochLog e;
    e.epoch = epoch + 1;
    e.step = step;
    e.lr = lr;
    e.train_nll = loss_sum / static_cast<double>(it.num_windows());
    e.val_perp = corpus.valid.size() >= 2 ? evaluate(m, corpus.valid).perplexity
                                          : std::numeric_limits<double>::quiet_NaN();
    history.push_back(e.val_perp);
    log.epochs.push_back(e);
  }
  return log;
}

void write_train_log(const TrainLog& log, std::ostream& os) {
  os << "epoch,step,lr,train_nll,val_perp\n";
  char buf[160];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g\n", e.epoch, e.step, e.lr,
                  e.train_nll, e.val_perp);
    os << buf;
  }
}

}  // namespace cfnlab
