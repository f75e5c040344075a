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

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfnlab/train.h"

using namespace cfnlab;

namespace {

ModelStack zero_stack(CellKind kind, size_t depth, size_t hidden, size_t vocab) {
  Rng rng(0);
  ModelStack m = init_stack(kind, depth, hidden, vocab, rng, 0.0);
  for (auto& v : m.params.views()) std::fill(v.begin(), v.end(), 0.0);
  return m;
}

Corpus toy_corpus() {
  std::string train, valid;
  const char* lines[] = {"the cat sat on the mat", "the dog sat on the log",
                         "a cat and a dog met", "the mat was on the log"};
  for (int r = 0; r < 40; ++r) train += std::string(lines[r % 4]) + "\n";
  for (int r = 0; r < 8; ++r) valid += std::string(lines[(r + 1) % 4]) + "\n";
  return build_corpus_from_text(train, valid, valid, {});
}

}  // namespace

TEST_CASE("normalized step moves the weights by exactly lr") {
  ModelStack m = zero_stack(CellKind::kCfn, 1, 2, 3);
  Grads g = m.params.zeros_like();
  g.out_b[0] = 3.0;
  g.out_b[1] = 4.0;
  const UpdateStats st = normalized_sgd_update(m, g, 0.5);
  CHECK(st.applied);
  CHECK(st.grad_norm == 5.0);
  CHECK(m.params.out_b[0] == doctest::Approx(-0.3).epsilon(1e-15));
  CHECK(m.params.out_b[1] == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(std::abs(st.step_norm - 0.5) < 1e-12);
}

TEST_CASE("a zero gradient skips the update") {
  ModelStack m = zero_stack(CellKind::kGru, 1, 2, 3);
  const ModelStack before = m;
  const UpdateStats st = normalized_sgd_update(m, m.params.zeros_like(), 1.0);
  CHECK_FALSE(st.applied);
  CHECK(m.params.out_b == before.params.out_b);
}

TEST_CASE("learning-rate schedules") {
  const std::vector<double> none;
  CHECK(schedule_lr(Schedule::kDivideBy3EachEpoch, 0, 5.5, 5.5, none) == 5.5);
  CHECK(schedule_lr(Schedule::kDivideBy3EachEpoch, 2, 5.5, 0.0, none) ==
        doctest::Approx(5.5 / 9.0).epsilon(1e-15));
  const std::vector<double> improved{100.0, 98.9};
  const std::vector<double> stalled{100.0, 99.5};
  CHECK(schedule_lr(Schedule::kAdaptiveDivide1_1, 2, 1.0, 0.8, improved) == 0.8);
  CHECK(schedule_lr(Schedule::kAdaptiveDivide1_1, 2, 1.0, 0.8, stalled) ==
        doctest::Approx(0.8 / 1.1).epsilon(1e-15));
  CHECK(parse_schedule("div3") == Schedule::kDivideBy3EachEpoch);
  CHECK(parse_schedule("adaptive") == Schedule::kAdaptiveDivide1_1);
  CHECK_THROWS_AS(parse_schedule("cosine"), Error);
}

TEST_CASE("uniform predictions have perplexity equal to the vocabulary size") {
  const ModelStack m = zero_stack(CellKind::kCfn, 2, 3, 10);
  const std::vector<TokenId> split{1, 4, 2, 9, 0, 3, 3};
  const EvalReport r = evaluate(m, split);
  CHECK(r.tokens == 6);
  CHECK(r.perplexity == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(r.mean_nll == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  CHECK_THROWS_AS(evaluate(m, std::vector<TokenId>{1}), Error);
}

TEST_CASE("unigram perplexity on balanced counts is the vocabulary size") {
  std::vector<TokenId> train;
  for (int r = 0; r < 25; ++r) {
    for (TokenId t = 0; t < 4; ++t) train.push_back(t);
  }
  const std::vector<TokenId> split{2, 0, 1, 3, 3};
  CHECK(unigram_perplexity(train, split, 4) == doctest::Approx(4.0).epsilon(1e-13));
}

TEST_CASE("window loss equals the mean forward negative log-likelihood") {
  Rng rng(3);
  const ModelStack m = init_stack(CellKind::kLstm, 2, 5, 9, rng, 0.4);
  const std::vector<TokenId> x{1, 5, 2, 8, 0, 3};
  const std::vector<TokenId> y{5, 2, 8, 0, 3, 7};
  StackState s = StackState::zeros(m);
  double nll = 0.0;
  for (size_t t = 0; t < x.size(); ++t) {
    const ForwardResult r = stack_forward(m, s, x[t], nullptr, false);
    nll -= r.logprobs[y[t]];
    s = r.next;
  }
  const WindowResult w = bptt_window(m, StackState::zeros(m), x, y, {});
  CHECK(w.loss == doctest::Approx(nll / 6.0).epsilon(1e-14));
  CHECK(w.final_state.flatten() == s.flatten());
}

TEST_CASE("splitting a window and carrying the state preserves the loss") {
  Rng rng(4);
  const ModelStack m = init_stack(CellKind::kCfn, 2, 5, 9, rng, 0.4);
  const std::vector<TokenId> x{1, 5, 2, 8, 0, 3};
  const std::vector<TokenId> y{5, 2, 8, 0, 3, 7};
  const std::span<const TokenId> xs(x), ys(y);
  const StackState s0 = StackState::zeros(m);
  const WindowResult whole = bptt_window(m, s0, xs, ys, {});
  const WindowResult a = bptt_window(m, s0, xs.first(3), ys.first(3), {});
  const WindowResult b = bptt_window(m, a.final_state, xs.last(3), ys.last(3), {});
  CHECK(whole.loss == doctest::Approx((a.loss + b.loss) / 2.0).epsilon(1e-14));
  CHECK(whole.final_state.flatten() == b.final_state.flatten());
}

TEST_CASE("output-bias gradient sums to zero") {
  for (CellKind k : {CellKind::kCfn, CellKind::kLstm, CellKind::kGru}) {
    Rng rng(5);
    const ModelStack m = init_stack(k, 2, 4, 11, rng, 0.5);
    const std::vector<TokenId> x{1, 2, 3, 4, 5};
    const std::vector<TokenId> y{2, 3, 4, 5, 6};
    const WindowResult w = bptt_window(m, StackState::zeros(m), x, y, {});
    double s = 0.0;
    for (double g : w.grads.out_b) s += g;
    CHECK(std::abs(s) < 1e-12);
  }
}

TEST_CASE("bptt rejects inconsistent inputs") {
  Rng rng(6);
  const ModelStack m = init_stack(CellKind::kCfn, 1, 3, 5, rng, 0.1);
  const std::vector<TokenId> x{1, 2, 3};
  const std::vector<TokenId> y{2, 3};
  CHECK_THROWS_AS(bptt_window(m, StackState::zeros(m), x, y, {}), Error);
  const std::vector<TokenId> bad{1, 2, 9};
  CHECK_THROWS_AS(bptt_window(m, StackState::zeros(m), bad, x, {}), Error);
}

TEST_CASE("training config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.check());
  c.p = 1.0;
  CHECK_THROWS_AS(c.check(), Error);
  c = TrainConfig{};
  c.lr0 = 0.0;
  CHECK_THROWS_AS(c.check(), Error);
}

TEST_CASE("toy training run: every step has length lr and perplexity drops") {
  const Corpus c = toy_corpus();
  Rng rng(1);
  ModelStack m = init_stack(CellKind::kCfn, 1, 16, c.vocab.size(), rng, 0.1);
  m.p = 0.2;
  m.q = 0.1;
  TrainConfig cfg;
  cfg.unroll = 5;
  cfg.batch = 1;
  cfg.lr0 = 0.3;
  cfg.schedule = Schedule::kAdaptiveDivide1_1;
  cfg.epochs = 20;
  cfg.p = 0.2;
  cfg.q = 0.1;
  const double before = evaluate(m, c.valid).perplexity;
  size_t steps = 0;
  double worst = 0.0;
  const TrainLog log = train(m, c, cfg, [&](const StepEvent& e) {
    if (!e.update.applied) return;
    ++steps;
    worst = std::max(worst, std::abs(e.update.step_norm - e.lr));
  });
  CHECK(steps > 500);
  CHECK(worst < 1e-12);
  REQUIRE(log.epochs.size() == 20);
  CHECK(log.epochs[1].lr == 0.3);
  CHECK(log.epochs.back().val_perp < 0.2 * before);

  std::ostringstream os;
  write_train_log(log, os);
  CHECK(os.str().rfind("epoch,step,lr,train_nll,val_perp\n1,", 0) == 0);
}

TEST_CASE("multi-threaded training is bit-identical to single-threaded") {
  const Corpus c = toy_corpus();
  auto run = [&](size_t threads) {
    Rng rng(2);
    ModelStack m = init_stack(CellKind::kLstm, 1, 6, c.vocab.size(), rng, 0.1);
    m.p = 0.3;
    TrainConfig cfg;
    cfg.unroll = 4;
    cfg.batch = 5;
    cfg.epochs = 1;
    cfg.p = 0.3;
    cfg.threads = threads;
    cfg.seed = 17;
    train(m, c, cfg);
    return m;
  };
  const ModelStack a = run(1);
  const ModelStack b = run(3);
  const auto va = a.params.views();
  const auto vb = b.params.views();
  bool same = true;
  for (size_t k = 0; k < va.size(); ++k) {
    for (size_t j = 0; j < va[k].size(); ++j) same = same && va[k][j] == vb[k][j];
  }
  CHECK(same);
}
