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

// Truncated backpropagation through time, the normalized steepest-descent
// update w ← w − lr · ∇L / ‖∇L‖₂, learning-rate schedules and perplexity.

#ifndef CFNLAB_TRAIN_H_
#define CFNLAB_TRAIN_H_

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "cfnlab/corpus.h"
#include "cfnlab/lm_stack.h"

namespace cfnlab {

using Grads = StackParams;

enum class Schedule {
  kDivideBy3EachEpoch,  // lr = lr0 / 3^epoch
  kAdaptiveDivide1_1,   // lr /= 1.1 when validation perplexity improved < 1%
};

Schedule parse_schedule(const std::string& name);
std::string to_string(Schedule s);

struct TrainConfig {
  size_t unroll = 35;
  size_t batch = 20;
  double lr0 = 1.0;
  Schedule schedule = Schedule::kDivideBy3EachEpoch;
  double p = 0.0;
  double q = 0.0;
  size_t epochs = 1;
  uint64_t seed = 0;
  bool mask_per_step = false;  // resample dropout masks every step
  size_t threads = 1;

  void check() const;
};

struct WindowResult {
  double loss = 0.0;  // mean NLL over the window, nats
  Grads grads;
  StackState final_state;
};

// Loss and exact gradient over one window starting from the carried state s0
// (no gradient flows into s0). `masks` is empty (no dropout), holds one set
// for the whole window, or one set per step.
WindowResult bptt_window(const ModelStack& m, const StackState& s0,
                         std::span<const TokenId> tokens, std::span<const TokenId> targets,
                         std::span<const DropMaskSet> masks);

// Loss only; same conventions as bptt_window.
double window_loss(const ModelStack& m, const StackState& s0, std::span<const TokenId> tokens,
                   std::span<const TokenId> targets, std::span<const DropMaskSet> masks);

double global_norm(const Grads& g);

struct UpdateStats {
  bool applied = false;
  double grad_norm = 0.0;
  double step_norm = 0.0;  // ‖w_new − w_old‖₂ measured on the stored weights
};

// Skips the update (applied = false) when ‖g‖₂ = 0.
UpdateStats normalized_sgd_update(ModelStack& m, const Grads& g, double lr);

// Learning rate for `epoch` (0-based). `val_history` holds the validation
// perplexities of epochs 0..epoch-1.
double schedule_lr(Schedule s, size_t epoch, double lr0, double lr_prev,
                   std::span<const double> val_history);

struct EvalReport {
  double mean_nll = 0.0;
  double perplexity = 0.0;
  size_t tokens = 0;
};

// Dropout off; a single stream from the zero state across the whole split.
EvalReport evaluate(const ModelStack& m, std::span<const TokenId> split);

// Perplexity of add-one-smoothed training unigram frequencies on split[1:].
double unigram_perplexity(std::span<const TokenId> train, std::span<const TokenId> split,
                          size_t vocab_size);

struct EpochLog {
  size_t epoch = 0;  // 1-based
  size_t step = 0;   // updates applied so far
  double lr = 0.0;
  double train_nll = 0.0;
  double val_perp = 0.0;
};

struct StepEvent {
  size_t epoch = 0;
  size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  UpdateStats update;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

// Hidden state is reset to zero at the start of every epoch; one update per
// minibatch window.
TrainLog train(ModelStack& m, const Corpus& corpus, const TrainConfig& cfg,
               const std::function<void(const StepEvent&)>& on_step = {});

// CSV with header "epoch,step,lr,train_nll,val_perp".
void write_train_log(const TrainLog& log, std::ostream& os);

}  // namespace cfnlab

#endif  // CFNLAB_TRAIN_H_
