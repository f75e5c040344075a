# Copyright 2026 The cfnlab Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Chaos-free recurrent networks, LSTM/GRU baselines and their dynamics."""

from ._cfnlab import (
    CellKind,
    Corpus,
    Error,
    InducedMap,
    ModelStack,
    Schedule,
    TrainConfig,
    Vocab,
    attractor_sample,
    contraction_rate,
    divergence,
    evaluate,
    gradcheck,
    init_stack,
    iterate,
    lemma1_suite,
    lyapunov,
    matched_hidden,
    multilayer_decay,
    train,
    unigram_perplexity,
    verify_zero_attractor,
    zero_attractor_step_bound,
)

__all__ = [
    "CellKind",
    "Corpus",
    "Error",
    "InducedMap",
    "ModelStack",
    "Schedule",
    "TrainConfig",
    "Vocab",
    "attractor_sample",
    "contraction_rate",
    "divergence",
    "evaluate",
    "gradcheck",
    "init_stack",
    "iterate",
    "lemma1_suite",
    "lyapunov",
    "matched_hidden",
    "multilayer_decay",
    "train",
    "unigram_perplexity",
    "verify_zero_attractor",
    "zero_attractor_step_bound",
]
