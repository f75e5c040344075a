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


import math

import numpy as np
import pytest

import cfnlab

TEXT = "".join(
    line + "\n"
    for line in ["the cat sat on the mat", "the dog sat on the log", "a cat and a dog met"] * 10
)


def test_henon_first_iterates():
    orbit = cfnlab.iterate(cfnlab.InducedMap.henon(), np.zeros(2), 2)
    assert orbit.shape == (3, 2)
    assert orbit[1].tolist() == [1.0, 0.0]
    assert orbit[2][0] == 1.0 - 1.4
    assert orbit[2][1] == 0.3


def test_cfn_map_relaxes_to_zero():
    rng = np.random.default_rng(0)
    u = rng.uniform(-2, 2, (4, 4))
    b = rng.uniform(-2, 2, 4)
    f = cfnlab.InducedMap.cfn(u, b, np.zeros((4, 4)), np.zeros(4))
    orbit = cfnlab.iterate(f, np.full(4, 5.0), 400)
    assert np.abs(orbit[-1]).max() < 1e-8
    report = cfnlab.verify_zero_attractor(u, b, n_init=20, radius=10.0)
    assert report["passed"] and report["bound_violations"] == 0


def test_zero_gate_bound():
    assert cfnlab.contraction_rate(np.zeros((2, 2)), np.zeros(2)) == 0.5
    assert cfnlab.zero_attractor_step_bound(1.0, 1.0, 1e-8) is None


def test_chaotic_lstm_diverges():
    f = cfnlab.InducedMap.chaotic_lstm()
    assert f.dim == 4 and f.h_dim == 2
    u0 = cfnlab.iterate(f, np.full(4, 0.5), 1000)[-1]
    d = cfnlab.divergence(f, u0, trials=50, seed=1)
    assert d.shape[0] == 50
    assert (d.max(axis=1) > 0.01).mean() >= 0.95
    assert cfnlab.lyapunov(f, u0, steps=20000) > 0.0


def test_attractor_cloud_is_bounded():
    cloud = cfnlab.attractor_sample(cfnlab.InducedMap.chaotic_gru(), 3, keep=2000, seed=2)
    assert cloud["points"].shape == (6000, 2)
    assert cloud["active"] and cloud["escaped"] == 0
    assert np.abs(cloud["points"]).max() < 1.0


def test_lemma1_suite_small():
    r = cfnlab.lemma1_suite(instances=20, seed=3, max_k=10)
    assert r["passed"] and r["violated"] == 0 and r["checked"] > 0


def test_gradcheck_and_negative_control():
    for kind in (cfnlab.CellKind.CFN, cfnlab.CellKind.LSTM, cfnlab.CellKind.GRU):
        err, _ = cfnlab.gradcheck(kind, seed=1)
        assert err < 1e-6
    err, worst = cfnlab.gradcheck(cfnlab.CellKind.CFN, corrupt=True)
    assert err > 1e-6 and worst


def test_train_and_evaluate(tmp_path):
    corpus = cfnlab.Corpus.from_text(TEXT, TEXT, TEXT)
    model = cfnlab.init_stack(cfnlab.CellKind.CFN, 1, 16, len(corpus.vocab), seed=1, init_scale=0.1)
    _, before = cfnlab.evaluate(model, corpus.valid)
    cfg = cfnlab.TrainConfig()
    cfg.unroll, cfg.batch, cfg.lr0, cfg.epochs = 5, 1, 0.3, 10
    cfg.schedule = cfnlab.Schedule.ADAPTIVE
    epochs, steps = cfnlab.train(model, corpus, cfg)
    assert len(epochs) == 10
    assert all(abs(s["step_norm"] - s["lr"]) <= 1e-12 for s in steps if s["applied"])
    nll, after = cfnlab.evaluate(model, corpus.valid)
    assert after < 0.5 * before
    assert math.isclose(math.exp(nll), after, rel_tol=1e-12)

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    again = cfnlab.ModelStack.load(path)
    assert again.parameter_count == model.parameter_count
    assert cfnlab.evaluate(again, corpus.valid) == (nll, after)


def test_errors_are_raised():
    with pytest.raises(cfnlab.Error):
        cfnlab.InducedMap.cfn(np.zeros((2, 2)), np.zeros(3), np.zeros((2, 2)), np.zeros(2))
