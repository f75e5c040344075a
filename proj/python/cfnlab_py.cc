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

// Python bindings for models, training, gradient checks and dynamics.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "cfnlab/corpus.h"
#include "cfnlab/dynamics.h"
#include "cfnlab/gradcheck.h"
#include "cfnlab/lm_stack.h"
#include "cfnlab/reference_maps.h"
#include "cfnlab/train.h"

namespace py = pybind11;
using namespace cfnlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<Vector>& rows, size_t dim) {
  Array a({rows.size(), dim});
  auto r = a.mutable_unchecked<2>();
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < dim; ++j) r(i, j) = rows[i][j];
  }
  return a;
}

Array to_array(const Vector& v) {
  Array a(v.size());
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error("expected a 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw Error("expected a 1-d array");
  return Vector(a.data(), a.data() + a.size());
}

CfnParams cfn_from(const Array& u_theta, const Array& b_theta, const Array& u_eta,
                   const Array& b_eta) {
  const Matrix ut = to_matrix(u_theta);
  CfnParams p = CfnParams::zeros(ut.rows(), ut.rows());
  p.u_theta = ut;
  p.b_theta = to_vector(b_theta);
  p.u_eta = to_matrix(u_eta);
  p.b_eta = to_vector(b_eta);
  p.check_shapes();
  return p;
}

py::dict cloud_dict(const PointCloud& c) {
  py::dict d;
  d["map"] = c.map_name;
  d["points"] = to_array(c.points, c.dim);
  d["init"] = c.init_index;
  d["time"] = c.time;
  d["escaped"] = c.escaped;
  d["active"] = c.active;
  d["lo"] = to_array(c.lo);
  d["hi"] = to_array(c.hi);
  d["h_extent"] = c.points.empty() ? 0.0 : c.extent(true);
  return d;
}

}  // namespace

PYBIND11_MODULE(_cfnlab, m) {
  m.doc() = "Chaos-free recurrent networks, baselines and their dynamics";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::enum_<CellKind>(m, "CellKind")
      .value("CFN", CellKind::kCfn)
      .value("LSTM", CellKind::kLstm)
      .value("GRU", CellKind::kGru);
  py::enum_<Schedule>(m, "Schedule")
      .value("DIV3", Schedule::kDivideBy3EachEpoch)
      .value("ADAPTIVE", Schedule::kAdaptiveDivide1_1);

  py::class_<Vocab>(m, "Vocab")
      .def_static("from_text", &Vocab::from_text, py::arg("text"), py::arg("max_vocab"),
                  py::arg("lowercase") = false)
      .def("__len__", &Vocab::size)
      .def("id", &Vocab::id)
      .def("token", &Vocab::token)
      .def("encode",
           [](const Vocab& v, const std::string& text, bool lowercase) {
             return encode(v, text, lowercase);
           },
           py::arg("text"), py::arg("lowercase") = false);

  py::class_<Corpus>(m, "Corpus")
      .def_static(
          "from_text",
          [](const std::string& train, const std::string& valid, const std::string& test,
             size_t max_vocab, bool lowercase) {
            CorpusOptions o;
            o.max_vocab = max_vocab;
            o.lowercase = lowercase;
            return build_corpus_from_text(train, valid, test, o);
          },
          py::arg("train"), py::arg("valid"), py::arg("test"), py::arg("max_vocab") = 10000,
          py::arg("lowercase") = false)
      .def_readonly("vocab", &Corpus::vocab)
      .def_readonly("train", &Corpus::train)
      .def_readonly("valid", &Corpus::valid)
      .def_readonly("test", &Corpus::test);

  py::class_<ModelStack>(m, "ModelStack")
      .def_readonly("kind", &ModelStack::kind)
      .def_readonly("depth", &ModelStack::depth)
      .def_readonly("hidden", &ModelStack::hidden)
      .def_readonly("vocab_size", &ModelStack::vocab_size)
      .def_readwrite("p", &ModelStack::p)
      .def_readwrite("q", &ModelStack::q)
      .def_property_readonly("parameter_count",
                             [](const ModelStack& s) { return s.params.parameter_count(); })
      .def("save", [](const ModelStack& s, const std::string& path) { save_checkpoint_file(s, path); })
      .def_static("load", &load_checkpoint_file);

  m.def(
      "init_stack",
      [](CellKind kind, size_t depth, size_t hidden, size_t vocab, uint64_t seed, double scale) {
        Rng rng(seed);
        return init_stack(kind, depth, hidden, vocab, rng, scale);
      },
      py::arg("kind"), py::arg("depth"), py::arg("hidden"), py::arg("vocab_size"),
      py::arg("seed") = 0, py::arg("init_scale") = 0.07);
  m.def("matched_hidden", &matched_hidden, py::arg("kind"), py::arg("depth"),
        py::arg("vocab_size"), py::arg("target"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("unroll", &TrainConfig::unroll)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("lr0", &TrainConfig::lr0)
      .def_readwrite("schedule", &TrainConfig::schedule)
      .def_readwrite("p", &TrainConfig::p)
      .def_readwrite("q", &TrainConfig::q)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("mask_per_step", &TrainConfig::mask_per_step)
      .def_readwrite("threads", &TrainConfig::threads);

  m.def(
      "train",
      [](ModelStack& model, const Corpus& corpus, const TrainConfig& cfg) {
        std::vector<py::dict> steps;
        const TrainLog log = train(model, corpus, cfg, [&](const StepEvent& e) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["step"] = e.step;
          d["lr"] = e.lr;
          d["loss"] = e.loss;
          d["applied"] = e.update.applied;
          d["grad_norm"] = e.update.grad_norm;
          d["step_norm"] = e.update.step_norm;
          steps.push_back(std::move(d));
        });
        std::vector<py::dict> epochs;
        for (const auto& e : log.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["step"] = e.step;
          d["lr"] = e.lr;
          d["train_nll"] = e.train_nll;
          d["val_perp"] = e.val_perp;
          epochs.push_back(std::move(d));
        }
        return py::make_tuple(epochs, steps);
      },
      py::arg("model"), py::arg("corpus"), py::arg("config"),
      "Trains in place; returns (per-epoch log, per-update log).");
  m.def(
      "evaluate",
      [](const ModelStack& model, const std::vector<TokenId>& tokens) {
        const EvalReport r = evaluate(model, tokens);
        return py::make_tuple(r.mean_nll, r.perplexity);
      },
      py::arg("model"), py::arg("tokens"));
  m.def("unigram_perplexity",
        [](const std::vector<TokenId>& train, const std::vector<TokenId>& split, size_t vocab) {
          return unigram_perplexity(train, split, vocab);
        });

  m.def(
      "gradcheck",
      [](CellKind kind, uint64_t seed, size_t depth, size_t hidden, size_t vocab, size_t unroll,
         bool corrupt) {
        GradcheckConfig c;
        c.kind = kind;
        c.seed = seed;
        c.depth = depth;
        c.hidden = hidden;
        c.vocab = vocab;
        c.unroll = unroll;
        c.corrupt = corrupt;
        const GradcheckReport r = gradcheck(c);
        return py::make_tuple(r.max_rel_error, r.worst_tensor);
      },
      py::arg("kind"), py::arg("seed") = 0, py::arg("depth") = 2, py::arg("hidden") = 4,
      py::arg("vocab") = 11, py::arg("unroll") = 5, py::arg("corrupt") = false,
      "Returns (max relative error, worst tensor name).");

  py::class_<InducedMap>(m, "InducedMap")
      .def_static("chaotic_lstm", [] { return InducedMap::lstm(chaotic_lstm2()); })
      .def_static("chaotic_gru", [] { return InducedMap::gru(chaotic_gru2()); })
      .def_static("henon", [](double a, double b) { return InducedMap::henon({a, b}); },
                  py::arg("a") = 1.4, py::arg("b") = 0.3)
      .def_static(
          "cfn",
          [](const Array& ut, const Array& bt, const Array& ue, const Array& be) {
            return InducedMap::cfn(cfn_from(ut, bt, ue, be));
          },
          py::arg("u_theta"), py::arg("b_theta"), py::arg("u_eta"),
                  py::arg("b_eta"))
      .def_static("from_model", [](const ModelStack& s) { return induced_from_model(s); })
      .def_property_readonly("dim", &InducedMap::dim)
      .def_property_readonly("h_dim", &InducedMap::h_dim)
      .def_property_readonly("name", &InducedMap::name)
      .def("__call__", [](const InducedMap& f, const Array& u) {
        return to_array(f.apply(to_vector(u)));
      });

  m.def(
      "iterate",
      [](const InducedMap& f, const Array& u0, size_t steps, size_t keep_from, size_t stride) {
        const Orbit o = iterate(f, to_vector(u0), steps, keep_from, stride);
        return to_array(o.states, f.dim());
      },
      py::arg("map"), py::arg("u0"), py::arg("steps"), py::arg("keep_from") = 0,
      py::arg("stride") = 1);
  m.def(
      "attractor_sample",
      [](const InducedMap& f, size_t n_init, double lo, double hi, size_t burn_in, size_t keep,
         uint64_t seed, size_t stride, size_t threads) {
        return cloud_dict(attractor_sample(f, n_init, {lo, hi}, burn_in, keep, seed, stride,
                                           threads));
      },
      py::arg("map"), py::arg("n_init"), py::arg("lo") = 0.0, py::arg("hi") = 1.0,
      py::arg("burn_in") = 1000, py::arg("keep") = 10000, py::arg("seed") = 0,
      py::arg("stride") = 1, py::arg("threads") = 1);
  m.def(
      "divergence",
      [](const InducedMap& f, const Array& u0, double perturb, size_t steps, size_t trials,
         uint64_t seed, size_t threads) {
        const auto traces =
            divergence_experiment(f, to_vector(u0), perturb, steps, trials, seed, threads);
        std::vector<Vector> rows;
        for (const auto& t : traces) rows.push_back(t.distances);
        return to_array(rows, rows.empty() ? 0 : rows[0].size());
      },
      py::arg("map"), py::arg("u0"), py::arg("perturb") = 1e-7, py::arg("steps") = 200,
      py::arg("trials") = 1000, py::arg("seed") = 0, py::arg("threads") = 1,
      "Distances, one row per trial.");
  m.def(
      "lyapunov",
      [](const InducedMap& f, const Array& u0, size_t steps, size_t renorm) {
        return lyapunov_estimate(f, to_vector(u0), steps, renorm);
      },
      py::arg("map"), py::arg("u0"), py::arg("steps") = 100000, py::arg("renorm") = 10);

  m.def(
      "lemma1_suite",
      [](size_t instances, uint64_t seed, size_t max_dim, size_t max_k, size_t threads) {
        Lemma1Config c;
        c.instances = instances;
        c.seed = seed;
        c.max_dim = max_dim;
        c.max_k = max_k;
        c.threads = threads;
        const Lemma1Report r = lemma1_suite(c);
        py::dict d;
        d["checked"] = r.checked;
        d["violated"] = r.violated;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("instances") = 1000, py::arg("seed") = 0, py::arg("max_dim") = 16,
      py::arg("max_k") = 50, py::arg("threads") = 1);
  m.def(
      "contraction_rate",
      [](const Array& u, const Array& b) { return contraction_rate(to_matrix(u), to_vector(b)); },
      py::arg("u_theta"), py::arg("b_theta"));
  m.def("zero_attractor_step_bound", &zero_attractor_step_bound, py::arg("rate"),
        py::arg("first_norm"), py::arg("tol"));
  m.def(
      "verify_zero_attractor",
      [](const Array& u, const Array& b, size_t n_init, double radius, uint64_t seed, double tol,
         size_t threads) {
        const ZeroAttractorReport r = verify_zero_attractor(to_matrix(u), to_vector(b), n_init,
                                                            radius, seed, tol, 100000, threads);
        py::dict d;
        d["passed"] = r.passed;
        d["trials"] = r.trials;
        d["worst_steps"] = r.worst_steps;
        d["bound_violations"] = r.bound_violations;
        d["rate"] = r.rate;
        d["steps"] = r.steps;
        return d;
      },
      py::arg("u_theta"), py::arg("b_theta"), py::arg("n_init") = 100, py::arg("radius") = 10.0,
      py::arg("seed") = 0, py::arg("tol") = 1e-8, py::arg("threads") = 1);
  m.def(
      "multilayer_decay",
      [](const ModelStack& s, const std::vector<TokenId>& warm, size_t horizon) {
        const MultilayerDecayReport r = verify_multilayer_decay(s, warm, horizon);
        py::dict d;
        d["degenerate"] = r.degenerate;
        d["upper_retains_longer"] = r.upper_retains_longer();
        std::vector<size_t> half;
        std::vector<Vector> env;
        for (const auto& l : r.layers) {
          half.push_back(l.half_life);
          env.push_back(l.envelope);
        }
        d["half_life"] = half;
        d["envelope"] = env;
        return d;
      },
      py::arg("model"), py::arg("warm"), py::arg("horizon") = 1000);
}
