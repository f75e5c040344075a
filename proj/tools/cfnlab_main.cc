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

// cfnlab: train and evaluate recurrent language models and run dynamical
// experiments on the maps they induce.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cfnlab/cells.h"
#include "cfnlab/corpus.h"
#include "cfnlab/dynamics.h"
#include "cfnlab/gradcheck.h"
#include "cfnlab/lm_stack.h"
#include "cfnlab/numkit.h"
#include "cfnlab/reference_maps.h"
#include "cfnlab/train.h"

namespace fs = std::filesystem;
using cfnlab::Error;
using cfnlab::Vector;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

constexpr double kGradcheckTolerance = 1e-6;

struct Global {
  uint64_t seed = 0;
  size_t threads = 1;
  std::string out;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

class Output {
 public:
  Output(const CLI::App& app, const CLI::App& sub, const Global& g) : app_(app), sub_(sub) {
    const CLI::Option* out_opt = app.get_option("--out");
    if (out_opt->count() > 0) {
      dir_ = g.out;
    } else if (const char* env = std::getenv("CFNLAB_OUT"); env && *env) {
      dir_ = env;
    } else {
      dir_ = ".";
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  std::ofstream open(const std::string& name) {
    const fs::path p = path(name);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    artifacts_.push_back(name);
    return os;
  }

  void record(const std::string& name) { artifacts_.push_back(name); }

  void close(std::ofstream& os, const std::string& name) {
    os.close();
    if (!os) throw Error("failed writing " + path(name).string());
  }

  void write_manifest() {
    nlohmann::ordered_json j;
    j["artifact"] = "cfnlab";
    j["version"] = CFNLAB_VERSION;
    j["subcommand"] = sub_.get_name();
    nlohmann::ordered_json opts = nlohmann::ordered_json::object();
    collect(app_, opts);
    collect(sub_, opts);
    j["options"] = opts;
    j["outputs"] = artifacts_;
    std::ofstream os(path("run-manifest.json"), std::ios::binary);
    os << j.dump(2) << '\n';
    if (!os) throw Error("failed writing run manifest");
  }

 private:
  static void collect(const CLI::App& a, nlohmann::ordered_json& obj) {
    for (const CLI::Option* o : a.get_options()) {
      std::string name = o->get_name();
      if (name == "--help" || name == "--version" || name == "--out") continue;
      while (!name.empty() && name.front() == '-') name.erase(name.begin());
      if (o->get_type_size() == 0) {
        obj[name] = o->count() > 0;
      } else if (o->count() > 0) {
        const auto& r = o->results();
        if (r.size() == 1) {
          obj[name] = r.front();
        } else {
          obj[name] = r;
        }
      } else if (!o->get_default_str().empty()) {
        obj[name] = o->get_default_str();
      } else {
        obj[name] = nullptr;
      }
    }
  }

  const CLI::App& app_;
  const CLI::App& sub_;
  fs::path dir_;
  std::vector<std::string> artifacts_;
};

// --- train / eval ----------------------------------------------------------

struct CorpusFlags {
  std::string data;
  std::string train;
  std::string valid;
  std::string test;

  void add(CLI::App* sub) {
    sub->add_option("--data", data, "Directory holding train.txt, valid.txt and test.txt");
    sub->add_option("--train", train, "Training split file");
    sub->add_option("--valid", valid, "Validation split file");
    sub->add_option("--test", test, "Test split file");
  }

  cfnlab::CorpusPaths resolve() const {
    cfnlab::CorpusPaths p;
    if (!data.empty()) {
      const fs::path d(data);
      p.train = (d / "train.txt").string();
      p.valid = (d / "valid.txt").string();
      p.test = (d / "test.txt").string();
    }
    if (!train.empty()) p.train = train;
    if (!valid.empty()) p.valid = valid;
    if (!test.empty()) p.test = test;
    return p;
  }
};

struct TrainFlags {
  CorpusFlags corpus;
  std::string cell = "cfn";
  size_t depth = 2;
  size_t hidden = 64;
  size_t params = 0;
  size_t max_vocab = 10000;
  bool lowercase = false;
  double init_scale = 0.07;
  cfnlab::TrainConfig cfg;
  std::string schedule = "div3";
};

int cmd_train(const TrainFlags& f, const Global& g, Output& out) {
  cfnlab::CorpusPaths paths = f.corpus.resolve();
  if (paths.train.empty() || paths.valid.empty()) {
    throw Error("train needs --data or both --train and --valid");
  }
  cfnlab::CorpusOptions copts;
  copts.max_vocab = f.max_vocab;
  copts.lowercase = f.lowercase;
  const cfnlab::Corpus corpus = cfnlab::build_corpus(paths, copts);
  const cfnlab::CellKind kind = cfnlab::parse_cell_kind(f.cell);
  const size_t vocab = corpus.vocab.size();
  const size_t hidden = f.params > 0 ? cfnlab::matched_hidden(kind, f.depth, vocab, f.params)
                                     : f.hidden;
  cfnlab::Rng init_rng = cfnlab::Rng::derive(g.seed, 1);
  cfnlab::ModelStack m = cfnlab::init_stack(kind, f.depth, hidden, vocab, init_rng, f.init_scale);
  m.p = f.cfg.p;
  m.q = f.cfg.q;
  cfnlab::TrainConfig cfg = f.cfg;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.schedule = cfnlab::parse_schedule(f.schedule);

  std::cout << "model " << cfnlab::to_string(kind) << " depth " << f.depth << " hidden " << hidden
            << " vocab " << vocab << " parameters " << m.params.parameter_count() << '\n';
  std::ofstream updates = out.open("updates.csv");
  updates << "step,epoch,lr,loss,grad_norm,step_norm,applied\n";
  const cfnlab::TrainLog log = cfnlab::train(m, corpus, cfg, [&](const cfnlab::StepEvent& e) {
    updates << e.step << ',' << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.loss) << ','
            << fmt(e.update.grad_norm) << ',' << fmt(e.update.step_norm) << ','
            << (e.update.applied ? 1 : 0) << '\n';
  });
  out.close(updates, "updates.csv");

  std::ofstream log_os = out.open("train_log.csv");
  cfnlab::write_train_log(log, log_os);
  out.close(log_os, "train_log.csv");
  std::ofstream vocab_os = out.open("vocab.txt");
  corpus.vocab.save(vocab_os);
  out.close(vocab_os, "vocab.txt");
  cfnlab::save_checkpoint_file(m, out.path("model.ckpt").string());
  out.record("model.ckpt");

  for (const auto& e : log.epochs) {
    std::cout << "epoch " << e.epoch << " lr " << short_fmt(e.lr) << " train_nll "
              << short_fmt(e.train_nll) << " val_perplexity " << short_fmt(e.val_perp) << '\n';
  }
  const double uni = cfnlab::unigram_perplexity(corpus.train, corpus.valid, vocab);
  std::cout << "unigram_perplexity " << fmt(uni) << '\n';
  const double final_perp = log.epochs.empty() ? cfnlab::evaluate(m, corpus.valid).perplexity
                                               : log.epochs.back().val_perp;
  std::cout << "val_perplexity " << fmt(final_perp) << '\n';
  return kExitOk;
}

struct EvalFlags {
  std::string checkpoint;
  std::string vocab;
  std::string file;
  CorpusFlags corpus;
  std::string split = "valid";
  bool lowercase = false;
};

int cmd_eval(const EvalFlags& f) {
  const cfnlab::ModelStack m = cfnlab::load_checkpoint_file(f.checkpoint);
  const std::string vocab_path =
      f.vocab.empty() ? (fs::path(f.checkpoint).parent_path() / "vocab.txt").string() : f.vocab;
  std::ifstream vs(vocab_path);
  if (!vs) throw Error("cannot open vocabulary " + vocab_path);
  const cfnlab::Vocab vocab = cfnlab::Vocab::load(vs);
  if (vocab.size() != m.vocab_size) {
    throw Error("checkpoint vocabulary size " + std::to_string(m.vocab_size) +
                " does not match " + vocab_path + " (" + std::to_string(vocab.size()) + ")");
  }
  std::string path = f.file;
  if (path.empty()) {
    const cfnlab::CorpusPaths p = f.corpus.resolve();
    switch (cfnlab::parse_split(f.split)) {
      case cfnlab::Split::kTrain: path = p.train; break;
      case cfnlab::Split::kValid: path = p.valid; break;
      case cfnlab::Split::kTest: path = p.test; break;
    }
  }
  if (path.empty()) throw Error("eval needs --file, --data or a split file option");
  const std::string text = cfnlab::read_file(path);
  cfnlab::validate_utf8(text, path);
  const std::vector<cfnlab::TokenId> tokens = cfnlab::encode(vocab, text, f.lowercase);
  const cfnlab::EvalReport r = cfnlab::evaluate(m, tokens);
  std::cout << "tokens " << r.tokens << '\n';
  std::cout << "mean_nll " << fmt(r.mean_nll) << '\n';
  std::cout << "perplexity " << fmt(r.perplexity) << '\n';
  return kExitOk;
}

// --- dynamics --------------------------------------------------------------

struct DynFlags {
  std::string experiment;
  std::string map = "paper-lstm";
  std::string checkpoint;
  std::string data;
  std::optional<size_t> n_init;
  double box_lo = 0.0;
  double box_hi = 1.0;
  std::optional<size_t> keep_from;
  std::optional<size_t> steps;
  size_t stride = 1;
  double perturb = 1e-7;
  std::optional<size_t> trials;
  double threshold = 0.01;
  size_t unit = 0;
  size_t impulse_time = 10;
  double amplitude = 10.0;
  size_t horizon = 100;
  size_t dim = 8;
  size_t maps = 1;
  double radius = 10.0;
  double weight_range = 2.0;
  size_t renorm = 10;
  size_t warm = 200;
};

cfnlab::CfnParams random_cfn(size_t dim, double range, uint64_t seed) {
  cfnlab::Rng rng(seed);
  cfnlab::CfnParams p = cfnlab::CfnParams::zeros(dim, dim);
  p.visit([&](const std::string&, auto& t) {
    for (double& v : std::span<double>(t.data(), t.size())) v = rng.uniform(-range, range);
  });
  return p;
}

cfnlab::InducedMap load_map(const DynFlags& f, const Global& g) {
  if (f.map == "paper-lstm") return cfnlab::InducedMap::lstm(cfnlab::chaotic_lstm2());
  if (f.map == "paper-gru") return cfnlab::InducedMap::gru(cfnlab::chaotic_gru2());
  if (f.map == "henon") return cfnlab::InducedMap::henon();
  if (f.map == "random-cfn") return cfnlab::InducedMap::cfn(random_cfn(f.dim, f.weight_range, g.seed));
  if (f.checkpoint.empty()) throw Error("--map checkpoint requires --checkpoint");
  return cfnlab::induced_from_model(cfnlab::load_checkpoint_file(f.checkpoint));
}

cfnlab::ModelStack load_model(const DynFlags& f) {
  if (f.map != "checkpoint" || f.checkpoint.empty()) {
    throw Error("experiment " + f.experiment + " needs --map checkpoint --checkpoint PATH");
  }
  return cfnlab::load_checkpoint_file(f.checkpoint);
}

std::vector<cfnlab::TokenId> load_tokens(const DynFlags& f, size_t n) {
  if (f.data.empty()) throw Error("experiment " + f.experiment + " needs --data DIR");
  const std::string vocab_path = (fs::path(f.checkpoint).parent_path() / "vocab.txt").string();
  std::ifstream vs(vocab_path);
  if (!vs) throw Error("cannot open vocabulary " + vocab_path);
  const cfnlab::Vocab vocab = cfnlab::Vocab::load(vs);
  const std::string path = (fs::path(f.data) / "test.txt").string();
  const std::string text = cfnlab::read_file(path);
  cfnlab::validate_utf8(text, path);
  std::vector<cfnlab::TokenId> tokens = cfnlab::encode(vocab, text, false);
  if (tokens.size() < n) throw Error(path + " has fewer than " + std::to_string(n) + " tokens");
  tokens.resize(n);
  return tokens;
}

// A state on the attractor: a random draw from the initial box, burned in.
Vector settled_state(const cfnlab::InducedMap& map, const DynFlags& f, uint64_t seed,
                     size_t burn_in) {
  cfnlab::Rng rng = cfnlab::Rng::derive(seed, 0x5e771ed);
  const Vector u0 = cfnlab::rng_uniform(rng, f.box_lo, f.box_hi, map.dim());
  return cfnlab::iterate(map, u0, burn_in, burn_in).states.back();
}

template <class W>
void write_csv(Output& out, const std::string& name, W&& writer) {
  std::ofstream os = out.open(name);
  writer(os);
  out.close(os, name);
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

int dyn_attractor(const DynFlags& f, const Global& g, Output& out) {
  const cfnlab::InducedMap map = load_map(f, g);
  const size_t keep_from = f.keep_from.value_or(1000);
  const size_t steps = f.steps.value_or(100000);
  if (steps < keep_from) throw Error("--steps must be at least --keep-from");
  const size_t keep = (steps - keep_from) / f.stride + 1;
  const cfnlab::PointCloud c = cfnlab::attractor_sample(
      map, f.n_init.value_or(10), {f.box_lo, f.box_hi}, keep_from, keep, g.seed, f.stride,
      g.threads);
  write_csv(out, "cloud.csv", [&](std::ostream& os) { cfnlab::write_cloud_csv(os, c, true); });
  write_csv(out, "cloud_bbox.csv", [&](std::ostream& os) { cfnlab::write_cloud_meta(os, c); });
  std::cout << "map " << map.name() << " points " << c.points.size() << " escaped " << c.escaped
            << '\n';
  std::cout << "h_extent " << fmt(c.extent(true)) << " max_norm " << fmt(c.max_norm())
            << " recurrently_active " << (c.active ? "yes" : "no") << '\n';
  return kExitOk;
}

int dyn_diverge(const DynFlags& f, const Global& g, Output& out) {
  const cfnlab::InducedMap map = load_map(f, g);
  const Vector u0 = settled_state(map, f, g.seed, f.keep_from.value_or(1000));
  const auto traces = cfnlab::divergence_experiment(map, u0, f.perturb, f.steps.value_or(200),
                                                    f.trials.value_or(100), g.seed, g.threads);
  write_csv(out, "diverge.csv",
            [&](std::ostream& os) { cfnlab::write_divergence_csv(os, traces); });
  std::cout << "map " << map.name() << " trials " << traces.size() << " fraction_exceeding "
            << fmt(cfnlab::fraction_exceeding(traces, f.threshold)) << '\n';
  return kExitOk;
}

int dyn_forced(const DynFlags& f, const Global& g, Output& out) {
  const cfnlab::ModelStack m = load_model(f);
  const std::vector<cfnlab::TokenId> tokens = load_tokens(f, f.steps.value_or(200));
  cfnlab::Rng rng(g.seed);
  const size_t dim = cfnlab::StackState::zeros(m).flatten().size();
  const auto a = cfnlab::StackState::unflatten(m, cfnlab::rng_uniform(rng, -1.0, 1.0, dim));
  const auto b = cfnlab::StackState::unflatten(m, cfnlab::rng_uniform(rng, -1.0, 1.0, dim));
  cfnlab::DivergenceTrace tr;
  tr.perturbation_scale = 2.0;
  tr.distances = cfnlab::forced_divergence(m, tokens, a, b);
  write_csv(out, "diverge.csv", [&](std::ostream& os) {
    cfnlab::write_divergence_csv(os, std::span<const cfnlab::DivergenceTrace>(&tr, 1));
  });
  std::cout << "initial_distance " << fmt(tr.distances.front()) << " final_distance "
            << fmt(tr.distances.back()) << '\n';
  return kExitOk;
}

int dyn_impulse(const DynFlags& f, const Global& g, Output& out) {
  cfnlab::CfnParams p;
  if (f.map == "checkpoint") {
    const cfnlab::ModelStack m = load_model(f);
    if (m.kind != cfnlab::CellKind::kCfn) throw Error("impulse needs a CFN checkpoint");
    p = std::get<cfnlab::CfnParams>(m.params.layers.front());
  } else if (f.map == "random-cfn") {
    p = random_cfn(f.dim, f.weight_range, g.seed);
  } else {
    throw Error("impulse needs --map random-cfn or --map checkpoint");
  }
  const cfnlab::ImpulseResponse r =
      cfnlab::impulse_response(p, f.unit, f.impulse_time, f.amplitude, f.horizon);
  const auto certs = cfnlab::certify_impulse(r);
  write_csv(out, "impulse.csv", [&](std::ostream& os) {
    os << "t,h,theta,eta,wx\n";
    for (size_t t = 0; t < r.h.size(); ++t) {
      os << t << ',' << fmt(r.h[t]) << ',' << fmt(r.theta[t]) << ',' << fmt(r.eta[t]) << ','
         << fmt(r.wx[t]) << '\n';
    }
  });
  write_csv(out, "certificates.csv",
            [&](std::ostream& os) { cfnlab::write_certificates_csv(os, certs); });
  bool ok = true;
  for (const auto& c : certs) ok = ok && c.satisfied;
  std::cout << "h_at_impulse " << fmt(r.h[f.impulse_time]) << " certificates " << certs.size()
            << ' ' << verdict(ok) << '\n';
  return ok ? kExitOk : kExitFailure;
}

int dyn_lemma1(const DynFlags& f, const Global& g, Output& out) {
  cfnlab::Lemma1Config cfg;
  cfg.instances = f.trials.value_or(20);
  cfg.max_dim = f.dim;
  cfg.weight_range = f.weight_range;
  cfg.max_k = f.horizon;
  cfg.max_start = f.impulse_time;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.keep_certificates = true;
  const cfnlab::Lemma1Report rep = cfnlab::lemma1_suite(cfg);
  write_csv(out, "certificates.csv",
            [&](std::ostream& os) { cfnlab::write_certificates_csv(os, rep.certificates); });
  std::cout << "instances " << rep.instances << " certificates " << rep.checked << " violated "
            << rep.violated << ' ' << verdict(rep.passed()) << '\n';
  return rep.passed() ? kExitOk : kExitFailure;
}

int dyn_lemma2(const DynFlags& f, const Global& g, Output& out) {
  const size_t trials = f.trials.value_or(100);
  bool ok = true;
  size_t worst = 0;
  std::ofstream os = out.open("lemma2.csv");
  os << "map,radius,trial,steps\n";
  for (size_t k = 0; k < f.maps; ++k) {
    const uint64_t map_seed = g.seed ^ (0x9e3779b97f4a7c15ULL * (k + 1));
    cfnlab::Rng rng(map_seed);
    const cfnlab::Matrix u =
        cfnlab::rng_uniform_matrix(rng, -f.weight_range, f.weight_range, f.dim, f.dim);
    const Vector b = cfnlab::rng_uniform(rng, -f.weight_range, f.weight_range, f.dim);
    for (double radius : {1.0, f.radius}) {
      const auto rep =
          cfnlab::verify_zero_attractor(u, b, trials, radius, map_seed, 1e-8, 100000, g.threads);
      ok = ok && rep.passed;
      worst = std::max(worst, rep.worst_steps);
      for (size_t i = 0; i < rep.steps.size(); ++i) {
        os << k << ',' << fmt(radius) << ',' << i << ',' << rep.steps[i] << '\n';
      }
    }
  }
  out.close(os, "lemma2.csv");
  std::cout << "maps " << f.maps << " trials " << trials << " worst_steps " << worst << '\n';
  std::cout << verdict(ok) << '\n';
  return ok ? kExitOk : kExitFailure;
}

int dyn_multilayer(const DynFlags& f, Output& out) {
  const cfnlab::ModelStack m = load_model(f);
  const std::vector<cfnlab::TokenId> warm = load_tokens(f, f.warm);
  const size_t horizon = f.steps.value_or(500);
  const cfnlab::MultilayerDecayReport rep = cfnlab::verify_multilayer_decay(m, warm, horizon);
  write_csv(out, "decay.csv", [&](std::ostream& os) { cfnlab::write_decay_csv(os, rep); });
  for (const auto& d : rep.layers) {
    std::cout << "layer " << d.layer + 1 << " half_life " << d.half_life << " fitted_C "
              << short_fmt(d.fitted_c) << " fitted_Theta " << short_fmt(d.fitted_theta)
              << " final_max " << short_fmt(d.final_max_abs) << '\n';
  }
  const bool ok = rep.upper_retains_longer();
  std::cout << (rep.degenerate ? "degenerate " : "") << verdict(ok) << '\n';
  return ok ? kExitOk : kExitFailure;
}

int dyn_lyapunov(const DynFlags& f, const Global& g) {
  const cfnlab::InducedMap map = load_map(f, g);
  const Vector u0 = settled_state(map, f, g.seed, f.keep_from.value_or(1000));
  const double lam = cfnlab::lyapunov_estimate(map, u0, f.steps.value_or(100000), f.renorm);
  std::cout << "map " << map.name() << " lyapunov " << fmt(lam) << " chaotic "
            << (lam > 0.0 ? "yes" : "no") << '\n';
  return kExitOk;
}

int dyn_henon(const DynFlags& f, const Global& g, Output& out) {
  const cfnlab::InducedMap map = cfnlab::InducedMap::henon();
  const Vector origin{0.0, 0.0};
  const size_t steps = f.steps.value_or(10000);
  const size_t keep_from = f.keep_from.value_or(1000);
  if (steps < keep_from) throw Error("--steps must be at least --keep-from");
  const cfnlab::Orbit o = cfnlab::iterate(map, origin, steps);
  write_csv(out, "orbit.csv", [&](std::ostream& os) { cfnlab::write_orbit_csv(os, o); });
  const size_t keep = (steps - keep_from) / f.stride + 1;
  const cfnlab::PointCloud c = cfnlab::attractor_sample(
      map, f.n_init.value_or(10), {f.box_lo, f.box_hi}, keep_from, keep, g.seed, f.stride,
      g.threads);
  write_csv(out, "cloud.csv", [&](std::ostream& os) { cfnlab::write_cloud_csv(os, c, true); });
  write_csv(out, "cloud_bbox.csv", [&](std::ostream& os) { cfnlab::write_cloud_meta(os, c); });
  const double lam = cfnlab::lyapunov_estimate(map, o.states[keep_from], 100000, f.renorm);
  std::cout << "u1 " << fmt(o.states[1][0]) << ' ' << fmt(o.states[1][1]) << '\n';
  std::cout << "u2 " << fmt(o.states[2][0]) << ' ' << fmt(o.states[2][1]) << '\n';
  std::cout << "points " << c.points.size() << " escaped " << c.escaped << " x_range "
            << fmt(c.lo[0]) << ' ' << fmt(c.hi[0]) << " y_range " << fmt(c.lo[1]) << ' '
            << fmt(c.hi[1]) << '\n';
  std::cout << "lyapunov " << fmt(lam) << '\n';
  return kExitOk;
}

int cmd_dynamics(const DynFlags& f, const Global& g, Output& out) {
  const std::string& e = f.experiment;
  if (e == "attractor") return dyn_attractor(f, g, out);
  if (e == "diverge") return dyn_diverge(f, g, out);
  if (e == "forced") return dyn_forced(f, g, out);
  if (e == "impulse") return dyn_impulse(f, g, out);
  if (e == "lemma1") return dyn_lemma1(f, g, out);
  if (e == "lemma2") return dyn_lemma2(f, g, out);
  if (e == "multilayer") return dyn_multilayer(f, out);
  if (e == "lyapunov") return dyn_lyapunov(f, g);
  if (e == "henon") return dyn_henon(f, g, out);
  throw Error("unknown experiment " + e);
}

// --- gradcheck -------------------------------------------------------------

struct GradFlags {
  std::string cell = "cfn";
  size_t seeds = 1;
  bool corrupt = false;
  cfnlab::GradcheckConfig cfg;
};

int cmd_gradcheck(const GradFlags& f, const Global& g, Output& out) {
  std::vector<cfnlab::CellKind> kinds;
  if (f.cell == "all") {
    kinds = {cfnlab::CellKind::kCfn, cfnlab::CellKind::kLstm, cfnlab::CellKind::kGru};
  } else {
    kinds = {cfnlab::parse_cell_kind(f.cell)};
  }
  double worst = 0.0;
  std::string worst_where;
  std::ofstream os = out.open("gradcheck.csv");
  os << "cell,seed,tensor,max_rel_error,analytic,numeric\n";
  for (cfnlab::CellKind kind : kinds) {
    for (size_t s = 0; s < f.seeds; ++s) {
      cfnlab::GradcheckConfig cfg = f.cfg;
      cfg.kind = kind;
      cfg.seed = g.seed + s;
      cfg.corrupt = f.corrupt;
      const cfnlab::GradcheckReport rep = cfnlab::gradcheck(cfg);
      for (const auto& t : rep.tensors) {
        os << cfnlab::to_string(kind) << ',' << cfg.seed << ',' << t.name << ','
           << fmt(t.max_rel_error) << ',' << fmt(t.analytic) << ',' << fmt(t.numeric) << '\n';
      }
      std::cout << cfnlab::to_string(kind) << " seed " << cfg.seed << " max_rel_error "
                << short_fmt(rep.max_rel_error) << " worst " << rep.worst_tensor << '\n';
      if (rep.max_rel_error > worst || worst_where.empty()) {
        worst = rep.max_rel_error;
        worst_where = cfnlab::to_string(kind) + " seed " + std::to_string(cfg.seed) + " " +
                      rep.worst_tensor;
      }
    }
  }
  out.close(os, "gradcheck.csv");
  const bool ok = worst < kGradcheckTolerance;
  std::cout << "max_rel_error " << short_fmt(worst) << ' ' << verdict(ok) << '\n';
  if (!ok) std::cerr << "gradcheck failed: worst tensor " << worst_where << '\n';
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent language models and the dynamics of their induced maps", "cfnlab"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", CFNLAB_VERSION);

  Global g;
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (default: $CFNLAB_OUT or .)");

  TrainFlags tf;
  CLI::App* train = app.add_subcommand("train", "Train a language model");
  tf.corpus.add(train);
  train->add_option("--cell", tf.cell, "cfn, lstm or gru")
      ->check(CLI::IsMember({"cfn", "lstm", "gru"}));
  train->add_option("--depth", tf.depth, "Number of recurrent layers")->check(CLI::PositiveNumber);
  train->add_option("--hidden", tf.hidden, "Units per layer")->check(CLI::PositiveNumber);
  train->add_option("--params", tf.params,
                    "Pick the hidden size whose parameter count is closest to this");
  train->add_option("--max-vocab", tf.max_vocab, "Vocabulary size, counting <unk> and <eos>");
  train->add_flag("--lowercase", tf.lowercase, "Lowercase text before tokenizing");
  train->add_option("--init-scale", tf.init_scale, "Uniform initialization half-width");
  train->add_option("--unroll", tf.cfg.unroll, "Truncated BPTT window length");
  train->add_option("--batch", tf.cfg.batch, "Minibatch size");
  train->add_option("--lr0", tf.cfg.lr0, "Initial learning rate");
  train->add_option("--schedule", tf.schedule, "div3 or adaptive")
      ->check(CLI::IsMember({"div3", "adaptive"}));
  train->add_option("--p", tf.cfg.p, "Between-layer dropout rate");
  train->add_option("--q", tf.cfg.q, "In-gate dropout rate");
  train->add_option("--epochs", tf.cfg.epochs, "Training epochs");
  train->add_flag("--mask-per-step", tf.cfg.mask_per_step, "Resample dropout masks every step");

  EvalFlags ef;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", ef.checkpoint, "Checkpoint file")->required();
  eval->add_option("--vocab", ef.vocab, "Vocabulary file (default: beside the checkpoint)");
  eval->add_option("--file", ef.file, "Text file to evaluate");
  ef.corpus.add(eval);
  eval->add_option("--split", ef.split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  eval->add_flag("--lowercase", ef.lowercase, "Lowercase text before tokenizing");

  DynFlags df;
  CLI::App* dyn = app.add_subcommand("dynamics", "Experiments on induced maps");
  dyn->add_option("experiment", df.experiment, "Experiment to run")
      ->required()
      ->check(CLI::IsMember({"attractor", "diverge", "forced", "impulse", "lemma1", "lemma2",
                             "multilayer", "lyapunov", "henon"}));
  dyn->add_option("--map", df.map, "paper-lstm, paper-gru, henon, random-cfn or checkpoint")
      ->check(CLI::IsMember({"paper-lstm", "paper-gru", "henon", "random-cfn", "checkpoint"}));
  dyn->add_option("--checkpoint", df.checkpoint, "Checkpoint for --map checkpoint");
  dyn->add_option("--data", df.data, "Corpus directory for token-driven experiments");
  dyn->add_option("--n-init", df.n_init, "Initial states for attractor sampling");
  dyn->add_option("--box-lo", df.box_lo, "Lower corner of the initial-state box");
  dyn->add_option("--box-hi", df.box_hi, "Upper corner of the initial-state box");
  dyn->add_option("--keep-from", df.keep_from, "Burn-in steps");
  dyn->add_option("--steps", df.steps, "Iteration count");
  dyn->add_option("--stride", df.stride, "Keep every stride-th state")->check(CLI::PositiveNumber);
  dyn->add_option("--perturb", df.perturb, "Half-width of the initial perturbation");
  dyn->add_option("--trials", df.trials, "Trials or random instances");
  dyn->add_option("--threshold", df.threshold, "Divergence distance threshold");
  dyn->add_option("--unit", df.unit, "Unit receiving the impulse");
  dyn->add_option("--impulse-time", df.impulse_time, "Impulse step, or last window start");
  dyn->add_option("--amplitude", df.amplitude, "Impulse amplitude");
  dyn->add_option("--horizon", df.horizon, "Steps observed after the impulse");
  dyn->add_option("--dim", df.dim, "State dimension of random maps")->check(CLI::PositiveNumber);
  dyn->add_option("--maps", df.maps, "Random maps for lemma2");
  dyn->add_option("--radius", df.radius, "Initial-state radius for lemma2");
  dyn->add_option("--weight-range", df.weight_range, "Half-width of random weights");
  dyn->add_option("--renorm", df.renorm, "Lyapunov renormalization interval")
      ->check(CLI::PositiveNumber);
  dyn->add_option("--warm", df.warm, "Warm-up tokens before the input is zeroed");

  GradFlags gf;
  CLI::App* grad = app.add_subcommand("gradcheck", "Compare BPTT gradients to finite differences");
  grad->add_option("--cell", gf.cell, "cfn, lstm, gru or all")
      ->check(CLI::IsMember({"cfn", "lstm", "gru", "all"}));
  grad->add_option("--seeds", gf.seeds, "Consecutive seeds starting at --seed");
  grad->add_flag("--corrupt", gf.corrupt, "Perturb one analytic partial (must fail)");
  grad->add_option("--depth", gf.cfg.depth, "Layers");
  grad->add_option("--hidden", gf.cfg.hidden, "Units per layer");
  grad->add_option("--vocab", gf.cfg.vocab, "Vocabulary size");
  grad->add_option("--unroll", gf.cfg.unroll, "Window length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    Output out(app, *sub, g);
    int code = kExitFailure;
    if (sub == train) {
      code = cmd_train(tf, g, out);
    } else if (sub == eval) {
      code = cmd_eval(ef);
    } else if (sub == dyn) {
      code = cmd_dynamics(df, g, out);
    } else {
      code = cmd_gradcheck(gf, g, out);
    }
    if (sub != eval) out.write_manifest();
    return code;
  } catch (const std::exception& e) {
    std::cerr << "cfnlab: " << e.what() << '\n';
    return kExitFailure;
  }
}
