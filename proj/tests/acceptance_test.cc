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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cfnlab/corpus.h"
#include "cfnlab/dynamics.h"
#include "cfnlab/lm_stack.h"
#include "cfnlab/reference_maps.h"

namespace fs = std::filesystem;
using namespace cfnlab;

namespace {

// Tolerances and budgets.
constexpr double kLemma1Slack = 1e-12;
constexpr double kZeroTol = 1e-8;
constexpr double kDiameterMin = 0.1;
constexpr double kActiveThreshold = 0.01;
constexpr size_t kActiveBlock = 1000;
constexpr double kDivergeThreshold = 0.01;
constexpr double kDivergeFraction = 0.95;
constexpr double kPerturb = 1e-7;
constexpr double kGradTol = 1e-6;
constexpr double kStepNormTol = 1e-12;
constexpr double kUnigramRatio = 0.7;
constexpr double kParityGap = 0.15;
constexpr double kHenonMaxX = 1.5;
constexpr double kHenonMaxY = 0.45;

constexpr double kBudgetLemma1 = 30.0;
constexpr double kBudgetLemma2 = 60.0;
constexpr double kBudgetChaos = 120.0;
constexpr double kBudgetHenon = 30.0;
constexpr double kBudgetGrad = 60.0;
constexpr double kBudgetTrain = 900.0;

// Desk-scale language-model setup.
constexpr size_t kMaxVocab = 2000;
constexpr size_t kCorpusCharLimit = 1000000;
constexpr size_t kVocabLimit = 5000;
constexpr const char* kTrainFlags =
    "--max-vocab 2000 --epochs 5 --schedule div3 --lr0 2 --batch 10 --unroll 20";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(CFNLAB_CLI) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

const fs::path& out_root() {
  static const fs::path root = fs::current_path() / "acceptance_out";
  return root;
}

// --- 1 --------------------------------------------------------------------

Outcome lemma1() {
  Lemma1Config cfg;
  cfg.instances = 1000;
  cfg.min_dim = 1;
  cfg.max_dim = 16;
  cfg.weight_range = 2.0;
  cfg.max_k = 50;
  cfg.max_start = 10;
  cfg.seed = 0;
  static_assert(kLemma1Slack == kDecaySlack);
  const Lemma1Report r = lemma1_suite(cfg);
  return {r.passed(), std::to_string(r.checked) + " certificates, " + std::to_string(r.violated) +
                          " violated"};
}

// --- 2 --------------------------------------------------------------------

Outcome lemma2() {
  size_t worst = 0, failures = 0, total = 0;
  for (size_t k = 0; k < 100; ++k) {
    Rng rng = Rng::derive(2, k);
    const size_t dim = 1 + rng.next_u64() % 16;
    const Matrix u = rng_uniform_matrix(rng, -2.0, 2.0, dim, dim);
    const Vector b = rng_uniform(rng, -2.0, 2.0, dim);
    const ZeroAttractorReport r = verify_zero_attractor(u, b, 100, 10.0, k, kZeroTol);
    worst = std::max(worst, r.worst_steps);
    failures += r.passed ? 0 : 1;
    total += r.trials;
  }
  return {failures == 0, std::to_string(total) + " orbits, worst " + std::to_string(worst) +
                             " steps, " + std::to_string(failures) + " maps failed"};
}

// --- 3, 4 -------------------------------------------------------------------

Outcome chaos(const InducedMap& map) {
  const PointCloud c = attractor_sample(map, 10, {0.0, 1.0}, 1000, 99001, 3);
  bool bounded = c.escaped == 0;
  for (size_t d = 0; d < c.h_dim; ++d) bounded = bounded && c.lo[d] > -1.0 && c.hi[d] < 1.0;
  const double diameter = c.extent(true);
  // Every block of kActiveBlock kept states of each orbit leaves the zero neighborhood.
  std::map<size_t, std::vector<double>> norms;
  for (size_t k = 0; k < c.points.size(); ++k) {
    double n = 0.0;
    for (double v : c.points[k]) n = std::max(n, std::abs(v));
    norms[c.init_index[k]].push_back(n);
  }
  bool recurrent = norms.size() == 10;
  for (const auto& [init, orbit] : norms) {
    for (size_t start = 0; start < orbit.size(); start += kActiveBlock) {
      const size_t end = std::min(orbit.size(), start + kActiveBlock);
      recurrent = recurrent && *std::max_element(orbit.begin() + start, orbit.begin() + end) >
                                   kActiveThreshold;
    }
  }

  Rng rng(4);
  const Vector start = rng_uniform(rng, 0.0, 1.0, map.dim());
  const Vector u0 = iterate(map, start, 1000, 1000).states.back();
  const auto traces = divergence_experiment(map, u0, kPerturb, 200, 1000, 5);
  const double frac = fraction_exceeding(traces, kDivergeThreshold);
  bool start_ok = true;
  for (const auto& t : traces) {
    start_ok = start_ok && t.distances[0] <= kPerturb * std::sqrt(double(map.dim()));
  }
  const double lam = lyapunov_estimate(map, u0, 100000, 10);

  const bool pass = bounded && diameter > kDiameterMin && c.active && recurrent && frac >= kDivergeFraction &&
                    start_ok && lam > 0.0;
  return {pass, "diameter " + fmt(diameter) + ", active " + (c.active && recurrent ? "yes" : "no") +
                    ", diverged " + fmt(100 * frac) + "%, lyapunov " + fmt(lam)};
}

// --- 5 --------------------------------------------------------------------

Outcome henon() {
  const InducedMap h = InducedMap::henon({1.4, 0.3});
  const Orbit o = iterate(h, Vector{0.0, 0.0}, 2);
  const bool exact = o.states[1][0] == 1.0 && o.states[1][1] == 0.0 &&
                     o.states[2][0] == 1.0 - 1.4 && std::abs(o.states[2][0] + 0.4) <= 1e-15 &&
                     o.states[2][1] == 0.3;
  const PointCloud c = attractor_sample(h, 20, {0.0, 1.0}, 1000, 20000, 6);
  bool bounded = !c.points.empty();
  for (const auto& p : c.points) {
    bounded = bounded && std::abs(p[0]) <= kHenonMaxX && std::abs(p[1]) <= kHenonMaxY;
  }
  const Vector u0 = iterate(h, Vector{0.0, 0.0}, 1000, 1000).states.back();
  const double lam = lyapunov_estimate(h, u0, 100000, 10);
  return {exact && bounded && lam > 0.0,
          std::string("iterates ") + (exact ? "exact" : "wrong") + ", x in [" + fmt(c.lo[0]) +
              ", " + fmt(c.hi[0]) + "], y in [" + fmt(c.lo[1]) + ", " + fmt(c.hi[1]) + "], " +
              std::to_string(c.escaped) + " escaped starts, lyapunov " + fmt(lam)};
}

// --- 6 --------------------------------------------------------------------

Outcome gradcheck() {
  const fs::path dir = out_root() / "gradcheck";
  const CliResult r =
      run_cli("--out " + dir.string() + " gradcheck --cell all --seeds 20 --seed 0");
  double worst = 0.0;
  size_t runs = 0;
  std::set<std::string> cells;
  for (const auto& row : read_csv(dir / "gradcheck.csv")) {
    worst = std::max(worst, std::stod(row.at(3)));
    cells.insert(row.at(0) + "/" + row.at(1));
  }
  runs = cells.size();
  return {r.code == 0 && runs == 60 && worst < kGradTol,
          std::to_string(runs) + " stacks, max relative error " + fmt(worst)};
}

// --- 7, 8, 9, 10 ----------------------------------------------------------

struct TrainRun {
  int code = -1;
  double seconds = 0.0;
  double val_perp = 0.0;
  fs::path dir;
  std::string out;
};

TrainRun train_model(const std::string& name, const std::string& model_flags, size_t threads) {
  TrainRun t;
  t.dir = out_root() / name;
  const auto t0 = std::chrono::steady_clock::now();
  const CliResult r = run_cli("--out " + t.dir.string() + " --seed 0 --threads " +
                              std::to_string(threads) + " train --data " + CFNLAB_DATA_DIR + " " +
                              kTrainFlags + " " + model_flags);
  t.seconds = seconds_since(t0);
  t.code = r.code;
  t.out = r.out;
  const auto rows = read_csv(t.dir / "train_log.csv");
  if (!rows.empty()) t.val_perp = std::stod(rows.back().at(4));
  return t;
}

size_t param_count(const fs::path& ckpt) { return load_checkpoint_file(ckpt.string()).params.parameter_count(); }

struct DeskTraining {
  TrainRun cfn;
  TrainRun lstm;
  double unigram = 0.0;
  size_t vocab = 0;
  size_t chars = 0;
};

// Add-one-smoothed training unigram on the validation split, counted here.
double unigram_oracle(const fs::path& vocab_file, size_t* vocab_size) {
  std::ifstream vs(vocab_file);
  const Vocab v = Vocab::load(vs);
  *vocab_size = v.size();
  const auto train = encode(v, read_file(std::string(CFNLAB_DATA_DIR) + "/train.txt"), false);
  const auto valid = encode(v, read_file(std::string(CFNLAB_DATA_DIR) + "/valid.txt"), false);
  std::vector<double> counts(v.size(), 1.0);
  for (TokenId t : train) counts[t] += 1.0;
  const double total = double(train.size() + v.size());
  double nll = 0.0;
  for (size_t k = 1; k < valid.size(); ++k) nll -= std::log(counts[valid[k]] / total);
  return std::exp(nll / double(valid.size() - 1));
}

DeskTraining& desk() {
  static DeskTraining d = [] {
    DeskTraining r;
    r.chars = fs::file_size(std::string(CFNLAB_DATA_DIR) + "/train.txt");
    r.cfn = train_model("cfn", "--cell cfn --depth 2 --hidden 64", 1);
    const size_t target = param_count(r.cfn.dir / "model.ckpt");
    r.lstm = train_model("lstm", "--cell lstm --depth 1 --params " + std::to_string(target), 1);
    r.unigram = unigram_oracle(r.cfn.dir / "vocab.txt", &r.vocab);
    return r;
  }();
  return d;
}

Outcome step_norms() {
  const DeskTraining& d = desk();
  double worst = 0.0;
  size_t updates = 0, skipped = 0;
  for (const TrainRun* run : {&d.cfn, &d.lstm}) {
    for (const auto& row : read_csv(run->dir / "updates.csv")) {
      if (row.at(6) != "1") {
        ++skipped;
        continue;
      }
      ++updates;
      worst = std::max(worst, std::abs(std::stod(row.at(5)) - std::stod(row.at(2))));
    }
  }
  return {updates > 0 && skipped == 0 && worst <= kStepNormTol,
          std::to_string(updates) + " updates, max | ||dw|| - lr | = " + fmt(worst)};
}

Outcome desk_training() {
  const DeskTraining& d = desk();
  const double gap =
      std::abs(d.cfn.val_perp - d.lstm.val_perp) / std::min(d.cfn.val_perp, d.lstm.val_perp);
  const size_t pc = param_count(d.cfn.dir / "model.ckpt");
  const size_t pl = param_count(d.lstm.dir / "model.ckpt");
  const double budget = d.cfn.seconds + d.lstm.seconds;
  const bool pass = d.cfn.code == 0 && d.lstm.code == 0 && d.chars <= kCorpusCharLimit &&
                    d.vocab <= kVocabLimit && d.vocab == kMaxVocab &&
                    d.cfn.val_perp < kUnigramRatio * d.unigram &&
                    d.lstm.val_perp < kUnigramRatio * d.unigram && gap <= kParityGap &&
                    budget < kBudgetTrain;
  return {pass, "unigram " + fmt(d.unigram) + ", cfn " + fmt(d.cfn.val_perp) + " (" +
                    std::to_string(pc) + " params), lstm " + fmt(d.lstm.val_perp) + " (" +
                    std::to_string(pl) + " params), gap " + fmt(100 * gap) + "%, " +
                    fmt(budget) + " s"};
}

Outcome retention() {
  const DeskTraining& d = desk();
  const ModelStack m = load_checkpoint_file((d.cfn.dir / "model.ckpt").string());
  std::ifstream vs(d.cfn.dir / "vocab.txt");
  const Vocab v = Vocab::load(vs);
  auto test = encode(v, read_file(std::string(CFNLAB_DATA_DIR) + "/test.txt"), false);
  test.resize(200);
  const MultilayerDecayReport r = verify_multilayer_decay(m, test, 1000);
  const auto& l1 = r.layers.at(0);
  const auto& l2 = r.layers.at(1);
  return {r.upper_retains_longer(), "half-life layer 1 " + std::to_string(l1.half_life) +
                                        ", layer 2 " + std::to_string(l2.half_life) +
                                        " steps; final max " + fmt(l1.final_max_abs) + ", " +
                                        fmt(l2.final_max_abs)};
}

Outcome determinism() {
  std::vector<std::string> mismatched;
  size_t compared = 0;
  auto compare = [&](const fs::path& a, const fs::path& b, const std::string& file) {
    ++compared;
    const std::string x = slurp(a / file), y = slurp(b / file);
    if (x.empty() || x != y) mismatched.push_back(a.filename().string() + "/" + file);
  };
  const std::vector<std::pair<std::string, std::vector<std::string>>> dyn = {
      {"dynamics attractor --map paper-lstm --keep-from 1000 --steps 20000", {"cloud.csv"}},
      {"dynamics attractor --map paper-gru --keep-from 1000 --steps 20000", {"cloud.csv"}},
      {"dynamics diverge --map paper-lstm --trials 200", {"diverge.csv"}},
      {"dynamics diverge --map paper-gru --trials 200", {"diverge.csv"}},
      {"dynamics henon --steps 20000", {"orbit.csv", "cloud.csv"}},
      {"dynamics lemma1 --trials 50", {"certificates.csv"}},
      {"dynamics lemma2 --dim 8 --trials 100", {"lemma2.csv"}},
      {"gradcheck --cell all --seeds 3", {"gradcheck.csv"}},
  };
  for (size_t k = 0; k < dyn.size(); ++k) {
    const fs::path a = out_root() / ("det" + std::to_string(k) + "_a");
    const fs::path b = out_root() / ("det" + std::to_string(k) + "_b");
    const fs::path c = out_root() / ("det" + std::to_string(k) + "_c");
    run_cli("--out " + a.string() + " --seed 7 --threads 1 " + dyn[k].first);
    run_cli("--out " + b.string() + " --seed 7 --threads 1 " + dyn[k].first);
    run_cli("--out " + c.string() + " --seed 7 --threads 4 " + dyn[k].first);
    for (const auto& f : dyn[k].second) {
      compare(a, b, f);
      compare(a, c, f);
    }
  }
  const DeskTraining& d = desk();
  const TrainRun again = train_model("cfn_threads4", "--cell cfn --depth 2 --hidden 64", 4);
  for (const char* f : {"updates.csv", "train_log.csv", "model.ckpt", "vocab.txt"}) {
    compare(d.cfn.dir, again.dir, f);
  }
  std::string detail = std::to_string(compared) + " file pairs compared";
  for (const auto& m : mismatched) detail += ", differs: " + m;
  return {again.code == 0 && mismatched.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  double budget;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  fs::remove_all(out_root());
  fs::create_directories(out_root());

  const std::vector<Criterion> criteria = {
      {1, "lemma 1 decay certificates", kBudgetLemma1, lemma1},
      {2, "lemma 2 zero attractor", kBudgetLemma2, lemma2},
      {3, "two-unit lstm chaos", kBudgetChaos,
       [] { return chaos(InducedMap::lstm(chaotic_lstm2())); }},
      {4, "two-unit gru chaos", kBudgetChaos, [] { return chaos(InducedMap::gru(chaotic_gru2())); }},
      {5, "henon reference map", kBudgetHenon, henon},
      {6, "gradient check", kBudgetGrad, gradcheck},
      {7, "normalized step length", 0.0, step_norms},
      {8, "desk-scale training", 0.0, desk_training},
      {9, "multi-layer retention", 0.0, retention},
      {10, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = seconds_since(t0);
    if (c.budget > 0.0 && s > c.budget) {
      o.pass = false;
      o.detail += ", over the " + fmt(c.budget) + " s budget";
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << "  " << c.name << ": "
              << o.detail << " [" << fmt(s) << " s]" << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
