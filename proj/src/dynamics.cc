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

#include "cfnlab/dynamics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <utility>

#include "cfnlab/parallel.h"

namespace cfnlab {
namespace {

constexpr double kEscapeRadius = 1e6;
constexpr size_t kActivityWindow = 1000;
constexpr double kActivityThreshold = 0.01;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void require_dim(const InducedMap& map, std::span<const double> u, const char* what) {
  if (u.size() != map.dim()) {
    throw Error(std::string(what) + ": state has " + std::to_string(u.size()) +
                " components, map " + map.name() + " expects " + std::to_string(map.dim()));
  }
}

size_t stack_state_dim(const ModelStack& m) {
  const size_t per_layer = m.kind == CellKind::kLstm ? 2 * m.hidden : m.hidden;
  return per_layer * m.depth;
}

Vector embedding_column(const ModelStack& m, TokenId token) {
  if (token >= m.vocab_size) {
    throw Error("token id " + std::to_string(token) + " outside vocabulary of size " +
                std::to_string(m.vocab_size));
  }
  Vector e(m.hidden);
  for (size_t r = 0; r < m.hidden; ++r) e[r] = m.params.embedding(r, token);
  return e;
}

}  // namespace

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::kCfn: return "cfn";
    case MapKind::kLstm: return "lstm";
    case MapKind::kGru: return "gru";
    case MapKind::kHenon: return "henon";
    case MapKind::kStack: return "stack";
  }
  return "unknown";
}

InducedMap::InducedMap(MapKind kind, Params params, size_t dim, size_t h_dim, std::string name)
    : kind_(kind), params_(std::move(params)), dim_(dim), h_dim_(h_dim), name_(std::move(name)) {}

InducedMap InducedMap::cfn(CfnParams p) {
  p.check_shapes();
  const size_t n = p.hidden();
  return InducedMap(MapKind::kCfn, std::move(p), n, n, "cfn");
}

InducedMap InducedMap::lstm(LstmParams p) {
  p.check_shapes();
  const size_t n = p.hidden();
  return InducedMap(MapKind::kLstm, std::move(p), 2 * n, n, "lstm");
}

InducedMap InducedMap::gru(GruParams p) {
  p.check_shapes();
  const size_t n = p.hidden();
  return InducedMap(MapKind::kGru, std::move(p), n, n, "gru");
}

InducedMap InducedMap::henon(HenonParams p) {
  if (!std::isfinite(p.a) || !std::isfinite(p.b)) throw Error("henon: parameters must be finite");
  return InducedMap(MapKind::kHenon, p, 2, 2, "henon");
}

InducedMap InducedMap::stack(std::shared_ptr<const ModelStack> m) {
  if (!m) throw Error("induced map: null model");
  m->check();
  const size_t dim = stack_state_dim(*m);
  const size_t h = m->hidden;
  std::string name = "stack-" + to_string(m->kind);
  return InducedMap(MapKind::kStack, std::move(m), dim, h, std::move(name));
}

Vector InducedMap::apply(std::span<const double> u) const {
  require_dim(*this, u, "induced map");
  switch (kind_) {
    case MapKind::kCfn: {
      const auto& p = std::get<CfnParams>(params_);
      return cfn_zero_input_map(p.u_theta, p.b_theta, u);
    }
    case MapKind::kLstm: {
      const auto& p = std::get<LstmParams>(params_);
      const size_t n = p.hidden();
      LstmState s{Vector(u.begin(), u.begin() + n), Vector(u.begin() + n, u.end())};
      const Vector x(p.input(), 0.0);
      LstmState next = lstm_step(p, s, x);
      Vector out = std::move(next.h);
      out.insert(out.end(), next.c.begin(), next.c.end());
      return out;
    }
    case MapKind::kGru: {
      const auto& p = std::get<GruParams>(params_);
      const Vector x(p.input(), 0.0);
      return gru_step(p, u, x);
    }
    case MapKind::kHenon: {
      const auto& p = std::get<HenonParams>(params_);
      const double x = u[0];
      const double y = u[1];
      return {y + 1.0 - p.a * x * x, p.b * x};
    }
    case MapKind::kStack: {
      const auto& m = *std::get<std::shared_ptr<const ModelStack>>(params_);
      const StackState s = StackState::unflatten(m, u);
      const Vector zero(m.hidden, 0.0);
      return stack_advance(m, s, zero).flatten();
    }
  }
  throw Error("induced map: unknown kind");
}

InducedMap induced_from_model(const ModelStack& m) {
  return InducedMap::stack(std::make_shared<const ModelStack>(m));
}
InducedMap induced_from_model(const CfnParams& p) { return InducedMap::cfn(p); }
InducedMap induced_from_model(const LstmParams& p) { return InducedMap::lstm(p); }
InducedMap induced_from_model(const GruParams& p) { return InducedMap::gru(p); }

Orbit iterate(const InducedMap& map, std::span<const double> u0, size_t steps, size_t keep_from,
              size_t stride) {
  require_dim(map, u0, "iterate");
  if (steps < keep_from) throw Error("iterate: steps must be at least keep_from");
  if (stride == 0) throw Error("iterate: stride must be positive");
  if (!all_finite(u0)) throw Error("iterate: non-finite initial state");
  Orbit o;
  o.map_name = map.name();
  o.u0.assign(u0.begin(), u0.end());
  o.t_start = keep_from;
  o.stride = stride;
  o.t_end = keep_from + (steps - keep_from) / stride * stride;
  o.states.reserve((steps - keep_from) / stride + 1);
  Vector u = o.u0;
  for (size_t t = 0;; ++t) {
    if (t >= keep_from && (t - keep_from) % stride == 0) o.states.push_back(u);
    if (t == steps) break;
    u = map.apply(u);
    if (!all_finite(u)) {
      throw Error("iterate: " + map.name() + " orbit became non-finite at step " +
                  std::to_string(t + 1));
    }
  }
  return o;
}

bool recurrently_active(std::span<const Vector> states, size_t window, double threshold) {
  if (window == 0) throw Error("recurrently_active: window must be positive");
  for (size_t start = 0; start + window <= states.size(); start += window) {
    bool hit = false;
    for (size_t k = start; k < start + window && !hit; ++k) hit = max_abs(states[k]) > threshold;
    if (!hit) return false;
  }
  return true;
}

double PointCloud::extent(bool h_only) const {
  if (points.empty()) return 0.0;
  const size_t n = h_only ? h_dim : dim;
  double e = 0.0;
  for (size_t i = 0; i < n; ++i) e = std::max(e, hi[i] - lo[i]);
  return e;
}

double PointCloud::max_norm() const {
  double m = 0.0;
  for (const auto& p : points) m = std::max(m, max_abs(p));
  return m;
}

PointCloud attractor_sample(const InducedMap& map, size_t n_init, InitBox box, size_t burn_in,
                            size_t keep, uint64_t seed, size_t stride, size_t threads) {
  if (burn_in < 1) throw Error("attractor_sample: burn_in must be at least 1");
  if (stride == 0) throw Error("attractor_sample: stride must be positive");
  if (!(box.lo <= box.hi)) throw Error("attractor_sample: empty initial box");
  struct Run {
    bool escaped = false;
    bool active = true;
    std::vector<size_t> time;
    std::vector<Vector> points;
  };
  std::vector<Run> runs(n_init);
  const size_t last = keep == 0 ? burn_in : burn_in + (keep - 1) * stride;
  parallel_for(n_init, threads, [&](size_t i) {
    Rng rng = Rng::derive(seed, i);
    Vector u = rng_uniform(rng, box.lo, box.hi, map.dim());
    Run& run = runs[i];
    run.time.reserve(keep);
    run.points.reserve(keep);
    size_t block_len = 0;
    bool block_hit = false;
    for (size_t t = 0; t <= last; ++t) {
      if (t > 0) {
        u = map.apply(u);
        if (!all_finite(u) || max_abs(u) > kEscapeRadius) {
          run.escaped = true;
          run.time.clear();
          run.points.clear();
          return;
        }
      }
      if (t < burn_in) continue;
      block_hit = block_hit || max_abs(u) > kActivityThreshold;
      if (++block_len == kActivityWindow) {
        run.active = run.active && block_hit;
        block_len = 0;
        block_hit = false;
      }
      if (keep > 0 && (t - burn_in) % stride == 0) {
        run.time.push_back(t);
        run.points.push_back(u);
      }
    }
    if (block_len > 0) run.active = run.active && block_hit;
  });

  PointCloud c;
  c.map_name = map.name();
  c.dim = map.dim();
  c.h_dim = map.h_dim();
  c.n_init = n_init;
  c.lo.assign(c.dim, std::numeric_limits<double>::infinity());
  c.hi.assign(c.dim, -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < n_init; ++i) {
    Run& run = runs[i];
    if (run.escaped) {
      ++c.escaped;
      continue;
    }
    c.active = c.active && run.active;
    for (size_t k = 0; k < run.points.size(); ++k) {
      for (size_t d = 0; d < c.dim; ++d) {
        c.lo[d] = std::min(c.lo[d], run.points[k][d]);
        c.hi[d] = std::max(c.hi[d], run.points[k][d]);
      }
      c.init_index.push_back(i);
      c.time.push_back(run.time[k]);
      c.points.push_back(std::move(run.points[k]));
    }
  }
  if (c.points.empty()) {
    c.lo.assign(c.dim, 0.0);
    c.hi.assign(c.dim, 0.0);
  }
  return c;
}

double DivergenceTrace::max_distance() const {
  double m = 0.0;
  for (double d : distances) m = std::max(m, d);
  return m;
}

std::optional<size_t> DivergenceTrace::first_exceeding(double threshold) const {
  for (size_t t = 0; t < distances.size(); ++t) {
    if (distances[t] > threshold) return t;
  }
  return std::nullopt;
}

std::vector<DivergenceTrace> divergence_experiment(const InducedMap& map,
                                                   std::span<const double> u0, double perturb,
                                                   size_t steps, size_t trials, uint64_t seed,
                                                   size_t threads) {
  require_dim(map, u0, "divergence_experiment");
  if (!(perturb >= 0.0) || !std::isfinite(perturb)) {
    throw Error("divergence_experiment: perturbation must be finite and non-negative");
  }
  std::vector<DivergenceTrace> out(trials);
  parallel_for(trials, threads, [&](size_t j) {
    Rng rng = Rng::derive(seed, j);
    Vector u(u0.begin(), u0.end());
    Vector v = u;
    for (double& x : v) x += rng.uniform(-perturb, perturb);
    DivergenceTrace& tr = out[j];
    tr.trial = j;
    tr.perturbation_scale = perturb;
    tr.distances.reserve(steps + 1);
    tr.distances.push_back(distance(u, v));
    for (size_t t = 1; t <= steps; ++t) {
      u = map.apply(u);
      v = map.apply(v);
      if (!all_finite(u) || !all_finite(v)) {
        throw Error("divergence_experiment: orbit became non-finite at step " +
                    std::to_string(t) + " of trial " + std::to_string(j));
      }
      tr.distances.push_back(distance(u, v));
    }
  });
  return out;
}

double fraction_exceeding(std::span<const DivergenceTrace> traces, double threshold) {
  if (traces.empty()) return 0.0;
  size_t n = 0;
  for (const auto& t : traces) n += t.first_exceeding(threshold).has_value() ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(traces.size());
}

Vector forced_divergence(const ModelStack& m, std::span<const TokenId> tokens,
                         const StackState& a, const StackState& b) {
  StackState x = a;
  StackState y = b;
  Vector d;
  d.reserve(tokens.size() + 1);
  d.push_back(distance(x.flatten(), y.flatten()));
  for (TokenId tok : tokens) {
    const Vector e = embedding_column(m, tok);
    x = stack_advance(m, x, e);
    y = stack_advance(m, y, e);
    d.push_back(distance(x.flatten(), y.flatten()));
  }
  return d;
}

ImpulseResponse impulse_response(const CfnParams& p, size_t unit, size_t impulse_time,
                                 double amplitude, size_t horizon) {
  p.check_shapes();
  const size_t n = p.hidden();
  if (unit >= n) {
    throw Error("impulse_response: unit " + std::to_string(unit) + " out of range for hidden " +
                std::to_string(n));
  }
  if (impulse_time < 1 || impulse_time > horizon) {
    throw Error("impulse_response: impulse time must lie in [1, horizon]");
  }
  ImpulseResponse r;
  r.unit = unit;
  r.impulse_time = impulse_time;
  r.amplitude = amplitude;
  r.h.assign(horizon + 1, 0.0);
  r.theta.assign(horizon + 1, 0.0);
  r.eta.assign(horizon + 1, 0.0);
  r.wx.assign(horizon + 1, 0.0);
  Vector h(n, 0.0);
  Vector wx(n, 0.0);
  for (size_t t = 1; t <= horizon; ++t) {
    wx[unit] = t == impulse_time ? amplitude : 0.0;
    CfnStepResult s = cfn_step_embedded(p, h, wx);
    h = std::move(s.h);
    r.h[t] = h[unit];
    r.theta[t] = s.trace.theta[unit];
    r.eta[t] = s.trace.eta[unit];
    r.wx[t] = wx[unit];
  }
  return r;
}

DecayCertificate verify_lemma1(std::span<const double> h, std::span<const double> theta,
                               std::span<const double> eta, std::span<const double> wx,
                               size_t unit, size_t start, size_t k) {
  const size_t end = start + k;
  if (h.size() <= end || theta.size() <= end || eta.size() <= end || wx.size() <= end) {
    throw Error("verify_lemma1: traces do not cover [" + std::to_string(start) + ", " +
                std::to_string(end) + "]");
  }
  DecayCertificate c;
  c.unit = unit;
  c.start = start;
  c.k = k;
  double m = 0.0;
  for (size_t t = start; t <= end; ++t) {
    c.theta = std::max(c.theta, theta[t]);
    c.eta = std::max(c.eta, eta[t]);
    m = std::max(m, std::abs(wx[t]));
  }
  if (!(c.theta < 1.0) || !(c.eta < 1.0)) {
    throw Error("verify_lemma1: gate maximum reached 1 on unit " + std::to_string(unit) +
                " window starting at " + std::to_string(start) + "; gate trace is corrupt");
  }
  c.bound = std::pow(c.theta, static_cast<double>(k)) * std::abs(h[start]);
  if (m > 0.0) c.bound += c.eta / (1.0 - c.theta) * m;
  c.observed = std::abs(h[end]);
  c.satisfied = c.observed <= c.bound + kDecaySlack;
  return c;
}

std::vector<DecayCertificate> certify_impulse(const ImpulseResponse& r) {
  std::vector<DecayCertificate> out;
  const size_t horizon = r.h.size() - 1;
  for (size_t k = 0; r.impulse_time + k <= horizon; ++k) {
    out.push_back(verify_lemma1(r.h, r.theta, r.eta, r.wx, r.unit, r.impulse_time, k));
  }
  return out;
}

Lemma1Report lemma1_suite(const Lemma1Config& cfg) {
  if (cfg.min_dim < 1 || cfg.min_dim > cfg.max_dim) throw Error("lemma1: invalid dimension range");
  if (cfg.max_start < 1) throw Error("lemma1: max_start must be at least 1");
  struct Result {
    size_t checked = 0;
    size_t violated = 0;
    std::optional<DecayCertificate> first_violation;
    std::vector<DecayCertificate> certs;
  };
  std::vector<Result> results(cfg.instances);
  parallel_for(cfg.instances, cfg.threads, [&](size_t inst) {
    Rng rng = Rng::derive(cfg.seed, inst);
    const size_t span_dims = cfg.max_dim - cfg.min_dim + 1;
    const size_t n = cfg.min_dim + static_cast<size_t>(rng.next_u64() % span_dims);
    const size_t in = 1 + static_cast<size_t>(rng.next_u64() % cfg.max_dim);
    CfnParams p = CfnParams::zeros(n, in);
    p.visit([&](const std::string&, auto& t) {
      for (double& v : std::span<double>(t.data(), t.size())) {
        v = rng.uniform(-cfg.weight_range, cfg.weight_range);
      }
    });
    const size_t len = cfg.max_start + cfg.max_k;
    std::vector<Vector> h(n, Vector(len + 1, 0.0));
    std::vector<Vector> th(n, Vector(len + 1, 0.0));
    std::vector<Vector> et(n, Vector(len + 1, 0.0));
    std::vector<Vector> wx(n, Vector(len + 1, 0.0));
    Vector state(n, 0.0);
    for (size_t t = 1; t <= len; ++t) {
      const Vector x = rng_uniform(rng, -cfg.input_range, cfg.input_range, in);
      const Vector w = matvec(p.w, x);
      CfnStepResult s = cfn_step(p, state, x);
      state = std::move(s.h);
      for (size_t i = 0; i < n; ++i) {
        h[i][t] = state[i];
        th[i][t] = s.trace.theta[i];
        et[i][t] = s.trace.eta[i];
        wx[i][t] = w[i];
      }
    }
    Result& res = results[inst];
    for (size_t i = 0; i < n; ++i) {
      for (size_t start = 1; start <= cfg.max_start; ++start) {
        for (size_t k = 0; k <= cfg.max_k; ++k) {
          DecayCertificate c = verify_lemma1(h[i], th[i], et[i], wx[i], i, start, k);
          ++res.checked;
          if (!c.satisfied) {
            ++res.violated;
            if (!res.first_violation) res.first_violation = c;
          }
          if (cfg.keep_certificates) res.certs.push_back(c);
        }
      }
    }
  });
  Lemma1Report rep;
  rep.instances = cfg.instances;
  for (auto& r : results) {
    rep.checked += r.checked;
    rep.violated += r.violated;
    if (!rep.first_violation && r.first_violation) rep.first_violation = r.first_violation;
    rep.certificates.insert(rep.certificates.end(), r.certs.begin(), r.certs.end());
  }
  return rep;
}

Vector cfn_zero_input_map(const Matrix& u_theta, std::span<const double> b_theta,
                          std::span<const double> u) {
  if (u_theta.rows() != u.size() || u_theta.cols() != u.size() || b_theta.size() != u.size()) {
    throw Error("cfn map: U_theta " + u_theta.shape_string() + " and b_theta of length " +
                std::to_string(b_theta.size()) + " do not match state of length " +
                std::to_string(u.size()));
  }
  Vector z(b_theta.begin(), b_theta.end());
  matvec_acc(u_theta, u, z);
  for (size_t i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i]) * std::tanh(u[i]);
  return z;
}

double contraction_rate(const Matrix& u_theta, std::span<const double> b_theta) {
  return sigmoid(inf_norm(u_theta) + max_abs(b_theta));
}

std::optional<size_t> zero_attractor_step_bound(double rate, double first_norm, double tol) {
  if (!(tol > 0.0)) throw Error("zero attractor: tolerance must be positive");
  if (first_norm < tol) return 1;
  if (!(rate < 1.0)) return std::nullopt;
  const double steps = std::floor(std::log(tol / first_norm) / std::log(rate));
  if (!(steps < 1e18)) return std::nullopt;
  return 2 + static_cast<size_t>(steps);
}

ZeroAttractorReport verify_zero_attractor(const Matrix& u_theta, std::span<const double> b_theta,
                                          size_t n_init, double radius, uint64_t seed,
                                          double tol, size_t max_steps, size_t threads) {
  const size_t n = u_theta.rows();
  if (u_theta.cols() != n || b_theta.size() != n) {
    throw Error("zero attractor: U_theta must be square and match b_theta");
  }
  ZeroAttractorReport rep;
  rep.trials = n_init;
  rep.rate = contraction_rate(u_theta, b_theta);
  rep.steps.assign(n_init, 0);
  std::vector<uint8_t> converged(n_init, 0);
  std::vector<uint8_t> within(n_init, 0);
  parallel_for(n_init, threads, [&](size_t i) {
    Rng rng = Rng::derive(seed, i);
    Vector u = rng_uniform(rng, -radius, radius, n);
    std::optional<size_t> bound;
    size_t t = 0;
    while (max_abs(u) >= tol && t < max_steps) {
      u = cfn_zero_input_map(u_theta, b_theta, u);
      ++t;
      if (t == 1) bound = zero_attractor_step_bound(rep.rate, max_abs(u), tol);
    }
    rep.steps[i] = t;
    converged[i] = max_abs(u) < tol;
    within[i] = converged[i] && (t == 0 || !bound || t <= *bound);
  });
  rep.passed = true;
  for (size_t i = 0; i < n_init; ++i) {
    rep.worst_steps = std::max(rep.worst_steps, rep.steps[i]);
    if (!converged[i]) rep.passed = false;
    if (!within[i]) ++rep.bound_violations;
  }
  rep.passed = rep.passed && rep.bound_violations == 0;
  return rep;
}

bool MultilayerDecayReport::upper_retains_longer() const {
  return !degenerate && layers.size() >= 2 && layers[1].half_life > layers[0].half_life;
}

MultilayerDecayReport verify_multilayer_decay(const ModelStack& m, std::span<const TokenId> warm,
                                              size_t horizon) {
  std::vector<Vector> emb;
  emb.reserve(warm.size());
  for (TokenId t : warm) emb.push_back(embedding_column(m, t));
  return verify_multilayer_decay_embedded(m, emb, horizon);
}

MultilayerDecayReport verify_multilayer_decay_embedded(const ModelStack& m,
                                                       std::span<const Vector> warm,
                                                       size_t horizon) {
  m.check();
  if (m.kind != CellKind::kCfn) throw Error("multilayer decay: model must be a CFN stack");
  if (m.depth < 2) throw Error("multilayer decay: depth must be at least 2");
  if (horizon < 1) throw Error("multilayer decay: horizon must be at least 1");
  MultilayerDecayReport rep;
  rep.cutoff = warm.size();
  rep.horizon = horizon;
  StackState s = StackState::zeros(m);
  for (const Vector& e : warm) s = stack_advance(m, s, e);
  const Vector zero(m.hidden, 0.0);
  rep.traces.assign(m.depth, {});
  for (size_t k = 0; k <= horizon; ++k) {
    if (k > 0) s = stack_advance(m, s, zero);
    for (size_t l = 0; l < m.depth; ++l) rep.traces[l].push_back(s.layers[l].h);
  }

  rep.degenerate = true;
  double c_running = 0.0;
  for (size_t l = 0; l < m.depth; ++l) {
    const auto& tr = rep.traces[l];
    LayerDecay d;
    d.layer = l;
    d.retention.assign(m.hidden, -1);
    for (size_t i = 0; i < m.hidden; ++i) {
      for (size_t k = 0; k <= horizon; ++k) {
        if (std::abs(tr[k][i]) > kRetentionThreshold) d.retention[i] = static_cast<long>(k);
      }
    }
    std::vector<double> peak(m.hidden, 0.0);
    for (size_t i = 0; i < m.hidden; ++i) {
      for (size_t k = 0; k <= horizon; ++k) peak[i] = std::max(peak[i], std::abs(tr[k][i]));
    }
    std::vector<size_t> order(m.hidden);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (d.retention[a] != d.retention[b]) return d.retention[a] > d.retention[b];
      return peak[a] > peak[b];
    });
    order.resize(std::min(kSlowestUnits, m.hidden));
    d.slowest_units = order;

    d.envelope.assign(horizon + 1, 0.0);
    d.layer_max.assign(horizon + 1, 0.0);
    for (size_t k = 0; k <= horizon; ++k) {
      for (size_t i : d.slowest_units) d.envelope[k] = std::max(d.envelope[k], std::abs(tr[k][i]));
      d.layer_max[k] = max_abs(tr[k]);
    }
    if (*std::max_element(d.envelope.begin(), d.envelope.end()) > 0.0) rep.degenerate = false;
    const double top = *std::max_element(d.envelope.begin() + 1, d.envelope.end());
    for (size_t k = 1; k <= horizon; ++k) {
      if (top > 0.0 && d.envelope[k] > 0.5 * top) d.half_life = k;
    }
    c_running = std::max(c_running, d.layer_max[0]);
    d.fitted_c = c_running;
    if (d.fitted_c > 0.0) {
      for (size_t k = 1; k <= horizon; ++k) {
        if (d.layer_max[k] == 0.0) continue;
        const double poly = std::pow(1.0 + static_cast<double>(k), static_cast<double>(l));
        const double ratio = d.layer_max[k] / (d.fitted_c * poly);
        d.fitted_theta = std::max(d.fitted_theta, std::pow(ratio, 1.0 / static_cast<double>(k)));
      }
    }
    d.final_max_abs = d.layer_max[horizon];
    rep.layers.push_back(std::move(d));
  }
  return rep;
}

double lyapunov_estimate(const InducedMap& map, std::span<const double> u0, size_t steps,
                         size_t renorm_interval) {
  require_dim(map, u0, "lyapunov_estimate");
  if (renorm_interval == 0 || steps < renorm_interval) {
    throw Error("lyapunov_estimate: need steps >= renorm_interval > 0");
  }
  const size_t n = map.dim();
  const double step = kLyapunovSeparation / std::sqrt(static_cast<double>(n));
  Vector u(u0.begin(), u0.end());
  Vector v = u;
  for (double& x : v) x += step;
  const size_t rounds = steps / renorm_interval;
  double sum = 0.0;
  for (size_t r = 0; r < rounds; ++r) {
    for (size_t t = 0; t < renorm_interval; ++t) {
      u = map.apply(u);
      v = map.apply(v);
    }
    if (!all_finite(u) || !all_finite(v) || max_abs(u) > kEscapeRadius) {
      throw Error("lyapunov_estimate: orbit escaped by step " +
                  std::to_string((r + 1) * renorm_interval));
    }
    const double d = distance(u, v);
    if (d == 0.0) return -std::numeric_limits<double>::infinity();
    sum += std::log(d / kLyapunovSeparation);
    const double scale = kLyapunovSeparation / d;
    for (size_t i = 0; i < n; ++i) v[i] = u[i] + scale * (v[i] - u[i]);
  }
  return sum / static_cast<double>(rounds * renorm_interval);
}

void write_orbit_csv(std::ostream& os, const Orbit& orbit) {
  const size_t dim = orbit.u0.size();
  os << "t";
  for (size_t d = 0; d < dim; ++d) os << ",u" << d;
  os << '\n';
  for (size_t k = 0; k < orbit.states.size(); ++k) {
    os << orbit.time_of(k);
    for (double x : orbit.states[k]) os << ',' << fmt(x);
    os << '\n';
  }
}

void write_cloud_csv(std::ostream& os, const PointCloud& cloud, bool h_only) {
  const size_t n = h_only ? cloud.h_dim : cloud.dim;
  os << "init,t";
  for (size_t d = 0; d < n; ++d) os << ",x" << d;
  os << '\n';
  for (size_t k = 0; k < cloud.points.size(); ++k) {
    os << cloud.init_index[k] << ',' << cloud.time[k];
    for (size_t d = 0; d < n; ++d) os << ',' << fmt(cloud.points[k][d]);
    os << '\n';
  }
}

void write_cloud_meta(std::ostream& os, const PointCloud& cloud) {
  os << "component,lo,hi\n";
  for (size_t d = 0; d < cloud.dim; ++d) {
    os << d << ',' << fmt(cloud.lo[d]) << ',' << fmt(cloud.hi[d]) << '\n';
  }
}

void write_divergence_csv(std::ostream& os, std::span<const DivergenceTrace> traces) {
  os << "trial,t,distance\n";
  for (const auto& tr : traces) {
    for (size_t t = 0; t < tr.distances.size(); ++t) {
      os << tr.trial << ',' << t << ',' << fmt(tr.distances[t]) << '\n';
    }
  }
}

void write_decay_csv(std::ostream& os, const MultilayerDecayReport& report) {
  os << "t,layer,unit,value\n";
  for (const auto& d : report.layers) {
    for (size_t i : d.slowest_units) {
      for (size_t k = 0; k <= report.horizon; ++k) {
        os << report.cutoff + k << ',' << d.layer + 1 << ',' << i << ','
           << fmt(report.traces[d.layer][k][i]) << '\n';
      }
    }
  }
}

void write_certificates_csv(std::ostream& os, std::span<const DecayCertificate> certs) {
  os << "i,T,k,Theta,H,bound,observed,satisfied\n";
  for (const auto& c : certs) {
    os << c.unit << ',' << c.start << ',' << c.k << ',' << fmt(c.theta) << ',' << fmt(c.eta)
       << ',' << fmt(c.bound) << ',' << fmt(c.observed) << ',' << (c.satisfied ? 1 : 0) << '\n';
  }
}

}  // namespace cfnlab
