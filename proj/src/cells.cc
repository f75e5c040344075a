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

#include "cfnlab/cells.h"

#include <cmath>
#include <string>

namespace cfnlab {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void require_square(const Matrix& m, size_t n, const char* name) {
  require(m.rows() == n && m.cols() == n,
          std::string(name) + " is " + m.shape_string() + ", expected " +
              std::to_string(n) + "x" + std::to_string(n));
}

void require_shape(const Matrix& m, size_t r, size_t c, const char* name) {
  require(m.rows() == r && m.cols() == c,
          std::string(name) + " is " + m.shape_string() + ", expected " +
              std::to_string(r) + "x" + std::to_string(c));
}

void require_len(std::span<const double> v, size_t n, const char* name) {
  require(v.size() == n, std::string(name) + " has length " + std::to_string(v.size()) +
                             ", expected " + std::to_string(n));
}

void check_inputs(const StepInputs& in, size_t hidden, size_t input) {
  require_len(in.h_prev, hidden, "h_prev");
  require_len(in.h_gate, hidden, "h_gate");
  require_len(in.x_main, input, "x_main");
  require_len(in.x_gate, input, "x_gate");
}

// b + R h + V x, accumulated in that order.
Vector preact(const Vector& b, const Matrix& rec, std::span<const double> h,
              const Matrix& in, std::span<const double> x) {
  Vector z = b;
  matvec_acc(rec, h, z);
  matvec_acc(in, x, z);
  return z;
}

void sigmoid_inplace(Vector& v) {
  for (auto& x : v) x = sigmoid(x);
}

void tanh_inplace(Vector& v) {
  for (auto& x : v) x = std::tanh(x);
}

void resize_zero(StepInputGrads& g, size_t hidden, size_t input) {
  g.h_prev.assign(hidden, 0.0);
  g.h_gate.assign(hidden, 0.0);
  g.x_main.assign(input, 0.0);
  g.x_gate.assign(input, 0.0);
  g.c_prev.clear();
}

void add_into(Vector& acc, const Vector& v) {
  for (size_t k = 0; k < v.size(); ++k) acc[k] += v[k];
}

}  // namespace

CfnParams CfnParams::zeros(size_t hidden, size_t input) {
  return {Matrix(hidden, input), Matrix(hidden, hidden), Matrix(hidden, input),
          Vector(hidden, 0.0),  Matrix(hidden, hidden), Matrix(hidden, input),
          Vector(hidden, 0.0)};
}

void CfnParams::check_shapes() const {
  const size_t h = hidden(), x = input();
  require_shape(w, h, x, "CFN W");
  require_square(u_theta, h, "CFN U_theta");
  require_square(u_eta, h, "CFN U_eta");
  require_shape(v_theta, h, x, "CFN V_theta");
  require_shape(v_eta, h, x, "CFN V_eta");
  require_len(b_theta, h, "CFN b_theta");
  require_len(b_eta, h, "CFN b_eta");
}

LstmParams LstmParams::zeros(size_t hidden, size_t input) {
  LstmParams p;
  for (Matrix* m : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) *m = Matrix(hidden, hidden);
  for (Matrix* m : {&p.v_i, &p.v_f, &p.v_o, &p.v_g}) *m = Matrix(hidden, input);
  for (Vector* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) b->assign(hidden, 0.0);
  return p;
}

void LstmParams::check_shapes() const {
  const size_t h = hidden(), x = input();
  for (const Matrix* m : {&w_i, &w_f, &w_o, &w_g}) require_square(*m, h, "LSTM W_*");
  for (const Matrix* m : {&v_i, &v_f, &v_o, &v_g}) require_shape(*m, h, x, "LSTM V_*");
  for (const Vector* b : {&b_i, &b_f, &b_o, &b_g}) require_len(*b, h, "LSTM b_*");
}

GruParams GruParams::zeros(size_t hidden, size_t input) {
  return {Matrix(hidden, hidden), Matrix(hidden, hidden), Matrix(hidden, hidden),
          Matrix(hidden, input),  Matrix(hidden, input),  Matrix(hidden, input),
          Vector(hidden, 0.0),    Vector(hidden, 0.0)};
}

void GruParams::check_shapes() const {
  const size_t h = hidden(), x = input();
  for (const Matrix* m : {&w_z, &w_r, &u}) require_square(*m, h, "GRU W_*/U");
  for (const Matrix* m : {&v_z, &v_r, &v_u}) require_shape(*m, h, x, "GRU V_*");
  require_len(b_z, h, "GRU b_z");
  require_len(b_r, h, "GRU b_r");
}

// --- forward ---------------------------------------------------------------

Vector cfn_forward(const CfnParams& p, const StepInputs& in, CfnCache& cache) {
  const size_t n = p.hidden();
  check_inputs(in, n, p.input());
  cache.theta = preact(p.b_theta, p.u_theta, in.h_gate, p.v_theta, in.x_gate);
  cache.eta = preact(p.b_eta, p.u_eta, in.h_gate, p.v_eta, in.x_gate);
  sigmoid_inplace(cache.theta);
  sigmoid_inplace(cache.eta);
  cache.tanh_h_prev = tanh(in.h_prev);
  cache.tanh_wx = matvec(p.w, in.x_main);
  tanh_inplace(cache.tanh_wx);

  Vector h(n);
  for (size_t k = 0; k < n; ++k) {
    h[k] = cache.theta[k] * cache.tanh_h_prev[k] + cache.eta[k] * cache.tanh_wx[k];
  }
  return h;
}

LstmState lstm_forward(const LstmParams& p, const StepInputs& in,
                       std::span<const double> c_prev, LstmCache& cache) {
  const size_t n = p.hidden();
  check_inputs(in, n, p.input());
  require_len(c_prev, n, "c_prev");
  cache.i = preact(p.b_i, p.w_i, in.h_gate, p.v_i, in.x_gate);
  cache.f = preact(p.b_f, p.w_f, in.h_gate, p.v_f, in.x_gate);
  cache.o = preact(p.b_o, p.w_o, in.h_gate, p.v_o, in.x_gate);
  cache.g = preact(p.b_g, p.w_g, in.h_prev, p.v_g, in.x_main);
  sigmoid_inplace(cache.i);
  sigmoid_inplace(cache.f);
  sigmoid_inplace(cache.o);
  tanh_inplace(cache.g);
  cache.c_prev.assign(c_prev.begin(), c_prev.end());

  LstmState next{Vector(n), Vector(n)};
  for (size_t k = 0; k < n; ++k) {
    next.c[k] = cache.f[k] * c_prev[k] + cache.i[k] * cache.g[k];
  }
  cache.c = next.c;
  cache.tanh_c = tanh(next.c);
  for (size_t k = 0; k < n; ++k) next.h[k] = cache.o[k] * cache.tanh_c[k];
  return next;
}

Vector gru_forward(const GruParams& p, const StepInputs& in, GruCache& cache) {
  const size_t n = p.hidden();
  check_inputs(in, n, p.input());
  cache.z = preact(p.b_z, p.w_z, in.h_gate, p.v_z, in.x_gate);
  cache.r = preact(p.b_r, p.w_r, in.h_gate, p.v_r, in.x_gate);
  sigmoid_inplace(cache.z);
  sigmoid_inplace(cache.r);
  cache.rh.resize(n);
  for (size_t k = 0; k < n; ++k) cache.rh[k] = cache.r[k] * in.h_prev[k];
  cache.u.assign(n, 0.0);
  matvec_acc(p.u, cache.rh, cache.u);
  matvec_acc(p.v_u, in.x_main, cache.u);
  tanh_inplace(cache.u);

  Vector h(n);
  for (size_t k = 0; k < n; ++k) {
    h[k] = (1.0 - cache.z[k]) * in.h_prev[k] + cache.z[k] * cache.u[k];
  }
  return h;
}

CfnStepResult cfn_step(const CfnParams& p, std::span<const double> h_prev,
                       std::span<const double> x) {
  CfnCache cache;
  Vector h = cfn_forward(p, StepInputs::plain(h_prev, x), cache);
  return {std::move(h), {std::move(cache.theta), std::move(cache.eta)}};
}

CfnStepResult cfn_step_embedded(const CfnParams& p, std::span<const double> h_prev,
                                std::span<const double> wx) {
  const size_t n = p.hidden();
  require_len(h_prev, n, "h_prev");
  require_len(wx, n, "wx");
  GateTrace trace{p.b_theta, p.b_eta};
  matvec_acc(p.u_theta, h_prev, trace.theta);
  matvec_acc(p.u_eta, h_prev, trace.eta);
  sigmoid_inplace(trace.theta);
  sigmoid_inplace(trace.eta);
  Vector h(n);
  for (size_t k = 0; k < n; ++k) {
    h[k] = trace.theta[k] * std::tanh(h_prev[k]) + trace.eta[k] * std::tanh(wx[k]);
  }
  return {std::move(h), std::move(trace)};
}

LstmState lstm_step(const LstmParams& p, const LstmState& prev, std::span<const double> x) {
  LstmCache cache;
  return lstm_forward(p, StepInputs::plain(prev.h, x), prev.c, cache);
}

Vector gru_step(const GruParams& p, std::span<const double> h_prev, std::span<const double> x) {
  GruCache cache;
  return gru_forward(p, StepInputs::plain(h_prev, x), cache);
}

// --- backward --------------------------------------------------------------

void cfn_backward(const CfnParams& p, const StepInputs& in, const CfnCache& cache,
                  std::span<const double> dh, CfnParams& grads, StepInputGrads& out) {
  const size_t n = p.hidden();
  resize_zero(out, n, p.input());
  Vector dz_theta(n), dz_eta(n), dz_w(n);
  for (size_t k = 0; k < n; ++k) {
    const double th = cache.theta[k], et = cache.eta[k];
    dz_theta[k] = dh[k] * cache.tanh_h_prev[k] * th * (1.0 - th);
    dz_eta[k] = dh[k] * cache.tanh_wx[k] * et * (1.0 - et);
    dz_w[k] = dh[k] * et * (1.0 - cache.tanh_wx[k] * cache.tanh_wx[k]);
    out.h_prev[k] = dh[k] * th * (1.0 - cache.tanh_h_prev[k] * cache.tanh_h_prev[k]);
  }
  outer_acc(grads.u_theta, dz_theta, in.h_gate);
  outer_acc(grads.v_theta, dz_theta, in.x_gate);
  outer_acc(grads.u_eta, dz_eta, in.h_gate);
  outer_acc(grads.v_eta, dz_eta, in.x_gate);
  outer_acc(grads.w, dz_w, in.x_main);
  add_into(grads.b_theta, dz_theta);
  add_into(grads.b_eta, dz_eta);

  matvec_t_acc(p.u_theta, dz_theta, out.h_gate);
  matvec_t_acc(p.u_eta, dz_eta, out.h_gate);
  matvec_t_acc(p.v_theta, dz_theta, out.x_gate);
  matvec_t_acc(p.v_eta, dz_eta, out.x_gate);
  matvec_t_acc(p.w, dz_w, out.x_main);
}

void lstm_backward(const LstmParams& p, const StepInputs& in, const LstmCache& cache,
                   std::span<const double> dh, std::span<const double> dc,
                   LstmParams& grads, StepInputGrads& out) {
  const size_t n = p.hidden();
  resize_zero(out, n, p.input());
  out.c_prev.assign(n, 0.0);
  Vector dz_i(n), dz_f(n), dz_o(n), dz_g(n);
  for (size_t k = 0; k < n; ++k) {
    const double i = cache.i[k], f = cache.f[k], o = cache.o[k], g = cache.g[k];
    const double tc = cache.tanh_c[k];
    const double dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
    dz_o[k] = dh[k] * tc * o * (1.0 - o);
    dz_i[k] = dc_total * g * i * (1.0 - i);
    dz_f[k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
    dz_g[k] = dc_total * i * (1.0 - g * g);
    out.c_prev[k] = dc_total * f;
  }
  outer_acc(grads.w_i, dz_i, in.h_gate);
  outer_acc(grads.w_f, dz_f, in.h_gate);
  outer_acc(grads.w_o, dz_o, in.h_gate);
  outer_acc(grads.w_g, dz_g, in.h_prev);
  outer_acc(grads.v_i, dz_i, in.x_gate);
  outer_acc(grads.v_f, dz_f, in.x_gate);
  outer_acc(grads.v_o, dz_o, in.x_gate);
  outer_acc(grads.v_g, dz_g, in.x_main);
  add_into(grads.b_i, dz_i);
  add_into(grads.b_f, dz_f);
  add_into(grads.b_o, dz_o);
  add_into(grads.b_g, dz_g);

  matvec_t_acc(p.w_i, dz_i, out.h_gate);
  matvec_t_acc(p.w_f, dz_f, out.h_gate);
  matvec_t_acc(p.w_o, dz_o, out.h_gate);
  matvec_t_acc(p.w_g, dz_g, out.h_prev);
  matvec_t_acc(p.v_i, dz_i, out.x_gate);
  matvec_t_acc(p.v_f, dz_f, out.x_gate);
  matvec_t_acc(p.v_o, dz_o, out.x_gate);
  matvec_t_acc(p.v_g, dz_g, out.x_main);
}

void gru_backward(const GruParams& p, const StepInputs& in, const GruCache& cache,
                  std::span<const double> dh, GruParams& grads, StepInputGrads& out) {
  const size_t n = p.hidden();
  resize_zero(out, n, p.input());
  Vector dz_z(n), dz_u(n);
  for (size_t k = 0; k < n; ++k) {
    const double z = cache.z[k], u = cache.u[k];
    dz_z[k] = dh[k] * (u - in.h_prev[k]) * z * (1.0 - z);
    dz_u[k] = dh[k] * z * (1.0 - u * u);
    out.h_prev[k] = dh[k] * (1.0 - z);
  }
  Vector d_rh(n, 0.0);
  matvec_t_acc(p.u, dz_u, d_rh);
  Vector dz_r(n);
  for (size_t k = 0; k < n; ++k) {
    const double r = cache.r[k];
    dz_r[k] = d_rh[k] * in.h_prev[k] * r * (1.0 - r);
    out.h_prev[k] += d_rh[k] * r;
  }
  outer_acc(grads.w_z, dz_z, in.h_gate);
  outer_acc(grads.w_r, dz_r, in.h_gate);
  outer_acc(grads.u, dz_u, cache.rh);
  outer_acc(grads.v_z, dz_z, in.x_gate);
  outer_acc(grads.v_r, dz_r, in.x_gate);
  outer_acc(grads.v_u, dz_u, in.x_main);
  add_into(grads.b_z, dz_z);
  add_into(grads.b_r, dz_r);

  matvec_t_acc(p.w_z, dz_z, out.h_gate);
  matvec_t_acc(p.w_r, dz_r, out.h_gate);
  matvec_t_acc(p.v_z, dz_z, out.x_gate);
  matvec_t_acc(p.v_r, dz_r, out.x_gate);
  matvec_t_acc(p.v_u, dz_u, out.x_main);
}

}  // namespace cfnlab
