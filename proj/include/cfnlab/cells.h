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

// Single-step recurrences for the Chaos-Free Network (CFN), LSTM and GRU.
//
//   CFN:  θ = σ(U_θ h + V_θ x + b_θ),  η = σ(U_η h + V_η x + b_η)
//         h' = θ ⊙ tanh(h) + η ⊙ tanh(W x)
//   LSTM: i, f, o = σ(W_• h + V_• x + b_•),  g = tanh(W_g h + V_g x + b_g)
//         c' = f ⊙ c + i ⊙ g,  h' = o ⊙ tanh(c')
//   GRU:  z, r = σ(W_• h + V_• x + b_•),  u = tanh(U (r ⊙ h) + V_u x)
//         h' = (1 − z) ⊙ h + z ⊙ u
//
// Setting every input matrix V_• (and W for the CFN) to zero, or feeding
// x = 0, yields the autonomous map induced by the cell.
//
// Each pre-activation is accumulated as bias, then recurrent term, then input
// term, in that order, so results are bit-reproducible.

#ifndef CFNLAB_CELLS_H_
#define CFNLAB_CELLS_H_

#include <span>
#include <utility>

#include "cfnlab/numkit.h"

namespace cfnlab {

struct CfnParams {
  Matrix w;        // hidden x input
  Matrix u_theta;  // hidden x hidden
  Matrix v_theta;  // hidden x input
  Vector b_theta;
  Matrix u_eta;
  Matrix v_eta;
  Vector b_eta;

  static CfnParams zeros(size_t hidden, size_t input);
  size_t hidden() const { return u_theta.rows(); }
  size_t input() const { return w.cols(); }
  void check_shapes() const;

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F> static void visit_impl(Self& s, F& f) {
    f("w", s.w);
    f("u_theta", s.u_theta);
    f("v_theta", s.v_theta);
    f("b_theta", s.b_theta);
    f("u_eta", s.u_eta);
    f("v_eta", s.v_eta);
    f("b_eta", s.b_eta);
  }
};

struct LstmParams {
  Matrix w_i, w_f, w_o, w_g;  // recurrent, hidden x hidden
  Matrix v_i, v_f, v_o, v_g;  // input, hidden x input
  Vector b_i, b_f, b_o, b_g;

  static LstmParams zeros(size_t hidden, size_t input);
  size_t hidden() const { return w_i.rows(); }
  size_t input() const { return v_i.cols(); }
  void check_shapes() const;

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F> static void visit_impl(Self& s, F& f) {
    f("w_i", s.w_i);
    f("w_f", s.w_f);
    f("w_o", s.w_o);
    f("w_g", s.w_g);
    f("v_i", s.v_i);
    f("v_f", s.v_f);
    f("v_o", s.v_o);
    f("v_g", s.v_g);
    f("b_i", s.b_i);
    f("b_f", s.b_f);
    f("b_o", s.b_o);
    f("b_g", s.b_g);
  }
};

struct GruParams {
  Matrix w_z, w_r, u;  // recurrent, hidden x hidden
  Matrix v_z, v_r, v_u;  // input, hidden x input
  Vector b_z, b_r;

  static GruParams zeros(size_t hidden, size_t input);
  size_t hidden() const { return w_z.rows(); }
  size_t input() const { return v_z.cols(); }
  void check_shapes() const;

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F> static void visit_impl(Self& s, F& f) {
    f("w_z", s.w_z);
    f("w_r", s.w_r);
    f("u", s.u);
    f("v_z", s.v_z);
    f("v_r", s.v_r);
    f("v_u", s.v_u);
    f("b_z", s.b_z);
    f("b_r", s.b_r);
  }
};

// Gate values at one step. CFN: (θ, η). LSTM: (f, i). GRU: (z, r).
struct GateTrace {
  Vector theta;
  Vector eta;
};

struct CfnStepResult {
  Vector h;
  GateTrace trace;
};

struct LstmState {
  Vector h;
  Vector c;
};

CfnStepResult cfn_step(const CfnParams& p, std::span<const double> h_prev,
                       std::span<const double> x);
// CFN step driven directly by an embedded feature vector `wx` in place of W x,
// with no input contribution to the gates.
CfnStepResult cfn_step_embedded(const CfnParams& p, std::span<const double> h_prev,
                                std::span<const double> wx);
LstmState lstm_step(const LstmParams& p, const LstmState& prev, std::span<const double> x);
Vector gru_step(const GruParams& p, std::span<const double> h_prev, std::span<const double> x);

// ---------------------------------------------------------------------------
// Training-time interface. Dropout makes the gates see different copies of the
// state and input than the carry/candidate path; for the plain cell all four
// views alias.

struct StepInputs {
  std::span<const double> h_prev;  // carried state
  std::span<const double> h_gate;  // state fed to the sigmoid gates
  std::span<const double> x_main;  // input to the candidate path
  std::span<const double> x_gate;  // input fed to the sigmoid gates

  static StepInputs plain(std::span<const double> h, std::span<const double> x) {
    return {h, h, x, x};
  }
};

// Gradients with respect to the four input views (and c_prev for the LSTM).
struct StepInputGrads {
  Vector h_prev, h_gate, x_main, x_gate, c_prev;
};

struct CfnCache {
  Vector theta, eta, tanh_h_prev, tanh_wx;
};

struct LstmCache {
  Vector i, f, o, g, c_prev, c, tanh_c;
};

struct GruCache {
  Vector z, r, u, rh;
};

Vector cfn_forward(const CfnParams& p, const StepInputs& in, CfnCache& cache);
LstmState lstm_forward(const LstmParams& p, const StepInputs& in,
                       std::span<const double> c_prev, LstmCache& cache);
Vector gru_forward(const GruParams& p, const StepInputs& in, GruCache& cache);

// Backward passes accumulate parameter gradients into `grads` and overwrite
// `out` with the gradients of the input views.
void cfn_backward(const CfnParams& p, const StepInputs& in, const CfnCache& cache,
                  std::span<const double> dh, CfnParams& grads, StepInputGrads& out);
void lstm_backward(const LstmParams& p, const StepInputs& in, const LstmCache& cache,
                   std::span<const double> dh, std::span<const double> dc,
                   LstmParams& grads, StepInputGrads& out);
void gru_backward(const GruParams& p, const StepInputs& in, const GruCache& cache,
                  std::span<const double> dh, GruParams& grads, StepInputGrads& out);

}  // namespace cfnlab

#endif  // CFNLAB_CELLS_H_
