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

// Autonomous maps induced by recurrent cells and experiments on their orbits.

#ifndef CFNLAB_DYNAMICS_H_
#define CFNLAB_DYNAMICS_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cfnlab/cells.h"
#include "cfnlab/lm_stack.h"
#include "cfnlab/numkit.h"
#include "cfnlab/reference_maps.h"

namespace cfnlab {

enum class MapKind { kCfn, kLstm, kGru, kHenon, kStack };

std::string to_string(MapKind kind);

// u ↦ Ψ(u, 0). LSTM state is (h, c); stacks are flattened per layer as
// (h¹, c¹, h², c², …) with c present only for LSTM layers.
class InducedMap {
 public:
  static InducedMap cfn(CfnParams p);
  static InducedMap lstm(LstmParams p);
  static InducedMap gru(GruParams p);
  static InducedMap henon(HenonParams p = {});
  static InducedMap stack(std::shared_ptr<const ModelStack> m);

  MapKind kind() const { return kind_; }
  size_t dim() const { return dim_; }
  // Number of leading state components that are hidden activations.
  size_t h_dim() const { return h_dim_; }
  const std::string& name() const { return name_; }

  Vector apply(std::span<const double> u) const;

 private:
  using Params = std::variant<CfnParams, LstmParams, GruParams, HenonParams,
                              std::shared_ptr<const ModelStack>>;
  InducedMap(MapKind kind, Params params, size_t dim, size_t h_dim, std::string name);

  MapKind kind_;
  Params params_;
  size_t dim_;
  size_t h_dim_;
  std::string name_;
};

InducedMap induced_from_model(const ModelStack& m);
InducedMap induced_from_model(const CfnParams& p);
InducedMap induced_from_model(const LstmParams& p);
InducedMap induced_from_model(const GruParams& p);

struct Orbit {
  std::string map_name;
  Vector u0;
  size_t t_start = 0;
  size_t t_end = 0;
  size_t stride = 1;
  std::vector<Vector> states;

  size_t time_of(size_t k) const { return t_start + k * stride; }
};

// Stores u_t for t ∈ {keep_from, keep_from + stride, …} ∩ [0, steps].
Orbit iterate(const InducedMap& map, std::span<const double> u0, size_t steps,
              size_t keep_from = 0, size_t stride = 1);

// True iff every complete window of `window` consecutive states contains a
// state with ‖u‖∞ > threshold.
bool recurrently_active(std::span<const Vector> states, size_t window, double threshold);

struct InitBox {
  double lo = 0.0;
  double hi = 1.0;
};

struct PointCloud {
  std::string map_name;
  size_t dim = 0;
  size_t h_dim = 0;
  size_t n_init = 0;
  size_t escaped = 0;
  // Per kept point: index of its initial state and its time step.
  std::vector<size_t> init_index;
  std::vector<size_t> time;
  std::vector<Vector> points;
  Vector lo;
  Vector hi;
  // All initial states whose orbits stayed active over every 1000-step window.
  bool active = true;

  // Largest bounding-box side over the first h_dim (or all) components.
  double extent(bool h_only) const;
  double max_norm() const;
};

// Iterates each of n_init orbits from a uniform draw in box^dim; keeps
// t = burn_in, burn_in + stride, … (keep points). Orbits that leave
// [−1e6, 1e6]^dim or become non-finite are counted and dropped.
PointCloud attractor_sample(const InducedMap& map, size_t n_init, InitBox box, size_t burn_in,
                            size_t keep, uint64_t seed, size_t stride = 1, size_t threads = 1);

struct DivergenceTrace {
  size_t trial = 0;
  double perturbation_scale = 0.0;
  Vector distances;

  double max_distance() const;
  std::optional<size_t> first_exceeding(double threshold) const;
};

// Pairs u0 with u0 + U[−perturb, perturb]^dim and records the Euclidean
// full-state distance for t = 0..steps.
std::vector<DivergenceTrace> divergence_experiment(const InducedMap& map,
                                                   std::span<const double> u0, double perturb,
                                                   size_t steps, size_t trials, uint64_t seed,
                                                   size_t threads = 1);

double fraction_exceeding(std::span<const DivergenceTrace> traces, double threshold);

// Two stack states driven by the same tokens; distance per step t = 0..n.
Vector forced_divergence(const ModelStack& m, std::span<const TokenId> tokens,
                         const StackState& a, const StackState& b);

struct ImpulseResponse {
  size_t unit = 0;
  size_t impulse_time = 0;
  double amplitude = 0.0;
  // Index t = 0..horizon; entry 0 is the initial state with zero gates.
  Vector h;
  Vector theta;
  Vector eta;
  Vector wx;
};

// h₀ = 0 and (Wx_t)(unit) = amplitude at t = T, zero elsewhere.
ImpulseResponse impulse_response(const CfnParams& p, size_t unit, size_t impulse_time,
                                 double amplitude, size_t horizon);

struct DecayCertificate {
  size_t unit = 0;
  size_t start = 0;
  size_t k = 0;
  double theta = 0.0;
  double eta = 0.0;
  double bound = 0.0;
  double observed = 0.0;
  bool satisfied = false;
};

inline constexpr double kDecaySlack = 1e-12;

// Traces are indexed by time and must cover [start, start + k].
DecayCertificate verify_lemma1(std::span<const double> h, std::span<const double> theta,
                               std::span<const double> eta, std::span<const double> wx,
                               size_t unit, size_t start, size_t k);

std::vector<DecayCertificate> certify_impulse(const ImpulseResponse& r);

struct Lemma1Config {
  size_t instances = 1000;
  size_t min_dim = 1;
  size_t max_dim = 16;
  double weight_range = 2.0;
  double input_range = 1.0;
  size_t max_start = 10;
  size_t max_k = 50;
  uint64_t seed = 0;
  size_t threads = 1;
  bool keep_certificates = false;
};

struct Lemma1Report {
  size_t instances = 0;
  size_t checked = 0;
  size_t violated = 0;
  std::optional<DecayCertificate> first_violation;
  std::vector<DecayCertificate> certificates;

  bool passed() const { return violated == 0 && checked > 0; }
};

// Random CFN cells driven by random inputs from h₀ = 0; every unit, every
// start in [1, max_start] and every k ≤ max_k is certified.
Lemma1Report lemma1_suite(const Lemma1Config& cfg);

// u ↦ σ(U_θ u + b_θ) ⊙ tanh(u).
Vector cfn_zero_input_map(const Matrix& u_theta, std::span<const double> b_theta,
                          std::span<const double> u);

// σ(C) with C = ‖U_θ‖∞ + ‖b_θ‖∞.
double contraction_rate(const Matrix& u_theta, std::span<const double> b_theta);

// Steps after which ‖u_t‖∞ < tol is guaranteed given ‖u₁‖∞ ≤ first_norm;
// nullopt when σ(C) rounds to 1.
std::optional<size_t> zero_attractor_step_bound(double rate, double first_norm, double tol);

struct ZeroAttractorReport {
  bool passed = false;
  size_t trials = 0;
  size_t worst_steps = 0;
  size_t bound_violations = 0;
  double rate = 0.0;
  std::vector<size_t> steps;
};

// Initial states uniform in [−radius, radius]^dim; passes iff every orbit
// reaches ‖u‖∞ < tol within max_steps and within the geometric bound.
ZeroAttractorReport verify_zero_attractor(const Matrix& u_theta, std::span<const double> b_theta,
                                          size_t n_init, double radius, uint64_t seed,
                                          double tol = 1e-8, size_t max_steps = 100000,
                                          size_t threads = 1);

struct LayerDecay {
  size_t layer = 0;
  std::vector<size_t> slowest_units;
  // Last k with |h(i)| > threshold, −1 if never; indexed by unit.
  std::vector<long> retention;
  // Max over the slowest units of |h_{T+k}(i)|, k = 0..horizon.
  Vector envelope;
  // Max over all units of |h_{T+k}(i)|.
  Vector layer_max;
  // Last k >= 1 at which the envelope exceeds half its peak over k >= 1, the
  // steps taken without input.
  size_t half_life = 0;
  double fitted_c = 0.0;
  double fitted_theta = 0.0;
  double final_max_abs = 0.0;
};

struct MultilayerDecayReport {
  bool degenerate = false;
  size_t cutoff = 0;
  size_t horizon = 0;
  std::vector<LayerDecay> layers;
  // traces[l][k] is h^(l) at T + k.
  std::vector<std::vector<Vector>> traces;

  bool upper_retains_longer() const;
};

inline constexpr size_t kSlowestUnits = 10;
inline constexpr double kRetentionThreshold = 1e-3;

MultilayerDecayReport verify_multilayer_decay(const ModelStack& m, std::span<const TokenId> warm,
                                              size_t horizon);
MultilayerDecayReport verify_multilayer_decay_embedded(const ModelStack& m,
                                                       std::span<const Vector> warm,
                                                       size_t horizon);

// Largest Lyapunov exponent per step from two orbits kept 1e-9 apart.
double lyapunov_estimate(const InducedMap& map, std::span<const double> u0, size_t steps,
                         size_t renorm_interval);

inline constexpr double kLyapunovSeparation = 1e-9;

void write_orbit_csv(std::ostream& os, const Orbit& orbit);
void write_cloud_csv(std::ostream& os, const PointCloud& cloud, bool h_only);
void write_cloud_meta(std::ostream& os, const PointCloud& cloud);
void write_divergence_csv(std::ostream& os, std::span<const DivergenceTrace> traces);
void write_decay_csv(std::ostream& os, const MultilayerDecayReport& report);
void write_certificates_csv(std::ostream& os, std::span<const DecayCertificate> certs);

}  // namespace cfnlab

#endif  // CFNLAB_DYNAMICS_H_
