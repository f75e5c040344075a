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

#include "cfnlab/numkit.h"

#include <algorithm>
#include <cmath>

namespace cfnlab {
namespace {

uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::string shape(size_t r, size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

Matrix Matrix::identity(size_t n) {
  Matrix m(n, n);
  for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = r ? rows.begin()->size() : 0;
  Matrix m(r, c);
  size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw Error("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

std::string Matrix::shape_string() const { return shape(rows_, cols_); }

Vector matvec(const Matrix& m, std::span<const double> v) {
  Vector out(m.rows(), 0.0);
  matvec_acc(m, v, out);
  return out;
}

namespace {

// Four interleaved partial sums, combined in a fixed order.
double dot(std::span<const double> a, std::span<const double> b) {
  const size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  size_t c = 0;
  for (; c + 4 <= n; c += 4) {
    s0 += a[c] * b[c];
    s1 += a[c + 1] * b[c + 1];
    s2 += a[c + 2] * b[c + 2];
    s3 += a[c + 3] * b[c + 3];
  }
  for (; c < n; ++c) s0 += a[c] * b[c];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void matvec_acc(const Matrix& m, std::span<const double> v, std::span<double> out) {
  if (m.cols() != v.size() || m.rows() != out.size()) {
    throw Error("matvec: matrix " + m.shape_string() + " vs vector " +
                std::to_string(v.size()) + " -> " + std::to_string(out.size()));
  }
  for (size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out[r] += dot(row, v);
  }
}

void matvec_t_acc(const Matrix& m, std::span<const double> v, std::span<double> out) {
  if (m.rows() != v.size() || m.cols() != out.size()) {
    throw Error("matvec_t: matrix " + m.shape_string() + " vs vector " +
                std::to_string(v.size()) + " -> " + std::to_string(out.size()));
  }
  for (size_t r = 0; r < m.rows(); ++r) {
    const double s = v[r];
    if (s == 0.0) continue;
    const auto row = m.row(r);
    for (size_t c = 0; c < row.size(); ++c) out[c] += s * row[c];
  }
}

void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b) {
  if (m.rows() != a.size() || m.cols() != b.size()) {
    throw Error("outer: matrix " + m.shape_string() + " vs " + shape(a.size(), b.size()));
  }
  for (size_t r = 0; r < m.rows(); ++r) {
    const double s = a[r];
    if (s == 0.0) continue;
    auto row = m.row(r);
    for (size_t c = 0; c < row.size(); ++c) row[c] += s * b[c];
  }
}

double sigmoid(double x) {
  // Branch keeps exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector sigmoid(std::span<const double> v) {
  Vector out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return sigmoid(x); });
  return out;
}

Vector tanh(std::span<const double> v) {
  Vector out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::tanh(x); });
  return out;
}

double l2norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double x : m.row(r)) s += std::abs(x);
    best = std::max(best, s);
  }
  return best;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Rng::Rng(uint64_t seed) : seed_(seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Vector rng_uniform(Rng& rng, double lo, double hi, size_t n) {
  if (lo > hi) {
    throw Error("rng_uniform: lo " + std::to_string(lo) + " > hi " + std::to_string(hi));
  }
  Vector out(n);
  for (auto& x : out) x = rng.uniform(lo, hi);
  return out;
}

Vector rng_normal(Rng& rng, double mean, double stddev, size_t n) {
  Vector out(n);
  for (auto& x : out) x = mean + stddev * rng.normal();
  return out;
}

Matrix rng_uniform_matrix(Rng& rng, double lo, double hi, size_t rows, size_t cols) {
  if (lo > hi) throw Error("rng_uniform_matrix: lo > hi");
  Matrix m(rows, cols);
  for (auto& x : m.values()) x = rng.uniform(lo, hi);
  return m;
}

}  // namespace cfnlab
