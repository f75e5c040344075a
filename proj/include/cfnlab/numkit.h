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

// Dense vectors and matrices, elementwise nonlinearities and a seeded RNG.
// Everything is 64-bit; chaotic trajectories are sensitive at the 1e-7 level.

#ifndef CFNLAB_NUMKIT_H_
#define CFNLAB_NUMKIT_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfnlab {

// Raised for every fatal domain error (shape mismatch, NaN, bad input...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

// m · v. Throws on m.cols() != v.size().
Vector matvec(const Matrix& m, std::span<const double> v);
// out += m · v
void matvec_acc(const Matrix& m, std::span<const double> v, std::span<double> out);
// out += mᵀ · v
void matvec_t_acc(const Matrix& m, std::span<const double> v, std::span<double> out);
// m += a · bᵀ
void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b);

double sigmoid(double x);
Vector sigmoid(std::span<const double> v);
Vector tanh(std::span<const double> v);

double l2norm(std::span<const double> v);
double max_abs(std::span<const double> v);
// Induced infinity norm (maximum absolute row sum).
double inf_norm(const Matrix& m);

bool all_finite(std::span<const double> v);

// xoshiro256** seeded through splitmix64. The output stream depends only on
// the seed, so runs reproduce across platforms and compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  // Independent stream for trial `index` of an experiment seeded with `seed`.
  static Rng derive(uint64_t seed, uint64_t index) { return Rng(seed ^ index); }

  uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box–Muller (the spare value is cached).
  double normal();

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// n i.i.d. samples from [lo, hi). Throws if lo > hi.
Vector rng_uniform(Rng& rng, double lo, double hi, size_t n);
Vector rng_normal(Rng& rng, double mean, double stddev, size_t n);
Matrix rng_uniform_matrix(Rng& rng, double lo, double hi, size_t rows, size_t cols);

}  // namespace cfnlab

#endif  // CFNLAB_NUMKIT_H_
