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

#include <cmath>
#include <vector>

#include "doctest.h"

#include "cfnlab/numkit.h"

using cfnlab::Matrix;
using cfnlab::Rng;
using cfnlab::Vector;

TEST_CASE("matvec of a 2x2 matrix") {
  const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
  const Vector v{1, 1};
  CHECK(cfnlab::matvec(m, v) == Vector{3, 7});
}

TEST_CASE("matvec rejects mismatched shapes") {
  const Matrix m(2, 3);
  const Vector v{1, 1};
  CHECK_THROWS_AS(cfnlab::matvec(m, v), cfnlab::Error);
  Vector out(3);
  CHECK_THROWS_AS(cfnlab::matvec_t_acc(m, Vector{1, 1, 1}, out), cfnlab::Error);
}

TEST_CASE("matvec, transpose and outer product agree with naive loops") {
  Rng rng(7);
  const Matrix m = cfnlab::rng_uniform_matrix(rng, -1, 1, 5, 9);
  const Vector x = cfnlab::rng_uniform(rng, -1, 1, 9);
  const Vector y = cfnlab::rng_uniform(rng, -1, 1, 5);
  const Vector mx = cfnlab::matvec(m, x);
  Vector mty(9, 0.0);
  cfnlab::matvec_t_acc(m, y, mty);
  Matrix o(5, 9);
  cfnlab::outer_acc(o, y, x);
  for (size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (size_t c = 0; c < 9; ++c) s += m(r, c) * x[c];
    CHECK(mx[r] == doctest::Approx(s).epsilon(1e-14));
    for (size_t c = 0; c < 9; ++c) CHECK(o(r, c) == y[r] * x[c]);
  }
  for (size_t c = 0; c < 9; ++c) {
    double s = 0.0;
    for (size_t r = 0; r < 5; ++r) s += m(r, c) * y[r];
    CHECK(mty[c] == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("sigmoid values and stability") {
  CHECK(cfnlab::sigmoid(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(cfnlab::sigmoid(-1.0) == doctest::Approx(0.2689414213699951).epsilon(1e-15));
  CHECK(cfnlab::sigmoid(0.0) == 0.5);
  CHECK(cfnlab::sigmoid(800.0) == 1.0);
  CHECK(cfnlab::sigmoid(-800.0) == 0.0);
  for (double x = -30.0; x <= 30.0; x += 0.37) {
    CHECK(std::abs(cfnlab::sigmoid(x) + cfnlab::sigmoid(-x) - 1.0) <= 1e-15);
    CHECK(cfnlab::sigmoid(x) == doctest::Approx(1.0 / (1.0 + std::exp(-x))).epsilon(1e-14));
  }
}

TEST_CASE("elementwise tanh and norms") {
  const Vector v{-2.0, 0.0, 0.5};
  const Vector t = cfnlab::tanh(v);
  for (size_t i = 0; i < v.size(); ++i) CHECK(t[i] == std::tanh(v[i]));
  CHECK(cfnlab::l2norm(Vector{3, 4}) == 5.0);
  CHECK(cfnlab::max_abs(Vector{1, -7, 3}) == 7.0);
  CHECK(cfnlab::inf_norm(Matrix::from_rows({{1, -2}, {-3, 0.5}})) == 3.5);
  CHECK(cfnlab::all_finite(v));
  CHECK_FALSE(cfnlab::all_finite(Vector{1.0, NAN}));
  CHECK_FALSE(cfnlab::all_finite(Vector{INFINITY}));
}

TEST_CASE("rng follows xoshiro256** seeded by splitmix64") {
  Rng a(0);
  CHECK(a.next_u64() == 0x99ec5f36cb75f2b4ULL);
  CHECK(a.next_u64() == 0xbf6e1f784956452aULL);
  CHECK(a.next_u64() == 0x1a5f849d4933e6e0ULL);
  Rng b(42);
  CHECK(b.next_u64() == 0x15780b2e0c2ec716ULL);
  CHECK(b.next_u64() == 0x6104d9866d113a7eULL);
  CHECK(b.next_u64() == 0xae17533239e499a1ULL);
}

TEST_CASE("rng streams are reproducible and derived streams are distinct") {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  Rng d = Rng::derive(5, 3);
  Rng e(5 ^ 3);
  CHECK(d.next_u64() == e.next_u64());
}

TEST_CASE("uniform draws have the right range and mean") {
  Rng rng(2024);
  const size_t n = 100000;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.002);
  const Vector w = cfnlab::rng_uniform(rng, -3.0, -2.0, 1000);
  for (double x : w) CHECK((x >= -3.0 && x < -2.0));
  CHECK_THROWS_AS(cfnlab::rng_uniform(rng, 1.0, 0.0, 3), cfnlab::Error);
}

TEST_CASE("normal draws have unit variance") {
  Rng rng(99);
  const Vector v = cfnlab::rng_normal(rng, 0.0, 1.0, 100000);
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) s += (x - m) * (x - m);
  s /= v.size();
  CHECK(std::abs(m) < 0.01);
  CHECK(std::abs(s - 1.0) < 0.02);
}

TEST_CASE("matrix helpers") {
  const Matrix i = Matrix::identity(3);
  CHECK(i(0, 0) == 1.0);
  CHECK(i(0, 1) == 0.0);
  CHECK(i.shape_string() == "3x3");
  Matrix m(2, 2);
  m.fill(4.0);
  CHECK(m(1, 1) == 4.0);
  CHECK(m == Matrix::from_rows({{4, 4}, {4, 4}}));
}
