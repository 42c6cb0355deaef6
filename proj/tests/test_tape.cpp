// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nnpforge/random.hpp"
#include "nnpforge/tape.hpp"
#include "support/oracles.hpp"

using namespace nnpforge;

namespace {

// A scalar pipeline exercising most ops: inputs x (3x4) and w (4x2).
double pipeline(const std::vector<double>& flat) {
  Tensor x(3, 4, {flat.begin(), flat.begin() + 12});
  Tensor w(4, 2, {flat.begin() + 12, flat.begin() + 20});
  Tape t;
  const int xi = t.leaf(x, true);
  const int wi = t.leaf(w, true);
  const int y = t.matmul(xi, wi);                       // 3x2
  const int s = t.ssp(y);
  const int g = t.exp(t.scale(t.mul(s, s), -0.4));
  const int r = t.sqrt(t.add_scalar(t.row_sum(g), 1.0));  // 3x1
  const int b = t.mul_col_vec(t.row_bcast(r, 2), t.sigmoid(t.row_sum(y)));
  const int z = t.sum(t.mul(b, t.cos(t.sin(y))));
  return t.value(z).v[0];
}

}  // namespace

TEST_CASE("op forward values on hand cases") {
  Tape t;
  const int a = t.leaf(Tensor(2, 2, {1, 2, 3, 4}), false);
  const int b = t.leaf(Tensor(2, 2, {5, 6, 7, 8}), false);
  CHECK(t.value(t.matmul(a, b)).v == std::vector<double>{19, 22, 43, 50});
  CHECK(t.value(t.matmul(a, b, true, false)).v == std::vector<double>{26, 30, 38, 44});
  CHECK(t.value(t.matmul(a, b, false, true)).v == std::vector<double>{17, 23, 39, 53});
  CHECK(t.value(t.add(a, b)).v == std::vector<double>{6, 8, 10, 12});
  CHECK(t.value(t.sub(a, b)).v == std::vector<double>{-4, -4, -4, -4});
  CHECK(t.value(t.mul(a, b)).v == std::vector<double>{5, 12, 21, 32});
  const int rv = t.leaf(Tensor(1, 2, {10, 20}), false);
  CHECK(t.value(t.add_row_vec(a, rv)).v == std::vector<double>{11, 22, 13, 24});
  const int cv = t.leaf(Tensor(2, 1, {2, 3}), false);
  CHECK(t.value(t.mul_col_vec(a, cv)).v == std::vector<double>{2, 4, 9, 12});
  CHECK(t.value(t.row_sum(a)).v == std::vector<double>{3, 7});
  CHECK(t.value(t.col_sum(a)).v == std::vector<double>{4, 6});
  CHECK(t.value(t.row_bcast(cv, 3)).v == std::vector<double>{2, 2, 2, 3, 3, 3});
  CHECK(t.value(t.col_bcast(rv, 2)).v == std::vector<double>{10, 20, 10, 20});
  CHECK(t.value(t.sum(a)).v == std::vector<double>{10});
  const int sc = t.leaf(Tensor::scalar(2.5), false);
  CHECK(t.value(t.bcast(sc, 2, 2)).v == std::vector<double>{2.5, 2.5, 2.5, 2.5});
  CHECK(t.value(t.gather(a, {1, 0, 1})).v == std::vector<double>{3, 4, 1, 2, 3, 4});
  CHECK(t.value(t.scatter(t.gather(a, {1, 0, 1}), {0, 0, 1}, 2)).v ==
        std::vector<double>{4, 6, 3, 4});
}

TEST_CASE("shifted softplus and sigmoid scalar behaviour") {
  Tape t;
  const int x = t.leaf(Tensor(1, 3, {0.0, -40.0, 100.0}), false);
  const auto& s = t.value(t.ssp(x)).v;
  CHECK(s[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(100.0 - std::log(2.0)).epsilon(1e-12));
  const auto& g = t.value(t.sigmoid(x)).v;
  CHECK(g[0] == doctest::Approx(0.5));
  CHECK(g[2] == doctest::Approx(1.0));
}

TEST_CASE("gradient matches central finite differences on a mixed pipeline") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> flat(20);
    for (auto& v : flat) v = rng.uniform(-1.0, 1.0);

    Tensor x(3, 4, {flat.begin(), flat.begin() + 12});
    Tensor w(4, 2, {flat.begin() + 12, flat.begin() + 20});
    Tape t;
    const int xi = t.leaf(x, true);
    const int wi = t.leaf(w, true);
    const int y = t.matmul(xi, wi);
    const int s = t.ssp(y);
    const int g = t.exp(t.scale(t.mul(s, s), -0.4));
    const int r = t.sqrt(t.add_scalar(t.row_sum(g), 1.0));
    const int b = t.mul_col_vec(t.row_bcast(r, 2), t.sigmoid(t.row_sum(y)));
    const int z = t.sum(t.mul(b, t.cos(t.sin(y))));

    const int wrt[] = {xi, wi};
    const auto grads = t.gradient(z, wrt);
    REQUIRE(grads[0] >= 0);
    REQUIRE(grads[1] >= 0);

    for (std::size_t i = 0; i < 20; ++i) {
      const double fd = oracles::central_difference(pipeline, flat, i, 1e-6);
      const double an = i < 12 ? t.value(grads[0]).v[i] : t.value(grads[1]).v[i - 12];
      CHECK(an == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("gradient through gather with duplicate indices") {
  // f = sum(square(gather(x, {0,0,1}))) -> df/dx0 counts both copies.
  Tape t;
  const int x = t.leaf(Tensor(2, 1, {3.0, 5.0}), true);
  const int gth = t.gather(x, {0, 0, 1});
  const int z = t.sum(t.mul(gth, gth));
  const int wrt[] = {x};
  const auto g = t.gradient(z, wrt);
  CHECK(t.value(g[0]).v[0] == doctest::Approx(2 * 3.0 * 2));  // two copies
  CHECK(t.value(g[0]).v[1] == doctest::Approx(2 * 5.0));
}

TEST_CASE("emitted gradients are differentiable (second order)") {
  // f(x) = sum(ssp(x)^2); g = df/dx is emitted on tape. h = sum(g * u) is a
  // scalar whose x-gradient must match finite differences of g.
  Rng rng(13);
  std::vector<double> x0(6);
  for (auto& v : x0) v = rng.uniform(-1.5, 1.5);
  std::vector<double> u(6);
  for (auto& v : u) v = rng.uniform(-1.0, 1.0);

  auto grad_dot_u = [&](const std::vector<double>& xv) {
    Tape t;
    const int x = t.leaf(Tensor(2, 3, xv), true);
    const int s = t.ssp(x);
    const int f = t.sum(t.mul(s, s));
    const int wrt[] = {x};
    const auto g = t.gradient(f, wrt);
    const int ui = t.constant(Tensor(2, 3, u));
    const int h = t.sum(t.mul(g[0], ui));
    return t.value(h).v[0];
  };

  Tape t;
  const int x = t.leaf(Tensor(2, 3, x0), true);
  const int s = t.ssp(x);
  const int f = t.sum(t.mul(s, s));
  const int wrt[] = {x};
  const auto g = t.gradient(f, wrt);
  const int ui = t.constant(Tensor(2, 3, u));
  const int h = t.sum(t.mul(g[0], ui));
  const auto g2 = t.gradient(h, wrt);
  REQUIRE(g2[0] >= 0);

  for (std::size_t i = 0; i < 6; ++i) {
    const double fd = oracles::central_difference(grad_dot_u, x0, i, 1e-6);
    CHECK(t.value(g2[0]).v[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("gradient is zero-free for non-dependent leaves") {
  Tape t;
  const int a = t.leaf(Tensor::scalar(2.0), true);
  const int b = t.leaf(Tensor::scalar(3.0), true);
  const int z = t.scale(a, 4.0);  // no dependence on b
  const int wrt[] = {a, b};
  const auto g = t.gradient(t.sum(z), wrt);
  CHECK(g[0] >= 0);
  CHECK(g[1] == -1);
  CHECK(t.value(g[0]).v[0] == doctest::Approx(4.0));
}

TEST_CASE("gradient rejects non-scalar outputs and bad wrt order") {
  Tape t;
  const int a = t.leaf(Tensor(2, 2, {1, 2, 3, 4}), true);
  const int y = t.scale(a, 2.0);
  const int wrt[] = {a};
  CHECK_THROWS_AS(t.gradient(y, wrt), std::invalid_argument);
  const int z = t.sum(y);
  const int later = t.scale(a, 1.0);
  const int wrt2[] = {later};
  CHECK_THROWS_AS(t.gradient(z, wrt2), std::invalid_argument);
}

TEST_CASE("shape checks throw") {
  Tape t;
  const int a = t.leaf(Tensor(2, 2), false);
  const int b = t.leaf(Tensor(3, 2), false);
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.gather(a, {2}), std::invalid_argument);
  CHECK_THROWS_AS(t.scatter(a, {0}, 2), std::invalid_argument);
}

TEST_CASE("empty-row tensors flow through the op set") {
  Tape t;
  const int x = t.leaf(Tensor(4, 3), true);
  const int e = t.gather(x, std::vector<int>{});  // 0x3
  const int w = t.leaf(Tensor(3, 5, std::vector<double>(15, 0.5)), true);
  const int y = t.matmul(e, w);                   // 0x5
  const int back = t.scatter(y, std::vector<int>{}, 4);  // 4x5 zeros
  CHECK(t.value(back).rows == 4);
  for (double v : t.value(back).v) CHECK(v == 0.0);
}
