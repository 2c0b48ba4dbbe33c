#include <doctest.h>

#include <cmath>

#include "diffsg/errors.hpp"
#include "diffsg/nn.hpp"
#include "diffsg/rng.hpp"

using namespace diffsg;
using namespace diffsg::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

ParamViews views(DenseLayer& l) {
  return {{l.weight.data(), static_cast<std::size_t>(l.weight.size())},
          {l.bias.data(), static_cast<std::size_t>(l.bias.size())}};
}

ConstParamViews views(const DenseGrads& g) {
  return {{g.weight.data(), static_cast<std::size_t>(g.weight.size())},
          {g.bias.data(), static_cast<std::size_t>(g.bias.size())}};
}

}  // namespace

TEST_CASE("rng is reproducible and streams differ") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    (void)c;
  }
  CHECK(Rng(42).next_u64() != Rng(43).next_u64());
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(Rng(5).derive(3).next_u64() == Rng(derive_seed(5, 3)).next_u64());
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(7);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7u);
}

TEST_CASE("init_dense") {
  Rng rng(0);
  SUBCASE("bias starts at zero") {
    const DenseLayer l = init_dense(1, 1, rng);
    CHECK(l.bias(0) == 0.0);
  }
  SUBCASE("same seed, same weights") {
    Rng r1(0), r2(0);
    CHECK(init_dense(64, 64, r1).weight == init_dense(64, 64, r2).weight);
  }
  SUBCASE("fan-in scaled spread") {
    const DenseLayer l = init_dense(256, 64, rng);
    const double mean = l.weight.mean();
    const double sd = std::sqrt((l.weight.array() - mean).square().sum() / (l.weight.size() - 1));
    CHECK(sd > 0.8 / 16.0);
    CHECK(sd < 1.2 / 16.0);
  }
  SUBCASE("bad dimensions") {
    CHECK_THROWS_AS(init_dense(0, 3, rng), std::invalid_argument);
    CHECK_THROWS_AS(init_dense(3, -1, rng), std::invalid_argument);
  }
}

TEST_CASE("dense_forward") {
  DenseLayer id{Matrix::Identity(2, 2), Vector::Zero(2)};
  Matrix x(2, 1);
  x << 3, -1;
  CHECK(dense_forward(id, x) == x);

  DenseLayer zero{Matrix::Zero(1, 3), Vector::Constant(1, 5.0)};
  CHECK(dense_forward(zero, Matrix::Random(3, 1))(0, 0) == 5.0);

  Rng rng(3);
  DenseLayer l{random_matrix(2, 3, rng), random_matrix(2, 1, rng).col(0)};
  const Matrix in = random_matrix(3, 1, rng);
  const Matrix out = dense_forward(l, in);
  for (int r = 0; r < 2; ++r) {
    double s = l.bias(r);
    for (int c = 0; c < 3; ++c) s += l.weight(r, c) * in(c, 0);
    CHECK(std::abs(out(r, 0) - s) < 1e-12);
  }
  CHECK_THROWS_AS(dense_forward(l, Matrix::Zero(2, 1)), std::invalid_argument);
}

TEST_CASE("dense_backward") {
  SUBCASE("zero upstream") {
    Rng rng(1);
    const DenseLayer l = init_dense(3, 2, rng);
    const DenseGrads g = dense_backward(l, random_matrix(3, 4, rng), Matrix::Zero(2, 4));
    CHECK(g.weight.isZero());
    CHECK(g.bias.isZero());
    CHECK(g.input.isZero());
  }
  SUBCASE("scalar chain rule") {
    DenseLayer l{Matrix::Constant(1, 1, 2.0), Vector::Zero(1)};
    const DenseGrads g = dense_backward(l, Matrix::Constant(1, 1, 3.0), Matrix::Constant(1, 1, 1.0));
    CHECK(g.weight(0, 0) == 3.0);
    CHECK(g.bias(0) == 1.0);
    CHECK(g.input(0, 0) == 2.0);
  }
  SUBCASE("finite differences") {
    Rng rng(2);
    DenseLayer l = init_dense(4, 3, rng);
    l.bias = random_matrix(3, 1, rng).col(0);
    const Matrix x = random_matrix(4, 5, rng);
    const Matrix target = random_matrix(3, 5, rng);
    auto loss = [&] { return 0.5 * (dense_forward(l, x) - target).squaredNorm(); };
    const DenseGrads g = dense_backward(l, x, dense_forward(l, x) - target);
    CHECK(finite_diff_check(loss, views(l), views(g), 1e-6) < 1e-5);
  }
  SUBCASE("shape mismatch") {
    Rng rng(2);
    const DenseLayer l = init_dense(4, 3, rng);
    CHECK_THROWS_AS(dense_backward(l, Matrix::Zero(4, 2), Matrix::Zero(2, 2)), std::invalid_argument);
  }
}

TEST_CASE("silu") {
  CHECK(silu(Matrix::Zero(1, 1))(0, 0) == 0.0);
  const double ten = 10.0 / (1.0 + std::exp(-10.0));
  CHECK(silu(Matrix::Constant(1, 1, 10.0))(0, 0) == doctest::Approx(ten).epsilon(1e-14));
  CHECK(ten == doctest::Approx(9.9995).epsilon(1e-5));
  CHECK_THROWS_AS(silu(Matrix::Constant(1, 1, NAN)), std::invalid_argument);

  Rng rng(4);
  Matrix x = random_matrix(6, 3, rng) * 3.0;
  const Matrix up = random_matrix(6, 3, rng);
  const Matrix g = silu_backward(x, up);
  ParamViews pv{{x.data(), static_cast<std::size_t>(x.size())}};
  ConstParamViews gv{{g.data(), static_cast<std::size_t>(g.size())}};
  auto loss = [&] { return (silu(x).array() * up.array()).sum(); };
  CHECK(finite_diff_check(loss, pv, gv, 1e-6) < 1e-6);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters") {
    std::vector<double> w{1.0, -2.0}, g{0.0, 0.0};
    ParamViews pv{{w.data(), w.size()}};
    AdamState s = make_adam_state(nn::as_const(pv));
    adam_step(pv, {{g.data(), g.size()}}, s);
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
    CHECK(s.step_count == 1);
  }
  SUBCASE("first step moves lr against the gradient sign") {
    std::vector<double> w{0.0, 0.0}, g{3.0, -0.5};
    ParamViews pv{{w.data(), w.size()}};
    AdamState s = make_adam_state(nn::as_const(pv));
    adam_step(pv, {{g.data(), g.size()}}, s);
    CHECK(w[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("quadratic descent matches an independent recursion") {
    std::vector<double> w{1.0}, g{0.0};
    ParamViews pv{{w.data(), 1}};
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState s = make_adam_state(nn::as_const(pv), cfg);
    double ref = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 100; ++t) {
      g[0] = 2.0 * w[0];
      adam_step(pv, {{g.data(), 1}}, s);
      const double gr = 2.0 * ref;
      m = 0.9 * m + 0.1 * gr;
      v = 0.999 * v + 0.001 * gr * gr;
      ref -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      REQUIRE(s.second_moment[0][0] >= 0.0);
    }
    CHECK(s.step_count == 100);
    CHECK(std::abs(w[0] - ref) < 1e-12);
    CHECK(std::abs(w[0]) < 0.1);
  }
  SUBCASE("non-finite update is reported") {
    std::vector<double> w{1.0}, g{NAN};
    ParamViews pv{{w.data(), 1}};
    AdamState s = make_adam_state(nn::as_const(pv));
    CHECK_THROWS_AS(adam_step(pv, {{g.data(), 1}}, s), NumericError);
  }
  SUBCASE("shape mismatch") {
    std::vector<double> w{1.0, 2.0}, g{1.0};
    ParamViews pv{{w.data(), 2}};
    AdamState s = make_adam_state(nn::as_const(pv));
    CHECK_THROWS_AS(adam_step(pv, {{g.data(), 1}}, s), std::invalid_argument);
  }
}

TEST_CASE("finite_diff_check") {
  std::vector<double> w{0.3, -1.2, 2.0};
  ParamViews pv{{w.data(), w.size()}};
  const std::vector<double> coef{1.5, -0.5, 4.0};
  auto linear = [&] { return coef[0] * w[0] + coef[1] * w[1] + coef[2] * w[2]; };
  CHECK(finite_diff_check(linear, pv, {{coef.data(), coef.size()}}, 1e-4) < 1e-8);

  std::vector<double> bad{coef[0] * 1.01, coef[1], coef[2]};
  CHECK(finite_diff_check(linear, pv, {{bad.data(), bad.size()}}, 1e-4) > 1e-3);
  CHECK_THROWS_AS(finite_diff_check(linear, pv, {{coef.data(), coef.size()}}, 1e-2),
                  std::invalid_argument);
}
