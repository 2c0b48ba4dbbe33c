#include <doctest.h>

#include <cmath>

#include "diffsg/diffusion.hpp"
#include "diffsg/errors.hpp"

using namespace diffsg;
using nn::Matrix;
using nn::Vector;

namespace {

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

DenoiserParams random_params(const DenoiserConfig& c, Rng& rng) {
  DenoiserParams p = init_denoiser(c, rng);
  for_each_tensor(p, [&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = 0.3 * rng.normal();
  });
  return p;
}

}  // namespace

TEST_CASE("cosine schedule") {
  const NoiseSchedule s = cosine_schedule(20);
  REQUIRE(s.steps == 20);
  REQUIRE(s.alpha_bar.size() == 21u);
  double prod = 1.0;
  for (int t = 1; t <= 20; ++t) {
    CHECK(s.alpha[t] > 0.0);
    CHECK(s.alpha[t] < 1.0);
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    prod *= s.alpha[t];
    CHECK(std::abs(s.alpha_bar[t] - prod) < 1e-12);
  }
  CHECK(s.alpha_bar[20] < 0.05);
  CHECK(s.alpha_bar[1] > 0.9);

  // Unclipped interior steps follow the closed form directly.
  auto f = [](double t) { return std::pow(std::cos((t / 20.0 + 0.008) / 1.008 * M_PI / 2), 2); };
  CHECK(s.alpha_bar[1] == doctest::Approx(f(1) / f(0)).epsilon(1e-12));
  CHECK(s.alpha_bar[10] == doctest::Approx(f(10) / f(0)).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_schedule(0), std::invalid_argument);
}

TEST_CASE("q_sample") {
  const NoiseSchedule s = cosine_schedule(20);
  Rng rng(1);
  const Matrix y0 = normal_matrix(4, 1, rng);
  SUBCASE("zero noise scales the clean sample") {
    const Matrix yt = q_sample(y0, 7, Matrix::Zero(4, 1), s);
    CHECK((yt - std::sqrt(s.alpha_bar[7]) * y0).norm() < 1e-15);
  }
  SUBCASE("t = T from zero is nearly the noise") {
    const Matrix eps = normal_matrix(4, 1, rng);
    const Matrix yt = q_sample(Matrix::Zero(4, 1), 20, eps, s);
    CHECK((yt - std::sqrt(1 - s.alpha_bar[20]) * eps).norm() < 1e-15);
    CHECK((yt - eps).norm() < 0.05 * eps.norm());
  }
  SUBCASE("second moment") {
    const int n = 10000, t = 9;
    const Matrix eps = normal_matrix(4, n, rng);
    const Matrix y0s = y0.replicate(1, n);
    const double m = q_sample(y0s, t, eps, s).colwise().squaredNorm().mean();
    const double expect = s.alpha_bar[t] * y0.squaredNorm() + (1 - s.alpha_bar[t]) * 4;
    CHECK(std::abs(m - expect) < 0.05 * expect);
  }
  SUBCASE("round trip through predict_x0") {
    for (int t = 1; t <= 20; ++t) {
      const Matrix eps = normal_matrix(4, 3, rng);
      const Matrix y = normal_matrix(4, 3, rng);
      CHECK((predict_x0(q_sample(y, t, eps, s), t, eps, s) - y).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  CHECK_THROWS_AS(q_sample(y0, 0, y0, s), std::invalid_argument);
  CHECK_THROWS_AS(q_sample(y0, 21, y0, s), std::invalid_argument);
}

TEST_CASE("guidance") {
  Rng rng(2);
  const Matrix c = normal_matrix(3, 2, rng), u = normal_matrix(3, 2, rng);
  CHECK(guided_eps(c, u, 0.0) == c);
  CHECK((guided_eps(c, c, 500.0) - c).norm() < 1e-12);
  CHECK(((guided_eps(c, u, 500.0) - c) - 500.0 * (c - u)).cwiseAbs().maxCoeff() < 1e-10);

  const DenoiserConfig cfg{3, 4, 16, 2, 20};
  const DenoiserParams p = random_params(cfg, rng);
  const Matrix y = normal_matrix(3, 2, rng);
  const Vector x = normal_matrix(4, 1, rng).col(0);
  const Vector ec = denoise_forward(p, Vector(y.col(1)), 6, &x);
  const Vector eu = denoise_forward(p, Vector(y.col(1)), 6, nullptr);
  const Matrix g0 = cfg_eps(p, y, 6, x, 0.0);
  CHECK((g0.col(1) - ec).norm() < 1e-12);
  const Matrix g500 = cfg_eps(p, y, 6, x, 500.0);
  CHECK((g500.col(1) - (501.0 * ec - 500.0 * eu)).cwiseAbs().maxCoeff() < 1e-9);
  // Affine in omega: equal spacing gives equal differences.
  const Matrix g1 = cfg_eps(p, y, 6, x, 1.0), g2 = cfg_eps(p, y, 6, x, 2.0);
  CHECK(((g2 - g1) - (g1 - g0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training loss") {
  const NoiseSchedule s = cosine_schedule(20);
  Rng rng(3);
  const Matrix eps = normal_matrix(5, 4000, rng);
  CHECK(eps_loss(eps, eps) == 0.0);
  CHECK(eps_loss(Matrix::Zero(5, 4000), eps) == doctest::Approx(5.0).epsilon(0.03));

  SUBCASE("zero-initialized head predicts zero, so the first loss is near N") {
    const DenoiserParams p = init_denoiser({5, 2, 16, 2, 20}, rng);
    const TrainingStepResult r = training_step(p, normal_matrix(2, 2000, rng),
                                               normal_matrix(5, 2000, rng) * 0.5, s, {}, rng);
    CHECK(r.loss == doctest::Approx(5.0).epsilon(0.05));
  }
  SUBCASE("condition dropout rate") {
    GuidanceConfig g;
    const TrainingTargets tt = draw_training_targets(Matrix::Zero(2, 20000), s, g, rng);
    double nulls = 0;
    for (auto m : tt.null_mask) nulls += m;
    CHECK(nulls / 20000 == doctest::Approx(0.1).epsilon(0.1));
    for (int t : tt.steps) {
      CHECK(t >= 1);
      CHECK(t <= 20);
    }
  }
}

TEST_CASE("synthetic 1-D training reduces the loss tenfold") {
  // y* = x with x ~ U[-1, 1]: the clean sample is fully determined by the condition.
  const NoiseSchedule s = cosine_schedule(20);
  Rng rng(4);
  const int M = 4096;
  Matrix x(1, M);
  for (int j = 0; j < M; ++j) x(0, j) = rng.uniform(-1, 1);
  DenoiserParams p = init_denoiser({1, 1, 32, 2, 20}, rng);
  TrainConfig tc;
  tc.epochs = 125;  // 16 batches per epoch, 2000 steps
  tc.batch_size = 256;
  const auto hist = train_denoiser(p, x, x, s, tc, rng);
  CHECK(hist.back() < hist.front() / 10.0);
}

TEST_CASE("samplers") {
  const NoiseSchedule s = cosine_schedule(20);
  Rng rng(5);
  const DenoiserConfig cfg{3, 2, 16, 2, 20};
  const DenoiserParams p = random_params(cfg, rng);
  const Vector x = normal_matrix(2, 1, rng).col(0);

  SUBCASE("DDIM with eta = 1 over every step equals the DDPM step") {
    for (int t = 2; t <= 20; ++t) {
      const Matrix y = normal_matrix(3, 4, rng), eps = normal_matrix(3, 4, rng), z = normal_matrix(3, 4, rng);
      CHECK((ddim_step(y, eps, t, t - 1, s, 1.0, z) - ddpm_step(y, eps, t, s, z)).cwiseAbs().maxCoeff() < 1e-10);
    }
    const Matrix y = normal_matrix(3, 4, rng), eps = normal_matrix(3, 4, rng);
    CHECK((ddim_step(y, eps, 1, 0, s, 1.0, normal_matrix(3, 4, rng)) - ddpm_step(y, eps, 1, s, Matrix::Zero(3, 4)))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
  SUBCASE("the final step adds no noise") {
    const Matrix y = normal_matrix(3, 2, rng), eps = normal_matrix(3, 2, rng);
    CHECK(ddpm_step(y, eps, 1, s, normal_matrix(3, 2, rng)) == ddpm_step(y, eps, 1, s, Matrix::Zero(3, 2)));
  }
  SUBCASE("full DDPM and DDIM(eta = 1) chains agree") {
    SamplerConfig a, b;
    a.guidance.omega = 2.0;
    b = a;
    b.kind = SamplerKind::DDIM;
    b.eta = 1.0;
    const Matrix ya = sample(p, s, x, a, 11, 3), yb = sample(p, s, x, b, 11, 3);
    CHECK((ya - yb).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("independent chains differ and are finite") {
    SamplerConfig c;
    c.guidance.omega = 1.0;
    const Matrix y = sample(p, s, x, c, 3, 4);
    CHECK(y.rows() == 3);
    CHECK(y.cols() == 4);
    CHECK(y.allFinite());
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) CHECK((y.col(i) - y.col(j)).norm() > 1e-6);
  }
  SUBCASE("chains are nested across K") {
    SamplerConfig c;
    c.guidance.omega = 1.0;
    const Matrix y4 = sample(p, s, x, c, 8, 4), y9 = sample(p, s, x, c, 8, 9);
    CHECK((y4 - y9.leftCols(4)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("DDIM eta = 0 is deterministic given the start") {
    SamplerConfig c;
    c.kind = SamplerKind::DDIM;
    c.ddim_steps = {20, 15, 10, 5, 1};
    c.guidance.omega = 3.0;
    const Matrix yT = normal_matrix(3, 2, rng);
    std::vector<Rng> r1{Rng(1), Rng(2)}, r2{Rng(99), Rng(100)};
    CHECK(run_chains(p, s, x, c, yT, r1) == run_chains(p, s, x, c, yT, r2));
  }
  SUBCASE("invalid step subsets") {
    SamplerConfig c;
    c.kind = SamplerKind::DDIM;
    for (const std::vector<int>& bad : {std::vector<int>{20, 10, 2}, {10, 15, 1}, {21, 10, 1}, {20, 10, 10, 1}}) {
      c.ddim_steps = bad;
      CHECK_THROWS_AS(sample(p, s, x, c, 1, 1), std::invalid_argument);
    }
    c.ddim_steps = {20, 1};
    c.eta = 1.5;
    CHECK_THROWS_AS(sample(p, s, x, c, 1, 1), std::invalid_argument);
  }
  SUBCASE("trace records every visited state and ends at the sample") {
    SamplerConfig c;
    c.kind = SamplerKind::DDIM;
    c.ddim_steps = {20, 12, 6, 1};
    c.eta = 0.5;
    SampleTrace tr;
    const Matrix y = sample(p, s, x, c, 4, 1, &tr);
    CHECK(tr.states.size() == 5u);
    CHECK(tr.steps.front() == 20);
    CHECK(tr.steps.back() == 0);
    CHECK(tr.states.back() == y);
  }
  SUBCASE("non-finite state raises a sampling error with the step") {
    DenoiserParams q = p;
    q.output_head.bias.setConstant(1e308);
    SamplerConfig c;
    c.guidance.omega = 500.0;
    try {
      sample(q, s, x, c, 1, 1);
      FAIL("expected a sampling error");
    } catch (const SamplingError& e) {
      CHECK(e.step() >= 1);
      CHECK(e.step() <= 20);
    }
  }
}

TEST_CASE("overfit single pair recovers the target") {
  const NoiseSchedule s = cosine_schedule(20);
  Rng rng(6);
  Matrix y0(3, 1), x(2, 1);
  y0 << 0.6, -0.3, 0.1;
  x << 0.5, -1.0;
  DenoiserParams p = init_denoiser({3, 2, 32, 2, 20}, rng);
  TrainConfig tc;
  tc.epochs = 3000;
  tc.batch_size = 64;
  train_denoiser(p, x.replicate(1, 64), y0.replicate(1, 64), s, tc, rng);
  SamplerConfig c;
  c.guidance.omega = 0.0;
  const Matrix ys = sample(p, s, x.col(0), c, 17, 8);
  for (int j = 0; j < 8; ++j) CHECK((ys.col(j) - y0).cwiseAbs().maxCoeff() < 0.05);
}
