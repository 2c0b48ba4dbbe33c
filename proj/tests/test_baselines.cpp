#include <doctest.h>

#include "diffsg/baselines.hpp"

using namespace diffsg;
using Eigen::VectorXd;

TEST_CASE("GD on symmetric MSR converges to the even split") {
  const Instance x = InstanceMSR{{1.0, 1.0, 1.0}, 9.0, 1.0};
  const VectorXd even = VectorXd::Constant(3, 3.0);
  const GdResult r = gd_solve(x, GdConfig{});
  CHECK_FALSE(r.diverged);
  CHECK((r.y - even).cwiseAbs().maxCoeff() < 1e-3);

  // From a skewed start the error shrinks by a large factor.
  const VectorXd skew = (VectorXd(3) << 0.6, 0.3, 0.1).finished();
  const GdResult s = gd_solve(x, GdConfig{}, skew);
  CHECK((s.y - even).cwiseAbs().maxCoeff() < 0.05 * (9.0 * skew - even).cwiseAbs().maxCoeff());
}

TEST_CASE("GD output is always feasible") {
  ProblemConfig cfg;
  Rng rng(1);
  for (ProblemKind kind : {ProblemKind::CO, ProblemKind::MSR3, ProblemKind::MSR80, ProblemKind::NU}) {
    for (int i = 0; i < 5; ++i) {
      const Instance x = sample_instance(kind, Domain::In, cfg, rng);
      GdConfig c;
      c.steps = kind == ProblemKind::MSR80 ? 50 : 200;
      const GdResult r = gd_solve(x, c, gd_random_start(x, rng));
      CHECK(is_feasible(x, r.y));
    }
  }
}

TEST_CASE("GD divergence is flagged") {
  const Instance x = InstanceMSR{{1.0, 2.0, 0.5}, 9.0, 1.0};
  GdConfig c;
  c.lr = 1e9;
  c.lambda0 = 1e6;
  const GdResult r = gd_solve(x, c, (VectorXd(3) << 3.0, -2.0, 0.0).finished());
  CHECK(r.diverged);
  CHECK(is_feasible(x, r.y));
}

TEST_CASE("GD on MSR3 is close to the oracle") {
  ProblemConfig cfg;
  Rng rng(2);
  double sum = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const Instance x = sample_instance(ProblemKind::MSR3, Domain::In, cfg, rng);
    sum += objective(x, gd_solve(x, GdConfig{}).y) / objective(x, oracle(x));
  }
  CHECK(sum / n > 0.97);
}

TEST_CASE("multistart is at least as good as one start") {
  ProblemConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const Instance x = sample_instance(ProblemKind::NU, Domain::In, cfg, rng);
    const double one = objective(x, gd_solve(x, GdConfig{}).y);
    const double many = objective(x, gd_solve_multistart(x, GdConfig{}, 4, 7).y);
    CHECK(many >= one);
  }
}

TEST_CASE("MLP gradients and capacity") {
  Rng rng(4);
  MlpParams p = init_mlp({3, 2, 8, 3}, rng);
  nn::Matrix x(3, 10), y(2, 10);
  for (int j = 0; j < 10; ++j) {
    for (int i = 0; i < 3; ++i) x(i, j) = rng.normal();
    for (int i = 0; i < 2; ++i) y(i, j) = rng.uniform(-1, 1);
  }
  MlpParams g;
  mlp_loss_and_grads(p, x, y, &g);
  auto loss = [&] { return mlp_loss_and_grads(p, x, y, nullptr); };
  CHECK(nn::finite_diff_check(loss, param_views(p), param_views(static_cast<const MlpParams&>(g)), 1e-6) < 1e-5);

  MlpParams big = init_mlp({3, 2, 64, 3}, rng);
  MlpTrainConfig tc;
  tc.epochs = 3000;
  tc.batch_size = 10;
  const auto hist = mlp_train(big, x, y, tc, rng);
  CHECK(hist.back() < 1e-4);
  CHECK(mlp_forward(big, x) == mlp_forward(big, x));
}

TEST_CASE("MLP checkpoint round trip") {
  Rng rng(5);
  const MlpParams p = init_mlp({4, 3, 16, 3}, rng);
  const MlpParams q = mlp_from_checkpoint(mlp_checkpoint(p));
  const nn::Matrix x = nn::Matrix::Random(4, 5);
  CHECK(mlp_forward(p, x) == mlp_forward(q, x));
}
