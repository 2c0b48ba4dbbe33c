#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "diffsg/checkpoint.hpp"
#include "diffsg/data.hpp"
#include "diffsg/nn.hpp"

namespace diffsg {

// Penalty gradient descent --------------------------------------------------

struct GdConfig {
  int steps = 500;
  double lr = 0.01;
  double lambda0 = 1.0;      // initial penalty multiplier
  double lambda_growth = 2.0;
  int lambda_every = 100;    // steps between multiplier updates
  double fd_step = 1e-6;     // central-difference step in unit coordinates
};

struct GdResult {
  Eigen::VectorXd y;  // projected, native units
  bool diverged = false;
  int steps_run = 0;
};

/// Default start: the center of the unit box with an even power or resource split.
Eigen::VectorXd gd_center_start(const Instance& x);
/// Uniform random start in unit coordinates.
Eigen::VectorXd gd_random_start(const Instance& x, Rng& rng);

/// Relaxed objective in unit coordinates, scaled to O(1) and oriented for
/// minimization. CO uses the continuous decision a_i = clamp(y_i / 0.1, 0, 1).
double gd_surrogate(const Instance& x, const Eigen::VectorXd& u);
/// Sum of squared constraint violations in unit coordinates.
double gd_violation(const Instance& x, const Eigen::VectorXd& u);

/// Minimizes surrogate + lambda * violation from `start` (unit coordinates),
/// then projects onto the feasible set.
GdResult gd_solve(const Instance& x, const GdConfig& config, const Eigen::VectorXd& start);
GdResult gd_solve(const Instance& x, const GdConfig& config);
/// Center start plus `starts - 1` random starts from streams of `seed`; best
/// objective wins.
GdResult gd_solve_multistart(const Instance& x, const GdConfig& config, int starts,
                             std::uint64_t seed);

// Regression network --------------------------------------------------------

struct MlpConfig {
  int input_dim = 1;
  int output_dim = 1;
  int hidden = 64;
  int depth = 3;  // hidden layers
};

struct MlpParams {
  MlpConfig config;
  std::vector<nn::DenseLayer> layers;  // depth + 1 layers
};

MlpParams init_mlp(const MlpConfig& config, Rng& rng);
nn::ParamViews param_views(MlpParams& p);
nn::ConstParamViews param_views(const MlpParams& p);

nn::Matrix mlp_forward(const MlpParams& p, const nn::Matrix& x);

struct MlpTrainConfig {
  int epochs = 100;
  int batch_size = 256;
  nn::AdamConfig adam;
};

/// Mean over columns of ||f(x) - y||^2 and its gradients.
double mlp_loss_and_grads(const MlpParams& p, const nn::Matrix& x, const nn::Matrix& y,
                          MlpParams* grads);

/// Minibatch Adam on the squared error. Returns per-epoch mean losses.
std::vector<double> mlp_train(MlpParams& p, const nn::Matrix& x, const nn::Matrix& y,
                              const MlpTrainConfig& config, Rng& rng,
                              const std::function<void(int, double)>& on_epoch = {});

/// Regression prediction for one instance, denormalized and projected.
Eigen::VectorXd mtfnn_predict(const MlpParams& p, const NormStats& stats, const Instance& x);

Checkpoint mlp_checkpoint(const MlpParams& p, nlohmann::json extra = {});
MlpParams mlp_from_checkpoint(const Checkpoint& c);

}  // namespace diffsg
