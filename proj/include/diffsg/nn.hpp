#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "diffsg/rng.hpp"

/// Dense layers, SiLU, Adam and a finite-difference gradient checker.
/// Batched tensors are column-major with one sample per column.
namespace diffsg::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Mutable / read-only flat views over parameter tensors, in a fixed order.
using ParamViews = std::vector<std::span<double>>;
using ConstParamViews = std::vector<std::span<const double>>;

struct DenseLayer {
  Matrix weight;  // [out x in]
  Vector bias;    // [out]

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Fan-in scaled normal weights (std 1/sqrt(in_dim)), zero bias.
DenseLayer init_dense(int in_dim, int out_dim, Rng& rng);
/// All-zero layer of the given shape; used as a gradient accumulator.
DenseLayer zero_dense(Eigen::Index in_dim, Eigen::Index out_dim);

/// W x + b, column-wise.
Matrix dense_forward(const DenseLayer& p, const Matrix& x);

struct DenseGrads {
  Matrix weight;
  Vector bias;
  Matrix input;
};

DenseGrads dense_backward(const DenseLayer& p, const Matrix& x, const Matrix& upstream);

/// Adds the parameter gradients into `acc` and returns the input gradient.
Matrix dense_backward_into(const DenseLayer& p, const Matrix& x, const Matrix& upstream,
                           DenseLayer& acc);

/// Elementwise x * sigmoid(x). Throws std::invalid_argument on non-finite input.
Matrix silu(const Matrix& x);
/// upstream * d/dx silu(x).
Matrix silu_backward(const Matrix& x, const Matrix& upstream);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step_count = 0;
};

AdamState make_adam_state(const ConstParamViews& params, const AdamConfig& config = {});

/// One bias-corrected Adam update. Throws NumericError if any parameter
/// becomes non-finite.
void adam_step(const ParamViews& params, const ConstParamViews& grads, AdamState& state);

/// Max over all entries of |analytic - central| / (|analytic| + |central| + 1e-12),
/// where `central` is the central difference of `loss` with step `epsilon`.
/// `loss` must re-evaluate the model from the current contents of `params`;
/// every entry is restored before returning.
double finite_diff_check(const std::function<double()>& loss, const ParamViews& params,
                         const ConstParamViews& analytic, double epsilon);

ConstParamViews as_const(const ParamViews& views);

}  // namespace diffsg::nn
