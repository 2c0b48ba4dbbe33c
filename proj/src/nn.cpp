#include "diffsg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "diffsg/errors.hpp"

namespace diffsg::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

DenseLayer init_dense(int in_dim, int out_dim, Rng& rng) {
  require(in_dim >= 1 && out_dim >= 1, "init_dense: dimensions must be >= 1");
  DenseLayer p = zero_dense(in_dim, out_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  // Row-major fill so the draw order does not depend on Eigen's storage order.
  for (int r = 0; r < out_dim; ++r)
    for (int c = 0; c < in_dim; ++c) p.weight(r, c) = scale * rng.normal();
  return p;
}

DenseLayer zero_dense(Eigen::Index in_dim, Eigen::Index out_dim) {
  return DenseLayer{Matrix::Zero(out_dim, in_dim), Vector::Zero(out_dim)};
}

Matrix dense_forward(const DenseLayer& p, const Matrix& x) {
  require(x.rows() == p.in_dim(), "dense_forward: input length does not match in_dim");
  Matrix y = p.weight * x;
  y.colwise() += p.bias;
  return y;
}

DenseGrads dense_backward(const DenseLayer& p, const Matrix& x, const Matrix& upstream) {
  require(x.rows() == p.in_dim() && upstream.rows() == p.out_dim() && x.cols() == upstream.cols(),
          "dense_backward: shape mismatch");
  return DenseGrads{upstream * x.transpose(), upstream.rowwise().sum(),
                    p.weight.transpose() * upstream};
}

Matrix dense_backward_into(const DenseLayer& p, const Matrix& x, const Matrix& upstream,
                           DenseLayer& acc) {
  require(x.rows() == p.in_dim() && upstream.rows() == p.out_dim() && x.cols() == upstream.cols(),
          "dense_backward: shape mismatch");
  acc.weight.noalias() += upstream * x.transpose();
  acc.bias += upstream.rowwise().sum();
  return p.weight.transpose() * upstream;
}

Matrix silu(const Matrix& x) {
  require(x.allFinite(), "silu: non-finite input");
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Matrix silu_backward(const Matrix& x, const Matrix& upstream) {
  require(x.rows() == upstream.rows() && x.cols() == upstream.cols(),
          "silu_backward: shape mismatch");
  return x.binaryExpr(upstream, [](double v, double g) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return g * s * (1.0 + v * (1.0 - s));
  });
}

ConstParamViews as_const(const ParamViews& views) {
  return ConstParamViews(views.begin(), views.end());
}

AdamState make_adam_state(const ConstParamViews& params, const AdamConfig& config) {
  AdamState st;
  st.config = config;
  for (const auto& p : params) {
    st.first_moment.emplace_back(p.size(), 0.0);
    st.second_moment.emplace_back(p.size(), 0.0);
  }
  return st;
}

void adam_step(const ParamViews& params, const ConstParamViews& grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          "adam_step: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(params[i].size() == grads[i].size() && params[i].size() == state.first_moment[i].size(),
            "adam_step: tensor shape mismatch");

  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    auto p = params[i];
    auto g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      p[j] -= c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
    if (!std::all_of(p.begin(), p.end(), [](double x) { return std::isfinite(x); }))
      throw NumericError("adam_step: non-finite parameter in tensor " + std::to_string(i) +
                         " at step " + std::to_string(state.step_count));
  }
}

double finite_diff_check(const std::function<double()>& loss, const ParamViews& params,
                         const ConstParamViews& analytic, double epsilon) {
  require(params.size() == analytic.size(), "finite_diff_check: tensor count mismatch");
  require(epsilon >= 1e-7 && epsilon <= 1e-3, "finite_diff_check: epsilon outside [1e-7, 1e-3]");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].size() == analytic[i].size(), "finite_diff_check: tensor shape mismatch");
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      double& w = params[i][j];
      const double saved = w;
      w = saved + epsilon;
      const double up = loss();
      w = saved - epsilon;
      const double down = loss();
      w = saved;
      const double central = (up - down) / (2.0 * epsilon);
      const double a = analytic[i][j];
      worst = std::max(worst, std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12));
    }
  }
  return worst;
}

}  // namespace diffsg::nn
