#include "diffsg/baselines.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "diffsg/errors.hpp"

namespace diffsg {

using Eigen::VectorXd;
using nn::Matrix;

namespace {

double pos(double v) { return v > 0.0 ? v : 0.0; }

double co_relaxed_cost(const InstanceCO& x, const VectorXd& u) {
  double cost = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double y = std::clamp(u(i), 0.0, 1.0);
    const double a = std::clamp(y / kOffloadThreshold, 0.0, 1.0);
    const double local = local_cost(x, i);
    double offload = 0.0;
    if (a > 0.0) {
      const double tx_time = 8.0 * x.task_bytes[i] / uplink_rate(x, i);
      offload = x.w_time * (tx_time + x.cycles_per_byte * x.task_bytes[i] / (y * x.edge_cpu)) +
                x.w_energy * x.tx_power * tx_time;
    }
    cost += (1.0 - a) * local + a * offload;
  }
  return cost;
}

double co_reference(const InstanceCO& x) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += local_cost(x, i);
  return s;
}

double msr_rate(const InstanceMSR& x, const VectorXd& u) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i)
    r += std::log2(1.0 + x.gain[i] * pos(u(i)) * x.power / x.noise);
  return r;
}

VectorXd nu_native(const InstanceNU& x, const VectorXd& u) {
  VectorXd y(5);
  y << std::clamp(u(0), 0.0, 1.0) * x.width, std::clamp(u(1), 0.0, 1.0) * x.length,
      pos(u(2)) * x.power, pos(u(3)) * x.power, pos(u(4)) * x.power;
  return y;
}

double nu_reference(const InstanceNU& x) {
  VectorXd c(5);
  c << 0.5, 0.5, 1.0 / 3, 1.0 / 3, 1.0 / 3;
  const auto r = nu_rates(x, nu_native(x, c));
  return r[0] + r[1] + r[2];
}

double box_violation(const VectorXd& u) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) v += pos(-u(i)) * pos(-u(i)) + pos(u(i) - 1.0) * pos(u(i) - 1.0);
  return v;
}

double nonneg_sum_violation(const VectorXd& p) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) v += pos(-p(i)) * pos(-p(i));
  const double s = p.sum() - 1.0;
  return v + s * s;
}

}  // namespace

VectorXd gd_center_start(const Instance& x) {
  const int n = solution_dim(kind_of(x));
  if (std::holds_alternative<InstanceNU>(x)) {
    VectorXd u(5);
    u << 0.5, 0.5, 1.0 / 3, 1.0 / 3, 1.0 / 3;
    return u;
  }
  return VectorXd::Constant(n, 1.0 / n);
}

VectorXd gd_random_start(const Instance& x, Rng& rng) {
  const int n = solution_dim(kind_of(x));
  VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = rng.uniform();
  if (std::holds_alternative<InstanceMSR>(x)) u /= u.sum();
  if (std::holds_alternative<InstanceNU>(x)) u.tail(3) /= u.tail(3).sum();
  return u;
}

double gd_surrogate(const Instance& x, const VectorXd& u) {
  return std::visit(
      [&](const auto& inst) -> double {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, InstanceCO>) {
          return co_relaxed_cost(inst, u) / co_reference(inst);
        } else if constexpr (std::is_same_v<T, InstanceMSR>) {
          const VectorXd even = VectorXd::Constant(u.size(), 1.0 / static_cast<double>(u.size()));
          return -msr_rate(inst, u) / msr_rate(inst, even);
        } else {
          const auto r = nu_rates(inst, nu_native(inst, u));
          return -(r[0] + r[1] + r[2]) / nu_reference(inst);
        }
      },
      x);
}

double gd_violation(const Instance& x, const VectorXd& u) {
  return std::visit(
      [&](const auto& inst) -> double {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, InstanceCO>) {
          const double over = pos(u.cwiseMax(0.0).sum() - 1.0);
          return box_violation(u) + over * over;
        } else if constexpr (std::is_same_v<T, InstanceMSR>) {
          return nonneg_sum_violation(u);
        } else {
          const auto r = nu_rates(inst, nu_native(inst, u));
          double qos = 0.0;
          for (double ri : r) qos += pos(inst.rate_min - ri) * pos(inst.rate_min - ri);
          return box_violation(u.head(2)) + nonneg_sum_violation(u.tail(3)) + qos;
        }
      },
      x);
}

GdResult gd_solve(const Instance& x, const GdConfig& config, const VectorXd& start) {
  if (config.steps < 0 || !(config.lr > 0.0) || config.lambda_every < 1)
    throw std::invalid_argument("gd_solve: invalid configuration");
  if (start.size() != solution_dim(kind_of(x)))
    throw std::invalid_argument("gd_solve: start has the wrong dimension");
  VectorXd u = start;
  VectorXd last_finite = u;
  double lambda = config.lambda0;
  GdResult result;
  auto loss = [&](const VectorXd& v) { return gd_surrogate(x, v) + lambda * gd_violation(x, v); };
  VectorXd grad(u.size());
  for (int step = 0; step < config.steps; ++step) {
    if (step > 0 && step % config.lambda_every == 0) lambda *= config.lambda_growth;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double keep = u(i);
      u(i) = keep + config.fd_step;
      const double up = loss(u);
      u(i) = keep - config.fd_step;
      const double down = loss(u);
      u(i) = keep;
      grad(i) = (up - down) / (2.0 * config.fd_step);
    }
    u -= config.lr * grad;
    result.steps_run = step + 1;
    if (!u.allFinite() || u.norm() > 1e6) {
      result.diverged = true;
      u = last_finite;
      break;
    }
    last_finite = u;
  }
  result.y = project_feasible(x, from_unit(x, u));
  return result;
}

GdResult gd_solve(const Instance& x, const GdConfig& config) {
  return gd_solve(x, config, gd_center_start(x));
}

GdResult gd_solve_multistart(const Instance& x, const GdConfig& config, int starts,
                             std::uint64_t seed) {
  if (starts < 1) throw std::invalid_argument("gd_solve_multistart: starts must be >= 1");
  const ProblemKind kind = kind_of(x);
  GdResult best = gd_solve(x, config);
  double best_f = objective(x, best.y);
  for (int s = 1; s < starts; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    GdResult r = gd_solve(x, config, gd_random_start(x, rng));
    const double f = objective(x, r.y);
    if (!better_or_equal(kind, best_f, f)) {
      best = std::move(r);
      best_f = f;
    }
  }
  return best;
}

// Regression network --------------------------------------------------------

MlpParams init_mlp(const MlpConfig& config, Rng& rng) {
  if (config.input_dim < 1 || config.output_dim < 1 || config.hidden < 1 || config.depth < 1)
    throw std::invalid_argument("init_mlp: dimensions must be >= 1");
  MlpParams p{config, {}};
  int in = config.input_dim;
  for (int k = 0; k < config.depth; ++k) {
    p.layers.push_back(nn::init_dense(in, config.hidden, rng));
    in = config.hidden;
  }
  p.layers.push_back(nn::init_dense(in, config.output_dim, rng));
  return p;
}

nn::ParamViews param_views(MlpParams& p) {
  nn::ParamViews v;
  for (auto& l : p.layers) {
    v.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    v.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return v;
}

nn::ConstParamViews param_views(const MlpParams& p) {
  nn::ConstParamViews v;
  for (const auto& l : p.layers) {
    v.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    v.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return v;
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x) {
  Matrix h = x;
  for (std::size_t k = 0; k + 1 < p.layers.size(); ++k) h = nn::silu(nn::dense_forward(p.layers[k], h));
  return nn::dense_forward(p.layers.back(), h);
}

double mlp_loss_and_grads(const MlpParams& p, const Matrix& x, const Matrix& y, MlpParams* grads) {
  if (x.cols() != y.cols() || x.cols() == 0)
    throw std::invalid_argument("mlp_loss: empty or mismatched batch");
  const std::size_t L = p.layers.size();
  std::vector<Matrix> inputs(L), pre(L);
  Matrix h = x;
  for (std::size_t k = 0; k < L; ++k) {
    inputs[k] = h;
    pre[k] = nn::dense_forward(p.layers[k], h);
    h = k + 1 < L ? nn::silu(pre[k]) : pre[k];
  }
  const Matrix diff = h - y;
  const double b = static_cast<double>(x.cols());
  const double loss = diff.colwise().squaredNorm().sum() / b;
  if (!grads) return loss;
  grads->config = p.config;
  grads->layers.clear();
  for (const auto& l : p.layers) grads->layers.push_back(nn::zero_dense(l.in_dim(), l.out_dim()));
  Matrix g = (2.0 / b) * diff;
  for (std::size_t k = L; k-- > 0;) {
    if (k + 1 < L) g = nn::silu_backward(pre[k], g);
    g = nn::dense_backward_into(p.layers[k], inputs[k], g, grads->layers[k]);
  }
  return loss;
}

std::vector<double> mlp_train(MlpParams& p, const Matrix& x, const Matrix& y,
                              const MlpTrainConfig& config, Rng& rng,
                              const std::function<void(int, double)>& on_epoch) {
  if (x.cols() == 0 || x.cols() != y.cols())
    throw std::invalid_argument("mlp_train: empty or mismatched dataset");
  if (config.batch_size < 1 || config.epochs < 0)
    throw std::invalid_argument("mlp_train: bad batch size or epoch count");
  auto views = param_views(p);
  nn::AdamState adam = nn::make_adam_state(nn::as_const(views), config.adam);
  const Eigen::Index n = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  MlpParams grads;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::size_t>(i) + 1)]);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
      Matrix xb(x.rows(), b), yb(y.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        xb.col(j) = x.col(order[start + j]);
        yb.col(j) = y.col(order[start + j]);
      }
      total += mlp_loss_and_grads(p, xb, yb, &grads) * static_cast<double>(b);
      nn::adam_step(views, param_views(static_cast<const MlpParams&>(grads)), adam);
    }
    history.push_back(total / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return history;
}

VectorXd mtfnn_predict(const MlpParams& p, const NormStats& stats, const Instance& x) {
  const Matrix out = mlp_forward(p, normalize_condition(stats, x));
  return project_feasible(x, denormalize_solution(x, out.col(0)));
}

Checkpoint mlp_checkpoint(const MlpParams& p, nlohmann::json extra) {
  Checkpoint c;
  c.type = "mtfnn";
  c.config = std::move(extra);
  c.config["mlp"] = {{"input_dim", p.config.input_dim},
                     {"output_dim", p.config.output_dim},
                     {"hidden", p.config.hidden},
                     {"depth", p.config.depth}};
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    c.tensors["layers." + std::to_string(k) + ".weight"] = to_tensor(p.layers[k].weight);
    c.tensors["layers." + std::to_string(k) + ".bias"] = to_tensor(p.layers[k].bias);
  }
  return c;
}

MlpParams mlp_from_checkpoint(const Checkpoint& c) {
  if (c.type != "mtfnn")
    throw std::invalid_argument("checkpoint holds a '" + c.type + "', not an mtfnn");
  const auto& j = c.config.at("mlp");
  MlpConfig config{j.at("input_dim").get<int>(), j.at("output_dim").get<int>(),
                   j.at("hidden").get<int>(), j.at("depth").get<int>()};
  Rng rng(0);
  MlpParams p = init_mlp(config, rng);
  if (c.tensors.size() != 2 * p.layers.size())
    throw std::invalid_argument("mtfnn checkpoint has unexpected tensors");
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const std::string w = "layers." + std::to_string(k) + ".weight";
    const std::string b = "layers." + std::to_string(k) + ".bias";
    if (!c.tensors.count(w) || !c.tensors.count(b))
      throw std::invalid_argument("mtfnn checkpoint lacks layer " + std::to_string(k));
    from_tensor(c.tensors.at(w), p.layers[k].weight, w);
    from_tensor(c.tensors.at(b), p.layers[k].bias, b);
  }
  return p;
}

}  // namespace diffsg
