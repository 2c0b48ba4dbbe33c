#include "diffsg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "diffsg/errors.hpp"

namespace diffsg {

using nn::Matrix;
using nn::Vector;

namespace {

void check_step(const NoiseSchedule& sched, int t, const char* who) {
  if (t < 1 || t > sched.steps)
    throw std::invalid_argument(std::string(who) + ": step " + std::to_string(t) +
                                " outside [1, " + std::to_string(sched.steps) + "]");
}

Matrix standard_normal(Eigen::Index rows, std::vector<Rng>& chain_rngs) {
  Matrix z(rows, static_cast<Eigen::Index>(chain_rngs.size()));
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = chain_rngs[j].normal();
  return z;
}

}  // namespace

NoiseSchedule cosine_schedule(int steps, double offset) {
  if (steps < 1) throw std::invalid_argument("cosine_schedule: T must be >= 1");
  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / steps + offset) / (1.0 + offset) *
                              std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule s;
  s.steps = steps;
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  const double f0 = f(0);
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double bar = f(t) / f0;
    s.alpha[t] = std::clamp(bar / prev, 0.001, 0.9999);
    prev = bar;
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

Matrix q_sample(const Matrix& y0, int t, const Matrix& eps, const NoiseSchedule& sched) {
  check_step(sched, t, "q_sample");
  if (y0.rows() != eps.rows() || y0.cols() != eps.cols())
    throw std::invalid_argument("q_sample: shape mismatch");
  const double ab = sched.alpha_bar[t];
  return std::sqrt(ab) * y0 + std::sqrt(1.0 - ab) * eps;
}

Matrix predict_x0(const Matrix& y_t, int t, const Matrix& eps, const NoiseSchedule& sched) {
  check_step(sched, t, "predict_x0");
  const double ab = sched.alpha_bar[t];
  return (y_t - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

Matrix guided_eps(const Matrix& eps_cond, const Matrix& eps_uncond, double omega) {
  return (1.0 + omega) * eps_cond - omega * eps_uncond;
}

Matrix cfg_eps(const DenoiserParams& p, const Matrix& y_t, int t, const Vector& cond, double omega) {
  const Eigen::Index k = y_t.cols();
  Matrix y2(y_t.rows(), 2 * k);
  y2 << y_t, y_t;
  const Matrix conds = cond.replicate(1, 2 * k);
  std::vector<int> steps(2 * k, t);
  std::vector<std::uint8_t> mask(2 * k, 0);
  std::fill(mask.begin() + k, mask.end(), 1);
  const Matrix e = denoise_forward(p, y2, steps, conds, mask);
  return guided_eps(e.leftCols(k), e.rightCols(k), omega);
}

Matrix ddpm_step(const Matrix& y_t, const Matrix& eps, int t, const NoiseSchedule& sched,
                 const Matrix& z) {
  check_step(sched, t, "ddpm_step");
  const double a = sched.alpha[t];
  const double ab = sched.alpha_bar[t];
  Matrix mu = (y_t - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps) / std::sqrt(a);
  if (t > 1) {
    const double var = (1.0 - sched.alpha_bar[t - 1]) / (1.0 - ab) * (1.0 - a);
    mu += std::sqrt(var) * z;
  }
  return mu;
}

Matrix ddim_step(const Matrix& y_t, const Matrix& eps, int t, int t_next,
                 const NoiseSchedule& sched, double eta, const Matrix& z) {
  check_step(sched, t, "ddim_step");
  if (t_next < 0 || t_next >= t) throw std::invalid_argument("ddim_step: t_next must be in [0, t)");
  const double ab = sched.alpha_bar[t];
  const double ab_next = sched.alpha_bar[t_next];
  const Matrix x0 = predict_x0(y_t, t, eps, sched);
  const double sigma =
      eta * std::sqrt((1.0 - ab_next) / (1.0 - ab) * (1.0 - ab / ab_next));
  Matrix out = std::sqrt(ab_next) * x0 + std::sqrt(std::max(0.0, 1.0 - ab_next - sigma * sigma)) * eps;
  if (sigma > 0.0) out += sigma * z;
  return out;
}

TrainingTargets draw_training_targets(const Matrix& y0, const NoiseSchedule& sched,
                                      const GuidanceConfig& guidance, Rng& rng) {
  const Eigen::Index batch = y0.cols();
  TrainingTargets tt;
  tt.steps.resize(batch);
  tt.null_mask.resize(batch);
  tt.eps.resize(y0.rows(), batch);
  tt.y_t.resize(y0.rows(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int t = 1 + static_cast<int>(rng.below(sched.steps));
    tt.steps[j] = t;
    for (Eigen::Index i = 0; i < y0.rows(); ++i) tt.eps(i, j) = rng.normal();
    tt.null_mask[j] = rng.uniform() < guidance.p_uncond ? 1 : 0;
    const double ab = sched.alpha_bar[t];
    tt.y_t.col(j) = std::sqrt(ab) * y0.col(j) + std::sqrt(1.0 - ab) * tt.eps.col(j);
  }
  return tt;
}

double eps_loss(const Matrix& predicted, const Matrix& eps) {
  if (predicted.rows() != eps.rows() || predicted.cols() != eps.cols() || eps.cols() == 0)
    throw std::invalid_argument("eps_loss: shape mismatch");
  return (predicted - eps).squaredNorm() / static_cast<double>(eps.cols());
}

TrainingStepResult training_step(const DenoiserParams& p, const Matrix& cond, const Matrix& y0,
                                 const NoiseSchedule& sched, const GuidanceConfig& guidance,
                                 Rng& rng) {
  if (y0.cols() == 0) throw std::invalid_argument("training_step: empty batch");
  const TrainingTargets tt = draw_training_targets(y0, sched, guidance, rng);
  DenoiserCache cache;
  const Matrix pred = denoise_forward(p, tt.y_t, tt.steps, cond, tt.null_mask, &cache);
  TrainingStepResult r;
  r.loss = eps_loss(pred, tt.eps);
  const Matrix upstream = (2.0 / static_cast<double>(y0.cols())) * (pred - tt.eps);
  r.grads = denoise_backward(p, cache, upstream);
  return r;
}

std::vector<double> train_denoiser(DenoiserParams& p, const Matrix& cond, const Matrix& y0,
                                   const NoiseSchedule& sched, const TrainConfig& config, Rng& rng,
                                   const std::function<void(int, double)>& on_epoch) {
  if (y0.cols() == 0 || y0.cols() != cond.cols())
    throw std::invalid_argument("train_denoiser: empty or mismatched dataset");
  if (config.batch_size < 1 || config.epochs < 0)
    throw std::invalid_argument("train_denoiser: bad batch size or epoch count");
  auto views = param_views(p);
  nn::AdamState adam = nn::make_adam_state(nn::as_const(views), config.adam);
  const Eigen::Index n = y0.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::size_t>(i) + 1)]);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
      Matrix cb(cond.rows(), b), yb(y0.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        cb.col(j) = cond.col(order[start + j]);
        yb.col(j) = y0.col(order[start + j]);
      }
      TrainingStepResult r = training_step(p, cb, yb, sched, config.guidance, rng);
      nn::adam_step(views, param_views(static_cast<const DenoiserParams&>(r.grads)), adam);
      total += r.loss * static_cast<double>(b);
    }
    const double mean = total / static_cast<double>(n);
    history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return history;
}

std::vector<int> sampler_steps(const SamplerConfig& config, const NoiseSchedule& sched) {
  std::vector<int> steps;
  if (config.kind == SamplerKind::DDPM || config.ddim_steps.empty()) {
    for (int t = sched.steps; t >= 1; --t) steps.push_back(t);
    return steps;
  }
  steps = config.ddim_steps;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 1 || steps[i] > sched.steps)
      throw std::invalid_argument("DDIM step subset: entry outside [1, T]");
    if (i > 0 && steps[i] >= steps[i - 1])
      throw std::invalid_argument("DDIM step subset: must be strictly decreasing");
  }
  if (steps.back() != 1) throw std::invalid_argument("DDIM step subset: must end at 1");
  return steps;
}

Matrix run_chains(const DenoiserParams& p, const NoiseSchedule& sched, const Vector& cond,
                  const SamplerConfig& config, Matrix y, std::vector<Rng>& chain_rngs,
                  SampleTrace* trace) {
  if (config.kind == SamplerKind::DDIM && (config.eta < 0.0 || config.eta > 1.0))
    throw std::invalid_argument("DDIM eta must be in [0, 1]");
  if (static_cast<std::size_t>(y.cols()) != chain_rngs.size())
    throw std::invalid_argument("run_chains: one generator per chain required");
  const std::vector<int> steps = sampler_steps(config, sched);
  if (trace) {
    trace->steps.clear();
    trace->states.clear();
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int t_next = i + 1 < steps.size() ? steps[i + 1] : 0;
    if (trace) {
      trace->steps.push_back(t);
      trace->states.push_back(y);
    }
    Matrix eps = cfg_eps(p, y, t, cond, config.guidance.omega);
    if (config.clip_x0) {
      const Matrix x0 = predict_x0(y, t, eps, sched).cwiseMax(-1.0).cwiseMin(1.0);
      eps = (y - std::sqrt(sched.alpha_bar[t]) * x0) / std::sqrt(1.0 - sched.alpha_bar[t]);
    }
    // Final update is noise-free, so no draw is made for it.
    const Matrix z = t_next > 0 ? standard_normal(y.rows(), chain_rngs) : Matrix::Zero(y.rows(), y.cols());
    if (config.kind == SamplerKind::DDPM)
      y = ddpm_step(y, eps, t, sched, z);
    else
      y = ddim_step(y, eps, t, t_next, sched, config.eta, z);
    if (!y.allFinite()) throw SamplingError(t, "non-finite chain state");
  }
  if (trace) {
    trace->steps.push_back(0);
    trace->states.push_back(y);
  }
  return y;
}

Matrix sample(const DenoiserParams& p, const NoiseSchedule& sched, const Vector& cond,
              const SamplerConfig& config, std::uint64_t seed, int k, SampleTrace* trace) {
  if (k < 1) throw std::invalid_argument("sample: K must be >= 1");
  std::vector<Rng> rngs;
  rngs.reserve(k);
  for (int j = 0; j < k; ++j) rngs.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(j)));
  const Matrix y_T = standard_normal(p.config.solution_dim, rngs);
  return run_chains(p, sched, cond, config, y_T, rngs, trace);
}

Matrix ddpm_sample(const DenoiserParams& p, const Vector& cond, const NoiseSchedule& sched,
                   const GuidanceConfig& guidance, std::uint64_t seed, int k) {
  SamplerConfig c;
  c.guidance = guidance;
  return sample(p, sched, cond, c, seed, k);
}

Matrix ddim_sample(const DenoiserParams& p, const Vector& cond, const NoiseSchedule& sched,
                   const GuidanceConfig& guidance, const std::vector<int>& steps, double eta,
                   std::uint64_t seed, int k) {
  SamplerConfig c;
  c.kind = SamplerKind::DDIM;
  c.ddim_steps = steps;
  c.eta = eta;
  c.guidance = guidance;
  return sample(p, sched, cond, c, seed, k);
}

}  // namespace diffsg
