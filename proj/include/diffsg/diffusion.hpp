#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffsg/denoiser.hpp"
#include "diffsg/nn.hpp"
#include "diffsg/rng.hpp"

namespace diffsg {

/// alpha[t], alpha_bar[t] for t = 0..T with alpha[0] = alpha_bar[0] = 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

/// Cosine schedule: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) pi/2).
/// Per-step alpha is clipped to [0.001, 0.9999] and alpha_bar is rebuilt as
/// the running product of the clipped values.
NoiseSchedule cosine_schedule(int steps, double offset = 0.008);

struct GuidanceConfig {
  double omega = 500.0;    // condition strength
  double p_uncond = 0.1;   // training-time condition dropout
};

/// sqrt(ab_t) y0 + sqrt(1 - ab_t) eps, column-wise.
nn::Matrix q_sample(const nn::Matrix& y0, int t, const nn::Matrix& eps, const NoiseSchedule& sched);
/// Inverse of q_sample given the noise: (y_t - sqrt(1 - ab_t) eps) / sqrt(ab_t).
nn::Matrix predict_x0(const nn::Matrix& y_t, int t, const nn::Matrix& eps,
                      const NoiseSchedule& sched);

/// (1 + omega) eps_cond - omega eps_uncond.
nn::Matrix guided_eps(const nn::Matrix& eps_cond, const nn::Matrix& eps_uncond, double omega);

/// Guided noise estimate for K chains sharing one condition (one batched pass
/// evaluates the conditional and null pathways together).
nn::Matrix cfg_eps(const DenoiserParams& p, const nn::Matrix& y_t, int t, const nn::Vector& cond,
                   double omega);

/// Ancestral update y_{t-1} = mu + sigma_t z. z is ignored at t = 1.
nn::Matrix ddpm_step(const nn::Matrix& y_t, const nn::Matrix& eps, int t,
                     const NoiseSchedule& sched, const nn::Matrix& z);
/// DDIM update from t to t_next < t. z is ignored when sigma = 0.
nn::Matrix ddim_step(const nn::Matrix& y_t, const nn::Matrix& eps, int t, int t_next,
                     const NoiseSchedule& sched, double eta, const nn::Matrix& z);

/// Noisy inputs drawn for one training batch.
struct TrainingTargets {
  nn::Matrix y_t;
  std::vector<int> steps;
  nn::Matrix eps;
  std::vector<std::uint8_t> null_mask;
};

TrainingTargets draw_training_targets(const nn::Matrix& y0, const NoiseSchedule& sched,
                                      const GuidanceConfig& guidance, Rng& rng);

/// Mean over columns of the squared error norm.
double eps_loss(const nn::Matrix& predicted, const nn::Matrix& eps);

struct TrainingStepResult {
  double loss = 0.0;
  DenoiserParams grads;
};

TrainingStepResult training_step(const DenoiserParams& p, const nn::Matrix& cond,
                                 const nn::Matrix& y0, const NoiseSchedule& sched,
                                 const GuidanceConfig& guidance, Rng& rng);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  nn::AdamConfig adam;
  GuidanceConfig guidance;
};

/// Minibatch Adam over shuffled epochs. Returns the mean loss of each epoch.
std::vector<double> train_denoiser(DenoiserParams& p, const nn::Matrix& cond, const nn::Matrix& y0,
                                   const NoiseSchedule& sched, const TrainConfig& config, Rng& rng,
                                   const std::function<void(int, double)>& on_epoch = {});

enum class SamplerKind { DDPM, DDIM };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::DDPM;
  std::vector<int> ddim_steps;  // strictly decreasing, ends at 1; empty = every step
  double eta = 0.0;
  GuidanceConfig guidance;
  bool clip_x0 = false;  // clamp the implied y0 to [-1, 1] before each update
};

/// Chain states at each visited step; the last entry is step 0.
struct SampleTrace {
  std::vector<int> steps;
  std::vector<nn::Matrix> states;
};

/// Visited steps of a sampler, starting at T and ending at 1.
std::vector<int> sampler_steps(const SamplerConfig& config, const NoiseSchedule& sched);

/// Runs K chains from `y_T` (N x K). Chain j draws its noise from chain_rngs[j].
nn::Matrix run_chains(const DenoiserParams& p, const NoiseSchedule& sched, const nn::Vector& cond,
                      const SamplerConfig& config, nn::Matrix y_T, std::vector<Rng>& chain_rngs,
                      SampleTrace* trace = nullptr);

/// K chains seeded from streams (seed, 0..K-1), so the first K' < K chains
/// reproduce a K'-chain call exactly. Returns N x K normalized samples.
nn::Matrix sample(const DenoiserParams& p, const NoiseSchedule& sched, const nn::Vector& cond,
                  const SamplerConfig& config, std::uint64_t seed, int k,
                  SampleTrace* trace = nullptr);

nn::Matrix ddpm_sample(const DenoiserParams& p, const nn::Vector& cond, const NoiseSchedule& sched,
                       const GuidanceConfig& guidance, std::uint64_t seed, int k);

nn::Matrix ddim_sample(const DenoiserParams& p, const nn::Vector& cond, const NoiseSchedule& sched,
                       const GuidanceConfig& guidance, const std::vector<int>& steps, double eta,
                       std::uint64_t seed, int k);

}  // namespace diffsg
