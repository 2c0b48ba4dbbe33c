#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffsg/nn.hpp"
#include "diffsg/rng.hpp"

namespace diffsg {

struct DenoiserConfig {
  int solution_dim = 1;   // N
  int condition_dim = 1;  // C
  int hidden = 64;        // h
  int depth = 4;          // n, number of down (and up) blocks
  int max_step = 20;      // T

  /// Throws std::invalid_argument unless all fields are >= 1, hidden is even
  /// and hidden / 2^depth >= 1.
  void validate() const;
  int time_dim() const { return 4 * hidden; }
  int width(int level) const { return hidden >> level; }
};

/// Two dense layers with SiLU between them plus a projected residual path.
/// Time and condition embeddings are projected to the block input width and
/// added to the input before the block runs.
struct ResidualBlock {
  nn::DenseLayer time_in;  // h -> w_in
  nn::DenseLayer cond_in;  // h -> w_in
  nn::DenseLayer fc1;      // w_in -> w_out
  nn::DenseLayer fc2;      // w_out -> w_out
  nn::DenseLayer skip;     // w_in -> w_out
};

/// Weights of the noise-prediction network.
///
/// Layout: input embedding N->h; sinusoidal time features (4h) projected to h;
/// condition C->h, or the learned null embedding for unconditional columns;
/// down blocks k = 0..n-1 mapping h/2^k -> h/2^(k+1); up blocks mirroring them
/// (h/2^(k+1) -> h/2^k) whose outputs are summed with the activation that
/// entered the matching down block; output head h->N after SiLU.
struct DenoiserParams {
  DenoiserConfig config;
  nn::DenseLayer input_embed;
  nn::DenseLayer time_embed;
  nn::DenseLayer cond_embed;
  nn::Vector null_cond;
  std::vector<ResidualBlock> down;
  std::vector<ResidualBlock> up;
  nn::DenseLayer output_head;
};

/// Fan-in scaled weights everywhere except the output head, which starts at
/// zero so the initial noise estimate is exactly 0.
DenoiserParams init_denoiser(const DenoiserConfig& config, Rng& rng);
/// Same shapes as `p`, all zeros.
DenoiserParams zeros_like(const DenoiserParams& p);

/// Closed-form parameter count implied by the architecture.
std::size_t expected_parameter_count(const DenoiserConfig& config);
std::size_t parameter_count(const DenoiserParams& p);

/// Visits every tensor with a stable name, in a fixed order.
template <class Params, class F>
void for_each_tensor(Params& p, F&& f) {
  auto dense = [&](const std::string& name, auto& layer) {
    f(name + ".weight", layer.weight);
    f(name + ".bias", layer.bias);
  };
  auto block = [&](const std::string& name, auto& b) {
    dense(name + ".time_in", b.time_in);
    dense(name + ".cond_in", b.cond_in);
    dense(name + ".fc1", b.fc1);
    dense(name + ".fc2", b.fc2);
    dense(name + ".skip", b.skip);
  };
  dense("input_embed", p.input_embed);
  dense("time_embed", p.time_embed);
  dense("cond_embed", p.cond_embed);
  f(std::string("null_cond"), p.null_cond);
  for (std::size_t k = 0; k < p.down.size(); ++k) block("down." + std::to_string(k), p.down[k]);
  for (std::size_t k = 0; k < p.up.size(); ++k) block("up." + std::to_string(k), p.up[k]);
  dense("output_head", p.output_head);
}

nn::ParamViews param_views(DenoiserParams& p);
nn::ConstParamViews param_views(const DenoiserParams& p);

/// Sinusoidal features: interleaved (sin(t w_i), cos(t w_i)) with
/// w_i = 10000^(-2i/dim), i = 0..dim/2-1. Requires 0 <= t <= max_step.
nn::Vector time_embed(int t, int dim, int max_step);

struct BlockCache {
  nn::Matrix u;   // block input after conditioning
  nn::Matrix z1;  // fc1 pre-activation
  nn::Matrix h1;  // fc1 activation
};

/// Activations recorded by a forward pass for use by denoise_backward.
struct DenoiserCache {
  bool valid = false;
  nn::Matrix y;
  nn::Matrix cond;
  std::vector<std::uint8_t> null_mask;
  nn::Matrix temb;
  nn::Matrix te_pre;
  nn::Matrix te;
  nn::Matrix ce_pre;
  nn::Matrix ce;
  nn::Matrix e0;
  std::vector<BlockCache> down;
  std::vector<BlockCache> up;
  nn::Matrix v0;
};

/// Batched noise prediction. Column j uses step steps[j] in [1, T]; columns
/// with null_mask[j] != 0 use the null embedding and ignore cond.col(j).
/// An empty null_mask means all conditional. Fills `cache` when given.
nn::Matrix denoise_forward(const DenoiserParams& p, const nn::Matrix& y_t,
                           std::span<const int> steps, const nn::Matrix& cond,
                           std::span<const std::uint8_t> null_mask,
                           DenoiserCache* cache = nullptr);

/// Single-sample form; `cond == nullptr` selects the null condition.
nn::Vector denoise_forward(const DenoiserParams& p, const nn::Vector& y_t, int t,
                           const nn::Vector* cond);

/// Reverse-mode gradients of sum(upstream .* output) for the cached pass.
/// Throws StateError if the cache was not filled by denoise_forward.
DenoiserParams denoise_backward(const DenoiserParams& p, const DenoiserCache& cache,
                                const nn::Matrix& upstream);

}  // namespace diffsg
