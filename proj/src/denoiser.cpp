#include "diffsg/denoiser.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "diffsg/errors.hpp"

namespace diffsg {

using nn::DenseLayer;
using nn::Matrix;
using nn::Vector;

void DenoiserConfig::validate() const {
  if (solution_dim < 1 || condition_dim < 1 || hidden < 1 || depth < 1 || max_step < 1)
    throw std::invalid_argument("DenoiserConfig: N, C, h, n, T must all be >= 1");
  if (hidden % 2 != 0) throw std::invalid_argument("DenoiserConfig: hidden width must be even");
  if (depth >= 31 || (hidden >> depth) < 1)
    throw std::invalid_argument("DenoiserConfig: depth exceeds log2(hidden)");
}

namespace {

ResidualBlock init_block(int h, int w_in, int w_out, Rng& rng) {
  return ResidualBlock{nn::init_dense(h, w_in, rng), nn::init_dense(h, w_in, rng),
                       nn::init_dense(w_in, w_out, rng), nn::init_dense(w_out, w_out, rng),
                       nn::init_dense(w_in, w_out, rng)};
}

DenseLayer zeros_of(const DenseLayer& l) { return nn::zero_dense(l.in_dim(), l.out_dim()); }

ResidualBlock zeros_of(const ResidualBlock& b) {
  return ResidualBlock{zeros_of(b.time_in), zeros_of(b.cond_in), zeros_of(b.fc1), zeros_of(b.fc2),
                       zeros_of(b.skip)};
}

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t block_count(std::size_t h, std::size_t w_in, std::size_t w_out) {
  return 2 * dense_count(h, w_in) + dense_count(w_in, w_out) + dense_count(w_out, w_out) +
         dense_count(w_in, w_out);
}

// Adds the per-block time and condition projections to `x`.
Matrix condition_input(const ResidualBlock& b, const Matrix& x, const Matrix& te,
                       const Matrix& ce) {
  Matrix u = x + nn::dense_forward(b.time_in, te);
  u += nn::dense_forward(b.cond_in, ce);
  return u;
}

Matrix block_forward(const ResidualBlock& b, const Matrix& u, BlockCache& c) {
  c.u = u;
  c.z1 = nn::dense_forward(b.fc1, u);
  c.h1 = nn::silu(c.z1);
  Matrix out = nn::dense_forward(b.fc2, c.h1);
  out += nn::dense_forward(b.skip, u);
  return out;
}

// Returns the gradient with respect to the conditioned input u.
Matrix block_backward(const ResidualBlock& b, const BlockCache& c, const Matrix& g_out,
                      ResidualBlock& acc) {
  const Matrix g_h1 = nn::dense_backward_into(b.fc2, c.h1, g_out, acc.fc2);
  const Matrix g_z1 = nn::silu_backward(c.z1, g_h1);
  Matrix g_u = nn::dense_backward_into(b.fc1, c.u, g_z1, acc.fc1);
  g_u += nn::dense_backward_into(b.skip, c.u, g_out, acc.skip);
  return g_u;
}

}  // namespace

DenoiserParams init_denoiser(const DenoiserConfig& config, Rng& rng) {
  config.validate();
  const int h = config.hidden;
  DenoiserParams p;
  p.config = config;
  p.input_embed = nn::init_dense(config.solution_dim, h, rng);
  p.time_embed = nn::init_dense(config.time_dim(), h, rng);
  p.cond_embed = nn::init_dense(config.condition_dim, h, rng);
  p.null_cond = Vector(h);
  for (int i = 0; i < h; ++i) p.null_cond(i) = rng.normal();
  for (int k = 0; k < config.depth; ++k)
    p.down.push_back(init_block(h, config.width(k), config.width(k + 1), rng));
  for (int k = 0; k < config.depth; ++k)
    p.up.push_back(init_block(h, config.width(k + 1), config.width(k), rng));
  p.output_head = nn::init_dense(h, config.solution_dim, rng);
  p.output_head.weight.setZero();
  return p;
}

DenoiserParams zeros_like(const DenoiserParams& p) {
  DenoiserParams z;
  z.config = p.config;
  z.input_embed = zeros_of(p.input_embed);
  z.time_embed = zeros_of(p.time_embed);
  z.cond_embed = zeros_of(p.cond_embed);
  z.null_cond = Vector::Zero(p.null_cond.size());
  for (const auto& b : p.down) z.down.push_back(zeros_of(b));
  for (const auto& b : p.up) z.up.push_back(zeros_of(b));
  z.output_head = zeros_of(p.output_head);
  return z;
}

std::size_t expected_parameter_count(const DenoiserConfig& c) {
  c.validate();
  const std::size_t h = c.hidden;
  std::size_t total = dense_count(c.solution_dim, h) + dense_count(c.time_dim(), h) +
                      dense_count(c.condition_dim, h) + h + dense_count(h, c.solution_dim);
  for (int k = 0; k < c.depth; ++k) {
    const std::size_t wide = c.width(k), narrow = c.width(k + 1);
    total += block_count(h, wide, narrow) + block_count(h, narrow, wide);
  }
  return total;
}

std::size_t parameter_count(const DenoiserParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

nn::ParamViews param_views(DenoiserParams& p) {
  nn::ParamViews v;
  for_each_tensor(p, [&](const std::string&, auto& t) {
    v.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return v;
}

nn::ConstParamViews param_views(const DenoiserParams& p) {
  nn::ConstParamViews v;
  for_each_tensor(p, [&](const std::string&, const auto& t) {
    v.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return v;
}

Vector time_embed(int t, int dim, int max_step) {
  if (t < 0 || t > max_step)
    throw std::invalid_argument("time_embed: step " + std::to_string(t) + " outside [0, " +
                                std::to_string(max_step) + "]");
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embed: dim must be even");
  Vector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * i / dim);
    e(2 * i) = std::sin(t * w);
    e(2 * i + 1) = std::cos(t * w);
  }
  return e;
}

Matrix denoise_forward(const DenoiserParams& p, const Matrix& y_t, std::span<const int> steps,
                       const Matrix& cond, std::span<const std::uint8_t> null_mask,
                       DenoiserCache* cache) {
  const auto& cfg = p.config;
  const Eigen::Index batch = y_t.cols();
  if (y_t.rows() != cfg.solution_dim)
    throw std::invalid_argument("denoise_forward: y_t has wrong dimension");
  if (cond.rows() != cfg.condition_dim || cond.cols() != batch)
    throw std::invalid_argument("denoise_forward: condition has wrong shape");
  if (static_cast<Eigen::Index>(steps.size()) != batch)
    throw std::invalid_argument("denoise_forward: one step per column required");
  if (!null_mask.empty() && static_cast<Eigen::Index>(null_mask.size()) != batch)
    throw std::invalid_argument("denoise_forward: null mask length mismatch");
  if (!y_t.allFinite()) throw std::invalid_argument("denoise_forward: non-finite y_t");

  DenoiserCache local;
  DenoiserCache& c = cache ? *cache : local;
  c.valid = false;
  c.y = y_t;
  c.null_mask.assign(null_mask.begin(), null_mask.end());
  if (c.null_mask.empty()) c.null_mask.assign(batch, 0);

  // Null columns never see their condition input.
  c.cond = cond;
  for (Eigen::Index j = 0; j < batch; ++j)
    if (c.null_mask[j]) c.cond.col(j).setZero();

  std::map<int, Vector> table;
  c.temb.resize(cfg.time_dim(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int t = steps[j];
    if (t < 1 || t > cfg.max_step)
      throw std::invalid_argument("denoise_forward: step outside [1, T]");
    auto it = table.find(t);
    if (it == table.end()) it = table.emplace(t, time_embed(t, cfg.time_dim(), cfg.max_step)).first;
    c.temb.col(j) = it->second;
  }
  c.te_pre = nn::dense_forward(p.time_embed, c.temb);
  c.te = nn::silu(c.te_pre);
  c.ce_pre = nn::dense_forward(p.cond_embed, c.cond);
  c.ce = nn::silu(c.ce_pre);
  for (Eigen::Index j = 0; j < batch; ++j)
    if (c.null_mask[j]) c.ce.col(j) = p.null_cond;

  c.e0 = nn::dense_forward(p.input_embed, y_t);
  const int n = cfg.depth;
  std::vector<Matrix> acts(n + 1);
  acts[0] = c.e0;
  c.down.assign(n, {});
  for (int k = 0; k < n; ++k)
    acts[k + 1] = block_forward(p.down[k], condition_input(p.down[k], acts[k], c.te, c.ce), c.down[k]);

  c.up.assign(n, {});
  Matrix v = acts[n];
  for (int k = n - 1; k >= 0; --k) {
    Matrix out = block_forward(p.up[k], condition_input(p.up[k], v, c.te, c.ce), c.up[k]);
    v = out + acts[k];
  }
  c.v0 = v;
  Matrix eps = nn::dense_forward(p.output_head, nn::silu(v));
  c.valid = true;
  return eps;
}

Vector denoise_forward(const DenoiserParams& p, const Vector& y_t, int t, const Vector* cond) {
  const std::uint8_t mask = cond ? 0 : 1;
  const Matrix c = cond ? Matrix(*cond) : Matrix::Zero(p.config.condition_dim, 1);
  const int step = t;
  return denoise_forward(p, y_t, std::span<const int>(&step, 1), c,
                         std::span<const std::uint8_t>(&mask, 1))
      .col(0);
}

DenoiserParams denoise_backward(const DenoiserParams& p, const DenoiserCache& c,
                                const Matrix& upstream) {
  if (!c.valid) throw StateError("denoise_backward: forward cache not populated");
  if (upstream.rows() != p.config.solution_dim || upstream.cols() != c.y.cols())
    throw std::invalid_argument("denoise_backward: upstream shape mismatch");

  DenoiserParams g = zeros_like(p);
  const int n = p.config.depth;
  const Eigen::Index batch = c.y.cols();

  const Matrix g_s = nn::dense_backward_into(p.output_head, nn::silu(c.v0), upstream, g.output_head);
  Matrix g_v = nn::silu_backward(c.v0, g_s);

  Matrix g_te = Matrix::Zero(p.config.hidden, batch);
  Matrix g_ce = Matrix::Zero(p.config.hidden, batch);
  auto conditioning_backward = [&](const ResidualBlock& b, ResidualBlock& acc, const Matrix& g_u) {
    g_te += nn::dense_backward_into(b.time_in, c.te, g_u, acc.time_in);
    g_ce += nn::dense_backward_into(b.cond_in, c.ce, g_u, acc.cond_in);
  };

  // Gradients reaching the activation that entered down block k (k = n is the bottleneck).
  std::vector<Matrix> g_act(n + 1);
  for (int k = 0; k < n; ++k) {
    g_act[k] = g_v;  // skip sum v_k = up_k(...) + act_k
    const Matrix g_u = block_backward(p.up[k], c.up[k], g_v, g.up[k]);
    conditioning_backward(p.up[k], g.up[k], g_u);
    g_v = g_u;
  }
  g_act[n] = g_v;

  for (int k = n - 1; k >= 0; --k) {
    const Matrix g_u = block_backward(p.down[k], c.down[k], g_act[k + 1], g.down[k]);
    conditioning_backward(p.down[k], g.down[k], g_u);
    g_act[k] += g_u;
  }

  nn::dense_backward_into(p.input_embed, c.y, g_act[0], g.input_embed);
  nn::dense_backward_into(p.time_embed, c.temb, nn::silu_backward(c.te_pre, g_te), g.time_embed);

  for (Eigen::Index j = 0; j < batch; ++j) {
    if (c.null_mask[j]) {
      g.null_cond += g_ce.col(j);
      g_ce.col(j).setZero();
    }
  }
  nn::dense_backward_into(p.cond_embed, c.cond, nn::silu_backward(c.ce_pre, g_ce), g.cond_embed);
  return g;
}

}  // namespace diffsg
