#pragma once

#include "diffsg/baselines.hpp"
#include "diffsg/diffusion.hpp"
#include "diffsg/problems.hpp"

namespace diffsg {

/// Per-problem training defaults shared by the CLI and the acceptance suite.
struct Preset {
  int hidden = 64;
  int depth = 4;
  int epochs = 100;
  int batch_size = 256;
  double lr = 1e-3;
  int mtfnn_hidden = 64;
  int mtfnn_depth = 3;
};

Preset preset(ProblemKind kind);

DenoiserConfig denoiser_config(ProblemKind kind, const Preset& p, int max_step = 20);
MlpConfig mtfnn_config(ProblemKind kind, const Preset& p);

}  // namespace diffsg
