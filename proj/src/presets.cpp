#include "diffsg/presets.hpp"

namespace diffsg {

Preset preset(ProblemKind kind) {
  Preset p;
  switch (kind) {
    case ProblemKind::CO:
      p.epochs = 60;
      break;
    case ProblemKind::MSR3:
      p.epochs = 50;
      break;
    case ProblemKind::MSR80:
      p.epochs = 100;
      break;
    case ProblemKind::NU:
      p.hidden = 32;
      p.depth = 3;
      p.epochs = 100;
      break;
  }
  return p;
}

DenoiserConfig denoiser_config(ProblemKind kind, const Preset& p, int max_step) {
  return {solution_dim(kind), condition_dim(kind), p.hidden, p.depth, max_step};
}

MlpConfig mtfnn_config(ProblemKind kind, const Preset& p) {
  return {condition_dim(kind), solution_dim(kind), p.mtfnn_hidden, p.mtfnn_depth};
}

}  // namespace diffsg
