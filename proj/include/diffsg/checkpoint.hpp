#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

#include "diffsg/denoiser.hpp"

namespace diffsg {

inline constexpr int kCheckpointFormatVersion = 1;

struct Tensor {
  std::vector<int> shape;    // [rows, cols] for matrices, [n] for vectors
  std::vector<double> data;  // row-major
};

/// Self-describing parameter file: a type tag, a free-form config object and
/// named tensors with explicit shapes.
struct Checkpoint {
  std::string type;  // "denoiser" or "mtfnn"
  nlohmann::json config;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
/// Throws LoadError on a missing file, bad version or malformed content.
Checkpoint load_checkpoint(const std::string& path);

Tensor to_tensor(const nn::Matrix& m);
Tensor to_tensor(const nn::Vector& v);
/// Copies into `m`/`v`, whose shapes must already match.
void from_tensor(const Tensor& t, nn::Matrix& m, const std::string& name);
void from_tensor(const Tensor& t, nn::Vector& v, const std::string& name);

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

Checkpoint denoiser_checkpoint(const DenoiserParams& p, nlohmann::json extra = {});
DenoiserParams denoiser_from_checkpoint(const Checkpoint& c);

}  // namespace diffsg
