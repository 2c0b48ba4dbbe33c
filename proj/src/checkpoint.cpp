#include "diffsg/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "diffsg/errors.hpp"

namespace diffsg {

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : c.tensors) tensors[name] = {{"shape", t.shape}, {"data", t.data}};
  const nlohmann::json j = {{"format", "diffsg-checkpoint"},
                            {"version", kCheckpointFormatVersion},
                            {"type", c.type},
                            {"config", c.config},
                            {"tensors", tensors}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open checkpoint");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "diffsg-checkpoint") throw LoadError(path, 0, "not a checkpoint");
    if (j.at("version").get<int>() != kCheckpointFormatVersion)
      throw LoadError(path, 0, "unsupported checkpoint version " + j.at("version").dump());
    Checkpoint c;
    c.type = j.at("type").get<std::string>();
    c.config = j.at("config");
    for (const auto& [name, t] : j.at("tensors").items()) {
      Tensor tensor{t.at("shape").get<std::vector<int>>(), t.at("data").get<std::vector<double>>()};
      std::size_t n = 1;
      for (int d : tensor.shape) n *= static_cast<std::size_t>(d);
      if (n != tensor.data.size())
        throw LoadError(path, 0, "tensor '" + name + "' size does not match its shape");
      c.tensors.emplace(name, std::move(tensor));
    }
    return c;
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(path, 0, e.what());
  }
}

Tensor to_tensor(const nn::Matrix& m) {
  Tensor t{{static_cast<int>(m.rows()), static_cast<int>(m.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  return t;
}

Tensor to_tensor(const nn::Vector& v) {
  return {{static_cast<int>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

void from_tensor(const Tensor& t, nn::Matrix& m, const std::string& name) {
  if (t.shape != std::vector<int>{static_cast<int>(m.rows()), static_cast<int>(m.cols())})
    throw std::invalid_argument("tensor '" + name + "' has the wrong shape");
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.data[k++];
}

void from_tensor(const Tensor& t, nn::Vector& v, const std::string& name) {
  if (t.shape != std::vector<int>{static_cast<int>(v.size())})
    throw std::invalid_argument("tensor '" + name + "' has the wrong shape");
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = t.data[static_cast<std::size_t>(i)];
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"solution_dim", c.solution_dim},
       {"condition_dim", c.condition_dim},
       {"hidden", c.hidden},
       {"depth", c.depth},
       {"max_step", c.max_step}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  j.at("solution_dim").get_to(c.solution_dim);
  j.at("condition_dim").get_to(c.condition_dim);
  j.at("hidden").get_to(c.hidden);
  j.at("depth").get_to(c.depth);
  j.at("max_step").get_to(c.max_step);
}

Checkpoint denoiser_checkpoint(const DenoiserParams& p, nlohmann::json extra) {
  Checkpoint c;
  c.type = "denoiser";
  c.config = std::move(extra);
  c.config["denoiser"] = p.config;
  for_each_tensor(p, [&](const std::string& name, const auto& t) { c.tensors[name] = to_tensor(t); });
  return c;
}

DenoiserParams denoiser_from_checkpoint(const Checkpoint& c) {
  if (c.type != "denoiser")
    throw std::invalid_argument("checkpoint holds a '" + c.type + "', not a denoiser");
  const auto config = c.config.at("denoiser").get<DenoiserConfig>();
  config.validate();
  Rng rng(0);
  DenoiserParams p = zeros_like(init_denoiser(config, rng));
  std::size_t used = 0;
  for_each_tensor(p, [&](const std::string& name, auto& t) {
    const auto it = c.tensors.find(name);
    if (it == c.tensors.end()) throw std::invalid_argument("checkpoint lacks tensor '" + name + "'");
    from_tensor(it->second, t, name);
    ++used;
  });
  if (used != c.tensors.size()) throw std::invalid_argument("checkpoint has unexpected tensors");
  return p;
}

}  // namespace diffsg
