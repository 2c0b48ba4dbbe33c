#include "diffsg/data.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>

#include "diffsg/errors.hpp"
#include "diffsg/parallel.hpp"

namespace diffsg {

using Eigen::VectorXd;

int default_train_size(ProblemKind kind) { return kind == ProblemKind::CO ? 50000 : 10000; }

std::uint64_t split_seed(std::uint64_t base, Split split) {
  switch (split) {
    case Split::Train: return base;
    case Split::ValidationIn: return base + 1;
    case Split::ValidationOod: return base + 2;
  }
  return base;
}

namespace {

Pair draw_pair(ProblemKind kind, Domain domain, const ProblemConfig& ranges, Rng& rng) {
  for (int attempt = 0; attempt < kMaxInfeasibleDraws; ++attempt) {
    Instance x = sample_instance(kind, domain, ranges, rng);
    try {
      VectorXd y = oracle(x);
      return {std::move(x), std::move(y)};
    } catch (const InfeasibleError&) {
      // NU positions that cannot meet the QoS floor anywhere; draw again.
    }
  }
  throw InfeasibleError("dataset generation: " + std::to_string(kMaxInfeasibleDraws) +
                        " consecutive infeasible instances");
}

}  // namespace

Dataset generate_dataset(ProblemKind kind, int size, Domain domain, std::uint64_t seed,
                         const ProblemConfig& ranges, int threads) {
  if (size < 1) throw std::invalid_argument("generate_dataset: size must be >= 1");
  Dataset d{kind, domain, seed, ranges, {}};
  std::vector<std::optional<Pair>> slots(static_cast<std::size_t>(size));
  parallel_for(slots.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    slots[i] = draw_pair(kind, domain, ranges, rng);
  });
  d.pairs.reserve(slots.size());
  for (auto& s : slots) d.pairs.push_back(std::move(*s));
  return d;
}

// Normalization -------------------------------------------------------------

NormStats fit_norm(const Dataset& d) {
  if (d.pairs.empty()) throw std::invalid_argument("fit_norm: empty dataset");
  const int c = condition_dim(d.kind);
  const double n = static_cast<double>(d.pairs.size());
  NormStats s{d.kind, VectorXd::Zero(c), VectorXd::Zero(c)};
  for (const auto& p : d.pairs) s.mean += condition_features(p.x);
  s.mean /= n;
  for (const auto& p : d.pairs) s.std += (condition_features(p.x) - s.mean).cwiseAbs2();
  s.std = (s.std / n).cwiseSqrt();
  for (int i = 0; i < c; ++i) {
    if (s.std(i) > 1e-12 * std::max(1.0, std::abs(s.mean(i)))) continue;
    spdlog::warn("condition feature {} of {} has zero variance; using std = 1", i,
                 to_string(d.kind));
    s.std(i) = 1.0;
  }
  return s;
}

VectorXd normalize_condition(const NormStats& s, const Instance& x) {
  const VectorXd f = condition_features(x);
  if (f.size() != s.mean.size())
    throw std::invalid_argument("normalize_condition: stats do not match the instance kind");
  return (f - s.mean).cwiseQuotient(s.std);
}

VectorXd normalize_solution(const Instance& x, const VectorXd& y) {
  return (2.0 * to_unit(x, y)).array() - 1.0;
}

VectorXd denormalize_solution(const Instance& x, const VectorXd& v) {
  return from_unit(x, (0.5 * (v.array() + 1.0)).matrix());
}

Eigen::MatrixXd condition_matrix(const NormStats& s, const Dataset& d) {
  Eigen::MatrixXd m(condition_dim(d.kind), static_cast<Eigen::Index>(d.pairs.size()));
  for (std::size_t i = 0; i < d.pairs.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) = normalize_condition(s, d.pairs[i].x);
  return m;
}

Eigen::MatrixXd solution_matrix(const Dataset& d) {
  Eigen::MatrixXd m(solution_dim(d.kind), static_cast<Eigen::Index>(d.pairs.size()));
  for (std::size_t i = 0; i < d.pairs.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) = normalize_solution(d.pairs[i].x, d.pairs[i].y);
  return m;
}

// Persistence ---------------------------------------------------------------

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json header = {{"format", "diffsg-dataset"},
                           {"version", kDatasetFormatVersion},
                           {"kind", to_string(d.kind)},
                           {"domain", to_string(d.domain)},
                           {"seed", d.seed},
                           {"size", d.pairs.size()},
                           {"ranges", d.ranges}};
  out << header.dump() << '\n';
  for (const auto& p : d.pairs) {
    nlohmann::json rec = {{"x", p.x}, {"y", std::vector<double>(p.y.data(), p.y.data() + p.y.size())}};
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open dataset");
  std::string line;
  std::size_t lineno = 0;
  Dataset d;
  std::size_t expected = 0;
  try {
    if (!std::getline(in, line)) throw LoadError(path, 1, "missing header");
    ++lineno;
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != "diffsg-dataset")
      throw LoadError(path, lineno, "not a dataset file");
    if (h.at("version").get<int>() != kDatasetFormatVersion)
      throw LoadError(path, lineno,
                      "unsupported dataset version " + h.at("version").dump() + " (expected " +
                          std::to_string(kDatasetFormatVersion) + ")");
    d.kind = parse_kind(h.at("kind").get<std::string>());
    d.domain = parse_domain(h.at("domain").get<std::string>());
    d.seed = h.at("seed").get<std::uint64_t>();
    d.ranges = h.at("ranges").get<ProblemConfig>();
    expected = h.at("size").get<std::size_t>();
    const auto n = static_cast<Eigen::Index>(solution_dim(d.kind));
    d.pairs.reserve(expected);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      Pair p{instance_from_json(d.kind, rec.at("x")), VectorXd()};
      const auto y = rec.at("y").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(y.size()) != n)
        throw LoadError(path, lineno, "solution has wrong dimension");
      p.y = Eigen::Map<const VectorXd>(y.data(), n);
      d.pairs.push_back(std::move(p));
    }
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(path, lineno, e.what());
  }
  if (d.pairs.size() != expected)
    throw LoadError(path, lineno,
                    "header promises " + std::to_string(expected) + " records, found " +
                        std::to_string(d.pairs.size()));
  return d;
}

void save_stats(const NormStats& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j = {{"format", "diffsg-stats"},
                      {"version", kStatsFormatVersion},
                      {"kind", to_string(s.kind)},
                      {"solution_map", "unit-box per instance, then 2u - 1"},
                      {"condition_mean", vec(s.mean)},
                      {"condition_std", vec(s.std)}};
  out << j.dump(2) << '\n';
}

NormStats load_stats(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open stats");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "diffsg-stats") throw LoadError(path, 0, "not a stats file");
    if (j.at("version").get<int>() != kStatsFormatVersion)
      throw LoadError(path, 0, "unsupported stats version " + j.at("version").dump());
    NormStats s;
    s.kind = parse_kind(j.at("kind").get<std::string>());
    const auto m = j.at("condition_mean").get<std::vector<double>>();
    const auto sd = j.at("condition_std").get<std::vector<double>>();
    if (m.size() != sd.size() || static_cast<int>(m.size()) != condition_dim(s.kind))
      throw LoadError(path, 0, "stats vectors do not match the problem kind");
    s.mean = Eigen::Map<const VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    s.std = Eigen::Map<const VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
    for (double v : sd)
      if (!(v > 0.0)) throw LoadError(path, 0, "non-positive std");
    return s;
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(path, 0, e.what());
  }
}

}  // namespace diffsg
