#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "diffsg/baselines.hpp"
#include "diffsg/data.hpp"
#include "diffsg/diffusion.hpp"

namespace diffsg {

/// f(x, y_pred) / f(x, y_star). A prediction that misses the NU rate floor
/// scores 0. Throws std::domain_error when f(x, y_star) is zero or not finite.
double exceed_ratio(const Instance& x, const Eigen::VectorXd& y_pred,
                    const Eigen::VectorXd& y_star);

/// A solver under evaluation. propose() returns feasible candidates in native
/// units; deterministic given (x, seed, k).
class Method {
 public:
  virtual ~Method() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Eigen::VectorXd> propose(const Instance& x, std::uint64_t seed,
                                               int k) const = 0;
};

class DiffsgMethod : public Method {
 public:
  DiffsgMethod(DenoiserParams params, NormStats stats, SamplerConfig sampler);
  std::string name() const override { return "diffsg"; }
  std::vector<Eigen::VectorXd> propose(const Instance& x, std::uint64_t seed, int k) const override;
  const DenoiserParams& params() const { return params_; }
  const NormStats& stats() const { return stats_; }
  const NoiseSchedule& schedule() const { return sched_; }
  SamplerConfig& sampler() { return sampler_; }
  const SamplerConfig& sampler() const { return sampler_; }

 private:
  DenoiserParams params_;
  NormStats stats_;
  NoiseSchedule sched_;
  SamplerConfig sampler_;
};

/// Single regression prediction; k is ignored.
class MtfnnMethod : public Method {
 public:
  MtfnnMethod(MlpParams params, NormStats stats);
  std::string name() const override { return "mtfnn"; }
  std::vector<Eigen::VectorXd> propose(const Instance& x, std::uint64_t seed, int k) const override;

 private:
  MlpParams params_;
  NormStats stats_;
};

/// Penalty gradient descent; `starts` > 1 runs gd_solve_multistart. k is ignored.
class GdMethod : public Method {
 public:
  explicit GdMethod(GdConfig config = {}, int starts = 1);
  std::string name() const override { return "gd"; }
  std::vector<Eigen::VectorXd> propose(const Instance& x, std::uint64_t seed, int k) const override;

 private:
  GdConfig config_;
  int starts_;
};

class OracleMethod : public Method {
 public:
  std::string name() const override { return "oracle"; }
  std::vector<Eigen::VectorXd> propose(const Instance& x, std::uint64_t seed, int k) const override;
};

struct EvalReport {
  ProblemKind kind = ProblemKind::MSR3;
  std::string method;
  Domain domain = Domain::In;
  int k = 1;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double within_1pct = 0.0;   // fraction with |ratio - 1| <= 0.01
  double ms_per_sample = 0.0; // mean propose() wall clock per instance
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Best-of-k over each pair of `d`; instance i uses seed derive_seed(seed, i).
/// `ratios`, if given, receives the per-instance exceed ratios in dataset order.
EvalReport evaluate(const Method& method, const Dataset& d, int k, std::uint64_t seed,
                    int threads = 1, std::vector<double>* ratios = nullptr);

/// Text table plus one JSON record per report.
std::string format_report_table(const std::vector<EvalReport>& reports);
void write_reports(const std::vector<EvalReport>& reports, const std::string& table_path,
                   const std::string& jsonl_path);

/// Lattice resolution for trace export: {m} for CO and MSR3 (simplex step 1/m),
/// {mx, my, mp} for NU (position grid and power simplex step 1/mp), {} for MSR80.
struct GridSpec {
  std::vector<int> resolution;
};

GridSpec default_grid(ProblemKind kind);

/// One denoising chain (stream `seed`, chain 0) with every visited state and
/// the objective lattices. The final state equals sample(..., seed, 1).
nlohmann::json export_trace(const DiffsgMethod& method, const Instance& x, std::uint64_t seed,
                            const GridSpec& grid);

}  // namespace diffsg
