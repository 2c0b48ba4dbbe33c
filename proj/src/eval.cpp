#include "diffsg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "diffsg/errors.hpp"
#include "diffsg/parallel.hpp"

namespace diffsg {

using Eigen::VectorXd;

double exceed_ratio(const Instance& x, const VectorXd& y_pred, const VectorXd& y_star) {
  const double f_star = objective(x, y_star);
  if (f_star == 0.0 || !std::isfinite(f_star))
    throw std::domain_error("exceed_ratio: reference objective is zero or not finite");
  const double f_pred = objective(x, y_pred);
  if (!std::isfinite(f_pred)) return 0.0;
  return f_pred / f_star;
}

// Methods -------------------------------------------------------------------

DiffsgMethod::DiffsgMethod(DenoiserParams params, NormStats stats, SamplerConfig sampler)
    : params_(std::move(params)),
      stats_(std::move(stats)),
      sched_(cosine_schedule(params_.config.max_step)),
      sampler_(std::move(sampler)) {}

std::vector<VectorXd> DiffsgMethod::propose(const Instance& x, std::uint64_t seed, int k) const {
  const nn::Matrix ys = sample(params_, sched_, normalize_condition(stats_, x), sampler_, seed, k);
  std::vector<VectorXd> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) out.push_back(project_feasible(x, denormalize_solution(x, ys.col(j))));
  return out;
}

MtfnnMethod::MtfnnMethod(MlpParams params, NormStats stats)
    : params_(std::move(params)), stats_(std::move(stats)) {}

std::vector<VectorXd> MtfnnMethod::propose(const Instance& x, std::uint64_t, int) const {
  return {mtfnn_predict(params_, stats_, x)};
}

GdMethod::GdMethod(GdConfig config, int starts) : config_(config), starts_(starts) {}

std::vector<VectorXd> GdMethod::propose(const Instance& x, std::uint64_t seed, int) const {
  return {gd_solve_multistart(x, config_, starts_, seed).y};
}

std::vector<VectorXd> OracleMethod::propose(const Instance& x, std::uint64_t, int) const {
  return {oracle(x)};
}

// Evaluation ----------------------------------------------------------------

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"kind", to_string(r.kind)},  {"method", r.method},
       {"domain", to_string(r.domain)}, {"k", r.k},
       {"count", r.count},           {"mean_exceed_ratio", r.mean},
       {"median_exceed_ratio", r.median}, {"within_1pct", r.within_1pct},
       {"ms_per_sample", r.ms_per_sample}, {"seed", r.seed}};
}

EvalReport evaluate(const Method& method, const Dataset& d, int k, std::uint64_t seed, int threads,
                    std::vector<double>* ratios) {
  if (k < 1) throw std::invalid_argument("evaluate: K must be >= 1");
  if (d.pairs.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t n = d.pairs.size();
  std::vector<double> r(n), ms(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const Pair& p = d.pairs[i];
    std::vector<VectorXd> cands;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cands = method.propose(p.x, derive_seed(seed, i), k);
    } catch (const SamplingError& e) {
      throw SamplingError(e.step(), "instance " + std::to_string(i) + ": " + e.what());
    }
    ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    double best = 0.0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const double v = exceed_ratio(p.x, cands[j], p.y);
      if (j == 0 || (sense(d.kind) == Sense::Minimize ? v < best : v > best)) best = v;
    }
    r[i] = best;
  });
  EvalReport rep;
  rep.kind = d.kind;
  rep.method = method.name();
  rep.domain = d.domain;
  rep.k = k;
  rep.count = n;
  rep.seed = seed;
  double sum = 0.0, within = 0.0, total_ms = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += r[i];
    total_ms += ms[i];
    if (std::abs(r[i] - 1.0) <= 0.01) within += 1.0;
  }
  rep.mean = sum / static_cast<double>(n);
  rep.within_1pct = within / static_cast<double>(n);
  rep.ms_per_sample = total_ms / static_cast<double>(n);
  std::vector<double> sorted = r;
  std::sort(sorted.begin(), sorted.end());
  rep.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  if (ratios) *ratios = std::move(r);
  return rep;
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::string out = fmt::format("{:<6} {:<7} {:<6} {:>4} {:>6} {:>9} {:>9} {:>8} {:>10}\n", "kind",
                                "method", "domain", "K", "count", "mean", "median", "<=1%",
                                "ms/sample");
  for (const auto& r : reports)
    out += fmt::format("{:<6} {:<7} {:<6} {:>4} {:>6} {:>9.4f} {:>9.4f} {:>8.3f} {:>10.2f}\n",
                       to_string(r.kind), r.method, to_string(r.domain), r.k, r.count, r.mean,
                       r.median, r.within_1pct, r.ms_per_sample);
  return out;
}

void write_reports(const std::vector<EvalReport>& reports, const std::string& table_path,
                   const std::string& jsonl_path) {
  std::ofstream table(table_path), lines(jsonl_path);
  if (!table) throw std::runtime_error("cannot write " + table_path);
  if (!lines) throw std::runtime_error("cannot write " + jsonl_path);
  table << format_report_table(reports);
  for (const auto& r : reports) lines << nlohmann::json(r).dump() << '\n';
}

// Trace ---------------------------------------------------------------------

GridSpec default_grid(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::CO:
    case ProblemKind::MSR3: return {{50}};
    case ProblemKind::MSR80: return {{}};
    case ProblemKind::NU: return {{40, 40, 40}};
  }
  return {};
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Points of the 3-simplex lattice {u : u_i = k_i / m, sum u = 1}.
std::vector<VectorXd> simplex_lattice(int m) {
  std::vector<VectorXd> pts;
  for (int a = 0; a <= m; ++a)
    for (int b = 0; a + b <= m; ++b) {
      VectorXd u(3);
      u << double(a) / m, double(b) / m, double(m - a - b) / m;
      pts.push_back(u);
    }
  return pts;
}

nlohmann::json value_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

nlohmann::json simplex_values(const Instance& x, int m) {
  nlohmann::json pts = nlohmann::json::array();
  for (const VectorXd& u : simplex_lattice(m)) {
    const VectorXd y = project_feasible(x, from_unit(x, u));
    pts.push_back({{"u", to_vec(u)}, {"objective", value_or_null(objective(x, y))}});
  }
  return pts;
}

}  // namespace

nlohmann::json export_trace(const DiffsgMethod& method, const Instance& x, std::uint64_t seed,
                            const GridSpec& grid) {
  const ProblemKind kind = kind_of(x);
  const std::size_t want = kind == ProblemKind::NU ? 3 : kind == ProblemKind::MSR80 ? 0 : 1;
  if (grid.resolution.size() != want)
    throw std::invalid_argument("export_trace: " + to_string(kind) + " needs a " +
                                std::to_string(want) + "-entry grid, got " +
                                std::to_string(grid.resolution.size()));
  for (int r : grid.resolution)
    if (r < 1) throw std::invalid_argument("export_trace: grid resolution must be >= 1");

  SampleTrace trace;
  const nn::Matrix final_state = sample(method.params(), method.schedule(),
                                        normalize_condition(method.stats(), x), method.sampler(),
                                        seed, 1, &trace);
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t s = 0; s < trace.states.size(); ++s) {
    const VectorXd v = trace.states[s].col(0);
    const VectorXd native = denormalize_solution(x, v);
    const VectorXd projected = project_feasible(x, native);
    nlohmann::json rec = {{"t", trace.steps[s]},
                          {"normalized", to_vec(v)},
                          {"native", to_vec(native)},
                          {"projected", to_vec(projected)},
                          {"objective", value_or_null(objective(x, projected))}};
    if (kind == ProblemKind::NU) {
      const auto& nu = std::get<InstanceNU>(x);
      const int mx = grid.resolution[0], my = grid.resolution[1], mp = grid.resolution[2];
      nlohmann::json pos = nlohmann::json::array();
      for (int i = 0; i <= mx; ++i)
        for (int j = 0; j <= my; ++j) {
          VectorXd y = projected;
          y(0) = nu.width * i / mx;
          y(1) = nu.length * j / my;
          pos.push_back({y(0), y(1), value_or_null(objective(x, y))});
        }
      nlohmann::json pow = nlohmann::json::array();
      for (const VectorXd& u : simplex_lattice(mp)) {
        VectorXd y = projected;
        y.tail(3) = u * nu.power;
        pow.push_back({{"u", to_vec(u)}, {"objective", value_or_null(objective(x, y))}});
      }
      rec["position_lattice"] = std::move(pos);
      rec["power_lattice"] = std::move(pow);
    }
    steps.push_back(std::move(rec));
  }
  nlohmann::json out = {{"format", "diffsg-trace"},
                        {"version", 1},
                        {"kind", to_string(kind)},
                        {"seed", seed},
                        {"omega", method.sampler().guidance.omega},
                        {"instance", x},
                        {"oracle", to_vec(oracle(x))},
                        {"sample", to_vec(VectorXd(final_state.col(0)))},
                        {"steps", std::move(steps)}};
  if (kind == ProblemKind::CO || kind == ProblemKind::MSR3)
    out["simplex_lattice"] = simplex_values(x, grid.resolution[0]);
  return out;
}

}  // namespace diffsg
