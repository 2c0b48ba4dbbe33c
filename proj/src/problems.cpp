#include "diffsg/problems.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "diffsg/errors.hpp"

namespace diffsg {

using Eigen::VectorXd;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Clamps negatives and rescales onto {p >= 0, sum p = total}; a vector already
// on the budget within round-off is returned unchanged.
VectorXd project_budget(const VectorXd& raw, double total) {
  VectorXd p = raw.cwiseMax(0.0);
  const double s = p.sum();
  if (s <= 0.0) return VectorXd::Constant(p.size(), total / static_cast<double>(p.size()));
  if (std::abs(s - total) <= 1e-12 * total) return p;
  return p * (total / s);
}

int msr_channels(ProblemKind kind) { return kind == ProblemKind::MSR80 ? 80 : 3; }

}  // namespace

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::CO: return "co";
    case ProblemKind::MSR3: return "msr3";
    case ProblemKind::MSR80: return "msr80";
    case ProblemKind::NU: return "nu";
  }
  return "?";
}

std::string to_string(Domain domain) { return domain == Domain::In ? "in" : "ood"; }

ProblemKind parse_kind(std::string_view name) {
  const std::string s = lower(name);
  if (s == "co") return ProblemKind::CO;
  if (s == "msr3") return ProblemKind::MSR3;
  if (s == "msr80") return ProblemKind::MSR80;
  if (s == "nu") return ProblemKind::NU;
  throw std::invalid_argument("unknown problem kind '" + std::string(name) + "'");
}

Domain parse_domain(std::string_view name) {
  const std::string s = lower(name);
  if (s == "in") return Domain::In;
  if (s == "ood") return Domain::Ood;
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

// Config -------------------------------------------------------------------

namespace {

void put(nlohmann::json& j, const char* key, const Range& r) { j[key] = {r.lo, r.hi}; }

void get(const nlohmann::json& j, const char* key, Range& r) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  require(v.is_array() && v.size() == 2, std::string("range '") + key + "' must be [lo, hi]");
  r.lo = v[0].get<double>();
  r.hi = v[1].get<double>();
  require(r.lo <= r.hi, std::string("range '") + key + "' has lo > hi");
}

void get(const nlohmann::json& j, const char* key, double& v) {
  if (j.contains(key)) v = j.at(key).get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const ProblemConfig& c) {
  nlohmann::json co, msr, nu;
  put(co, "task_bytes_in", c.co.task_bytes_in);
  put(co, "task_bytes_ood", c.co.task_bytes_ood);
  put(co, "gain_in", c.co.gain_in);
  put(co, "gain_ood", c.co.gain_ood);
  put(co, "f_local_in", c.co.f_local_in);
  put(co, "f_local_ood", c.co.f_local_ood);
  co["bandwidth"] = c.co.bandwidth;
  co["edge_cpu"] = c.co.edge_cpu;
  co["tx_power"] = c.co.tx_power;
  co["noise"] = c.co.noise;
  co["cycles_per_byte"] = c.co.cycles_per_byte;
  co["kappa"] = c.co.kappa;
  co["w_time"] = c.co.w_time;
  co["w_energy"] = c.co.w_energy;
  put(msr, "gain_in", c.msr.gain_in);
  put(msr, "gain_ood", c.msr.gain_ood);
  put(msr, "power_in", c.msr.power_in);
  put(msr, "power_ood", c.msr.power_ood);
  msr["noise"] = c.msr.noise;
  nu["width"] = c.nu.width;
  nu["length"] = c.nu.length;
  nu["altitude"] = c.nu.altitude;
  nu["ref_gain"] = c.nu.ref_gain;
  nu["noise"] = c.nu.noise;
  nu["rate_min"] = c.nu.rate_min;
  put(nu, "power_in", c.nu.power_in);
  put(nu, "power_ood", c.nu.power_ood);
  j = nlohmann::json{{"format_version", 1}, {"co", co}, {"msr", msr}, {"nu", nu}};
}

void from_json(const nlohmann::json& j, ProblemConfig& c) {
  c = ProblemConfig{};
  if (j.contains("co")) {
    const auto& co = j.at("co");
    get(co, "task_bytes_in", c.co.task_bytes_in);
    get(co, "task_bytes_ood", c.co.task_bytes_ood);
    get(co, "gain_in", c.co.gain_in);
    get(co, "gain_ood", c.co.gain_ood);
    get(co, "f_local_in", c.co.f_local_in);
    get(co, "f_local_ood", c.co.f_local_ood);
    get(co, "bandwidth", c.co.bandwidth);
    get(co, "edge_cpu", c.co.edge_cpu);
    get(co, "tx_power", c.co.tx_power);
    get(co, "noise", c.co.noise);
    get(co, "cycles_per_byte", c.co.cycles_per_byte);
    get(co, "kappa", c.co.kappa);
    get(co, "w_time", c.co.w_time);
    get(co, "w_energy", c.co.w_energy);
  }
  if (j.contains("msr")) {
    const auto& msr = j.at("msr");
    get(msr, "gain_in", c.msr.gain_in);
    get(msr, "gain_ood", c.msr.gain_ood);
    get(msr, "power_in", c.msr.power_in);
    get(msr, "power_ood", c.msr.power_ood);
    get(msr, "noise", c.msr.noise);
  }
  if (j.contains("nu")) {
    const auto& nu = j.at("nu");
    get(nu, "width", c.nu.width);
    get(nu, "length", c.nu.length);
    get(nu, "altitude", c.nu.altitude);
    get(nu, "ref_gain", c.nu.ref_gain);
    get(nu, "noise", c.nu.noise);
    get(nu, "rate_min", c.nu.rate_min);
    get(nu, "power_in", c.nu.power_in);
    get(nu, "power_ood", c.nu.power_ood);
  }
}

ProblemConfig load_problem_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path, 0, "cannot open problem config");
  try {
    return nlohmann::json::parse(in).get<ProblemConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path, 0, e.what());
  }
}

void save_problem_config(const ProblemConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << nlohmann::json(c).dump(2) << '\n';
}

// Instances ----------------------------------------------------------------

ProblemKind kind_of(const Instance& x) {
  return std::visit(overloaded{
                        [](const InstanceCO&) { return ProblemKind::CO; },
                        [](const InstanceMSR& m) {
                          return m.gain.size() == 80 ? ProblemKind::MSR80 : ProblemKind::MSR3;
                        },
                        [](const InstanceNU&) { return ProblemKind::NU; },
                    },
                    x);
}

Sense sense(ProblemKind kind) {
  return kind == ProblemKind::CO ? Sense::Minimize : Sense::Maximize;
}

int solution_dim(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::CO: return 3;
    case ProblemKind::MSR3: return 3;
    case ProblemKind::MSR80: return 80;
    case ProblemKind::NU: return 5;
  }
  return 0;
}

int condition_dim(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::CO: return 11;
    case ProblemKind::MSR3: return 4;
    case ProblemKind::MSR80: return 81;
    case ProblemKind::NU: return 8;
  }
  return 0;
}

void validate(const Instance& x) {
  std::visit(overloaded{
                 [](const InstanceCO& c) {
                   for (int i = 0; i < 3; ++i)
                     require(c.task_bytes[i] > 0 && c.gain[i] > 0 && c.f_local[i] > 0,
                             "CO instance: per-user fields must be positive");
                   require(c.bandwidth > 0 && c.edge_cpu > 0 && c.tx_power > 0 && c.noise > 0 &&
                               c.cycles_per_byte > 0 && c.kappa > 0 && c.w_time > 0 &&
                               c.w_energy > 0,
                           "CO instance: shared fields must be positive");
                   require(std::abs(c.w_time + c.w_energy - 1.0) < 1e-12,
                           "CO instance: weights must sum to 1");
                 },
                 [](const InstanceMSR& m) {
                   require(m.gain.size() == 3 || m.gain.size() == 80,
                           "MSR instance: 3 or 80 channels");
                   for (double g : m.gain) require(g > 0, "MSR instance: gains must be positive");
                   require(m.power > 0 && m.noise > 0, "MSR instance: power and noise positive");
                 },
                 [](const InstanceNU& n) {
                   require(n.altitude > 0 && n.power > 0 && n.ref_gain > 0 && n.noise > 0 &&
                               n.width > 0 && n.length > 0 && n.rate_min >= 0,
                           "NU instance: invalid scalar field");
                   for (const auto& u : n.terminals)
                     require(u[0] >= 0 && u[0] <= n.width && u[1] >= 0 && u[1] <= n.length,
                             "NU instance: terminal outside region");
                 },
             },
             x);
}

VectorXd condition_features(const Instance& x) {
  return std::visit(overloaded{
                        [](const InstanceCO& c) {
                          VectorXd f(11);
                          for (int i = 0; i < 3; ++i) {
                            f(i) = c.task_bytes[i];
                            f(3 + i) = c.gain[i];
                            f(6 + i) = c.f_local[i];
                          }
                          f(9) = c.bandwidth;
                          f(10) = c.edge_cpu;
                          return f;
                        },
                        [](const InstanceMSR& m) {
                          const auto k = static_cast<Eigen::Index>(m.gain.size());
                          VectorXd f(k + 1);
                          for (Eigen::Index i = 0; i < k; ++i) f(i) = m.gain[i];
                          f(k) = m.power;
                          return f;
                        },
                        [](const InstanceNU& n) {
                          VectorXd f(8);
                          for (int i = 0; i < 3; ++i) {
                            f(2 * i) = n.terminals[i][0];
                            f(2 * i + 1) = n.terminals[i][1];
                          }
                          f(6) = n.altitude;
                          f(7) = n.power;
                          return f;
                        },
                    },
                    x);
}

void to_json(nlohmann::json& j, const Instance& x) {
  std::visit(overloaded{
                 [&](const InstanceCO& c) {
                   j = {{"task_bytes", c.task_bytes}, {"gain", c.gain},
                        {"f_local", c.f_local},       {"bandwidth", c.bandwidth},
                        {"edge_cpu", c.edge_cpu},     {"tx_power", c.tx_power},
                        {"noise", c.noise},           {"cycles_per_byte", c.cycles_per_byte},
                        {"kappa", c.kappa},           {"w_time", c.w_time},
                        {"w_energy", c.w_energy}};
                 },
                 [&](const InstanceMSR& m) {
                   j = {{"gain", m.gain}, {"power", m.power}, {"noise", m.noise}};
                 },
                 [&](const InstanceNU& n) {
                   j = {{"terminals", n.terminals}, {"altitude", n.altitude},
                        {"power", n.power},         {"noise", n.noise},
                        {"ref_gain", n.ref_gain},   {"width", n.width},
                        {"length", n.length},       {"rate_min", n.rate_min}};
                 },
             },
             x);
}

Instance instance_from_json(ProblemKind kind, const nlohmann::json& j) {
  Instance x;
  switch (kind) {
    case ProblemKind::CO: {
      InstanceCO c;
      j.at("task_bytes").get_to(c.task_bytes);
      j.at("gain").get_to(c.gain);
      j.at("f_local").get_to(c.f_local);
      j.at("bandwidth").get_to(c.bandwidth);
      j.at("edge_cpu").get_to(c.edge_cpu);
      j.at("tx_power").get_to(c.tx_power);
      j.at("noise").get_to(c.noise);
      j.at("cycles_per_byte").get_to(c.cycles_per_byte);
      j.at("kappa").get_to(c.kappa);
      j.at("w_time").get_to(c.w_time);
      j.at("w_energy").get_to(c.w_energy);
      x = c;
      break;
    }
    case ProblemKind::MSR3:
    case ProblemKind::MSR80: {
      InstanceMSR m;
      j.at("gain").get_to(m.gain);
      j.at("power").get_to(m.power);
      j.at("noise").get_to(m.noise);
      require(static_cast<int>(m.gain.size()) == msr_channels(kind),
              "MSR instance: channel count does not match kind");
      x = m;
      break;
    }
    case ProblemKind::NU: {
      InstanceNU n;
      j.at("terminals").get_to(n.terminals);
      j.at("altitude").get_to(n.altitude);
      j.at("power").get_to(n.power);
      j.at("noise").get_to(n.noise);
      j.at("ref_gain").get_to(n.ref_gain);
      j.at("width").get_to(n.width);
      j.at("length").get_to(n.length);
      j.at("rate_min").get_to(n.rate_min);
      x = n;
      break;
    }
  }
  validate(x);
  return x;
}

// Objectives ---------------------------------------------------------------

double uplink_rate(const InstanceCO& x, int user) {
  return x.bandwidth * std::log2(1.0 + x.gain[user] * x.tx_power / x.noise);
}

double local_cost(const InstanceCO& x, int user) {
  const double cycles = x.cycles_per_byte * x.task_bytes[user];
  const double f = x.f_local[user];
  return x.w_time * cycles / f + x.w_energy * x.kappa * f * f * cycles;
}

double objective_co(const InstanceCO& x, const VectorXd& y) {
  if (y.size() != 3) throw std::invalid_argument("objective_co: solution must have 3 entries");
  double offloaded = 0.0;
  double cost = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (!(y(i) >= 0.0 && y(i) <= 1.0))
      throw InfeasibleError("objective_co: allocation outside [0, 1]");
    if (y(i) < kOffloadThreshold) {
      cost += local_cost(x, i);
      continue;
    }
    offloaded += y(i);
    const double cycles = x.cycles_per_byte * x.task_bytes[i];
    const double tx_time = 8.0 * x.task_bytes[i] / uplink_rate(x, i);
    cost += x.w_time * (tx_time + cycles / (y(i) * x.edge_cpu)) +
            x.w_energy * x.tx_power * tx_time;
  }
  if (offloaded > 1.0 + kFeasibilityTol)
    throw InfeasibleError("objective_co: edge allocation exceeds 1");
  return cost;
}

double objective_msr(const InstanceMSR& x, const VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(x.gain.size()))
    throw std::invalid_argument("objective_msr: dimension mismatch");
  double rate = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p(i) >= 0.0)) throw InfeasibleError("objective_msr: negative power");
    rate += std::log2(1.0 + x.gain[i] * p(i) / x.noise);
  }
  if (p.sum() > x.power * (1.0 + kFeasibilityTol))
    throw InfeasibleError("objective_msr: power budget exceeded");
  return rate;
}

std::array<double, 3> nu_gains(const InstanceNU& x, double qx, double qy) {
  std::array<double, 3> g{};
  for (int i = 0; i < 3; ++i) {
    const double dx = qx - x.terminals[i][0];
    const double dy = qy - x.terminals[i][1];
    g[i] = x.ref_gain / (x.altitude * x.altitude + dx * dx + dy * dy);
  }
  return g;
}

namespace {

// Terminal indices sorted by ascending gain (weakest first).
std::array<int, 3> weakest_first(const std::array<double, 3>& g) {
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return g[a] < g[b]; });
  return order;
}

}  // namespace

std::array<double, 3> nu_rates(const InstanceNU& x, const VectorXd& y) {
  if (y.size() != 5) throw std::invalid_argument("objective_nu: solution must have 5 entries");
  if (!(y(0) >= 0.0 && y(0) <= x.width && y(1) >= 0.0 && y(1) <= x.length))
    throw InfeasibleError("objective_nu: UAV position outside region");
  for (int i = 0; i < 3; ++i)
    if (!(y(2 + i) >= 0.0)) throw InfeasibleError("objective_nu: negative power");
  const auto g = nu_gains(x, y(0), y(1));
  const auto order = weakest_first(g);
  std::array<double, 3> rates{};
  for (int k = 0; k < 3; ++k) {
    const int i = order[k];
    double interference = 0.0;
    for (int m = k + 1; m < 3; ++m) interference += y(2 + order[m]);
    rates[i] = std::log2(1.0 + g[i] * y(2 + i) / (g[i] * interference + x.noise));
  }
  return rates;
}

double objective_nu(const InstanceNU& x, const VectorXd& y) {
  const auto rates = nu_rates(x, y);
  if (y.tail(3).sum() > x.power * (1.0 + kFeasibilityTol))
    throw InfeasibleError("objective_nu: power budget exceeded");
  double total = 0.0;
  for (double r : rates) {
    if (r < x.rate_min - kFeasibilityTol) return kNegInf;
    total += r;
  }
  return total;
}

double objective(const Instance& x, const VectorXd& y) {
  return std::visit(overloaded{
                        [&](const InstanceCO& c) { return objective_co(c, y); },
                        [&](const InstanceMSR& m) { return objective_msr(m, y); },
                        [&](const InstanceNU& n) { return objective_nu(n, y); },
                    },
                    x);
}

bool better_or_equal(ProblemKind kind, double a, double b) {
  return sense(kind) == Sense::Minimize ? a <= b : a >= b;
}

// Feasible set -------------------------------------------------------------

bool is_feasible(const Instance& x, const VectorXd& y) {
  return std::visit(
      overloaded{
          [&](const InstanceCO&) {
            if (y.size() != 3) return false;
            double s = 0.0;
            for (int i = 0; i < 3; ++i) {
              if (y(i) == 0.0) continue;
              if (!(y(i) >= kOffloadThreshold && y(i) <= 1.0)) return false;
              s += y(i);
            }
            return s == 0.0 || std::abs(s - 1.0) <= kFeasibilityTol;
          },
          [&](const InstanceMSR& m) {
            if (y.size() != static_cast<Eigen::Index>(m.gain.size())) return false;
            return (y.array() >= 0.0).all() &&
                   std::abs(y.sum() - m.power) <= kFeasibilityTol * m.power;
          },
          [&](const InstanceNU& n) {
            if (y.size() != 5) return false;
            const VectorXd p = y.tail(3);
            return y(0) >= 0.0 && y(0) <= n.width && y(1) >= 0.0 && y(1) <= n.length &&
                   (p.array() >= 0.0).all() &&
                   std::abs(p.sum() - n.power) <= kFeasibilityTol * n.power;
          },
      },
      x);
}

VectorXd project_feasible(const Instance& x, const VectorXd& raw) {
  if (!raw.allFinite()) throw std::invalid_argument("project_feasible: non-finite input");
  return std::visit(
      overloaded{
          [&](const InstanceCO&) {
            if (raw.size() != 3) throw std::invalid_argument("project_feasible: CO needs 3 entries");
            VectorXd y = raw.cwiseMax(0.0).cwiseMin(1.0);
            // Thresholding and renormalizing alternate until neither changes y;
            // each pass either stops or drops at least one user.
            for (;;) {
              bool dropped = false;
              for (int i = 0; i < 3; ++i)
                if (y(i) > 0.0 && y(i) < kOffloadThreshold) {
                  y(i) = 0.0;
                  dropped = true;
                }
              const double s = y.sum();
              if (s == 0.0) return y;
              if (std::abs(s - 1.0) > 1e-12) y /= s;
              if (!dropped && (y.array() == 0.0 || y.array() >= kOffloadThreshold).all()) return y;
            }
          },
          [&](const InstanceMSR& m) {
            if (raw.size() != static_cast<Eigen::Index>(m.gain.size()))
              throw std::invalid_argument("project_feasible: MSR dimension mismatch");
            return project_budget(raw, m.power);
          },
          [&](const InstanceNU& n) {
            if (raw.size() != 5) throw std::invalid_argument("project_feasible: NU needs 5 entries");
            VectorXd y(5);
            y(0) = std::clamp(raw(0), 0.0, n.width);
            y(1) = std::clamp(raw(1), 0.0, n.length);
            y.tail(3) = project_budget(raw.tail(3), n.power);
            return y;
          },
      },
      x);
}

VectorXd to_unit(const Instance& x, const VectorXd& y) {
  return std::visit(overloaded{
                        [&](const InstanceCO&) { return VectorXd(y); },
                        [&](const InstanceMSR& m) { return VectorXd(y / m.power); },
                        [&](const InstanceNU& n) {
                          VectorXd u(5);
                          u << y(0) / n.width, y(1) / n.length, y.tail(3) / n.power;
                          return u;
                        },
                    },
                    x);
}

VectorXd from_unit(const Instance& x, const VectorXd& u) {
  return std::visit(overloaded{
                        [&](const InstanceCO&) { return VectorXd(u); },
                        [&](const InstanceMSR& m) { return VectorXd(u * m.power); },
                        [&](const InstanceNU& n) {
                          VectorXd y(5);
                          y << u(0) * n.width, u(1) * n.length, u.tail(3) * n.power;
                          return y;
                        },
                    },
                    x);
}

// Oracles ------------------------------------------------------------------

VectorXd oracle_co(const InstanceCO& x) {
  double best = std::numeric_limits<double>::infinity();
  VectorXd best_y = VectorXd::Zero(3);
  for (int mask = 0; mask < 8; ++mask) {
    VectorXd y = VectorXd::Zero(3);
    double norm = 0.0;
    for (int i = 0; i < 3; ++i)
      if (mask & (1 << i)) norm += std::sqrt(x.cycles_per_byte * x.task_bytes[i]);
    bool valid = true;
    for (int i = 0; i < 3; ++i) {
      if (!(mask & (1 << i))) continue;
      y(i) = std::sqrt(x.cycles_per_byte * x.task_bytes[i]) / norm;
      if (y(i) < kOffloadThreshold) valid = false;
    }
    if (!valid) continue;
    const double cost = objective_co(x, y);
    if (cost < best) {
      best = cost;
      best_y = y;
    }
  }
  return best_y;
}

VectorXd oracle_msr(const InstanceMSR& x) {
  const auto k = static_cast<Eigen::Index>(x.gain.size());
  VectorXd floor(k);
  for (Eigen::Index i = 0; i < k; ++i) floor(i) = x.noise / x.gain[i];
  auto fill = [&](double level) { return VectorXd((level - floor.array()).cwiseMax(0.0)); };
  double lo = 0.0;
  double hi = x.power + floor.maxCoeff();
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const VectorXd p = fill(mid);
    const double excess = p.sum() - x.power;
    if (std::abs(excess) <= 1e-9 * x.power) return p;
    (excess > 0.0 ? hi : lo) = mid;
  }
  throw NumericError("oracle_msr: water level bisection did not converge in 200 iterations");
}

std::optional<VectorXd> nu_inner_allocation(const InstanceNU& x, double qx, double qy) {
  const auto g = nu_gains(x, qx, qy);
  const auto order = weakest_first(g);
  const double s = std::exp2(x.rate_min) - 1.0;
  VectorXd p = VectorXd::Zero(3);
  double remaining = x.power;
  for (int k = 0; k < 2; ++k) {
    const int i = order[k];
    // Smallest p_i with g p_i / (g (remaining - p_i) + noise) = 2^rate_min - 1.
    p(i) = s * (g[i] * remaining + x.noise) / (g[i] * (1.0 + s));
    remaining -= p(i);
    if (remaining < 0.0) return std::nullopt;
  }
  const int strongest = order[2];
  p(strongest) = remaining;
  if (std::log2(1.0 + g[strongest] * remaining / x.noise) < x.rate_min - kFeasibilityTol)
    return std::nullopt;
  return p;
}

namespace {

double nu_position_value(const InstanceNU& x, double qx, double qy, VectorXd* p_out = nullptr) {
  const auto p = nu_inner_allocation(x, qx, qy);
  if (!p) return kNegInf;
  VectorXd y(5);
  y << qx, qy, *p;
  if (p_out) *p_out = *p;
  return objective_nu(x, y);
}

}  // namespace

VectorXd oracle_nu(const InstanceNU& x) {
  constexpr int kGrid = 60;
  constexpr int kRefine = 20;
  const double dx = x.width / (kGrid - 1);
  const double dy = x.length / (kGrid - 1);
  double best = kNegInf;
  double bx = 0.0, by = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double qx = i * dx, qy = j * dy;
      const double v = nu_position_value(x, qx, qy);
      if (v > best) {
        best = v;
        bx = qx;
        by = qy;
      }
    }
  }
  if (!std::isfinite(best)) throw InfeasibleError("oracle_nu: no position meets the QoS floor");

  double sx = dx, sy = dy;
  for (int iter = 0; iter < kRefine; ++iter) {
    const std::array<std::array<double, 2>, 4> moves{{{sx, 0}, {-sx, 0}, {0, sy}, {0, -sy}}};
    bool moved = false;
    double cand_best = best, cx = bx, cy = by;
    for (const auto& m : moves) {
      const double qx = std::clamp(bx + m[0], 0.0, x.width);
      const double qy = std::clamp(by + m[1], 0.0, x.length);
      const double v = nu_position_value(x, qx, qy);
      if (v > cand_best) {
        cand_best = v;
        cx = qx;
        cy = qy;
        moved = true;
      }
    }
    if (moved) {
      best = cand_best;
      bx = cx;
      by = cy;
    } else {
      sx *= 0.5;
      sy *= 0.5;
    }
  }
  VectorXd p;
  nu_position_value(x, bx, by, &p);
  VectorXd y(5);
  y << bx, by, p;
  return y;
}

VectorXd oracle(const Instance& x) {
  return std::visit(overloaded{
                        [](const InstanceCO& c) { return oracle_co(c); },
                        [](const InstanceMSR& m) { return oracle_msr(m); },
                        [](const InstanceNU& n) { return oracle_nu(n); },
                    },
                    x);
}

// Sampling -----------------------------------------------------------------

Instance sample_instance(ProblemKind kind, Domain domain, const ProblemConfig& config, Rng& rng) {
  const bool in = domain == Domain::In;
  auto draw = [&](const Range& r) { return rng.uniform(r.lo, r.hi); };
  switch (kind) {
    case ProblemKind::CO: {
      const auto& c = config.co;
      InstanceCO x;
      for (int i = 0; i < 3; ++i) {
        x.task_bytes[i] = draw(in ? c.task_bytes_in : c.task_bytes_ood);
        x.gain[i] = draw(in ? c.gain_in : c.gain_ood);
        x.f_local[i] = draw(in ? c.f_local_in : c.f_local_ood);
      }
      x.bandwidth = c.bandwidth;
      x.edge_cpu = c.edge_cpu;
      x.tx_power = c.tx_power;
      x.noise = c.noise;
      x.cycles_per_byte = c.cycles_per_byte;
      x.kappa = c.kappa;
      x.w_time = c.w_time;
      x.w_energy = c.w_energy;
      return x;
    }
    case ProblemKind::MSR3:
    case ProblemKind::MSR80: {
      const auto& c = config.msr;
      InstanceMSR x;
      x.gain.resize(msr_channels(kind));
      for (double& g : x.gain) g = draw(in ? c.gain_in : c.gain_ood);
      x.power = draw(in ? c.power_in : c.power_ood);
      x.noise = c.noise;
      return x;
    }
    case ProblemKind::NU: {
      const auto& c = config.nu;
      InstanceNU x;
      for (auto& u : x.terminals) {
        u[0] = rng.uniform(0.0, c.width);
        u[1] = rng.uniform(0.0, c.length);
      }
      x.altitude = c.altitude;
      x.power = draw(in ? c.power_in : c.power_ood);
      x.noise = c.noise;
      x.ref_gain = c.ref_gain;
      x.width = c.width;
      x.length = c.length;
      x.rate_min = c.rate_min;
      return x;
    }
  }
  throw std::invalid_argument("sample_instance: unknown kind");
}

}  // namespace diffsg
