#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "diffsg/rng.hpp"

namespace diffsg {

enum class ProblemKind { CO, MSR3, MSR80, NU };
enum class Domain { In, Ood };
enum class Sense { Minimize, Maximize };

std::string to_string(ProblemKind kind);
std::string to_string(Domain domain);
/// Accepts "co", "msr3", "msr80", "nu" (case-insensitive).
ProblemKind parse_kind(std::string_view name);
/// Accepts "in" or "ood".
Domain parse_domain(std::string_view name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Computation offloading: three users, one edge server, OMA uplink.
struct COConfig {
  Range task_bytes_in{1e5, 4e5};
  Range task_bytes_ood{1e5, 5e5};
  Range gain_in{1e-9, 1e-6};
  Range gain_ood{1e-9, 1e-6};
  Range f_local_in{0.5e9, 1.5e9};  // cycles/s
  Range f_local_ood{0.5e9, 2.25e9};
  double bandwidth = 10e6;  // Hz per user
  double edge_cpu = 2e9;    // cycles/s
  double tx_power = 0.5;    // W
  double noise = 1e-10;     // W
  double cycles_per_byte = 100.0;
  double kappa = 1e-27;
  double w_time = 0.5;
  double w_energy = 0.5;
};

/// Multi-channel sum rate under a total power budget.
struct MSRConfig {
  Range gain_in{0.1, 2.0};
  Range gain_ood{0.1, 3.0};
  Range power_in{5.0, 10.0};  // W
  Range power_ood{5.0, 20.0};
  double noise = 1.0;
};

/// One UAV serving three ground terminals with downlink NOMA.
struct NUConfig {
  double width = 100.0;   // m
  double length = 100.0;  // m
  double altitude = 30.0;
  double ref_gain = 1e-3;  // channel gain at 1 m
  double noise = 1e-9;     // W
  double rate_min = 0.5;   // bits/s/Hz per terminal
  Range power_in{0.5, 1.0};
  Range power_ood{0.5, 2.0};
};

struct ProblemConfig {
  COConfig co;
  MSRConfig msr;
  NUConfig nu;
};

void to_json(nlohmann::json& j, const ProblemConfig& c);
void from_json(const nlohmann::json& j, ProblemConfig& c);
/// Reads a JSON range file. Missing keys keep their defaults.
ProblemConfig load_problem_config(const std::string& path);
void save_problem_config(const ProblemConfig& c, const std::string& path);

struct InstanceCO {
  std::array<double, 3> task_bytes{};
  std::array<double, 3> gain{};
  std::array<double, 3> f_local{};
  double bandwidth = 0, edge_cpu = 0, tx_power = 0, noise = 0;
  double cycles_per_byte = 0, kappa = 0, w_time = 0, w_energy = 0;
};

struct InstanceMSR {
  std::vector<double> gain;
  double power = 0;
  double noise = 0;
};

struct InstanceNU {
  std::array<std::array<double, 2>, 3> terminals{};
  double altitude = 0, power = 0, noise = 0, ref_gain = 0;
  double width = 0, length = 0, rate_min = 0;
};

using Instance = std::variant<InstanceCO, InstanceMSR, InstanceNU>;

ProblemKind kind_of(const Instance& x);
Sense sense(ProblemKind kind);
int solution_dim(ProblemKind kind);
int condition_dim(ProblemKind kind);

/// Throws std::invalid_argument if any type invariant fails.
void validate(const Instance& x);

/// Raw condition features, in problem-native units.
Eigen::VectorXd condition_features(const Instance& x);

void to_json(nlohmann::json& j, const Instance& x);
Instance instance_from_json(ProblemKind kind, const nlohmann::json& j);

// Objectives ---------------------------------------------------------------

/// Offloading threshold: user i offloads iff y_i >= this.
inline constexpr double kOffloadThreshold = 0.1;
/// Relative slack on QoS and budget checks.
inline constexpr double kFeasibilityTol = 1e-9;

double uplink_rate(const InstanceCO& x, int user);
double local_cost(const InstanceCO& x, int user);
/// Weighted latency + energy summed over users (lower is better).
double objective_co(const InstanceCO& x, const Eigen::VectorXd& y);
/// Sum of log2(1 + g p / noise) (higher is better).
double objective_msr(const InstanceMSR& x, const Eigen::VectorXd& p);

/// Channel gains g0 / (H^2 + |q - u_i|^2).
std::array<double, 3> nu_gains(const InstanceNU& x, double qx, double qy);
/// Per-terminal NOMA rates, indexed like the terminals.
std::array<double, 3> nu_rates(const InstanceNU& x, const Eigen::VectorXd& y);
/// Sum rate, or -infinity when any terminal falls below rate_min.
double objective_nu(const InstanceNU& x, const Eigen::VectorXd& y);

double objective(const Instance& x, const Eigen::VectorXd& y);

/// True when `a` is at least as good as `b` for this kind.
bool better_or_equal(ProblemKind kind, double a, double b);

// Feasible set -------------------------------------------------------------

bool is_feasible(const Instance& x, const Eigen::VectorXd& y);
/// Total map onto the feasible set (QoS is not repaired for NU).
Eigen::VectorXd project_feasible(const Instance& x, const Eigen::VectorXd& raw);

/// Solution in [0, 1]-box coordinates derived from the instance's bounds.
Eigen::VectorXd to_unit(const Instance& x, const Eigen::VectorXd& y);
Eigen::VectorXd from_unit(const Instance& x, const Eigen::VectorXd& u);

// Oracles ------------------------------------------------------------------

Eigen::VectorXd oracle_co(const InstanceCO& x);
Eigen::VectorXd oracle_msr(const InstanceMSR& x);
/// Minimum-QoS power for the two weaker terminals, remainder to the strongest.
/// Empty when the position cannot meet rate_min.
std::optional<Eigen::VectorXd> nu_inner_allocation(const InstanceNU& x, double qx, double qy);
Eigen::VectorXd oracle_nu(const InstanceNU& x);
Eigen::VectorXd oracle(const Instance& x);

// Sampling -----------------------------------------------------------------

Instance sample_instance(ProblemKind kind, Domain domain, const ProblemConfig& config, Rng& rng);

}  // namespace diffsg
