#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "diffsg/problems.hpp"

namespace diffsg {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kStatsFormatVersion = 1;
inline constexpr int kValidationSize = 2000;
/// Consecutive infeasible NU draws tolerated for one sample.
inline constexpr int kMaxInfeasibleDraws = 100;

struct Pair {
  Instance x;
  Eigen::VectorXd y;  // oracle solution, native units
};

struct Dataset {
  ProblemKind kind = ProblemKind::MSR3;
  Domain domain = Domain::In;
  std::uint64_t seed = 0;
  ProblemConfig ranges;
  std::vector<Pair> pairs;
};

/// 50000 for CO, 10000 otherwise.
int default_train_size(ProblemKind kind);

enum class Split { Train, ValidationIn, ValidationOod };

/// Seed of a split: the base seed for training, +1 for in-domain validation
/// and +2 for out-of-domain validation. Base seeds are expected to be spaced
/// at least 3 apart.
std::uint64_t split_seed(std::uint64_t base, Split split);

/// Sample i is drawn from Rng(derive_seed(seed, i)), so the result does not
/// depend on `threads`.
Dataset generate_dataset(ProblemKind kind, int size, Domain domain, std::uint64_t seed,
                         const ProblemConfig& ranges, int threads = 1);

/// Condition-feature z-scores fitted on a training split. Solutions are mapped
/// to [-1, 1] per instance from the feasible box (see normalize_solution).
struct NormStats {
  ProblemKind kind = ProblemKind::MSR3;
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// Features with zero variance get std = 1 and a logged warning.
NormStats fit_norm(const Dataset& d);

Eigen::VectorXd normalize_condition(const NormStats& s, const Instance& x);
Eigen::VectorXd normalize_solution(const Instance& x, const Eigen::VectorXd& y);
Eigen::VectorXd denormalize_solution(const Instance& x, const Eigen::VectorXd& v);

/// Column-per-pair matrices for training.
Eigen::MatrixXd condition_matrix(const NormStats& s, const Dataset& d);
Eigen::MatrixXd solution_matrix(const Dataset& d);

/// One JSON header line, then one {"x": {...}, "y": [...]} record per line.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

void save_stats(const NormStats& s, const std::string& path);
NormStats load_stats(const std::string& path);

}  // namespace diffsg
