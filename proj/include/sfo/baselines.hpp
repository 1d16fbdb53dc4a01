#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfo/problem.hpp"
#include "sfo/stepping.hpp"
#include "sfo/types.hpp"

namespace sfo {

inline constexpr double kAdagradEpsilon = 1e-10;

/// x - step * g
Vector sgd_step(const Vector& x, const Vector& gradient, double step_size);

/// v <- momentum * v - step * g;  x <- x + v
void momentum_step(Vector& x, Vector& velocity, const Vector& gradient, double step_size,
                   double momentum);

/// acc <- acc + g^2;  x <- x - step * g / sqrt(acc + eps)
void adagrad_step(Vector& x, Vector& accumulator, const Vector& gradient, double initial_step);

/// Table of the most recent gradient of every subfunction with a running sum.
class SagTable {
 public:
  SagTable(Index dimension, Index subfunctions);

  void replace(Index i, const Vector& gradient);
  /// Mean over the entries stored so far (zero before any).
  Vector mean() const;
  /// Mean recomputed from the table, for consistency checks.
  Vector recomputed_mean() const;
  Index stored() const { return stored_; }
  const Matrix& table() const { return table_; }

 private:
  Matrix table_;  // M x N
  std::vector<bool> filled_;
  Vector sum_;
  Index stored_ = 0;
  Index replacements_ = 0;
};

enum class SampleOrder { uniform, cyclic };

/// Picks subfunction indices for the single-subfunction baselines.
class Sampler {
 public:
  Sampler(Index subfunctions, SampleOrder order, std::uint64_t seed)
      : n_(subfunctions), order_(order), rng_(seed) {}
  Index next();

 private:
  Index n_;
  SampleOrder order_;
  Index cursor_ = 0;
  std::mt19937_64 rng_;
};

enum class Method { sfo, sgd, momentum, adagrad, sag, lbfgs };

std::string to_string(Method m);
/// Throws ConfigError for unknown names.
Method parse_method(const std::string& name);

struct GridPoint {
  double step_size = 0.0;
  std::optional<double> momentum;
};

std::string format_hyperparameters(const GridPoint& p);

struct BaselineConfig {
  Method method = Method::sgd;
  GridPoint point;
  SampleOrder order = SampleOrder::uniform;
  Index history_length = 10;  // lbfgs
  std::uint64_t seed = 0;
};

/// Stepping form of each baseline. Stops (finished()) once the iterate or a
/// gradient becomes non-finite.
std::unique_ptr<SteppingOptimizer> make_baseline(const ObjectiveProblem& problem, const Vector& x0,
                                                 const BaselineConfig& config);

// ---------------------------------------------------------------------------
// Full-batch LBFGS

struct LbfgsOptions {
  Index history_length = 10;
  double sufficient_decrease = 1e-4;
  double backtrack = 0.5;
  int max_trials = 40;
};

/// One LBFGS iteration per step(): two-loop direction, then backtracking
/// until sufficient decrease. Every full-batch evaluation costs N subfunction
/// evaluations.
class Lbfgs final : public SteppingOptimizer {
 public:
  Lbfgs(const ObjectiveProblem& problem, Vector x0, LbfgsOptions options = {});

  std::string name() const override { return "lbfgs"; }
  std::string hyperparameters() const override;
  void step() override;
  Vector position() const override { return x_; }
  bool finished() const override { return status_ != "ok"; }
  std::string status() const override { return status_; }

  double value() const { return value_; }
  const Vector& gradient() const { return gradient_; }
  long iterations() const { return iterations_; }

 private:
  Vector direction() const;

  const ObjectiveProblem& problem_;
  LbfgsOptions options_;
  Vector x_;
  double value_ = 0.0;
  Vector gradient_;
  bool started_ = false;
  std::vector<Vector> s_;
  std::vector<Vector> y_;
  long iterations_ = 0;
  std::string status_ = "ok";
};

struct LbfgsResult {
  Vector position;
  double value = 0.0;
  double gradient_norm = 0.0;
  long iterations = 0;
  std::string status;
};

/// Runs Lbfgs until ||grad F|| <= gradient_tolerance, failure, or max_iterations.
LbfgsResult lbfgs_minimize(const ObjectiveProblem& problem, const Vector& x0,
                           long max_iterations, double gradient_tolerance,
                           LbfgsOptions options = {});

// ---------------------------------------------------------------------------
// Grid search

/// Integer powers of ten in [1e-5, 1e2].
std::vector<double> default_step_grid();
/// {0.5, 0.9, 0.95, 0.99}
std::vector<double> default_momentum_grid();
/// Cartesian grid for a method (momentum adds the momentum axis). LBFGS and
/// SFO have no tuned parameters and get a single point.
std::vector<GridPoint> default_grid(Method m);

struct GridSelection {
  Index best = -1;
  /// Same momentum, immediately smaller and larger step sizes.
  std::vector<Index> neighbors;
  bool best_at_endpoint = false;
};

/// Lowest final objective wins (non-finite counts as +inf); ties go to the
/// smaller step size, then the smaller momentum. Throws ConfigError on an
/// empty grid.
GridSelection select_best(std::span<const GridPoint> grid, std::span<const double> final_objectives);

}  // namespace sfo
