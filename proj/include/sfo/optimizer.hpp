#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfo/hessian.hpp"
#include "sfo/problem.hpp"
#include "sfo/subspace.hpp"
#include "sfo/types.hpp"

namespace sfo {

enum class SelectionRule { distance, cyclic, random };

struct SfoConfig {
  /// Starting point in the full space; zero when absent.
  std::optional<Vector> initial_position;
  std::uint64_t seed = 0;
  Index history_length = kDefaultHistoryLength;
  /// K_min = min_subspace_factor * N, K_max = max_subspace_factor * N.
  Index min_subspace_factor = 2;
  Index max_subspace_factor = 3;
  double gamma = kDefaultEigenFloor;
  double alpha = 1.0;
  Index initial_active = 2;
  double first_hessian_scale = kFirstHessianScale;
  double curvature_tolerance = kCurvatureTolerance;
  SelectionRule selection = SelectionRule::distance;
  bool detect_bad_updates = true;

  /// Throws ConfigError on out-of-range values.
  void validate(Index dimension) const;
};

struct StepReport {
  long step = 0;
  Index subfunction = -1;
  bool bad_update = false;
  double eta = 1.0;
  Index subspace_dimension = 0;
  Index active_count = 0;
  /// G(x) after the step.
  double model_value = 0.0;
  bool collapsed = false;
  bool grew = false;
  bool newton_fallback = false;
};

struct SfoEvent {
  enum class Kind {
    bad_update,
    nonfinite_evaluation,
    collapse,
    reorthonormalized,
    growth,
    newton_fallback,
    positive_definite_fallback,
    seeded_basis,
  };
  long step = 0;
  Kind kind = Kind::growth;
  std::string detail;
};

std::string to_string(SfoEvent::Kind kind);

// ---------------------------------------------------------------------------
// Pieces of one iteration, exposed for direct testing.

struct NewtonResult {
  Vector position;
  /// G(x) - G(x_new) under the quadratic model.
  double predicted_reduction = 0.0;
  /// The PD solve failed and a gradient step of length eta / lambda_max was used.
  bool fallback = false;
};

/// x - eta * H^{-1} grad via a Cholesky solve.
NewtonResult newton_step(const Matrix& hessian, const Vector& gradient, const Vector& x, double eta);

/// Index of the largest distance; ties go to the smallest index.
Index select_farthest(std::span<const double> distances);

/// argmax_i d_i^T Q_i d_i. `metrics` holds either one shared Q or one per displacement.
Index farthest_subfunction(std::span<const Vector> displacements, std::span<const Matrix> metrics);

/// mean^T H^{-1} mean < alpha * sum_i g_i^T H^{-1} g_i / ((n - 1) n)
bool growth_criterion(std::span<const Vector> gradients, const Matrix& hessian, double alpha);

/// new > previous and new - model_at_new > predicted_reduction; non-finite new is always bad.
bool is_bad_update(double new_value, double previous_value, double model_at_new,
                   double predicted_reduction);

/// success: 1/n + (n-1)/n * eta; failure: eta / 2.
double next_eta(double eta, Index active_count, bool success);

// ---------------------------------------------------------------------------

/// Sum of Functions Optimizer. Each call to step() evaluates exactly one
/// subfunction of `problem`, which must outlive the optimizer.
class Sfo {
 public:
  explicit Sfo(const ObjectiveProblem& problem, SfoConfig config = {});

  StepReport step();

  /// Current iterate in the full space.
  Vector position() const;
  /// Current iterate in subspace coordinates.
  const Vector& coordinates() const { return x_; }
  const Subspace& subspace() const { return subspace_; }
  std::span<const SubfunctionRecord> records() const { return records_; }
  const SfoConfig& config() const { return config_; }

  Index active_count() const { return active_; }
  double eta() const { return eta_; }
  long steps() const { return t_; }
  Index bad_update_count() const { return bad_updates_; }
  Index collapse_count() const { return collapses_; }
  const std::vector<SfoEvent>& events() const { return events_; }
  /// Active-set size after each step.
  const std::vector<Index>& active_trace() const { return active_trace_; }

  /// sum_i H_i over evaluated subfunctions, K x K.
  Matrix aggregate_hessian() const;
  /// The same sum rebuilt from the records (for consistency checks).
  Matrix recomputed_aggregate_hessian() const;
  double model_value() const { return model_value_at(x_); }
  double model_value_at(const Vector& x) const;
  Vector model_gradient_at(const Vector& x) const;

 private:
  Index evaluated_count() const;
  Index choose(const Vector& x);
  void pad_to_subspace();
  void apply_transform(const Matrix& t);
  void collapse();
  void rebuild_hessian(Index j);
  void add_contribution(const SubfunctionRecord& r, double sign);
  void recompute_aggregates();
  const Eigen::LLT<Matrix>& factor();
  bool should_grow_by_criterion();
  void log(SfoEvent::Kind kind, std::string detail = {});

  const ObjectiveProblem& problem_;
  SfoConfig config_;
  Subspace subspace_;
  std::vector<SubfunctionRecord> records_;
  Vector x_;
  double eta_ = 1.0;
  Index active_;
  long t_ = 0;
  Index steps_since_growth_ = 0;
  Index cyclic_next_ = 0;
  std::mt19937_64 rng_;

  // sum_i H_i = hdiag_ I + hlow_; grad G(x) = linear_ + (sum_i H_i) x
  double hdiag_ = 0.0;
  Matrix hlow_;
  Vector linear_;
  Eigen::LLT<Matrix> llt_;
  bool factor_valid_ = false;

  Vector gradient_buffer_;
  Index bad_updates_ = 0;
  Index collapses_ = 0;
  std::vector<SfoEvent> events_;
  std::vector<Index> active_trace_;
};

}  // namespace sfo
