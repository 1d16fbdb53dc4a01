#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfo/types.hpp"

namespace sfo {

struct Evaluation {
  double value = 0.0;
  Vector gradient;
};

struct KnownOptimum {
  Vector position;
  double value = 0.0;
};

/// An objective F(x) = sum_i f_i(x) over N subfunctions of an M-dimensional
/// parameter vector. Subfunction indices are zero-based.
///
/// Implementations must be pure: the same (i, x) always yields bit-identical
/// results, and concurrent calls are allowed.
class ObjectiveProblem {
 public:
  virtual ~ObjectiveProblem() = default;

  virtual Index dimension() const = 0;
  virtual Index subfunction_count() const = 0;

  /// Writes f_i'(x) into `gradient` (already sized to M) and returns f_i(x).
  /// Arguments are not validated here; use eval_subfunction.
  virtual double evaluate(Index i, const Vector& x, Vector& gradient) const = 0;

  /// Analytic or derived global optimum, when the problem knows one.
  virtual std::optional<KnownOptimum> optimum() const { return std::nullopt; }

  virtual std::string description() const = 0;
};

/// Validated single-subfunction evaluation.
/// Throws std::out_of_range for a bad index, ShapeError for a wrong-length x
/// and std::domain_error for non-finite entries in x. Non-finite outputs are
/// returned as-is.
Evaluation eval_subfunction(const ObjectiveProblem& problem, Index i, const Vector& x);

/// F(x) and F'(x), accumulated in ascending subfunction order.
Evaluation full_objective(const ObjectiveProblem& problem, const Vector& x);

/// Max over coordinates of |analytic - central difference|, relative to the
/// larger infinity norm of the two gradients.
double check_gradient(const ObjectiveProblem& problem, Index i, const Vector& x, double step);

/// Number of minibatches N for D samples so that per-step evaluation cost
/// O(M D / N) and projection cost O(M N) are balanced: N = c * sqrt(D),
/// clamped to [1, D]. `dimension` cancels out of the balance and is accepted
/// only so call sites read naturally.
Index suggest_minibatch_count(Index samples, Index dimension, double proportionality);

/// Decorator counting evaluate() calls. Owned by the harness so effective
/// pass accounting never depends on what an optimizer reports.
class CountingProblem final : public ObjectiveProblem {
 public:
  explicit CountingProblem(const ObjectiveProblem& inner) : inner_(inner) {}

  Index dimension() const override { return inner_.dimension(); }
  Index subfunction_count() const override { return inner_.subfunction_count(); }
  double evaluate(Index i, const Vector& x, Vector& gradient) const override {
    ++count_;
    return inner_.evaluate(i, x, gradient);
  }
  std::optional<KnownOptimum> optimum() const override { return inner_.optimum(); }
  std::string description() const override { return inner_.description(); }

  std::uint64_t evaluations() const { return count_; }
  void reset() { count_ = 0; }

 private:
  const ObjectiveProblem& inner_;
  mutable std::uint64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Quadratic ensemble: f_i(x) = 1/2 (x - c_i)^T A_i (x - c_i)

class QuadraticEnsemble final : public ObjectiveProblem {
 public:
  QuadraticEnsemble(std::vector<Matrix> curvatures, std::vector<Vector> centers);

  Index dimension() const override { return dimension_; }
  Index subfunction_count() const override { return static_cast<Index>(centers_.size()); }
  double evaluate(Index i, const Vector& x, Vector& gradient) const override;
  std::optional<KnownOptimum> optimum() const override { return optimum_; }
  std::string description() const override;

  const Matrix& curvature(Index i) const { return curvatures_[static_cast<std::size_t>(i)]; }
  const Vector& center(Index i) const { return centers_[static_cast<std::size_t>(i)]; }

 private:
  Index dimension_;
  std::vector<Matrix> curvatures_;
  std::vector<Vector> centers_;
  KnownOptimum optimum_;
};

/// Random SPD curvatures Q_i diag(lambda) Q_i^T with Haar-distributed Q_i and
/// eigenvalues log-spaced over [1, condition_number]; centers ~ N(0, I).
QuadraticEnsemble make_quadratic_ensemble(std::uint64_t seed, Index dimension, Index subfunctions,
                                          double condition_number);

// ---------------------------------------------------------------------------
// L2-regularized logistic regression over minibatches

struct DatasetSplit {
  Matrix features;                   // D x feature_dim, one sample per row
  Vector labels;                     // +1 / -1
  std::vector<Index> assignment;     // sample -> minibatch

  Index samples() const { return features.rows(); }
  Index minibatch_count() const;
  std::vector<std::vector<Index>> members() const;
};

/// Round-robin assignment of D samples to N minibatches.
std::vector<Index> assign_minibatches(Index samples, Index minibatches);

/// Gaussian features with per-feature scales log-uniform in
/// [1/feature_spread, feature_spread]; labels from a random hyperplane with
/// `label_noise` of them flipped.
DatasetSplit make_synthetic_dataset(std::uint64_t seed, Index samples, Index feature_dim,
                                    Index minibatches, double label_noise = 0.1,
                                    double feature_spread = 3.0);

/// One sample per row, label in the last column.
void write_dataset_csv(const DatasetSplit& data, const std::filesystem::path& path);

/// f_i(w) = mean over minibatch i of log(1 + exp(-y w.x)) + (l2 / N) ||w||^2
class LogisticRegression final : public ObjectiveProblem {
 public:
  LogisticRegression(DatasetSplit data, double l2_coefficient);

  Index dimension() const override { return data_.features.cols(); }
  Index subfunction_count() const override { return static_cast<Index>(batches_.size()); }
  double evaluate(Index i, const Vector& x, Vector& gradient) const override;

  /// The full-batch descent reference, computed on first use and cached.
  std::optional<KnownOptimum> optimum() const override;
  std::string description() const override;

  const DatasetSplit& data() const { return data_; }
  double l2_coefficient() const { return l2_; }

  /// Upper bound on the Lipschitz constant of F'.
  double lipschitz_bound() const;

  /// Fixed-step (1/L) full-batch gradient descent from zero until
  /// ||F'|| <= gradient_tolerance. Throws std::runtime_error if the
  /// iteration budget runs out first.
  KnownOptimum solve_reference(double gradient_tolerance = 1e-10,
                               Index max_iterations = 2'000'000) const;

 private:
  struct Batch {
    Matrix features;  // S x feature_dim
    Vector labels;
  };
  struct ReferenceCache;

  DatasetSplit data_;
  double l2_;
  std::vector<Batch> batches_;
  std::shared_ptr<ReferenceCache> cache_;
};

LogisticRegression make_logistic_regression(std::uint64_t seed, Index samples, Index feature_dim,
                                            Index minibatches, double l2_coefficient);

// ---------------------------------------------------------------------------
// Cheap separable problem for overhead timing:
// f_i(x) = sum_k log cosh(x_k - c_ik) / M, O(M) per evaluation.

class SeparableLogCosh final : public ObjectiveProblem {
 public:
  SeparableLogCosh(std::uint64_t seed, Index dimension, Index subfunctions);

  Index dimension() const override { return centers_.rows(); }
  Index subfunction_count() const override { return centers_.cols(); }
  double evaluate(Index i, const Vector& x, Vector& gradient) const override;
  std::string description() const override;

 private:
  Matrix centers_;  // M x N
};

}  // namespace sfo
