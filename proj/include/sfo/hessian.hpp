#pragma once

#include <span>
#include <vector>

#include "sfo/types.hpp"

namespace sfo {

/// Symmetric K x K matrix stored as
///
///   H = diagonal * I + basis * core * basis^T
///
/// where `basis` spans the directions a subfunction's history has explored.
/// `diagonal` is the curvature assumed everywhere else, including along
/// subspace columns appended after the estimate was formed. `basis` may have
/// fewer rows than K; missing rows are zero.
struct HessianEstimate {
  double diagonal = 0.0;
  Matrix basis;  // K x r
  Matrix core;   // r x r, symmetric
  /// The basis columns are known to be orthonormal.
  bool orthonormal = false;
  /// Eigenvalues replaced by the last enforce_positive_definite().
  Index clipped = 0;
  /// The last enforcement found no positive eigenvalue and fell back to I.
  bool fallback = false;

  static HessianEstimate scaled_identity(double scale);
  static HessianEstimate from_dense(const Matrix& h);

  Index rank() const { return core.rows(); }
  Matrix dense(Index k) const;
  Vector apply(const Vector& v) const;
  double quadratic_form(const Vector& v) const;
  /// Adds basis * core * basis^T into the leading block of `target`
  /// (the diagonal term is left to the caller).
  void add_low_rank_to(Matrix& target, double sign) const;
  /// Maps the estimate through a change of coordinates: H -> T H T^T.
  /// Assumes T has orthonormal rows, so the diagonal term is preserved.
  void transform(const Matrix& t);
  /// All K eigenvalues, ascending.
  Vector spectrum(Index k) const;
};

/// g(x) = value + gradient.(x - anchor) + 1/2 (x - anchor)^T H (x - anchor)
/// Anchor and gradient may be shorter than x (zero padded).
struct QuadraticModel {
  Vector anchor;
  double value = 0.0;
  Vector gradient;
  HessianEstimate hessian;

  double value_at(const Vector& x) const;
  Vector gradient_at(const Vector& x) const;
};

/// Successive differences of one subfunction's evaluations, oldest column first.
struct History {
  Matrix dx;  // position differences, K x count
  Matrix dg;  // gradient differences, K x count

  Index count() const { return dx.cols(); }
};

struct SubfunctionRecord {
  bool evaluated = false;
  /// Anchored at the most recent evaluation.
  QuadraticModel model;
  History history;
  long last_step = -1;
  long eval_count = 0;
};

inline constexpr Index kDefaultHistoryLength = 10;
inline constexpr double kCurvatureTolerance = 1e-12;
inline constexpr double kDefaultEigenFloor = 1e-8;  // gamma
inline constexpr double kFirstHessianScale = 1e6;

/// Median with the midpoint convention for even counts. Throws on empty input.
double median(std::vector<double> values);

/// Zero-pads (or keeps) `v` to length k.
Vector padded(const Vector& v, Index k);
Matrix padded_rows(const Matrix& m, Index k);

/// Appends the pair (dx, dg) unless it violates the curvature condition
/// dx.dg > tolerance * |dx| |dg| (this also rejects zero steps). Keeps at most
/// `max_columns` pairs, dropping the oldest. Returns whether it was stored.
bool append_history(History& history, const Vector& dx, const Vector& dg,
                    Index max_columns = kDefaultHistoryLength,
                    double curvature_tolerance = kCurvatureTolerance);

/// Record-level form: differences against the record's last evaluation.
/// Throws PreconditionError if the record was never evaluated.
bool append_history(SubfunctionRecord& record, const Vector& position, const Vector& gradient,
                    Index max_columns = kDefaultHistoryLength,
                    double curvature_tolerance = kCurvatureTolerance);

/// Orthonormal basis of span(dx, dg), columns normalized before rank testing.
Matrix history_basis(const History& history);

/// Smallest eigenvalue, above 1e-12 of the largest, of
///   Q = [ (dx^+)^T dg^T dg dx^+ ]^(1/2)
/// evaluated inside the span of the history columns.
double init_beta(const History& history);

/// BFGS updates from B_0 = beta * I over the history, oldest pair first.
/// Pairs failing the curvature condition are skipped.
HessianEstimate bfgs_chain(const History& history, double beta);

/// Hessian for a subfunction with a single evaluation: the median eigenvalue
/// of the mean Hessian of the other evaluated active subfunctions times I,
/// or kFirstHessianScale * I if there are none.
HessianEstimate initial_hessian_no_history(std::span<const SubfunctionRecord> records,
                                           Index active_count, Index self, Index k,
                                           double first_scale = kFirstHessianScale);

/// Eigenvalues below gamma * lambda_max are replaced by the median of the
/// strictly positive eigenvalues (all set to 1 if there are none).
/// `k` is the full dimension, so the diagonal term counts with multiplicity
/// k - rank.
HessianEstimate enforce_positive_definite(const HessianEstimate& estimate, Index k,
                                          double gamma = kDefaultEigenFloor);

/// Dense form of the same rule. Throws ShapeError if `h` is not square or
/// is asymmetric beyond 1e-10.
Matrix enforce_positive_definite(const Matrix& h, double gamma = kDefaultEigenFloor);

}  // namespace sfo
