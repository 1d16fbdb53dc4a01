#pragma once

#include <optional>
#include <span>

#include "sfo/types.hpp"

namespace sfo {

/// Change of coordinates produced by a subspace mutation.
///
/// appended_column: the old basis is a prefix of the new one, so old
/// coordinate vectors stay valid after appending a zero.
/// collapsed: old coordinates v map to new coordinates T v with
/// T = P_new^T P_old (K_new x K_old). The same T is applied to gradient
/// coordinates and, as T H T^T, to quadratic forms.
struct ProjectionUpdate {
  enum class Kind { none, appended_column, collapsed };

  Kind kind = Kind::none;
  Vector column;      // appended_column: the new unit basis column (length M)
  Matrix transform;   // collapsed: T
  /// expand() only: coordinates of the expanded vector in the resulting basis.
  Vector coordinates;
};

/// Orthonormal basis P (M x K) of the shared low-dimensional subspace.
///
/// Columns are appended one at a time by expand() and the whole basis is
/// rebuilt from a small set of vectors by collapse(). Single writer; not
/// safe to share between threads while mutating.
class Subspace {
 public:
  /// Residual norm, relative to the input norm, below which expand() is a no-op.
  static constexpr double kExpandTolerance = 1e-8;
  static constexpr double kOrthonormalityTolerance = 1e-10;
  /// collapse() drops inputs whose orthogonalized norm falls below this
  /// fraction of the largest input norm.
  static constexpr double kRankTolerance = 1e-10;
  static constexpr int kDriftCheckInterval = 50;

  Subspace(Index ambient_dimension, Index min_dimension, Index max_dimension);

  Index ambient_dimension() const { return storage_.rows(); }
  Index dimension() const { return k_; }
  Index min_dimension() const { return k_min_; }
  Index max_dimension() const { return k_max_; }
  /// Number of collapses (and re-orthonormalizations) so far.
  Index generation() const { return generation_; }

  auto basis() const { return storage_.leftCols(k_); }

  /// Appends the normalized component of `v` outside the current span, if it
  /// is larger than kExpandTolerance * ||v||. Throws std::domain_error for
  /// non-finite input and ShapeError for a wrong length.
  ProjectionUpdate expand(const Vector& v);

  /// Replaces the basis with an orthonormal basis of span(gradients, positions),
  /// all given in current coordinates. Inputs are orthogonalized in that
  /// order; dependent inputs are dropped. Requires dimension() > max_dimension().
  ProjectionUpdate collapse(std::span<const Vector> positions, std::span<const Vector> gradients);

  Vector to_full(const Vector& coords) const;
  Vector to_coords(const Vector& full) const;

  /// max |P^T P - I|.
  double orthonormality_error() const;

  /// Every max(kDriftCheckInterval, K_max) expansions, re-orthonormalizes the basis when
  /// the orthonormality error exceeds kOrthonormalityTolerance. The returned
  /// update is of kind collapsed with T = P_new^T P_old.
  std::optional<ProjectionUpdate> maintain();

 private:
  void append(const Vector& unit_column);

  Matrix storage_;  // M x capacity, first k_ columns live
  Index k_ = 0;
  Index k_min_;
  Index k_max_;
  Index generation_ = 0;
  Index expansions_since_check_ = 0;
};

}  // namespace sfo
