#include "sfo/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfo/errors.hpp"

namespace sfo {

Subspace::Subspace(Index ambient_dimension, Index min_dimension, Index max_dimension)
    : k_min_(min_dimension), k_max_(max_dimension) {
  if (ambient_dimension < 1) throw ConfigError("subspace ambient dimension must be at least 1");
  if (min_dimension < 0 || max_dimension < 1 || min_dimension > max_dimension)
    throw ConfigError("subspace bounds need 0 <= K_min <= K_max, K_max >= 1");
  const Index capacity = std::min(ambient_dimension, max_dimension + 2);
  storage_ = Matrix::Zero(ambient_dimension, capacity);
}

void Subspace::append(const Vector& unit_column) {
  if (k_ == storage_.cols()) {
    const Index grown = std::max<Index>(2 * storage_.cols(), k_ + 1);
    storage_.conservativeResizeLike(Matrix::Zero(storage_.rows(), grown));
  }
  storage_.col(k_) = unit_column;
  ++k_;
}

ProjectionUpdate Subspace::expand(const Vector& v) {
  if (v.size() != ambient_dimension())
    throw ShapeError("expand: vector length " + std::to_string(v.size()) + " != M");
  if (!v.allFinite()) throw std::domain_error("expand: non-finite vector");

  ProjectionUpdate out;
  const auto p = basis();
  // Classical Gram-Schmidt, applied twice.
  Vector coords = p.transpose() * v;
  Vector residual = v - p * coords;
  const Vector correction = p.transpose() * residual;
  residual.noalias() -= p * correction;
  coords += correction;

  const double scale = v.norm();
  const double residual_norm = residual.norm();
  if (scale == 0.0 || residual_norm <= kExpandTolerance * scale) {
    out.coordinates = std::move(coords);
    return out;
  }
  out.kind = ProjectionUpdate::Kind::appended_column;
  out.column = residual / residual_norm;
  append(out.column);
  out.coordinates.resize(k_);
  out.coordinates.head(k_ - 1) = coords;
  out.coordinates(k_ - 1) = residual_norm;
  ++expansions_since_check_;
  return out;
}

ProjectionUpdate Subspace::collapse(std::span<const Vector> positions,
                                    std::span<const Vector> gradients) {
  if (k_ <= k_max_)
    throw PreconditionError("collapse requires K > K_max (K=" + std::to_string(k_) +
                            ", K_max=" + std::to_string(k_max_) + ")");

  std::vector<const Vector*> inputs;
  inputs.reserve(gradients.size() + positions.size());
  for (const Vector& g : gradients) inputs.push_back(&g);
  for (const Vector& x : positions) inputs.push_back(&x);

  double largest = 0.0;
  for (const Vector* v : inputs) {
    if (v->size() != k_) throw ShapeError("collapse: input not in current coordinates");
    largest = std::max(largest, v->norm());
  }
  if (largest == 0.0) throw DegenerateSubspaceError("collapse: all inputs are zero");

  // Rank-revealing modified Gram-Schmidt (with one reorthogonalization pass)
  // in coordinates of the current basis.
  Matrix q(k_, std::min<Index>(k_, static_cast<Index>(inputs.size())));
  Index kept = 0;
  for (const Vector* v : inputs) {
    if (kept == q.cols()) break;
    Vector w = *v;
    for (int pass = 0; pass < 2; ++pass)
      for (Index c = 0; c < kept; ++c) w -= q.col(c).dot(w) * q.col(c);
    const double norm = w.norm();
    if (norm < kRankTolerance * largest) continue;
    q.col(kept++) = w / norm;
  }
  if (kept == 0) throw DegenerateSubspaceError("collapse: inputs span nothing");

  const auto q_kept = q.leftCols(kept);
  const Matrix new_basis = basis() * q_kept;
  storage_.leftCols(kept) = new_basis;
  storage_.middleCols(kept, storage_.cols() - kept).setZero();
  k_ = kept;
  ++generation_;

  ProjectionUpdate out;
  out.kind = ProjectionUpdate::Kind::collapsed;
  out.transform = q_kept.transpose();
  return out;
}

Vector Subspace::to_full(const Vector& coords) const {
  if (coords.size() != k_)
    throw ShapeError("to_full: expected " + std::to_string(k_) + " coordinates, got " +
                     std::to_string(coords.size()));
  return basis() * coords;
}

Vector Subspace::to_coords(const Vector& full) const {
  if (full.size() != ambient_dimension())
    throw ShapeError("to_coords: expected length " + std::to_string(ambient_dimension()) +
                     ", got " + std::to_string(full.size()));
  return basis().transpose() * full;
}

double Subspace::orthonormality_error() const {
  if (k_ == 0) return 0.0;
  const Matrix gram = basis().transpose() * basis();
  return (gram - Matrix::Identity(k_, k_)).cwiseAbs().maxCoeff();
}

std::optional<ProjectionUpdate> Subspace::maintain() {
  if (expansions_since_check_ < std::max<Index>(kDriftCheckInterval, k_max_)) return std::nullopt;
  expansions_since_check_ = 0;
  if (orthonormality_error() <= kOrthonormalityTolerance) return std::nullopt;

  const Matrix old_basis = basis();
  Eigen::HouseholderQR<Matrix> qr(old_basis);
  Matrix q = qr.householderQ() * Matrix::Identity(old_basis.rows(), k_);
  const Matrix r = qr.matrixQR().topRows(k_).triangularView<Eigen::Upper>();
  for (Index j = 0; j < k_; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  storage_.leftCols(k_) = q;
  ++generation_;

  ProjectionUpdate out;
  out.kind = ProjectionUpdate::Kind::collapsed;
  out.transform = q.transpose() * old_basis;
  return out;
}

}  // namespace sfo
