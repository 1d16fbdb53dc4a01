#include "sfo/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfo/errors.hpp"

namespace sfo {
namespace {

constexpr double kHistoryRankTolerance = 1e-10;
constexpr double kBetaEigenCutoff = 1e-12;

// Orthonormal Q (k x r) and symmetric C (r x r) with basis*core*basis^T = Q C Q^T.
struct Compressed {
  Matrix q;
  Matrix c;
};

Compressed compress(const HessianEstimate& h, Index k) {
  if (h.basis.cols() == 0) return {Matrix(k, 0), Matrix(0, 0)};
  if (h.orthonormal) return {padded_rows(h.basis, k), h.core};
  const Matrix b = padded_rows(h.basis, k);
  Eigen::ColPivHouseholderQR<Matrix> qr(b);
  qr.setThreshold(1e-13);
  const Index r = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(k, r);
  // b P = Q R  =>  b = Q R P^T
  const Matrix upper = qr.matrixR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix rpt = upper * qr.colsPermutation().transpose();
  Matrix c = rpt * h.core * rpt.transpose();
  c = 0.5 * (c + c.transpose()).eval();
  return {std::move(q), std::move(c)};
}

// Spectrum replacement shared by the dense and structured forms.
// `values` are the eigenvalues on the explicit span; `complement` is the
// diagonal value repeated `multiplicity` times.
struct Clipped {
  Vector values;
  double complement;
  Index count = 0;
  bool fallback = false;
};

Clipped clip_spectrum(const Vector& values, double complement, Index multiplicity, double gamma) {
  double largest = values.size() > 0 ? values.maxCoeff() : complement;
  if (multiplicity > 0) largest = std::max(largest, complement);

  std::vector<double> positive;
  positive.reserve(static_cast<std::size_t>(values.size() + multiplicity));
  for (Index i = 0; i < values.size(); ++i)
    if (values(i) > 0.0) positive.push_back(values(i));
  if (complement > 0.0)
    for (Index i = 0; i < multiplicity; ++i) positive.push_back(complement);

  Clipped out;
  if (positive.empty()) {
    out.values = Vector::Ones(values.size());
    out.complement = 1.0;
    out.count = values.size() + multiplicity;
    out.fallback = true;
    return out;
  }
  const double floor = gamma * largest;
  const double replacement = median(std::move(positive));
  out.values = values;
  for (Index i = 0; i < values.size(); ++i) {
    if (values(i) < floor) {
      out.values(i) = replacement;
      ++out.count;
    }
  }
  out.complement = complement;
  if (complement < floor) {
    out.complement = replacement;
    out.count += multiplicity;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

HessianEstimate HessianEstimate::scaled_identity(double scale) {
  HessianEstimate h;
  h.diagonal = scale;
  h.basis.resize(0, 0);
  h.core.resize(0, 0);
  return h;
}

HessianEstimate HessianEstimate::from_dense(const Matrix& h) {
  if (h.rows() != h.cols()) throw ShapeError("Hessian estimate must be square");
  HessianEstimate out;
  out.basis = Matrix::Identity(h.rows(), h.rows());
  out.core = 0.5 * (h + h.transpose());
  out.orthonormal = true;
  return out;
}

Matrix HessianEstimate::dense(Index k) const {
  Matrix out = diagonal * Matrix::Identity(k, k);
  if (rank() > 0) {
    const auto b = basis.topRows(std::min(basis.rows(), k));
    out.topLeftCorner(b.rows(), b.rows()).noalias() += b * core * b.transpose();
  }
  return out;
}

Vector HessianEstimate::apply(const Vector& v) const {
  Vector out = diagonal * v;
  if (rank() > 0) {
    const Index b = basis.rows();
    const Vector w = basis.transpose() * v.head(b);
    out.head(b).noalias() += basis * (core * w);
  }
  return out;
}

double HessianEstimate::quadratic_form(const Vector& v) const {
  double out = diagonal * v.squaredNorm();
  if (rank() > 0) {
    const Vector w = basis.transpose() * v.head(basis.rows());
    out += w.dot(core * w);
  }
  return out;
}

void HessianEstimate::add_low_rank_to(Matrix& target, double sign) const {
  if (rank() == 0) return;
  const Index b = basis.rows();
  const Matrix scaled = sign * (basis * core);
  target.topLeftCorner(b, b).noalias() += scaled * basis.transpose();
}

void HessianEstimate::transform(const Matrix& t) {
  if (rank() == 0) return;
  basis = t * padded_rows(basis, t.cols());
  orthonormal = false;
}

Vector HessianEstimate::spectrum(Index k) const {
  const Compressed c = compress(*this, k);
  const Index r = c.c.rows();
  Vector out(k);
  if (r > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c.c + diagonal * Matrix::Identity(r, r),
                                              Eigen::EigenvaluesOnly);
    out.head(r) = eig.eigenvalues();
  }
  out.tail(k - r).setConstant(diagonal);
  std::sort(out.data(), out.data() + out.size());
  return out;
}

double QuadraticModel::value_at(const Vector& x) const {
  const Vector d = x - padded(anchor, x.size());
  return value + padded(gradient, x.size()).dot(d) + 0.5 * hessian.quadratic_form(d);
}

Vector QuadraticModel::gradient_at(const Vector& x) const {
  const Vector d = x - padded(anchor, x.size());
  return padded(gradient, x.size()) + hessian.apply(d);
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("median of an empty set");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

Vector padded(const Vector& v, Index k) {
  if (v.size() == k) return v;
  Vector out = Vector::Zero(k);
  out.head(std::min(k, v.size())) = v.head(std::min(k, v.size()));
  return out;
}

Matrix padded_rows(const Matrix& m, Index k) {
  if (m.rows() == k) return m;
  Matrix out = Matrix::Zero(k, m.cols());
  const Index r = std::min(k, m.rows());
  out.topRows(r) = m.topRows(r);
  return out;
}

bool append_history(History& history, const Vector& dx, const Vector& dg, Index max_columns,
                    double curvature_tolerance) {
  if (dx.size() != dg.size()) throw ShapeError("history pair lengths differ");
  if (max_columns < 1) throw ConfigError("history length must be at least 1");
  const double curvature = dx.dot(dg);
  if (!(curvature > curvature_tolerance * dx.norm() * dg.norm())) return false;

  const Index k = std::max(dx.size(), history.dx.rows());
  const Index keep = std::min(history.count(), max_columns - 1);
  const Index drop = history.count() - keep;
  Matrix new_dx = Matrix::Zero(k, keep + 1);
  Matrix new_dg = Matrix::Zero(k, keep + 1);
  if (keep > 0) {
    new_dx.topLeftCorner(history.dx.rows(), keep) = history.dx.middleCols(drop, keep);
    new_dg.topLeftCorner(history.dg.rows(), keep) = history.dg.middleCols(drop, keep);
  }
  new_dx.col(keep).head(dx.size()) = dx;
  new_dg.col(keep).head(dg.size()) = dg;
  history.dx = std::move(new_dx);
  history.dg = std::move(new_dg);
  return true;
}

bool append_history(SubfunctionRecord& record, const Vector& position, const Vector& gradient,
                    Index max_columns, double curvature_tolerance) {
  if (!record.evaluated) throw PreconditionError("append_history: record has no previous evaluation");
  const Index k = std::max(position.size(), record.model.anchor.size());
  return append_history(record.history, padded(position, k) - padded(record.model.anchor, k),
                        padded(gradient, k) - padded(record.model.gradient, k), max_columns,
                        curvature_tolerance);
}

Matrix history_basis(const History& history) {
  const Index k = history.dx.rows();
  const Index n = history.count();
  Matrix q(k, std::min<Index>(k, 2 * n));
  Index r = 0;
  Vector w(k);
  for (const Matrix* m : {&history.dx, &history.dg}) {
    for (Index j = 0; j < n && r < q.cols(); ++j) {
      const double norm = m->col(j).norm();
      if (!(norm > 0.0)) continue;
      w = m->col(j) / norm;
      // Gram-Schmidt, repeated once for stability.
      for (int pass = 0; pass < 2 && r > 0; ++pass)
        w.noalias() -= q.leftCols(r) * (q.leftCols(r).transpose() * w);
      const double rest = w.norm();
      if (rest > kHistoryRankTolerance) q.col(r++) = w / rest;
    }
  }
  return q.leftCols(r);
}

double init_beta(const History& history) {
  if (history.count() == 0) throw PreconditionError("init_beta: empty history");
  // dx D^-1 = U S V^T with unit-norm columns, so dx^+ = D^-1 V S^-1 U^T and
  // dg dx^+ has the singular values of dg D^-1 V S^-1. Those are the
  // eigenvalues of Q.
  const Index n = history.count();
  Vector scale(n);
  Matrix normalized = history.dx;
  for (Index j = 0; j < n; ++j) {
    const double norm = history.dx.col(j).norm();
    scale(j) = norm > 0.0 ? 1.0 / norm : 0.0;
    normalized.col(j) *= scale(j);
  }
  Eigen::JacobiSVD<Matrix> dx_svd(normalized, Eigen::ComputeThinV);
  const Vector& s = dx_svd.singularValues();
  Index rank = 0;
  while (rank < s.size() && s(rank) > kHistoryRankTolerance * s(0)) ++rank;
  if (rank == 0) throw PreconditionError("init_beta: history carries no curvature");
  const Matrix w = history.dg * scale.asDiagonal() * dx_svd.matrixV().leftCols(rank) *
                   s.head(rank).cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Matrix> z_svd(w);
  const Vector& z = z_svd.singularValues();
  if (z.size() == 0 || !(z(0) > 0.0)) throw PreconditionError("init_beta: history carries no curvature");
  double beta = z(0);
  for (Index i = 0; i < z.size(); ++i)
    if (z(i) > kBetaEigenCutoff * z(0)) beta = std::min(beta, z(i));
  return beta;
}

HessianEstimate bfgs_chain(const History& history, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("bfgs_chain: beta must be positive");
  if (history.count() == 0) throw PreconditionError("bfgs_chain: empty history");

  const Matrix u = history_basis(history);
  const Index r = u.cols();
  const Matrix dx = u.transpose() * history.dx;
  const Matrix dg = u.transpose() * history.dg;

  Matrix b = beta * Matrix::Identity(r, r);
  for (Index s = 0; s < history.count(); ++s) {
    const auto step = dx.col(s);
    const auto change = dg.col(s);
    const double curvature = change.dot(step);
    if (!(curvature > kCurvatureTolerance * step.norm() * change.norm())) continue;
    const Vector bs = b * step;
    const double sbs = step.dot(bs);
    if (!(sbs > 0.0)) continue;
    b.noalias() += change * change.transpose() / curvature;
    b.noalias() -= bs * bs.transpose() / sbs;
  }

  HessianEstimate out;
  out.diagonal = beta;
  out.basis = u;
  out.core = 0.5 * (b + b.transpose()) - beta * Matrix::Identity(r, r);
  out.orthonormal = true;
  return out;
}

HessianEstimate initial_hessian_no_history(std::span<const SubfunctionRecord> records,
                                           Index active_count, Index self, Index k,
                                           double first_scale) {
  Matrix sum = Matrix::Zero(k, k);
  Index others = 0;
  const Index limit = std::min<Index>(active_count, static_cast<Index>(records.size()));
  for (Index i = 0; i < limit; ++i) {
    const SubfunctionRecord& r = records[static_cast<std::size_t>(i)];
    if (i == self || !r.evaluated) continue;
    sum += r.model.hessian.dense(k);
    ++others;
  }
  if (others == 0 || k == 0) return HessianEstimate::scaled_identity(first_scale);
  sum /= static_cast<double>(others);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sum, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  const double m = median(std::vector<double>(ev.data(), ev.data() + ev.size()));
  return HessianEstimate::scaled_identity(m > 0.0 ? m : first_scale);
}

HessianEstimate enforce_positive_definite(const HessianEstimate& estimate, Index k, double gamma) {
  if (k < estimate.basis.rows()) throw ShapeError("enforce_positive_definite: k below basis rows");
  const Compressed c = compress(estimate, k);
  const Index r = c.c.rows();

  Vector values(r);
  Matrix vectors(r, r);
  if (r > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c.c + estimate.diagonal * Matrix::Identity(r, r));
    values = eig.eigenvalues();
    vectors = eig.eigenvectors();
  }
  const Clipped clipped = clip_spectrum(values, estimate.diagonal, k - r, gamma);

  HessianEstimate out;
  out.diagonal = clipped.complement;
  out.basis = c.q;
  out.core = vectors * clipped.values.asDiagonal() * vectors.transpose() -
             clipped.complement * Matrix::Identity(r, r);
  out.core = 0.5 * (out.core + out.core.transpose()).eval();
  out.orthonormal = true;
  out.clipped = clipped.count;
  out.fallback = clipped.fallback;
  return out;
}

Matrix enforce_positive_definite(const Matrix& h, double gamma) {
  if (h.rows() != h.cols()) throw ShapeError("enforce_positive_definite: matrix not square");
  if (h.size() == 0) return h;
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ShapeError("enforce_positive_definite: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()));
  const Clipped clipped = clip_spectrum(eig.eigenvalues(), 0.0, 0, gamma);
  if (clipped.count == 0) return h;
  return eig.eigenvectors() * clipped.values.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace sfo
