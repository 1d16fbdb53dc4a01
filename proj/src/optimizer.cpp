#include "sfo/optimizer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "sfo/errors.hpp"

namespace sfo {
namespace {

constexpr double kHistoryShrinkLimit = 1e6;

NewtonResult newton_with_factor(const Eigen::LLT<Matrix>& llt, const Matrix& h, const Vector& g,
                                const Vector& x, double eta) {
  NewtonResult out;
  if (llt.info() == Eigen::Success) {
    const Vector p = llt.solve(g);
    const double gp = g.dot(p);
    if (p.allFinite() && std::isfinite(gp)) {
      out.position = x - eta * p;
      // With H p = g: G(x) - G(x - eta p) = eta (1 - eta / 2) g.p
      out.predicted_reduction = eta * (1.0 - 0.5 * eta) * gp;
      return out;
    }
  }
  out.fallback = true;
  double largest = 0.0;
  if (h.size() > 0 && h.allFinite()) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
    largest = eig.eigenvalues().maxCoeff();
  }
  if (!(largest > 0.0) || !std::isfinite(largest) || !g.allFinite()) {
    out.position = x;
    return out;
  }
  const Vector s = -(eta / largest) * g;
  out.position = x + s;
  out.predicted_reduction = -g.dot(s) - 0.5 * s.dot(h * s);
  return out;
}

bool growth_with_factor(const Eigen::LLT<Matrix>& llt, std::span<const Vector> gradients,
                        double alpha) {
  const auto n = static_cast<Index>(gradients.size());
  if (n < 2 || llt.info() != Eigen::Success) return false;
  Vector mean = Vector::Zero(gradients[0].size());
  double spread = 0.0;
  for (const Vector& g : gradients) {
    mean += g;
    spread += g.dot(llt.solve(g));
  }
  mean /= static_cast<double>(n);
  const double lhs = mean.dot(llt.solve(mean));
  return lhs < alpha * spread / static_cast<double>((n - 1) * n);
}

}  // namespace

std::string to_string(SfoEvent::Kind kind) {
  switch (kind) {
    case SfoEvent::Kind::bad_update: return "bad_update";
    case SfoEvent::Kind::nonfinite_evaluation: return "nonfinite_evaluation";
    case SfoEvent::Kind::collapse: return "collapse";
    case SfoEvent::Kind::reorthonormalized: return "reorthonormalized";
    case SfoEvent::Kind::growth: return "growth";
    case SfoEvent::Kind::newton_fallback: return "newton_fallback";
    case SfoEvent::Kind::positive_definite_fallback: return "positive_definite_fallback";
    case SfoEvent::Kind::seeded_basis: return "seeded_basis";
  }
  return "unknown";
}

void SfoConfig::validate(Index dimension) const {
  if (history_length < 1) throw ConfigError("history_length must be at least 1");
  if (min_subspace_factor < 0 || max_subspace_factor < 1 ||
      min_subspace_factor > max_subspace_factor)
    throw ConfigError("subspace factors need 0 <= min <= max, max >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (initial_active < 1) throw ConfigError("initial_active must be at least 1");
  if (!(first_hessian_scale > 0.0) || !std::isfinite(first_hessian_scale))
    throw ConfigError("first_hessian_scale must be positive");
  if (!(curvature_tolerance >= 0.0)) throw ConfigError("curvature_tolerance must be non-negative");
  if (initial_position) {
    if (initial_position->size() != dimension)
      throw ShapeError("initial_position has length " + std::to_string(initial_position->size()) +
                       ", expected " + std::to_string(dimension));
    if (!initial_position->allFinite()) throw ConfigError("initial_position must be finite");
  }
}

NewtonResult newton_step(const Matrix& hessian, const Vector& gradient, const Vector& x,
                         double eta) {
  if (hessian.rows() != hessian.cols() || hessian.rows() != gradient.size() ||
      gradient.size() != x.size())
    throw ShapeError("newton_step: inconsistent sizes");
  Eigen::LLT<Matrix> llt(hessian);
  return newton_with_factor(llt, hessian, gradient, x, eta);
}

Index select_farthest(std::span<const double> distances) {
  if (distances.empty()) throw PreconditionError("select_farthest: no candidates");
  Index best = 0;
  for (std::size_t i = 1; i < distances.size(); ++i)
    if (distances[i] > distances[static_cast<std::size_t>(best)]) best = static_cast<Index>(i);
  return best;
}

Index farthest_subfunction(std::span<const Vector> displacements, std::span<const Matrix> metrics) {
  if (metrics.size() != 1 && metrics.size() != displacements.size())
    throw ShapeError("farthest_subfunction: need one shared metric or one per candidate");
  std::vector<double> distances(displacements.size());
  for (std::size_t i = 0; i < displacements.size(); ++i) {
    const Matrix& q = metrics.size() == 1 ? metrics[0] : metrics[i];
    distances[i] = displacements[i].dot(q * displacements[i]);
  }
  return select_farthest(distances);
}

bool growth_criterion(std::span<const Vector> gradients, const Matrix& hessian, double alpha) {
  Eigen::LLT<Matrix> llt(hessian);
  return growth_with_factor(llt, gradients, alpha);
}

bool is_bad_update(double new_value, double previous_value, double model_at_new,
                   double predicted_reduction) {
  if (!std::isfinite(new_value)) return true;
  return new_value > previous_value && new_value - model_at_new > predicted_reduction;
}

double next_eta(double eta, Index active_count, bool success) {
  if (!success) return 0.5 * eta;
  const double n = static_cast<double>(active_count);
  return 1.0 / n + (n - 1.0) / n * eta;
}

// ---------------------------------------------------------------------------

Sfo::Sfo(const ObjectiveProblem& problem, SfoConfig config)
    : problem_(problem),
      config_(std::move(config)),
      subspace_(problem.dimension(), config_.min_subspace_factor * problem.subfunction_count(),
                config_.max_subspace_factor * problem.subfunction_count()),
      records_(static_cast<std::size_t>(problem.subfunction_count())),
      active_(std::min(config_.initial_active, problem.subfunction_count())),
      rng_(config_.seed) {
  config_.validate(problem.dimension());
  gradient_buffer_ = Vector::Zero(problem.dimension());
  x_.resize(0);
  if (config_.initial_position && config_.initial_position->norm() > 0.0)
    x_ = subspace_.expand(*config_.initial_position).coordinates;
  pad_to_subspace();
}

Vector Sfo::position() const {
  if (subspace_.dimension() == 0) return Vector::Zero(problem_.dimension());
  return subspace_.to_full(x_);
}

Index Sfo::evaluated_count() const {
  Index n = 0;
  for (const auto& r : records_) n += r.evaluated ? 1 : 0;
  return n;
}

Matrix Sfo::aggregate_hessian() const {
  Matrix h = hlow_;
  h.diagonal().array() += hdiag_;
  return h;
}

Matrix Sfo::recomputed_aggregate_hessian() const {
  const Index k = subspace_.dimension();
  Matrix h = Matrix::Zero(k, k);
  for (const auto& r : records_)
    if (r.evaluated) h += r.model.hessian.dense(k);
  return h;
}

double Sfo::model_value_at(const Vector& x) const {
  double total = 0.0;
  for (const auto& r : records_)
    if (r.evaluated) total += r.model.value_at(x);
  return total;
}

Vector Sfo::model_gradient_at(const Vector& x) const {
  return linear_ + hdiag_ * x + hlow_ * x;
}

void Sfo::log(SfoEvent::Kind kind, std::string detail) {
  events_.push_back({t_, kind, std::move(detail)});
}

void Sfo::pad_to_subspace() {
  const Index k = subspace_.dimension();
  if (x_.size() == k && hlow_.rows() == k) return;
  x_ = padded(x_, k);
  Matrix grown = Matrix::Zero(k, k);
  const Index old = std::min(k, hlow_.rows());
  grown.topLeftCorner(old, old) = hlow_.topLeftCorner(old, old);
  hlow_ = std::move(grown);
  linear_ = padded(linear_, k);
  for (auto& r : records_) {
    if (!r.evaluated) continue;
    r.model.anchor = padded(r.model.anchor, k);
    r.model.gradient = padded(r.model.gradient, k);
  }
  factor_valid_ = false;
}

const Eigen::LLT<Matrix>& Sfo::factor() {
  if (!factor_valid_) {
    llt_.compute(aggregate_hessian());
    factor_valid_ = true;
  }
  return llt_;
}

void Sfo::recompute_aggregates() {
  const Index k = subspace_.dimension();
  hlow_ = Matrix::Zero(k, k);
  hdiag_ = 0.0;
  linear_ = Vector::Zero(k);
  for (const auto& r : records_) {
    if (!r.evaluated) continue;
    r.model.hessian.add_low_rank_to(hlow_, 1.0);
    hdiag_ += r.model.hessian.diagonal;
    linear_ += r.model.gradient - r.model.hessian.apply(r.model.anchor);
  }
  factor_valid_ = false;
}

Index Sfo::choose(const Vector& x) {
  for (Index i = 0; i < active_; ++i)
    if (!records_[static_cast<std::size_t>(i)].evaluated) return i;

  switch (config_.selection) {
    case SelectionRule::cyclic: {
      const Index j = cyclic_next_ % active_;
      cyclic_next_ = j + 1;
      return j;
    }
    case SelectionRule::random:
      return static_cast<Index>(rng_() % static_cast<std::uint64_t>(active_));
    case SelectionRule::distance:
      break;
  }

  const bool own_metric = (rng_() & 1U) == 0U;
  std::vector<double> distances(static_cast<std::size_t>(active_));
  for (Index i = 0; i < active_; ++i) {
    const auto& m = records_[static_cast<std::size_t>(i)].model;
    const Vector d = x - m.anchor;
    distances[static_cast<std::size_t>(i)] =
        own_metric ? m.hessian.quadratic_form(d) : hdiag_ * d.squaredNorm() + d.dot(hlow_ * d);
  }
  return select_farthest(distances);
}

void Sfo::rebuild_hessian(Index j) {
  auto& r = records_[static_cast<std::size_t>(j)];
  const Index k = subspace_.dimension();
  HessianEstimate h;
  if (r.history.count() == 0) {
    h = initial_hessian_no_history(records_, active_, j, k, config_.first_hessian_scale);
  } else {
    h = bfgs_chain(r.history, init_beta(r.history));
  }
  h = enforce_positive_definite(h, k, config_.gamma);
  if (h.fallback) log(SfoEvent::Kind::positive_definite_fallback, "subfunction " + std::to_string(j));
  r.model.hessian = std::move(h);
}

void Sfo::apply_transform(const Matrix& t) {
  x_ = t * x_;
  for (auto& r : records_) {
    if (!r.evaluated) continue;
    r.model.anchor = t * r.model.anchor;
    r.model.gradient = t * r.model.gradient;
    r.model.hessian.transform(t);

    History& h = r.history;
    if (h.count() == 0) continue;
    const Matrix dx = t * padded_rows(h.dx, t.cols());
    const Matrix dg = t * padded_rows(h.dg, t.cols());
    std::vector<Index> keep;
    for (Index c = 0; c < h.count(); ++c) {
      const bool dx_ok = dx.col(c).norm() * kHistoryShrinkLimit >= h.dx.col(c).norm();
      const bool dg_ok = dg.col(c).norm() * kHistoryShrinkLimit >= h.dg.col(c).norm();
      if (dx_ok && dg_ok) keep.push_back(c);
    }
    h.dx.resize(t.rows(), static_cast<Index>(keep.size()));
    h.dg.resize(t.rows(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      h.dx.col(static_cast<Index>(c)) = dx.col(keep[c]);
      h.dg.col(static_cast<Index>(c)) = dg.col(keep[c]);
    }
  }
  recompute_aggregates();
}

void Sfo::collapse() {
  std::vector<Vector> positions;
  std::vector<Vector> gradients;
  for (const auto& r : records_) {
    if (!r.evaluated) continue;
    gradients.push_back(r.model.gradient);
    positions.push_back(r.model.anchor);
  }
  positions.push_back(x_);
  const Index before = subspace_.dimension();
  const ProjectionUpdate u = subspace_.collapse(positions, gradients);
  apply_transform(u.transform);
  ++collapses_;
  log(SfoEvent::Kind::collapse,
      std::to_string(before) + " -> " + std::to_string(subspace_.dimension()));
}

bool Sfo::should_grow_by_criterion() {
  if (active_ < 2) return false;
  std::vector<Vector> gradients;
  gradients.reserve(static_cast<std::size_t>(active_));
  for (Index i = 0; i < active_; ++i) {
    const auto& r = records_[static_cast<std::size_t>(i)];
    if (!r.evaluated) return false;
    gradients.push_back(r.model.gradient);
  }
  return growth_with_factor(factor(), gradients, config_.alpha);
}

StepReport Sfo::step() {
  ++t_;
  StepReport report;
  report.step = t_;

  // Newton step on the summed model.
  const Vector x_prev = x_;
  double predicted = 0.0;
  if (evaluated_count() > 0) {
    const Matrix h = aggregate_hessian();
    const Vector g = linear_ + h * x_;
    NewtonResult proposal = newton_with_factor(factor(), h, g, x_, eta_);
    if (proposal.fallback) {
      report.newton_fallback = true;
      log(SfoEvent::Kind::newton_fallback);
    }
    x_ = std::move(proposal.position);
    predicted = proposal.predicted_reduction;
  }

  const Index j = choose(x_);
  auto& r = records_[static_cast<std::size_t>(j)];
  report.subfunction = j;

  const double value = problem_.evaluate(j, position(), gradient_buffer_);
  const bool finite = std::isfinite(value) && gradient_buffer_.allFinite();
  bool bad = !finite;
  if (finite && config_.detect_bad_updates && r.evaluated)
    bad = is_bad_update(value, r.model.value, r.model.value_at(x_), predicted);

  Vector x_eval = x_;
  if (bad) {
    x_ = x_prev;
    ++bad_updates_;
    log(finite ? SfoEvent::Kind::bad_update : SfoEvent::Kind::nonfinite_evaluation,
        "subfunction " + std::to_string(j));
  }

  if (finite) {
    Vector g_coords = subspace_.expand(gradient_buffer_).coordinates;
    if (subspace_.dimension() == 0) {
      subspace_.expand(Vector::Unit(problem_.dimension(), 0));
      log(SfoEvent::Kind::seeded_basis, "zero gradient at zero start");
    }
    pad_to_subspace();
    const Index k = subspace_.dimension();
    g_coords = padded(g_coords, k);
    x_eval = padded(x_eval, k);

    const bool had_model = r.evaluated;
    if (had_model) {
      append_history(r, x_eval, g_coords, config_.history_length, config_.curvature_tolerance);
      r.model.hessian.add_low_rank_to(hlow_, -1.0);
    }
    // The model is re-anchored at the evaluated point even when the step is
    // rejected; only the iterate is reset.
    r.model.anchor = x_eval;
    r.model.value = value;
    r.model.gradient = g_coords;
    r.evaluated = true;
    rebuild_hessian(j);
    r.model.hessian.add_low_rank_to(hlow_, 1.0);

    hdiag_ = 0.0;
    linear_ = Vector::Zero(k);
    for (const auto& rec : records_) {
      if (!rec.evaluated) continue;
      hdiag_ += rec.model.hessian.diagonal;
      linear_ += rec.model.gradient - rec.model.hessian.apply(rec.model.anchor);
    }
    factor_valid_ = false;
  }
  ++r.eval_count;
  r.last_step = t_;

  if (subspace_.dimension() > subspace_.max_dimension()) {
    collapse();
    report.collapsed = true;
  }
  if (auto m = subspace_.maintain()) {
    apply_transform(m->transform);
    log(SfoEvent::Kind::reorthonormalized);
  }

  const Index active_before = active_;
  eta_ = next_eta(eta_, active_before, !bad);

  const Index n = problem_.subfunction_count();
  if (active_ < n) {
    std::string reason;
    if (bad)
      reason = "bad update";
    else if (should_grow_by_criterion())
      reason = "gradient criterion";
    else if (steps_since_growth_ + 1 >= active_)
      reason = "full pass without growth";
    if (!reason.empty()) {
      ++active_;
      steps_since_growth_ = 0;
      report.grew = true;
      log(SfoEvent::Kind::growth, std::to_string(active_) + " active (" + reason + ")");
    } else {
      ++steps_since_growth_;
    }
  }

  report.bad_update = bad;
  report.eta = eta_;
  report.subspace_dimension = subspace_.dimension();
  report.active_count = active_;
  report.model_value = model_value();
  active_trace_.push_back(active_);
  return report;
}

}  // namespace sfo
