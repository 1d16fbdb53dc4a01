#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sfo/errors.hpp"
#include "sfo/optimizer.hpp"
#include "support/reference_sfo.hpp"

using namespace sfo;

namespace {

Vector random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

Matrix random_spd(std::mt19937_64& rng, Index n) {
  Matrix a(n, n);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return a * a.transpose() + 0.1 * Matrix::Identity(n, n);
}

Vector scalar(double x) { return Vector::Constant(1, x); }

double distance_to_optimum(const ObjectiveProblem& p, const Vector& x) {
  return (x - p.optimum()->position).norm();
}

}  // namespace

TEST_CASE("newton_step on a sum of two scalar quadratics") {
  // (x - 1)^2 / 2 + (x + 1)^2 / 2 at x = 2: gradient 4, Hessian 2.
  const Matrix h = Matrix::Constant(1, 1, 2.0);
  const NewtonResult full = newton_step(h, scalar(4.0), scalar(2.0), 1.0);
  CHECK(std::abs(full.position(0)) <= 1e-15);
  CHECK(full.predicted_reduction == doctest::Approx(4.0));
  const NewtonResult half = newton_step(h, scalar(4.0), scalar(2.0), 0.5);
  CHECK(half.position(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(half.predicted_reduction == doctest::Approx(3.0));
}

TEST_CASE("newton_step reaches the stationary point of a random PD model") {
  std::mt19937_64 rng(4);
  const Index k = 8;
  const Matrix h = random_spd(rng, k);
  const Vector x = random_vector(rng, k);
  const Vector g = random_vector(rng, k);
  auto model = [&](const Vector& y) { return g.dot(y - x) + 0.5 * (y - x).dot(h * (y - x)); };
  const NewtonResult r = newton_step(h, g, x, 1.0);
  CHECK((g + h * (r.position - x)).norm() <= 1e-10 * g.norm());
  CHECK_FALSE(r.fallback);
  const double best = model(r.position);
  for (int t = 0; t < 100; ++t) CHECK(best <= model(r.position + random_vector(rng, k)));
  CHECK(std::abs(r.predicted_reduction - (model(x) - best)) <= 1e-10 * std::abs(best));
}

TEST_CASE("newton_step falls back to a gradient step when the solve fails") {
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = -1.0;
  h(1, 1) = 2.0;
  const NewtonResult r = newton_step(h, Vector::Ones(2), Vector::Zero(2), 1.0);
  CHECK(r.fallback);
  CHECK(r.position.allFinite());
  CHECK(r.position(0) < 0.0);
}

TEST_CASE("farthest selection and its tie rule") {
  const std::vector<double> d{1.0, 3.0};
  CHECK(select_farthest(d) == 1);
  const std::vector<double> zeros{0.0, 0.0, 0.0};
  CHECK(select_farthest(zeros) == 0);

  const std::vector<Vector> displacements{scalar(1.0), scalar(3.0)};
  const std::vector<Matrix> identity{Matrix::Identity(1, 1)};
  CHECK(farthest_subfunction(displacements, identity) == 1);
}

TEST_CASE("farthest selection is invariant to positive metric scaling") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int t = 0; t < 100; ++t) {
    const Index k = 5;
    std::vector<Vector> displacements;
    for (int i = 0; i < 6; ++i) displacements.push_back(random_vector(rng, k));
    const Matrix q = random_spd(rng, k);
    const std::vector<Matrix> shared{q};
    const std::vector<Matrix> scaled{scale(rng) * q};
    CHECK(farthest_subfunction(displacements, shared) == farthest_subfunction(displacements, scaled));
    std::vector<Matrix> own, own_scaled;
    const double c = scale(rng);
    for (int i = 0; i < 6; ++i) {
      own.push_back(random_spd(rng, k));
      own_scaled.push_back(c * own.back());
    }
    CHECK(farthest_subfunction(displacements, own) == farthest_subfunction(displacements, own_scaled));
  }
}

TEST_CASE("growth criterion cases") {
  const Matrix h = Matrix::Identity(2, 2);
  Vector g(2);
  g << 1.0, 2.0;
  const std::vector<Vector> same{g, g, g};
  CHECK_FALSE(growth_criterion(same, h, 1.0));
  const std::vector<Vector> opposite{g, Vector(-g)};
  CHECK(growth_criterion(opposite, h, 1.0));
}

TEST_CASE("bad update rule") {
  CHECK(is_bad_update(2.0, 0.0, 0.5, 1.0));
  CHECK_FALSE(is_bad_update(-1.0, 0.0, -100.0, 0.0));
  CHECK_FALSE(is_bad_update(2.0, 0.0, 1.5, 1.0));
  CHECK(is_bad_update(std::nan(""), 0.0, 0.0, 1.0));
  CHECK(is_bad_update(INFINITY, 0.0, 0.0, 1.0));
}

TEST_CASE("step length update") {
  CHECK(std::abs(next_eta(0.5, 4, true) - 0.625) <= 1e-12);
  CHECK(std::abs(next_eta(0.5, 4, false) - 0.25) <= 1e-12);
  double eta = 0.5;
  for (int s = 0; s < 60; ++s) {
    const double next = next_eta(eta, 4, true);
    CHECK(next > eta);
    CHECK(next <= 1.0);
    eta = next;
  }
  CHECK(1.0 - eta <= 1e-6);
}

TEST_CASE("step length recovers geometrically after an isolated failure") {
  for (Index n : {2, 5, 20}) {
    double eta = next_eta(1.0, n, false);
    for (Index s = 1; s <= 2 * n; ++s) {
      eta = next_eta(eta, n, true);
      const double expected = 0.5 * std::pow(1.0 - 1.0 / static_cast<double>(n), static_cast<double>(s));
      CHECK(std::abs((1.0 - eta) - expected) <= 1e-12);
    }
  }
}

TEST_CASE("config validation") {
  SfoConfig c;
  CHECK_NOTHROW(c.validate(5));
  c.gamma = -1.0;
  CHECK_THROWS_AS(c.validate(5), ConfigError);
  c = SfoConfig{};
  c.initial_active = 0;
  CHECK_THROWS_AS(c.validate(5), ConfigError);
  c = SfoConfig{};
  c.initial_position = Vector::Zero(3);
  CHECK_THROWS_AS(c.validate(5), ShapeError);
}

TEST_CASE("initial state and first basis column") {
  const QuadraticEnsemble q = make_quadratic_ensemble(1, 6, 4, 10.0);
  Sfo opt(q);
  CHECK(opt.active_count() == 2);
  CHECK(opt.eta() == 1.0);
  const Vector g = eval_subfunction(q, 0, Vector::Zero(6)).gradient;
  const StepReport r = opt.step();
  CHECK(r.subfunction == 0);
  REQUIRE(opt.subspace().dimension() >= 1);
  CHECK((Vector(opt.subspace().basis().col(0)) - g / g.norm()).norm() <= 1e-14);
}

TEST_CASE("one-dimensional two-quadratic toy") {
  const QuadraticEnsemble toy({Matrix::Ones(1, 1), Matrix::Ones(1, 1)}, {scalar(1.0), scalar(-1.0)});
  SfoConfig c;
  c.initial_position = scalar(2.0);
  Sfo opt(toy, c);
  double previous = 2.0;
  for (int s = 0; s < 12; ++s) {
    const StepReport r = opt.step();
    const SubfunctionRecord& rec = opt.records()[static_cast<std::size_t>(r.subfunction)];
    // The evaluated model is re-anchored at the evaluation point.
    const Vector at = opt.subspace().to_full(rec.model.anchor);
    const Evaluation e = eval_subfunction(toy, r.subfunction, at);
    CHECK(rec.model.value == e.value);
    CHECK(rec.model.value_at(rec.model.anchor) == rec.model.value);
    if (s >= 2) CHECK(std::abs(opt.position()(0)) <= std::abs(previous) + 1e-12);
    previous = opt.position()(0);
  }
  CHECK(std::abs(opt.position()(0)) <= 1e-10);
}

TEST_CASE("identical seeds give bit-identical iterates") {
  const LogisticRegression p = make_logistic_regression(2, 300, 10, 8, 1e-2);
  SfoConfig c;
  c.seed = 42;
  Sfo a(p, c), b(p, c);
  for (int s = 0; s < 100; ++s) {
    a.step();
    b.step();
    REQUIRE(a.position() == b.position());
  }
}

TEST_CASE("models stay anchored and aggregates stay consistent") {
  const LogisticRegression p = make_logistic_regression(4, 400, 12, 6, 1e-2);
  SfoConfig c;
  c.seed = 3;
  Sfo opt(p, c);
  double worst_aggregate = 0.0;
  for (int s = 0; s < 120; ++s) {
    const StepReport r = opt.step();
    const SubfunctionRecord& rec = opt.records()[static_cast<std::size_t>(r.subfunction)];
    CHECK(rec.model.value_at(rec.model.anchor) == rec.model.value);
    CHECK(rec.model.gradient_at(rec.model.anchor) == rec.model.gradient);
    if (!r.collapsed) {
      const Vector at = opt.subspace().to_full(rec.model.anchor);
      const Evaluation e = eval_subfunction(p, r.subfunction, at);
      CHECK(std::abs(rec.model.value - e.value) <= 1e-12 * std::abs(e.value));
      const Vector projected = opt.subspace().to_coords(e.gradient);
      CHECK((padded(rec.model.gradient, projected.size()) - projected).norm() <= 1e-10 * e.gradient.norm());
    }
    const Matrix agg = opt.aggregate_hessian();
    const Matrix ref = opt.recomputed_aggregate_hessian();
    worst_aggregate = std::max(worst_aggregate, (agg - ref).norm() / ref.norm());
    CHECK(opt.eta() > 0.0);
    CHECK(opt.eta() <= 1.0);
  }
  CHECK(worst_aggregate <= 1e-10);
}

TEST_CASE("models predict the next evaluation once histories fill") {
  // Three passes leave about three pairs per subfunction in 20 dimensions,
  // so the relative error there is near 1e-2. By eight passes it is ~3e-8.
  const QuadraticEnsemble q = make_quadratic_ensemble(7, 20, 10, 100.0);
  SfoConfig c;
  c.seed = 1;
  Sfo opt(q, c);
  for (int s = 0; s < 80; ++s) opt.step();
  for (int probe = 0; probe < 5; ++probe) {
    const std::vector<SubfunctionRecord> before(opt.records().begin(), opt.records().end());
    const StepReport r = opt.step();
    REQUIRE_FALSE(r.collapsed);
    const SubfunctionRecord& now = opt.records()[static_cast<std::size_t>(r.subfunction)];
    const double predicted = before[static_cast<std::size_t>(r.subfunction)].model.value_at(now.model.anchor);
    CHECK(std::abs(predicted - now.model.value) <= 1e-6 * std::abs(now.model.value));
  }
}

TEST_CASE("every step evaluates exactly one subfunction") {
  const LogisticRegression p = make_logistic_regression(1, 200, 8, 10, 1e-2);
  CountingProblem counted(p);
  Sfo opt(counted);
  for (int s = 1; s <= 100; ++s) {
    opt.step();
    REQUIRE(counted.evaluations() == static_cast<std::uint64_t>(s));
  }
}

TEST_CASE("active set starts at two, never shrinks and reaches N") {
  const QuadraticEnsemble q = make_quadratic_ensemble(3, 20, 10, 100.0);
  Sfo opt(q);
  for (int s = 0; s < 100; ++s) opt.step();
  const auto& trace = opt.active_trace();
  REQUIRE(!trace.empty());
  CHECK(trace.front() >= 2);
  for (std::size_t s = 1; s < trace.size(); ++s) CHECK(trace[s] >= trace[s - 1]);
  CHECK(trace.back() == 10);
}

TEST_CASE("quadratic ensemble converges within 15 passes") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const QuadraticEnsemble q = make_quadratic_ensemble(seed, 20, 10, 100.0);
    SfoConfig c;
    c.seed = seed;
    Sfo opt(q, c);
    for (int s = 0; s < 150; ++s) opt.step();
    CAPTURE(seed);
    CHECK(distance_to_optimum(q, opt.position()) <= 1e-6);
  }
}

TEST_CASE("bad updates on the logistic problem stay below the recorded baseline") {
  const LogisticRegression p = make_logistic_regression(3, 2000, 100, 20, 1e-3);
  Sfo opt(p);
  for (int s = 0; s < 400; ++s) opt.step();
  const double fraction = static_cast<double>(opt.bad_update_count()) / 400.0;
  MESSAGE("bad-update fraction " << fraction);
  CHECK(fraction < 0.20);
}

TEST_CASE("subspace iterates agree with the full-space reference") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const QuadraticEnsemble q = make_quadratic_ensemble(seed, 50, 10, 100.0);
    SfoConfig c;
    c.seed = seed;
    Sfo fast(q, c);
    reference::Options o;
    o.seed = seed;
    reference::FullSpaceSfo slow(q, o);
    double worst = 0.0;
    bool collapsed = false;
    for (int s = 0; s < 50; ++s) {
      const StepReport a = fast.step();
      const reference::Step b = slow.step();
      REQUIRE(a.subfunction == b.subfunction);
      REQUIRE(a.bad_update == b.bad);
      collapsed = collapsed || a.collapsed;
      worst = std::max(worst, (fast.position() - slow.position()).norm() / slow.position().norm());
    }
    CAPTURE(seed);
    CHECK(collapsed);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("cyclic and random selection rules run") {
  const QuadraticEnsemble q = make_quadratic_ensemble(5, 10, 5, 10.0);
  for (SelectionRule rule : {SelectionRule::cyclic, SelectionRule::random}) {
    SfoConfig c;
    c.selection = rule;
    Sfo opt(q, c);
    for (int s = 0; s < 100; ++s) opt.step();
    CHECK(distance_to_optimum(q, opt.position()) <= 1e-4);
  }
}
