#include "sfo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <tuple>

#include "sfo/errors.hpp"

namespace sfo {

Vector sgd_step(const Vector& x, const Vector& gradient, double step_size) {
  return x - step_size * gradient;
}

void momentum_step(Vector& x, Vector& velocity, const Vector& gradient, double step_size,
                   double momentum) {
  velocity = momentum * velocity - step_size * gradient;
  x += velocity;
}

void adagrad_step(Vector& x, Vector& accumulator, const Vector& gradient, double initial_step) {
  accumulator.array() += gradient.array().square();
  x.array() -= initial_step * gradient.array() / (accumulator.array() + kAdagradEpsilon).sqrt();
}

SagTable::SagTable(Index dimension, Index subfunctions)
    : table_(Matrix::Zero(dimension, subfunctions)),
      filled_(static_cast<std::size_t>(subfunctions), false),
      sum_(Vector::Zero(dimension)) {}

void SagTable::replace(Index i, const Vector& gradient) {
  const auto slot = static_cast<std::size_t>(i);
  if (filled_[slot]) {
    sum_ -= table_.col(i);
  } else {
    filled_[slot] = true;
    ++stored_;
  }
  table_.col(i) = gradient;
  sum_ += gradient;
  // Refresh the running sum once per table's worth of replacements.
  if (++replacements_ % table_.cols() == 0) sum_ = table_.rowwise().sum();
}

Vector SagTable::mean() const {
  if (stored_ == 0) return Vector::Zero(sum_.size());
  return sum_ / static_cast<double>(stored_);
}

Vector SagTable::recomputed_mean() const {
  if (stored_ == 0) return Vector::Zero(sum_.size());
  return table_.rowwise().sum() / static_cast<double>(stored_);
}

Index Sampler::next() {
  if (order_ == SampleOrder::cyclic) {
    const Index i = cursor_;
    cursor_ = (cursor_ + 1) % n_;
    return i;
  }
  return static_cast<Index>(rng_() % static_cast<std::uint64_t>(n_));
}

std::string to_string(Method m) {
  switch (m) {
    case Method::sfo: return "sfo";
    case Method::sgd: return "sgd";
    case Method::momentum: return "momentum";
    case Method::adagrad: return "adagrad";
    case Method::sag: return "sag";
    case Method::lbfgs: return "lbfgs";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::sfo, Method::sgd, Method::momentum, Method::adagrad, Method::sag,
                   Method::lbfgs})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string format_hyperparameters(const GridPoint& p) {
  char buf[96];
  if (p.momentum)
    std::snprintf(buf, sizeof buf, "step=%.17g;momentum=%.17g", p.step_size, *p.momentum);
  else
    std::snprintf(buf, sizeof buf, "step=%.17g", p.step_size);
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

class SingleSample final : public SteppingOptimizer {
 public:
  SingleSample(const ObjectiveProblem& problem, const Vector& x0, const BaselineConfig& config)
      : problem_(problem),
        config_(config),
        sampler_(problem.subfunction_count(), config.order, config.seed),
        x_(x0),
        gradient_(problem.dimension()) {
    if (!(config.point.step_size > 0.0)) throw ConfigError("step size must be positive");
    switch (config.method) {
      case Method::momentum:
        if (!config.point.momentum) throw ConfigError("momentum requires a momentum coefficient");
        velocity_ = Vector::Zero(x0.size());
        break;
      case Method::adagrad:
        accumulator_ = Vector::Zero(x0.size());
        break;
      case Method::sag:
        table_.emplace(problem.dimension(), problem.subfunction_count());
        break;
      case Method::sgd:
        break;
      default:
        throw ConfigError("not a single-sample method: " + to_string(config.method));
    }
  }

  std::string name() const override { return to_string(config_.method); }
  std::string hyperparameters() const override { return format_hyperparameters(config_.point); }
  Vector position() const override { return x_; }
  bool finished() const override { return status_ != "ok"; }
  std::string status() const override { return status_; }

  void step() override {
    const Index i = sampler_.next();
    const double value = problem_.evaluate(i, x_, gradient_);
    if (!std::isfinite(value) || !gradient_.allFinite()) {
      status_ = "diverged";
      return;
    }
    const double lr = config_.point.step_size;
    switch (config_.method) {
      case Method::sgd:
        x_ = sgd_step(x_, gradient_, lr);
        break;
      case Method::momentum:
        momentum_step(x_, velocity_, gradient_, lr, *config_.point.momentum);
        break;
      case Method::adagrad:
        adagrad_step(x_, accumulator_, gradient_, lr);
        break;
      case Method::sag:
        table_->replace(i, gradient_);
        x_ -= lr * table_->mean();
        break;
      default:
        break;
    }
    if (!x_.allFinite()) status_ = "diverged";
  }

 private:
  const ObjectiveProblem& problem_;
  BaselineConfig config_;
  Sampler sampler_;
  Vector x_;
  Vector gradient_;
  Vector velocity_;
  Vector accumulator_;
  std::optional<SagTable> table_;
  std::string status_ = "ok";
};

}  // namespace

std::unique_ptr<SteppingOptimizer> make_baseline(const ObjectiveProblem& problem, const Vector& x0,
                                                 const BaselineConfig& config) {
  if (x0.size() != problem.dimension()) throw ShapeError("baseline x0 has the wrong length");
  if (config.method == Method::lbfgs) {
    LbfgsOptions options;
    options.history_length = config.history_length;
    return std::make_unique<Lbfgs>(problem, x0, options);
  }
  if (config.method == Method::sfo) throw ConfigError("sfo is not a baseline");
  return std::make_unique<SingleSample>(problem, x0, config);
}

// ---------------------------------------------------------------------------

Lbfgs::Lbfgs(const ObjectiveProblem& problem, Vector x0, LbfgsOptions options)
    : problem_(problem), options_(options), x_(std::move(x0)) {
  if (options_.history_length < 1) throw ConfigError("lbfgs history length must be at least 1");
  if (x_.size() != problem.dimension()) throw ShapeError("lbfgs x0 has the wrong length");
}

std::string Lbfgs::hyperparameters() const {
  return "history=" + std::to_string(options_.history_length);
}

Vector Lbfgs::direction() const {
  const std::size_t m = s_.size();
  Vector q = gradient_;
  std::vector<double> a(m);
  for (std::size_t k = m; k-- > 0;) {
    a[k] = s_[k].dot(q) / y_[k].dot(s_[k]);
    q -= a[k] * y_[k];
  }
  if (m > 0) q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
  for (std::size_t k = 0; k < m; ++k) {
    const double b = y_[k].dot(q) / y_[k].dot(s_[k]);
    q += (a[k] - b) * s_[k];
  }
  return -q;
}

void Lbfgs::step() {
  if (finished()) return;
  if (!started_) {
    const Evaluation e = full_objective(problem_, x_);
    value_ = e.value;
    gradient_ = e.gradient;
    started_ = true;
    if (!std::isfinite(value_) || !gradient_.allFinite()) {
      status_ = "diverged";
      return;
    }
  }
  const double gnorm = gradient_.norm();
  if (gnorm == 0.0) {
    status_ = "converged";
    return;
  }

  Vector d = direction();
  double slope = gradient_.dot(d);
  if (!(slope < 0.0)) {
    s_.clear();
    y_.clear();
    d = -gradient_;
    slope = -gnorm * gnorm;
  }
  double t = s_.empty() ? std::min(1.0, 1.0 / gnorm) : 1.0;
  for (int trial = 0; trial < options_.max_trials; ++trial, t *= options_.backtrack) {
    const Vector candidate = x_ + t * d;
    const Evaluation e = full_objective(problem_, candidate);
    if (!std::isfinite(e.value) || !e.gradient.allFinite()) continue;
    if (e.value > value_ + options_.sufficient_decrease * t * slope) continue;

    Vector s = candidate - x_;
    Vector y = e.gradient - gradient_;
    if (s.dot(y) > 1e-10 * s.norm() * y.norm()) {
      s_.push_back(std::move(s));
      y_.push_back(std::move(y));
      if (static_cast<Index>(s_.size()) > options_.history_length) {
        s_.erase(s_.begin());
        y_.erase(y_.begin());
      }
    }
    x_ = candidate;
    value_ = e.value;
    gradient_ = e.gradient;
    ++iterations_;
    return;
  }
  status_ = "line_search_failed";
}

LbfgsResult lbfgs_minimize(const ObjectiveProblem& problem, const Vector& x0,
                           long max_iterations, double gradient_tolerance, LbfgsOptions options) {
  Lbfgs opt(problem, x0, options);
  LbfgsResult out;
  for (long it = 0; it < max_iterations; ++it) {
    opt.step();
    if (opt.finished() || opt.gradient().norm() <= gradient_tolerance) break;
  }
  out.position = opt.position();
  out.value = opt.value();
  out.gradient_norm = opt.gradient().norm();
  out.iterations = opt.iterations();
  out.status = opt.status() == "ok" && out.gradient_norm <= gradient_tolerance ? "converged"
                                                                             : opt.status();
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> default_step_grid() {
  std::vector<double> out;
  for (int e = -5; e <= 2; ++e) out.push_back(std::pow(10.0, e));
  return out;
}

std::vector<double> default_momentum_grid() { return {0.5, 0.9, 0.95, 0.99}; }

std::vector<GridPoint> default_grid(Method m) {
  std::vector<GridPoint> out;
  switch (m) {
    case Method::sfo:
    case Method::lbfgs:
      out.push_back({0.0, std::nullopt});
      break;
    case Method::momentum:
      for (double mu : default_momentum_grid())
        for (double s : default_step_grid()) out.push_back({s, mu});
      break;
    default:
      for (double s : default_step_grid()) out.push_back({s, std::nullopt});
      break;
  }
  return out;
}

GridSelection select_best(std::span<const GridPoint> grid, std::span<const double> final_objectives) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");
  if (grid.size() != final_objectives.size()) throw ShapeError("one objective per grid point");

  auto score = [&](std::size_t i) {
    const double v = final_objectives[i];
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  auto momentum_of = [&](std::size_t i) { return grid[i].momentum.value_or(0.0); };

  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const auto a = std::make_tuple(score(i), grid[i].step_size, momentum_of(i));
    const auto b = std::make_tuple(score(best), grid[best].step_size, momentum_of(best));
    if (a < b) best = i;
  }

  GridSelection out;
  out.best = static_cast<Index>(best);
  std::vector<std::size_t> line;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i].momentum == grid[best].momentum) line.push_back(i);
  std::sort(line.begin(), line.end(),
            [&](std::size_t a, std::size_t b) { return grid[a].step_size < grid[b].step_size; });
  const auto pos = static_cast<std::size_t>(std::find(line.begin(), line.end(), best) - line.begin());
  if (pos > 0) out.neighbors.push_back(static_cast<Index>(line[pos - 1]));
  if (pos + 1 < line.size()) out.neighbors.push_back(static_cast<Index>(line[pos + 1]));
  out.best_at_endpoint = line.size() > 1 && (pos == 0 || pos + 1 == line.size());
  return out;
}

}  // namespace sfo
