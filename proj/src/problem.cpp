#include "sfo/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sfo/errors.hpp"

namespace sfo {
namespace {

Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

Matrix haar_orthogonal(std::mt19937_64& rng, Index n) {
  const Matrix g = gaussian_matrix(rng, n, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log cosh(u), stable for large |u|.
double log_cosh(double u) {
  const double a = std::abs(u);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Evaluation eval_subfunction(const ObjectiveProblem& problem, Index i, const Vector& x) {
  if (i < 0 || i >= problem.subfunction_count())
    throw std::out_of_range("subfunction index " + std::to_string(i) + " outside [0, " +
                            std::to_string(problem.subfunction_count()) + ")");
  if (x.size() != problem.dimension())
    throw ShapeError("parameter vector has length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(problem.dimension()));
  if (!x.allFinite()) throw std::domain_error("parameter vector has non-finite entries");
  Evaluation out;
  out.gradient.setZero(problem.dimension());
  out.value = problem.evaluate(i, x, out.gradient);
  return out;
}

Evaluation full_objective(const ObjectiveProblem& problem, const Vector& x) {
  Evaluation total;
  total.gradient.setZero(problem.dimension());
  for (Index i = 0; i < problem.subfunction_count(); ++i) {
    const Evaluation e = eval_subfunction(problem, i, x);
    total.value += e.value;
    total.gradient += e.gradient;
  }
  return total;
}

double check_gradient(const ObjectiveProblem& problem, Index i, const Vector& x, double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  const Evaluation analytic = eval_subfunction(problem, i, x);
  Vector numeric(x.size());
  Vector probe = x;
  Vector scratch(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    const double original = probe(k);
    probe(k) = original + step;
    const double forward = problem.evaluate(i, probe, scratch);
    probe(k) = original - step;
    const double backward = problem.evaluate(i, probe, scratch);
    probe(k) = original;
    numeric(k) = (forward - backward) / (2.0 * step);
  }
  const double scale = std::max({analytic.gradient.lpNorm<Eigen::Infinity>(),
                                 numeric.lpNorm<Eigen::Infinity>(), 1e-12});
  return (analytic.gradient - numeric).lpNorm<Eigen::Infinity>() / scale;
}

Index suggest_minibatch_count(Index samples, Index /*dimension*/, double proportionality) {
  if (samples < 1) throw ConfigError("sample count must be at least 1");
  const double raw = std::round(proportionality * std::sqrt(static_cast<double>(samples)));
  return std::clamp<Index>(static_cast<Index>(raw), 1, samples);
}

// ---------------------------------------------------------------------------

QuadraticEnsemble::QuadraticEnsemble(std::vector<Matrix> curvatures, std::vector<Vector> centers)
    : curvatures_(std::move(curvatures)), centers_(std::move(centers)) {
  if (centers_.empty() || centers_.size() != curvatures_.size())
    throw ConfigError("quadratic ensemble needs matching, non-empty curvature and center lists");
  dimension_ = centers_.front().size();
  if (dimension_ < 1) throw ConfigError("quadratic ensemble dimension must be at least 1");
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    if (centers_[i].size() != dimension_ || curvatures_[i].rows() != dimension_ ||
        curvatures_[i].cols() != dimension_)
      throw ShapeError("quadratic ensemble member " + std::to_string(i) + " has wrong shape");
  }

  Matrix total = Matrix::Zero(dimension_, dimension_);
  Vector rhs = Vector::Zero(dimension_);
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    total += curvatures_[i];
    rhs += curvatures_[i] * centers_[i];
  }
  Eigen::LLT<Matrix> llt(total);
  if (llt.info() != Eigen::Success) throw ConfigError("summed curvature is not positive definite");
  optimum_.position = llt.solve(rhs);
  Vector scratch(dimension_);
  optimum_.value = 0.0;
  for (Index i = 0; i < subfunction_count(); ++i)
    optimum_.value += evaluate(i, optimum_.position, scratch);
}

double QuadraticEnsemble::evaluate(Index i, const Vector& x, Vector& gradient) const {
  const auto k = static_cast<std::size_t>(i);
  const Vector d = x - centers_[k];
  gradient.noalias() = curvatures_[k] * d;
  return 0.5 * d.dot(gradient);
}

std::string QuadraticEnsemble::description() const {
  return "quadratic ensemble (M=" + std::to_string(dimension_) +
         ", N=" + std::to_string(subfunction_count()) + ")";
}

QuadraticEnsemble make_quadratic_ensemble(std::uint64_t seed, Index dimension, Index subfunctions,
                                          double condition_number) {
  if (dimension < 1 || subfunctions < 1)
    throw ConfigError("quadratic ensemble needs M >= 1 and N >= 1");
  if (!(condition_number >= 1.0)) throw ConfigError("condition number must be >= 1");

  std::mt19937_64 rng(seed);
  Vector spectrum(dimension);
  for (Index k = 0; k < dimension; ++k) {
    const double t = dimension == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(dimension - 1);
    spectrum(k) = std::pow(condition_number, t);
  }

  std::vector<Matrix> curvatures;
  std::vector<Vector> centers;
  curvatures.reserve(static_cast<std::size_t>(subfunctions));
  centers.reserve(static_cast<std::size_t>(subfunctions));
  for (Index i = 0; i < subfunctions; ++i) {
    const Matrix q = haar_orthogonal(rng, dimension);
    Matrix a = q * spectrum.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose()).eval();
    curvatures.push_back(std::move(a));
    centers.push_back(gaussian_matrix(rng, dimension, 1).col(0));
  }
  return QuadraticEnsemble(std::move(curvatures), std::move(centers));
}

// ---------------------------------------------------------------------------

Index DatasetSplit::minibatch_count() const {
  Index n = 0;
  for (Index a : assignment) n = std::max(n, a + 1);
  return n;
}

std::vector<std::vector<Index>> DatasetSplit::members() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(minibatch_count()));
  for (std::size_t s = 0; s < assignment.size(); ++s)
    out[static_cast<std::size_t>(assignment[s])].push_back(static_cast<Index>(s));
  return out;
}

std::vector<Index> assign_minibatches(Index samples, Index minibatches) {
  if (minibatches < 1 || samples < minibatches)
    throw ConfigError("need at least one sample per minibatch (D >= N >= 1)");
  std::vector<Index> out(static_cast<std::size_t>(samples));
  for (Index s = 0; s < samples; ++s) out[static_cast<std::size_t>(s)] = s % minibatches;
  return out;
}

DatasetSplit make_synthetic_dataset(std::uint64_t seed, Index samples, Index feature_dim,
                                    Index minibatches, double label_noise, double feature_spread) {
  if (feature_dim < 1) throw ConfigError("feature dimension must be at least 1");
  if (!(feature_spread >= 1.0)) throw ConfigError("feature spread must be >= 1");
  DatasetSplit out;
  out.assignment = assign_minibatches(samples, minibatches);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector scales(feature_dim);
  const double log_spread = std::log(feature_spread);
  for (Index k = 0; k < feature_dim; ++k) scales(k) = std::exp(log_spread * (2.0 * uniform(rng) - 1.0));

  const Vector hyperplane = gaussian_matrix(rng, feature_dim, 1).col(0);
  out.features = gaussian_matrix(rng, samples, feature_dim) * scales.asDiagonal();
  out.labels.resize(samples);
  for (Index s = 0; s < samples; ++s) {
    double label = out.features.row(s).dot(hyperplane) >= 0.0 ? 1.0 : -1.0;
    if (uniform(rng) < label_noise) label = -label;
    out.labels(s) = label;
  }
  return out;
}

void write_dataset_csv(const DatasetSplit& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (Index s = 0; s < data.samples(); ++s) {
    for (Index k = 0; k < data.features.cols(); ++k) out << format_double(data.features(s, k)) << ',';
    out << format_double(data.labels(s)) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

struct LogisticRegression::ReferenceCache {
  std::once_flag once;
  std::optional<KnownOptimum> value;
};

LogisticRegression::LogisticRegression(DatasetSplit data, double l2_coefficient)
    : data_(std::move(data)), l2_(l2_coefficient), cache_(std::make_shared<ReferenceCache>()) {
  if (!(l2_ >= 0.0)) throw ConfigError("l2 coefficient must be non-negative");
  if (data_.labels.size() != data_.samples() ||
      static_cast<Index>(data_.assignment.size()) != data_.samples())
    throw ShapeError("dataset labels/assignment do not match sample count");
  const auto members = data_.members();
  batches_.reserve(members.size());
  for (const auto& rows : members) {
    if (rows.empty()) throw ConfigError("empty minibatch in dataset split");
    Batch b;
    b.features.resize(static_cast<Index>(rows.size()), data_.features.cols());
    b.labels.resize(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      b.features.row(static_cast<Index>(r)) = data_.features.row(rows[r]);
      b.labels(static_cast<Index>(r)) = data_.labels(rows[r]);
    }
    batches_.push_back(std::move(b));
  }
}

double LogisticRegression::evaluate(Index i, const Vector& x, Vector& gradient) const {
  const Batch& b = batches_[static_cast<std::size_t>(i)];
  const auto s = static_cast<double>(b.labels.size());
  const Vector margins = b.labels.cwiseProduct(b.features * x);
  Vector coef(margins.size());
  double loss = 0.0;
  for (Index r = 0; r < margins.size(); ++r) {
    loss += softplus(-margins(r));
    coef(r) = -b.labels(r) * logistic(-margins(r)) / s;
  }
  const double penalty = l2_ / static_cast<double>(batches_.size());
  gradient.noalias() = b.features.transpose() * coef;
  gradient += 2.0 * penalty * x;
  return loss / s + penalty * x.squaredNorm();
}

double LogisticRegression::lipschitz_bound() const {
  double bound = 2.0 * l2_;
  for (const Batch& b : batches_) {
    const Matrix gram = b.features.transpose() * b.features;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    bound += 0.25 * eig.eigenvalues().maxCoeff() / static_cast<double>(b.labels.size());
  }
  return bound;
}

KnownOptimum LogisticRegression::solve_reference(double gradient_tolerance, Index max_iterations) const {
  const double step = 1.0 / lipschitz_bound();
  Vector w = Vector::Zero(dimension());
  for (Index it = 0; it < max_iterations; ++it) {
    const Evaluation f = full_objective(*this, w);
    if (f.gradient.norm() <= gradient_tolerance) return {w, f.value};
    w -= step * f.gradient;
  }
  throw std::runtime_error("full-batch descent did not reach gradient tolerance");
}

std::optional<KnownOptimum> LogisticRegression::optimum() const {
  std::call_once(cache_->once, [this] { cache_->value = solve_reference(); });
  return cache_->value;
}

std::string LogisticRegression::description() const {
  return "logistic regression (D=" + std::to_string(data_.samples()) +
         ", dim=" + std::to_string(dimension()) + ", N=" + std::to_string(subfunction_count()) + ")";
}

LogisticRegression make_logistic_regression(std::uint64_t seed, Index samples, Index feature_dim,
                                            Index minibatches, double l2_coefficient) {
  if (samples < minibatches) throw ConfigError("logistic regression needs D >= N");
  if (!(l2_coefficient >= 0.0)) throw ConfigError("l2 coefficient must be non-negative");
  return LogisticRegression(make_synthetic_dataset(seed, samples, feature_dim, minibatches),
                            l2_coefficient);
}

// ---------------------------------------------------------------------------

SeparableLogCosh::SeparableLogCosh(std::uint64_t seed, Index dimension, Index subfunctions) {
  if (dimension < 1 || subfunctions < 1) throw ConfigError("separable problem needs M, N >= 1");
  std::mt19937_64 rng(seed);
  centers_ = gaussian_matrix(rng, dimension, subfunctions);
}

double SeparableLogCosh::evaluate(Index i, const Vector& x, Vector& gradient) const {
  const auto m = static_cast<double>(x.size());
  double value = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    const double u = x(k) - centers_(k, i);
    value += log_cosh(u);
    gradient(k) = std::tanh(u) / m;
  }
  return value / m;
}

std::string SeparableLogCosh::description() const {
  return "separable log-cosh (M=" + std::to_string(dimension()) +
         ", N=" + std::to_string(subfunction_count()) + ")";
}

}  // namespace sfo
