#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sfo/optimizer.hpp"
#include "sfo/types.hpp"

namespace sfo {

/// Uniform driver interface for the benchmark harness. Each step() may
/// evaluate any number of subfunctions; the harness counts them.
class SteppingOptimizer {
 public:
  virtual ~SteppingOptimizer() = default;

  virtual std::string name() const = 0;
  virtual std::string hyperparameters() const = 0;
  virtual void step() = 0;
  virtual Vector position() const = 0;
  /// No further progress is possible (converged or failed); see status().
  virtual bool finished() const { return false; }
  virtual std::string status() const { return "ok"; }
};

class SfoStepper final : public SteppingOptimizer {
 public:
  SfoStepper(const ObjectiveProblem& problem, SfoConfig config) : sfo_(problem, std::move(config)) {}

  std::string name() const override { return "sfo"; }
  std::string hyperparameters() const override { return "default"; }
  void step() override { sfo_.step(); }
  Vector position() const override { return sfo_.position(); }

  const Sfo& optimizer() const { return sfo_; }

 private:
  Sfo sfo_;
};

}  // namespace sfo
