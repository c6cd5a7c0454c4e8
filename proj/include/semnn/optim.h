#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semnn/layers.h"

namespace semnn::optim {

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& where, std::uint64_t seed, std::size_t step);
  std::uint64_t seed() const { return seed_; }
  std::size_t step() const { return step_; }

 private:
  std::uint64_t seed_;
  std::size_t step_;
};

// Base rate times 0.2 after half of the epochs and again after 80%.
double step_lr(double base, std::size_t epoch, std::size_t epochs);

class Optimizer {
 public:
  explicit Optimizer(nn::ParamList params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;
  virtual void step(double lr) = 0;
  void zero_grad();
  const nn::ParamList& params() const { return params_; }

 protected:
  nn::ParamList params_;
};

class Sgd : public Optimizer {
 public:
  Sgd(nn::ParamList params, double momentum = 0.9);
  void step(double lr) override;

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

class Adam : public Optimizer {
 public:
  Adam(nn::ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr) override;

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace semnn::optim
