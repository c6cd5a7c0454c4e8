#include "semnn/optim.h"

#include <cmath>

namespace semnn::optim {

DivergenceError::DivergenceError(const std::string& where, std::uint64_t seed, std::size_t step)
    : std::runtime_error(where + ": loss diverged (seed " + std::to_string(seed) + ", step " +
                         std::to_string(step) + ")"),
      seed_(seed),
      step_(step) {}

double step_lr(double base, std::size_t epoch, std::size_t epochs) {
  double lr = base;
  if (epoch >= epochs / 2) lr *= 0.2;
  if (epoch >= (epochs * 4) / 5) lr *= 0.2;
  return lr;
}

void Optimizer::zero_grad() {
  for (auto& [name, t] : params_) {
    Tensor h = t;
    h.zero_grad();
  }
}

Sgd::Sgd(nn::ParamList params, double momentum) : Optimizer(std::move(params)), momentum_(momentum) {
  for (const auto& [name, t] : params_) velocity_.emplace_back(t.size(), 0.0);
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].second;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto& w = t.mutable_values();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      w[k] -= lr * v[k];
    }
  }
}

Adam::Adam(nn::ParamList params, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].second;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto& w = t.mutable_values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g[k];
      v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g[k] * g[k];
      w[k] -= lr * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
}

}  // namespace semnn::optim
