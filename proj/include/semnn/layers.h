#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "semnn/ops.h"
#include "semnn/tensor.h"

namespace semnn::nn {

using Rng = std::mt19937_64;

inline constexpr double kBetaMin = 1e-6;

// Named parameter handles, in a stable order (used by optimizers and checkpoints).
using ParamList = std::vector<std::pair<std::string, Tensor>>;

void append_params(ParamList& out, const std::string& prefix, const ParamList& params);

// ---- functional layers ----

// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), over the channel axis of
// [C,H,W] or [N,C,H,W]. beta [C], gamma [C,C].
Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma);

// Decoder-side inverse GDN layer: z_i = y_i * sqrt(beta_i + sum_j gamma_ij y_j^2).
// This is one fixed-point step of the exact inverse started from z = y; with
// learnable parameters it is used as a layer, not as a literal inverse.
Tensor igdn(const Tensor& y, const Tensor& beta, const Tensor& gamma);

struct InverseResult {
  std::vector<double> values;
  int iterations = 0;
  double residual = 0.0;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Exact inverse of gdn by fixed-point iteration z <- y * sqrt(beta + gamma z^2).
// Values only (no gradient). Throws ConvergenceError carrying the residual
// when `max_iter` sweeps do not reach `tol`.
InverseResult gdn_inverse(const Tensor& y, const Tensor& beta, const Tensor& gamma,
                          int max_iter = 16, double tol = 1e-10);

// y = x for x >= 0, a*x otherwise. `slope` is [1] (shared) or [C] (channel axis 1
// for rank >= 2 inputs).
Tensor prelu(const Tensor& x, const Tensor& slope);

Tensor sigmoid(const Tensor& x);

struct Pad2d {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;
};

// Mirror padding that excludes the edge pixel: [1,2,3] padded by 1 -> [2,1,2,3,2].
// Requires each pad < the corresponding extent. Works on [C,H,W] and [N,C,H,W].
Tensor reflection_pad2d(const Tensor& x, Pad2d pad);
Tensor zero_pad2d(const Tensor& x, Pad2d pad);
// x[..., top:top+h, left:left+w]
Tensor crop2d(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

Tensor mse_loss(const Tensor& a, const Tensor& b);
// Mean negative log-softmax at the true class. logits [N,K].
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

// ---- parameterised layers ----

struct Conv2d {
  Tensor weight, bias;
  int stride = 1, padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, int stride, int padding, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
  ParamList params() const { return {{"weight", weight}, {"bias", bias}}; }
};

struct TransposeConv2d {
  Tensor weight, bias;
  int stride = 1, padding = 0;

  TransposeConv2d() = default;
  TransposeConv2d(std::size_t in, std::size_t out, std::size_t k, int stride, int padding, Rng& rng);
  Tensor operator()(const Tensor& x) const {
    return transpose_conv2d(x, weight, bias, stride, padding);
  }
  ParamList params() const { return {{"weight", weight}, {"bias", bias}}; }
};

struct Linear {
  Tensor weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  ParamList params() const { return {{"weight", weight}, {"bias", bias}}; }
};

struct GdnParams {
  Tensor beta, gamma;

  GdnParams() = default;
  // beta = 1, gamma = 0.1 I.
  explicit GdnParams(std::size_t channels);
  // Clamp to beta >= kBetaMin, gamma >= 0.
  void reproject();
  ParamList params() const { return {{"beta", beta}, {"gamma", gamma}}; }
};

struct PreluParams {
  Tensor slope;

  PreluParams() = default;
  explicit PreluParams(std::size_t channels, double init = 0.25);
  ParamList params() const { return {{"slope", slope}}; }
};

// Two-layer perceptron: linear -> relu -> linear.
struct Mlp {
  Linear fc1, fc2;

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(relu(fc1(x))); }
  ParamList params() const;
};

inline Tensor mlp_block(const Mlp& m, const Tensor& x) { return m(x); }

}  // namespace semnn::nn
