#pragma once

#include <span>
#include <vector>

#include "semnn/tensor.h"

namespace semnn::quant {

// Learnable scalar quantizer. Centers are shared by every latent element
// (one group) or, with per_channel, held per latent channel ([C, n]).
struct QuantizerState {
  Tensor centers;       // [groups, levels]
  double sigma = 1.0;   // soft-assignment temperature, > 0
  bool per_channel = false;
  std::vector<double> usage;  // hard-index usage of the most recent batch

  std::size_t groups() const { return centers.dim(0); }
  std::size_t levels() const { return centers.dim(1); }
  int bits_per_symbol() const;
};

// Centers start evenly spaced over [-1, 1]; `levels` must be a power of two >= 2.
QuantizerState make_quantizer(std::size_t levels, std::size_t groups = 1, bool per_channel = false);

// Re-spaces the centers uniformly over [lo, hi] (warm-up initialisation).
void init_centers_uniform(QuantizerState& q, double lo, double hi);

struct SoftResult {
  Tensor z_soft;  // same shape as z
  Tensor assign;  // [numel(z), levels]
};

// assign_j = softmax_j(-sigma (z - c_j)^2); z_soft = sum_j assign_j c_j.
SoftResult soft_quantize(const Tensor& z, const QuantizerState& q);

// Nearest center per element; ties go to the lower index.
std::vector<int> hard_quantize(const Tensor& z, const QuantizerState& q);
std::vector<int> hard_quantize(std::span<const double> z, const Shape& shape, const QuantizerState& q);

// Center values for indices laid out with `shape`.
std::vector<double> dequantize(std::span<const int> indices, const Shape& shape,
                               const QuantizerState& q);

// Forward: dequantized hard indices. Backward: the soft_quantize gradient.
Tensor straight_through(const Tensor& z, const QuantizerState& q);

// Mean soft assignment over all rows: p [levels].
Tensor usage_distribution(const Tensor& assign);
// Normalised histogram of hard indices.
std::vector<double> hard_usage(std::span<const int> indices, std::size_t levels);

// KL(p || uniform) = sum p_i ln(n p_i), with 0 ln 0 = 0.
Tensor div_loss(const Tensor& p);

// Shannon entropy in bits.
double entropy_bits(std::span<const double> p);

}  // namespace semnn::quant
