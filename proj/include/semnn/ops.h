#pragma once

#include <span>

#include "semnn/tensor.h"

namespace semnn {

enum class BinaryOp { kAdd, kSub, kMul, kDiv };

// Elementwise binary op. `b` may match `a`'s shape, match a trailing suffix of
// it (broadcast over leading dimensions), or be a single-element tensor.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kAdd, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kSub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kMul, a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kDiv, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::kAdd, a, b); }
inline Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::kSub, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::kMul, a, b); }
inline Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::kDiv, a, b); }

Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [R, C] -> [C], average over rows.
Tensor mean_rows(const Tensor& x);
// Explicit reshape; element count must be unchanged.
Tensor reshape(const Tensor& x, Shape shape);
// Sum of element products against a constant weight array (no gradient to w).
Tensor dot_const(const Tensor& x, std::span<const double> w);

// y = x W^T + b with x [N, in], W [out, in], b [out] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Cross-correlation. Input [C,H,W] or [N,C,H,W], kernel [Co,Ci,K,K], bias [Co]
// or undefined. Output extent floor((H + 2p - K)/s) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding);

// Adjoint of conv2d. Kernel [Ci,Co,K,K] (same layout conv2d would use to map
// Co channels back to Ci). Output extent (H - 1)s - 2p + K.
Tensor transpose_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding);

// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
// [N,p] ++ [N,q] -> [N,p+q]
Tensor concat_cols(const Tensor& a, const Tensor& b);
// x[N,C,H,W] * g[N,C] broadcast over space.
Tensor scale_channels(const Tensor& x, const Tensor& g);
// x[N,C,H,W] + v[N,C] broadcast over space.
Tensor shift_channels(const Tensor& x, const Tensor& v);
// x[N,C,H,W] * g[N,1,H,W] broadcast over channels.
Tensor scale_spatial(const Tensor& x, const Tensor& g);

// Forward value taken from `values`; gradient passed to `x` unchanged.
Tensor straight_through(const Tensor& x, std::vector<double> values);

}  // namespace semnn
