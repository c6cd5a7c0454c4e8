#include "semnn/ops.h"

#include <algorithm>
#include <cmath>

namespace semnn {

namespace {

bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::kAdd: return "add";
    case BinaryOp::kSub: return "sub";
    case BinaryOp::kMul: return "mul";
    case BinaryOp::kDiv: return "div";
  }
  return "?";
}

// Index range [lo, hi) of output positions o whose input tap o*s - p + k lies in [0, in).
inline void valid_range(int out, int in, int s, int p, int k, int& lo, int& hi) {
  int off = k - p;
  lo = off >= 0 ? 0 : (-off + s - 1) / s;
  int last = in - 1 - off;
  hi = last < 0 ? 0 : std::min(out, last / s + 1);
  if (lo > hi) lo = hi;
}

struct ConvGeom {
  int n, ci, h, w, co, k, s, p, ho, wo;
};

void conv_forward(const double* in, const double* ker, double* out, const ConvGeom& g) {
  const std::size_t in_plane = std::size_t(g.h) * g.w, out_plane = std::size_t(g.ho) * g.wo;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.co; ++co) {
      double* op = out + (std::size_t(n) * g.co + co) * out_plane;
      for (int ci = 0; ci < g.ci; ++ci) {
        const double* ip = in + (std::size_t(n) * g.ci + ci) * in_plane;
        const double* kp = ker + (std::size_t(co) * g.ci + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          int oh_lo, oh_hi;
          valid_range(g.ho, g.h, g.s, g.p, kh, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            const double wv = kp[kh * g.k + kw];
            int ow_lo, ow_hi;
            valid_range(g.wo, g.w, g.s, g.p, kw, ow_lo, ow_hi);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const double* irow = ip + std::size_t(oh * g.s - g.p + kh) * g.w;
              const int off = kw - g.p;
              double* orow = op + std::size_t(oh) * g.wo;
              if (g.s == 1) {
                for (int ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * irow[ow + off];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * irow[ow * g.s + off];
              }
            }
          }
        }
      }
    }
  }
}

// Accumulates d(in) from d(out); also the forward pass of the transposed convolution.
void conv_backward_input(const double* gout, const double* ker, double* gin, const ConvGeom& g) {
  const std::size_t in_plane = std::size_t(g.h) * g.w, out_plane = std::size_t(g.ho) * g.wo;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.co; ++co) {
      const double* op = gout + (std::size_t(n) * g.co + co) * out_plane;
      for (int ci = 0; ci < g.ci; ++ci) {
        double* ip = gin + (std::size_t(n) * g.ci + ci) * in_plane;
        const double* kp = ker + (std::size_t(co) * g.ci + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          int oh_lo, oh_hi;
          valid_range(g.ho, g.h, g.s, g.p, kh, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            const double wv = kp[kh * g.k + kw];
            int ow_lo, ow_hi;
            valid_range(g.wo, g.w, g.s, g.p, kw, ow_lo, ow_hi);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              double* irow = ip + std::size_t(oh * g.s - g.p + kh) * g.w;
              const int off = kw - g.p;
              const double* orow = op + std::size_t(oh) * g.wo;
              for (int ow = ow_lo; ow < ow_hi; ++ow) irow[ow * g.s + off] += wv * orow[ow];
            }
          }
        }
      }
    }
  }
}

void conv_backward_kernel(const double* in, const double* gout, double* gker, const ConvGeom& g) {
  const std::size_t in_plane = std::size_t(g.h) * g.w, out_plane = std::size_t(g.ho) * g.wo;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.co; ++co) {
      const double* op = gout + (std::size_t(n) * g.co + co) * out_plane;
      for (int ci = 0; ci < g.ci; ++ci) {
        const double* ip = in + (std::size_t(n) * g.ci + ci) * in_plane;
        double* kp = gker + (std::size_t(co) * g.ci + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          int oh_lo, oh_hi;
          valid_range(g.ho, g.h, g.s, g.p, kh, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            int ow_lo, ow_hi;
            valid_range(g.wo, g.w, g.s, g.p, kw, ow_lo, ow_hi);
            double acc = 0.0;
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const double* irow = ip + std::size_t(oh * g.s - g.p + kh) * g.w;
              const int off = kw - g.p;
              const double* orow = op + std::size_t(oh) * g.wo;
              for (int ow = ow_lo; ow < ow_hi; ++ow) acc += orow[ow] * irow[ow * g.s + off];
            }
            kp[kh * g.k + kw] += acc;
          }
        }
      }
    }
  }
}

void add_bias(double* out, const double* bias, int n, int c, std::size_t plane) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      double* p = out + (std::size_t(i) * c + j) * plane;
      std::fill(p, p + plane, bias[j]);
    }
}

void bias_grad(const double* gout, double* gb, int n, int c, std::size_t plane) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double* p = gout + (std::size_t(i) * c + j) * plane;
      double acc = 0.0;
      for (std::size_t q = 0; q < plane; ++q) acc += p[q];
      gb[j] += acc;
    }
}

template <typename Fwd, typename Dx>
Tensor unary(const Tensor& x, Fwd fwd, Dx dydx) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [dydx](Node& n) {
    auto& in = *n.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dydx(in.value[i], n.value[i]);
  });
}

void require_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.size() == 1;
  if (!scalar_b && !is_suffix(a.shape(), b.shape())) {
    throw ShapeError(std::string(op_name(op)) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are not broadcast-compatible");
  }
  const std::size_t n = a.size(), m = b.size();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i], y = bv[i % m];
    switch (op) {
      case BinaryOp::kAdd: out[i] = x + y; break;
      case BinaryOp::kSub: out[i] = x - y; break;
      case BinaryOp::kMul: out[i] = x * y; break;
      case BinaryOp::kDiv: out[i] = x / y; break;
    }
  }
  return make_result(a.shape(), std::move(out), {a, b}, [op, n, m](Node& node) {
    auto& A = *node.inputs[0];
    auto& B = *node.inputs[1];
    const auto& g = node.grad;
    if (A.requires_grad) {
      auto& ga = A.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        switch (op) {
          case BinaryOp::kAdd:
          case BinaryOp::kSub: ga[i] += g[i]; break;
          case BinaryOp::kMul: ga[i] += g[i] * B.value[i % m]; break;
          case BinaryOp::kDiv: ga[i] += g[i] / B.value[i % m]; break;
        }
      }
    }
    if (B.requires_grad) {
      auto& gb = B.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = B.value[i % m];
        switch (op) {
          case BinaryOp::kAdd: gb[i % m] += g[i]; break;
          case BinaryOp::kSub: gb[i % m] -= g[i]; break;
          case BinaryOp::kMul: gb[i % m] += g[i] * A.value[i]; break;
          case BinaryOp::kDiv: gb[i % m] -= g[i] * A.value[i] / (y * y); break;
        }
      }
    }
  });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
  return elementwise(op, a, Tensor::scalar(b));
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result({1}, {acc}, {x}, [](Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (auto& v : g) v += n.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / double(x.size());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result({1}, {acc * inv}, {x}, [inv](Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (auto& v : g) v += n.grad[0] * inv;
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(c, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
  for (auto& v : out) v /= double(r);
  return make_result({c}, std::move(out), {x}, [r, c](Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j] / double(r);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor dot_const(const Tensor& x, std::span<const double> w) {
  if (w.size() != x.size()) {
    throw ShapeError("dot_const: weight length " + std::to_string(w.size()) +
                     " does not match " + shape_str(x.shape()));
  }
  double acc = 0.0;
  auto xv = x.values();
  for (std::size_t i = 0; i < w.size(); ++i) acc += xv[i] * w[i];
  std::vector<double> weights(w.begin(), w.end());
  return make_result({1}, {acc}, {x}, [weights = std::move(weights)](Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * weights[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && bias.size() != out) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs " + std::to_string(out));
  }
  std::vector<double> y(n * out);
  auto xv = x.values();
  auto wv = weight.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias.defined() ? bias[o] : 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += xv[i * in + k] * wv[o * in + k];
      y[i * out + o] = acc;
    }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result({n, out}, std::move(y), inputs, [n, in, out](Node& node) {
    auto& X = *node.inputs[0];
    auto& W = *node.inputs[1];
    const auto& g = node.grad;
    if (X.requires_grad) {
      auto& gx = X.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[i * out + o];
          for (std::size_t k = 0; k < in; ++k) gx[i * in + k] += go * W.value[o * in + k];
        }
    }
    if (W.requires_grad) {
      auto& gw = W.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[i * out + o];
          for (std::size_t k = 0; k < in; ++k) gw[o * in + k] += go * X.value[i * in + k];
        }
    }
    if (node.inputs.size() > 2 && node.inputs[2]->requires_grad) {
      auto& gb = node.inputs[2]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out; ++o) gb[o] += g[i * out + o];
    }
  });
}

namespace {

struct Batched {
  Tensor t;
  bool squeezed;
};

Batched as_batched(const Tensor& input, const char* what) {
  if (input.rank() == 4) return {input, false};
  if (input.rank() == 3) {
    return {reshape(input, {1, input.dim(0), input.dim(1), input.dim(2)}), true};
  }
  throw ShapeError(std::string(what) + ": expected [C,H,W] or [N,C,H,W], got " +
                   shape_str(input.shape()));
}

Tensor unbatch(const Tensor& t, bool squeezed) {
  if (!squeezed) return t;
  return reshape(t, {t.dim(1), t.dim(2), t.dim(3)});
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  auto [x, squeezed] = as_batched(input, "conv2d");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1, padding >= 0");
  ConvGeom g{int(x.dim(0)), int(x.dim(1)), int(x.dim(2)), int(x.dim(3)), int(kernel.dim(0)),
             int(kernel.dim(2)), stride, padding, 0, 0};
  if (kernel.dim(1) != x.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                     shape_str(kernel.shape()));
  }
  const int hspan = g.h + 2 * padding - g.k, wspan = g.w + 2 * padding - g.k;
  if (hspan < 0 || wspan < 0) {
    throw ShapeError("conv2d: non-positive output extent for input " + shape_str(x.shape()) +
                     ", kernel " + shape_str(kernel.shape()) + ", padding " +
                     std::to_string(padding));
  }
  g.ho = hspan / stride + 1;
  g.wo = wspan / stride + 1;
  if (bias.defined() && bias.size() != std::size_t(g.co)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " vs " + std::to_string(g.co));
  }
  const std::size_t plane = std::size_t(g.ho) * g.wo;
  std::vector<double> out(std::size_t(g.n) * g.co * plane, 0.0);
  if (bias.defined()) add_bias(out.data(), bias.values().data(), g.n, g.co, plane);
  conv_forward(x.values().data(), kernel.values().data(), out.data(), g);
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  Shape shape{std::size_t(g.n), std::size_t(g.co), std::size_t(g.ho), std::size_t(g.wo)};
  auto y = make_result(shape, std::move(out), inputs, [g, plane](Node& node) {
    auto& X = *node.inputs[0];
    auto& K = *node.inputs[1];
    if (X.requires_grad) conv_backward_input(node.grad.data(), K.value.data(), X.grad_buffer().data(), g);
    if (K.requires_grad) conv_backward_kernel(X.value.data(), node.grad.data(), K.grad_buffer().data(), g);
    if (node.inputs.size() > 2 && node.inputs[2]->requires_grad)
      bias_grad(node.grad.data(), node.inputs[2]->grad_buffer().data(), g.n, g.co, plane);
  });
  return unbatch(y, squeezed);
}

Tensor transpose_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding) {
  auto [x, squeezed] = as_batched(input, "transpose_conv2d");
  require_rank(kernel, 4, "transpose_conv2d kernel");
  if (stride < 1 || padding < 0) {
    throw ShapeError("transpose_conv2d: stride must be >= 1, padding >= 0");
  }
  if (kernel.dim(0) != x.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("transpose_conv2d: input " + shape_str(x.shape()) +
                     " incompatible with kernel " + shape_str(kernel.shape()));
  }
  const int k = int(kernel.dim(2));
  const int ho = (int(x.dim(2)) - 1) * stride - 2 * padding + k;
  const int wo = (int(x.dim(3)) - 1) * stride - 2 * padding + k;
  if (ho <= 0 || wo <= 0) {
    throw ShapeError("transpose_conv2d: non-positive output extent for input " +
                     shape_str(x.shape()) + ", kernel " + shape_str(kernel.shape()));
  }
  // Viewed as the input-gradient of a conv mapping [Co_t, ho, wo] -> [Ci_t, h, w].
  ConvGeom g{int(x.dim(0)), int(kernel.dim(1)), ho, wo, int(x.dim(1)), k, stride, padding,
             int(x.dim(2)), int(x.dim(3))};
  if (bias.defined() && bias.size() != std::size_t(g.ci)) {
    throw ShapeError("transpose_conv2d: bias " + shape_str(bias.shape()) + " vs " +
                     std::to_string(g.ci));
  }
  const std::size_t plane = std::size_t(ho) * wo;
  std::vector<double> out(std::size_t(g.n) * g.ci * plane, 0.0);
  if (bias.defined()) add_bias(out.data(), bias.values().data(), g.n, g.ci, plane);
  conv_backward_input(x.values().data(), kernel.values().data(), out.data(), g);
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  Shape shape{std::size_t(g.n), std::size_t(g.ci), std::size_t(ho), std::size_t(wo)};
  auto y = make_result(shape, std::move(out), inputs, [g, plane](Node& node) {
    auto& X = *node.inputs[0];
    auto& K = *node.inputs[1];
    if (X.requires_grad) conv_forward(node.grad.data(), K.value.data(), X.grad_buffer().data(), g);
    if (K.requires_grad) conv_backward_kernel(node.grad.data(), X.value.data(), K.grad_buffer().data(), g);
    if (node.inputs.size() > 2 && node.inputs[2]->requires_grad)
      bias_grad(node.grad.data(), node.inputs[2]->grad_buffer().data(), g.n, g.ci, plane);
  });
  return unbatch(y, squeezed);
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(n * c);
  auto xv = x.values();
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t q = 0; q < plane; ++q) acc += xv[i * plane + q];
    out[i] = acc / double(plane);
  }
  return make_result({n, c}, std::move(out), {x}, [n, c, plane](Node& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < n * c; ++i) {
      const double v = node.grad[i] / double(plane);
      for (std::size_t q = 0; q < plane; ++q) g[i * plane + q] += v;
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<double> out(n * (p + q));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a[i * p + j];
    for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b[i * q + j];
  }
  return make_result({n, p + q}, std::move(out), {a, b}, [n, p, q](Node& node) {
    auto& A = *node.inputs[0];
    auto& B = *node.inputs[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) g[i * p + j] += node.grad[i * (p + q) + j];
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) g[i * q + j] += node.grad[i * (p + q) + p + j];
    }
  });
}

namespace {

void require_nc(const Tensor& x, const Tensor& v, const char* what) {
  require_rank(x, 4, what);
  require_rank(v, 2, what);
  if (v.dim(0) != x.dim(0) || v.dim(1) != x.dim(1)) {
    throw ShapeError(std::string(what) + ": " + shape_str(x.shape()) + " vs " +
                     shape_str(v.shape()));
  }
}

}  // namespace

Tensor scale_channels(const Tensor& x, const Tensor& g) {
  require_nc(x, g, "scale_channels");
  const std::size_t nc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t q = 0; q < plane; ++q) out[i * plane + q] = xv[i * plane + q] * g[i];
  return make_result(x.shape(), std::move(out), {x, g}, [nc, plane](Node& node) {
    auto& X = *node.inputs[0];
    auto& G = *node.inputs[1];
    if (X.requires_grad) {
      auto& gx = X.grad_buffer();
      for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t q = 0; q < plane; ++q) gx[i * plane + q] += node.grad[i * plane + q] * G.value[i];
    }
    if (G.requires_grad) {
      auto& gg = G.grad_buffer();
      for (std::size_t i = 0; i < nc; ++i) {
        double acc = 0.0;
        for (std::size_t q = 0; q < plane; ++q) acc += node.grad[i * plane + q] * X.value[i * plane + q];
        gg[i] += acc;
      }
    }
  });
}

Tensor shift_channels(const Tensor& x, const Tensor& v) {
  require_nc(x, v, "shift_channels");
  const std::size_t nc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t q = 0; q < plane; ++q) out[i * plane + q] = xv[i * plane + q] + v[i];
  return make_result(x.shape(), std::move(out), {x, v}, [nc, plane](Node& node) {
    auto& X = *node.inputs[0];
    auto& V = *node.inputs[1];
    if (X.requires_grad) {
      auto& gx = X.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i];
    }
    if (V.requires_grad) {
      auto& gv = V.grad_buffer();
      for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t q = 0; q < plane; ++q) gv[i] += node.grad[i * plane + q];
    }
  });
}

Tensor scale_spatial(const Tensor& x, const Tensor& g) {
  require_rank(x, 4, "scale_spatial");
  require_rank(g, 4, "scale_spatial");
  if (g.dim(0) != x.dim(0) || g.dim(1) != 1 || g.dim(2) != x.dim(2) || g.dim(3) != x.dim(3)) {
    throw ShapeError("scale_spatial: " + shape_str(x.shape()) + " vs " + shape_str(g.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t q = 0; q < plane; ++q)
        out[(i * c + j) * plane + q] = xv[(i * c + j) * plane + q] * g[i * plane + q];
  return make_result(x.shape(), std::move(out), {x, g}, [n, c, plane](Node& node) {
    auto& X = *node.inputs[0];
    auto& G = *node.inputs[1];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t q = 0; q < plane; ++q) {
          const std::size_t k = (i * c + j) * plane + q;
          if (X.requires_grad) X.grad_buffer()[k] += node.grad[k] * G.value[i * plane + q];
          if (G.requires_grad) G.grad_buffer()[i * plane + q] += node.grad[k] * X.value[k];
        }
  });
}

Tensor straight_through(const Tensor& x, std::vector<double> values) {
  if (values.size() != x.size()) {
    throw ShapeError("straight_through: " + std::to_string(values.size()) +
                     " values for tensor " + shape_str(x.shape()));
  }
  return make_result(x.shape(), std::move(values), {x}, [](Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

}  // namespace semnn
