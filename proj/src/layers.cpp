#include "semnn/layers.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semnn::nn {

void append_params(ParamList& out, const std::string& prefix, const ParamList& params) {
  for (const auto& [name, t] : params) out.emplace_back(prefix + "." + name, t);
}

namespace {

struct ChannelLayout {
  std::size_t n, c, plane;
};

ChannelLayout channel_layout(const Tensor& x, const char* what) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1) * x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  throw ShapeError(std::string(what) + ": expected [C,H,W] or [N,C,H,W], got " +
                   shape_str(x.shape()));
}

void check_gdn_params(const ChannelLayout& l, const Tensor& beta, const Tensor& gamma,
                      const char* what) {
  if (beta.size() != l.c || gamma.rank() != 2 || gamma.dim(0) != l.c || gamma.dim(1) != l.c) {
    throw ShapeError(std::string(what) + ": " + std::to_string(l.c) +
                     " channels but beta " + shape_str(beta.shape()) + ", gamma " +
                     shape_str(gamma.shape()));
  }
}

// denom[i] = beta_i + sum_j gamma_ij v_j^2 at every pixel.
std::vector<double> gdn_norm(std::span<const double> v, const ChannelLayout& l,
                             std::span<const double> beta, std::span<const double> gamma) {
  std::vector<double> d(v.size());
  for (std::size_t n = 0; n < l.n; ++n) {
    const std::size_t base = n * l.c * l.plane;
    for (std::size_t i = 0; i < l.c; ++i) {
      double* di = d.data() + base + i * l.plane;
      std::fill(di, di + l.plane, beta[i]);
      for (std::size_t j = 0; j < l.c; ++j) {
        const double gij = gamma[i * l.c + j];
        if (gij == 0.0) continue;
        const double* vj = v.data() + base + j * l.plane;
        for (std::size_t q = 0; q < l.plane; ++q) di[q] += gij * vj[q] * vj[q];
      }
    }
  }
  return d;
}

std::vector<double> uniform_init(std::size_t count, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(count);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma) {
  const auto l = channel_layout(x, "gdn");
  check_gdn_params(l, beta, gamma, "gdn");
  auto d = gdn_norm(x.values(), l, beta.values(), gamma.values());
  std::vector<double> y(x.size());
  auto xv = x.values();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = xv[k] / std::sqrt(d[k]);
  return make_result(x.shape(), std::move(y), {x, beta, gamma}, [l, d = std::move(d)](Node& node) {
    auto& X = *node.inputs[0];
    auto& B = *node.inputs[1];
    auto& G = *node.inputs[2];
    // t_i = -1/2 u_i x_i d_i^{-3/2}
    std::vector<double> t(d.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = -0.5 * node.grad[k] * X.value[k] / (d[k] * std::sqrt(d[k]));
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = n * l.c * l.plane;
      if (X.requires_grad) {
        auto& gx = X.grad_buffer();
        for (std::size_t k = 0; k < l.c; ++k) {
          double* gk = gx.data() + base + k * l.plane;
          const double* xk = X.value.data() + base + k * l.plane;
          const double* uk = node.grad.data() + base + k * l.plane;
          const double* dk = d.data() + base + k * l.plane;
          for (std::size_t q = 0; q < l.plane; ++q) gk[q] += uk[q] / std::sqrt(dk[q]);
          for (std::size_t i = 0; i < l.c; ++i) {
            const double gik = G.value[i * l.c + k];
            if (gik == 0.0) continue;
            const double* ti = t.data() + base + i * l.plane;
            for (std::size_t q = 0; q < l.plane; ++q) gk[q] += 2.0 * ti[q] * gik * xk[q];
          }
        }
      }
      for (std::size_t i = 0; i < l.c; ++i) {
        const double* ti = t.data() + base + i * l.plane;
        if (B.requires_grad) {
          double acc = 0.0;
          for (std::size_t q = 0; q < l.plane; ++q) acc += ti[q];
          B.grad_buffer()[i] += acc;
        }
        if (G.requires_grad) {
          auto& gg = G.grad_buffer();
          for (std::size_t j = 0; j < l.c; ++j) {
            const double* xj = X.value.data() + base + j * l.plane;
            double acc = 0.0;
            for (std::size_t q = 0; q < l.plane; ++q) acc += ti[q] * xj[q] * xj[q];
            gg[i * l.c + j] += acc;
          }
        }
      }
    }
  });
}

Tensor igdn(const Tensor& y, const Tensor& beta, const Tensor& gamma) {
  const auto l = channel_layout(y, "igdn");
  check_gdn_params(l, beta, gamma, "igdn");
  auto d = gdn_norm(y.values(), l, beta.values(), gamma.values());
  std::vector<double> r(d.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = std::sqrt(d[k]);
  std::vector<double> z(y.size());
  auto yv = y.values();
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = yv[k] * r[k];
  return make_result(y.shape(), std::move(z), {y, beta, gamma}, [l, r = std::move(r)](Node& node) {
    auto& Y = *node.inputs[0];
    auto& B = *node.inputs[1];
    auto& G = *node.inputs[2];
    // t_i = 1/2 u_i y_i / r_i
    std::vector<double> t(r.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = 0.5 * node.grad[k] * Y.value[k] / r[k];
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = n * l.c * l.plane;
      if (Y.requires_grad) {
        auto& gy = Y.grad_buffer();
        for (std::size_t k = 0; k < l.c; ++k) {
          double* gk = gy.data() + base + k * l.plane;
          const double* yk = Y.value.data() + base + k * l.plane;
          const double* uk = node.grad.data() + base + k * l.plane;
          const double* rk = r.data() + base + k * l.plane;
          for (std::size_t q = 0; q < l.plane; ++q) gk[q] += uk[q] * rk[q];
          for (std::size_t i = 0; i < l.c; ++i) {
            const double gik = G.value[i * l.c + k];
            if (gik == 0.0) continue;
            const double* ti = t.data() + base + i * l.plane;
            for (std::size_t q = 0; q < l.plane; ++q) gk[q] += 2.0 * ti[q] * gik * yk[q];
          }
        }
      }
      for (std::size_t i = 0; i < l.c; ++i) {
        const double* ti = t.data() + base + i * l.plane;
        if (B.requires_grad) {
          double acc = 0.0;
          for (std::size_t q = 0; q < l.plane; ++q) acc += ti[q];
          B.grad_buffer()[i] += acc;
        }
        if (G.requires_grad) {
          auto& gg = G.grad_buffer();
          for (std::size_t j = 0; j < l.c; ++j) {
            const double* yj = Y.value.data() + base + j * l.plane;
            double acc = 0.0;
            for (std::size_t q = 0; q < l.plane; ++q) acc += ti[q] * yj[q] * yj[q];
            gg[i * l.c + j] += acc;
          }
        }
      }
    }
  });
}

InverseResult gdn_inverse(const Tensor& y, const Tensor& beta, const Tensor& gamma, int max_iter,
                          double tol) {
  const auto l = channel_layout(y, "gdn_inverse");
  check_gdn_params(l, beta, gamma, "gdn_inverse");
  auto yv = y.values();
  InverseResult res;
  res.values.assign(yv.begin(), yv.end());
  for (int it = 1; it <= max_iter; ++it) {
    auto d = gdn_norm(res.values, l, beta.values(), gamma.values());
    double delta = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double next = yv[k] * std::sqrt(d[k]);
      delta = std::max(delta, std::abs(next - res.values[k]));
      res.values[k] = next;
    }
    res.iterations = it;
    res.residual = delta;
    if (!std::isfinite(delta)) break;
    if (delta <= tol) return res;
  }
  throw ConvergenceError("gdn_inverse: no convergence after " + std::to_string(max_iter) +
                             " iterations, residual " + std::to_string(res.residual),
                         res.residual);
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  std::size_t c = 1, plane = x.size(), n = 1;
  if (slope.size() != 1) {
    if (x.rank() < 2 || x.dim(1) != slope.size()) {
      if (x.rank() == 3 && x.dim(0) == slope.size()) {
        c = x.dim(0);
        plane = x.dim(1) * x.dim(2);
      } else {
        throw ShapeError("prelu: slope " + shape_str(slope.shape()) + " vs input " +
                         shape_str(x.shape()));
      }
    } else {
      n = x.dim(0);
      c = x.dim(1);
      plane = x.size() / (n * c);
    }
  }
  std::vector<double> y(x.size());
  auto xv = x.values();
  auto av = slope.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t q = 0; q < plane; ++q) {
        const std::size_t k = (i * c + j) * plane + q;
        y[k] = xv[k] >= 0.0 ? xv[k] : av[j] * xv[k];
      }
  return make_result(x.shape(), std::move(y), {x, slope}, [n, c, plane](Node& node) {
    auto& X = *node.inputs[0];
    auto& A = *node.inputs[1];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t q = 0; q < plane; ++q) {
          const std::size_t k = (i * c + j) * plane + q;
          const double xk = X.value[k];
          if (X.requires_grad) X.grad_buffer()[k] += node.grad[k] * (xk >= 0.0 ? 1.0 : A.value[j]);
          if (xk < 0.0) acc += node.grad[k] * xk;
        }
        if (A.requires_grad) A.grad_buffer()[j] += acc;
      }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.size());
  auto xv = x.values();
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double v = xv[k];
    y[k] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(x.shape(), std::move(y), {x}, [](Node& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += node.grad[k] * node.value[k] * (1.0 - node.value[k]);
  });
}

namespace {

struct Planes {
  std::size_t lead, h, w;
  bool batched;
};

Planes planes_of(const Tensor& x, const char* what) {
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2), false};
  if (x.rank() == 4) return {x.dim(0) * x.dim(1), x.dim(2), x.dim(3), true};
  throw ShapeError(std::string(what) + ": expected [C,H,W] or [N,C,H,W], got " +
                   shape_str(x.shape()));
}

Shape with_hw(const Tensor& x, std::size_t h, std::size_t w) {
  Shape s = x.shape();
  s[s.size() - 2] = h;
  s[s.size() - 1] = w;
  return s;
}

// Builds an output plane by gathering from the input plane through `src`
// (index into the input plane, or -1 for zero).
Tensor gather_planes(const Tensor& x, const Planes& p, std::size_t oh, std::size_t ow,
                     std::vector<long> src) {
  const std::size_t in_plane = p.h * p.w, out_plane = oh * ow;
  std::vector<double> y(p.lead * out_plane, 0.0);
  auto xv = x.values();
  for (std::size_t c = 0; c < p.lead; ++c)
    for (std::size_t k = 0; k < out_plane; ++k)
      if (src[k] >= 0) y[c * out_plane + k] = xv[c * in_plane + std::size_t(src[k])];
  return make_result(with_hw(x, oh, ow), std::move(y), {x},
                     [lead = p.lead, in_plane, out_plane, src = std::move(src)](Node& node) {
                       auto& g = node.inputs[0]->grad_buffer();
                       for (std::size_t c = 0; c < lead; ++c)
                         for (std::size_t k = 0; k < out_plane; ++k)
                           if (src[k] >= 0) g[c * in_plane + std::size_t(src[k])] += node.grad[c * out_plane + k];
                     });
}

long reflect_index(long i, long n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

Tensor reflection_pad2d(const Tensor& x, Pad2d pad) {
  const auto p = planes_of(x, "reflection_pad2d");
  if (pad.top >= p.h || pad.bottom >= p.h || pad.left >= p.w || pad.right >= p.w) {
    throw ShapeError("reflection_pad2d: pad (" + std::to_string(pad.top) + "," +
                     std::to_string(pad.bottom) + "," + std::to_string(pad.left) + "," +
                     std::to_string(pad.right) + ") must be smaller than extent " +
                     std::to_string(p.h) + "x" + std::to_string(p.w));
  }
  const std::size_t oh = p.h + pad.top + pad.bottom, ow = p.w + pad.left + pad.right;
  std::vector<long> src(oh * ow);
  for (std::size_t r = 0; r < oh; ++r) {
    const long ir = reflect_index(long(r) - long(pad.top), long(p.h));
    for (std::size_t c = 0; c < ow; ++c) {
      const long ic = reflect_index(long(c) - long(pad.left), long(p.w));
      src[r * ow + c] = ir * long(p.w) + ic;
    }
  }
  return gather_planes(x, p, oh, ow, std::move(src));
}

Tensor zero_pad2d(const Tensor& x, Pad2d pad) {
  const auto p = planes_of(x, "zero_pad2d");
  const std::size_t oh = p.h + pad.top + pad.bottom, ow = p.w + pad.left + pad.right;
  std::vector<long> src(oh * ow, -1);
  for (std::size_t r = 0; r < p.h; ++r)
    for (std::size_t c = 0; c < p.w; ++c) src[(r + pad.top) * ow + c + pad.left] = long(r * p.w + c);
  return gather_planes(x, p, oh, ow, std::move(src));
}

Tensor crop2d(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const auto p = planes_of(x, "crop2d");
  if (h == 0 || w == 0 || top + h > p.h || left + w > p.w) {
    throw ShapeError("crop2d: window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                     std::to_string(top) + "," + std::to_string(left) + ") outside " +
                     std::to_string(p.h) + "x" + std::to_string(p.w));
  }
  std::vector<long> src(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) src[r * w + c] = long((r + top) * p.w + c + left);
  return gather_planes(x, p, h, w, std::move(src));
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse_loss: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  return mean(square(a - b));
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy_loss: logits must be [N,K], got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || std::size_t(y) >= k) {
      throw std::out_of_range("cross_entropy_loss: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(k) + ")");
    }
  }
  auto lv = logits.values();
  std::vector<double> prob(n * k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) prob[i * k + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result({1}, {total / double(n)}, {logits},
                     [n, k, prob = std::move(prob), ys = std::move(ys)](Node& node) {
                       auto& g = node.inputs[0]->grad_buffer();
                       const double s = node.grad[0] / double(n);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < k; ++j)
                           g[i * k + j] += s * (prob[i * k + j] - (int(j) == ys[i] ? 1.0 : 0.0));
                     });
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t k, int stride_, int padding_, Rng& rng)
    : stride(stride_), padding(padding_) {
  const double bound = std::sqrt(6.0 / double(in * k * k));
  weight = Tensor({out, in, k, k}, uniform_init(out * in * k * k, bound, rng), true);
  bias = Tensor::zeros({out}, true);
}

TransposeConv2d::TransposeConv2d(std::size_t in, std::size_t out, std::size_t k, int stride_,
                                 int padding_, Rng& rng)
    : stride(stride_), padding(padding_) {
  // Each output pixel sees about in*k*k/stride^2 taps.
  const double fan = double(in * k * k) / double(stride_ * stride_);
  const double bound = std::sqrt(6.0 / std::max(1.0, fan));
  weight = Tensor({in, out, k, k}, uniform_init(in * out * k * k, bound, rng), true);
  bias = Tensor::zeros({out}, true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  weight = Tensor({out, in}, uniform_init(out * in, bound, rng), true);
  bias = Tensor({out}, uniform_init(out, bound, rng), true);
}

GdnParams::GdnParams(std::size_t channels) {
  beta = Tensor::full({channels}, 1.0, true);
  std::vector<double> g(channels * channels, 0.0);
  for (std::size_t i = 0; i < channels; ++i) g[i * channels + i] = 0.1;
  gamma = Tensor({channels, channels}, std::move(g), true);
}

void GdnParams::reproject() {
  for (auto& b : beta.mutable_values()) b = std::max(b, kBetaMin);
  for (auto& g : gamma.mutable_values()) g = std::max(g, 0.0);
}

PreluParams::PreluParams(std::size_t channels, double init) {
  slope = Tensor::full({channels}, init, true);
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

ParamList Mlp::params() const {
  ParamList out;
  append_params(out, "fc1", fc1.params());
  append_params(out, "fc2", fc2.params());
  return out;
}

}  // namespace semnn::nn
