#include "semnn/quantizer.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "semnn/ops.h"

namespace semnn::quant {

namespace {

// Maps flat element index -> center group.
struct GroupMap {
  std::size_t plane = 1, channels = 1;
  bool per_channel = false;

  std::size_t operator()(std::size_t m) const {
    return per_channel ? (m / plane) % channels : 0;
  }
};

GroupMap group_map(const Shape& shape, const QuantizerState& q) {
  GroupMap g;
  g.per_channel = q.per_channel;
  if (!q.per_channel) return g;
  std::size_t axis;
  if (shape.size() == 4) axis = 1;
  else if (shape.size() == 3) axis = 0;
  else throw ShapeError("per-channel quantizer needs [C,H,W] or [N,C,H,W], got " + shape_str(shape));
  g.channels = shape[axis];
  g.plane = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) g.plane *= shape[i];
  if (g.channels != q.groups()) {
    throw ShapeError("per-channel quantizer has " + std::to_string(q.groups()) +
                     " groups but latent has " + std::to_string(g.channels) + " channels");
  }
  return g;
}

int bits_from_levels(std::size_t levels) { return std::countr_zero(levels); }

}  // namespace

int QuantizerState::bits_per_symbol() const { return bits_from_levels(levels()); }

QuantizerState make_quantizer(std::size_t levels, std::size_t groups, bool per_channel) {
  if (levels < 2 || !std::has_single_bit(levels)) {
    throw std::invalid_argument("quantizer levels must be a power of two >= 2, got " +
                                std::to_string(levels));
  }
  if (groups == 0 || (!per_channel && groups != 1)) {
    throw std::invalid_argument("shared quantizer must have exactly one center group");
  }
  QuantizerState q;
  q.per_channel = per_channel;
  q.centers = Tensor::zeros({groups, levels}, true);
  init_centers_uniform(q, -1.0, 1.0);
  q.usage.assign(levels, 1.0 / double(levels));
  return q;
}

void init_centers_uniform(QuantizerState& q, double lo, double hi) {
  if (!(hi > lo)) hi = lo + 1.0;
  const std::size_t n = q.levels();
  auto& c = q.centers.mutable_values();
  for (std::size_t g = 0; g < q.groups(); ++g)
    for (std::size_t j = 0; j < n; ++j) c[g * n + j] = lo + (hi - lo) * double(j) / double(n - 1);
}

SoftResult soft_quantize(const Tensor& z, const QuantizerState& q) {
  if (!(q.sigma > 0.0)) throw std::invalid_argument("soft_quantize: sigma must be positive");
  const auto gm = group_map(z.shape(), q);
  const std::size_t m_count = z.size(), n = q.levels();
  auto zv = z.values();
  auto cv = q.centers.values();
  const double sigma = q.sigma;

  std::vector<double> assign(m_count * n);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double* c = cv.data() + gm(m) * n;
    double* a = assign.data() + m * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const double d = zv[m] - c[j];
      a[j] = -sigma * d * d;
      mx = std::max(mx, a[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (a[j] = std::exp(a[j] - mx));
    for (std::size_t j = 0; j < n; ++j) a[j] /= s;
  }

  Tensor assign_t = make_result(
      {m_count, n}, std::move(assign), {z, q.centers}, [gm, n, sigma](Node& node) {
        auto& Z = *node.inputs[0];
        auto& C = *node.inputs[1];
        const std::size_t mc = Z.value.size();
        for (std::size_t m = 0; m < mc; ++m) {
          const double* a = node.value.data() + m * n;
          const double* u = node.grad.data() + m * n;
          const std::size_t g = gm(m);
          const double* c = C.value.data() + g * n;
          double au = 0.0;
          for (std::size_t j = 0; j < n; ++j) au += a[j] * u[j];
          double gz = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            // dL/dlogit_j, logit_j = -sigma (z - c_j)^2
            const double gl = a[j] * (u[j] - au);
            const double dlz = -2.0 * sigma * (Z.value[m] - c[j]);
            gz += gl * dlz;
            if (C.requires_grad) C.grad_buffer()[g * n + j] -= gl * dlz;
          }
          if (Z.requires_grad) Z.grad_buffer()[m] += gz;
        }
      });

  // z_soft = sum_j assign_j c_j
  std::vector<double> zs(m_count);
  auto av = assign_t.values();
  for (std::size_t m = 0; m < m_count; ++m) {
    const double* c = cv.data() + gm(m) * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += av[m * n + j] * c[j];
    zs[m] = acc;
  }
  Tensor z_soft = make_result(z.shape(), std::move(zs), {assign_t, q.centers}, [gm, n](Node& node) {
    auto& A = *node.inputs[0];
    auto& C = *node.inputs[1];
    const std::size_t mc = node.value.size();
    for (std::size_t m = 0; m < mc; ++m) {
      const std::size_t g = gm(m);
      const double u = node.grad[m];
      for (std::size_t j = 0; j < n; ++j) {
        if (A.requires_grad) A.grad_buffer()[m * n + j] += u * C.value[g * n + j];
        if (C.requires_grad) C.grad_buffer()[g * n + j] += u * A.value[m * n + j];
      }
    }
  });
  return {z_soft, assign_t};
}

std::vector<int> hard_quantize(std::span<const double> z, const Shape& shape,
                               const QuantizerState& q) {
  const auto gm = group_map(shape, q);
  const std::size_t n = q.levels();
  auto cv = q.centers.values();
  std::vector<int> idx(z.size());
  for (std::size_t m = 0; m < z.size(); ++m) {
    const double* c = cv.data() + gm(m) * n;
    int best = 0;
    double bd = std::abs(z[m] - c[0]);
    for (std::size_t j = 1; j < n; ++j) {
      const double d = std::abs(z[m] - c[j]);
      if (d < bd) {
        bd = d;
        best = int(j);
      }
    }
    idx[m] = best;
  }
  return idx;
}

std::vector<int> hard_quantize(const Tensor& z, const QuantizerState& q) {
  return hard_quantize(z.values(), z.shape(), q);
}

std::vector<double> dequantize(std::span<const int> indices, const Shape& shape,
                               const QuantizerState& q) {
  if (numel(shape) != indices.size()) {
    throw ShapeError("dequantize: " + std::to_string(indices.size()) + " indices for shape " +
                     shape_str(shape));
  }
  const auto gm = group_map(shape, q);
  const std::size_t n = q.levels();
  auto cv = q.centers.values();
  std::vector<double> out(indices.size());
  for (std::size_t m = 0; m < indices.size(); ++m) {
    if (indices[m] < 0 || std::size_t(indices[m]) >= n) {
      throw std::out_of_range("dequantize: index " + std::to_string(indices[m]) + " out of range");
    }
    out[m] = cv[gm(m) * n + std::size_t(indices[m])];
  }
  return out;
}

Tensor straight_through(const Tensor& z, const QuantizerState& q) {
  auto soft = soft_quantize(z, q);
  auto hard = dequantize(hard_quantize(z, q), z.shape(), q);
  return semnn::straight_through(soft.z_soft, std::move(hard));
}

Tensor usage_distribution(const Tensor& assign) {
  if (assign.rank() != 2 || assign.dim(0) == 0) {
    throw std::invalid_argument("usage_distribution: empty or malformed assignment batch");
  }
  return mean_rows(assign);
}

std::vector<double> hard_usage(std::span<const int> indices, std::size_t levels) {
  if (indices.empty()) throw std::invalid_argument("hard_usage: empty batch");
  std::vector<double> p(levels, 0.0);
  for (int i : indices) p.at(std::size_t(i)) += 1.0;
  for (auto& v : p) v /= double(indices.size());
  return p;
}

Tensor div_loss(const Tensor& p) {
  const std::size_t n = p.size();
  auto pv = p.values();
  double kl = 0.0;
  for (double v : pv) {
    if (v < 0.0) throw std::invalid_argument("div_loss: negative probability " + std::to_string(v));
    if (v > 0.0) kl += v * std::log(double(n) * v);
  }
  return make_result({1}, {kl}, {p}, [n](Node& node) {
    auto& P = *node.inputs[0];
    auto& g = P.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::max(P.value[i], std::numeric_limits<double>::min());
      g[i] += node.grad[0] * (std::log(double(n) * v) + 1.0);
    }
  });
}

double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

}  // namespace semnn::quant
