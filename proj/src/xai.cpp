#include "semnn/xai.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "semnn/ops.h"

namespace semnn::xai {

AttributionMap summarize(Tensor phi) {
  AttributionMap a;
  a.M = phi.size();
  for (double v : phi.values()) {
    if (v > 0.0) {
      a.pos_sum += v;
      ++a.pos_count;
    }
  }
  a.phi = std::move(phi);
  return a;
}

namespace {

std::vector<double> input_gradient(const Tensor& z, const std::function<Tensor(const Tensor&)>& loss_fn) {
  Tensor leaf(z.shape(), std::vector<double>(z.values().begin(), z.values().end()), true);
  Tensor loss = loss_fn(leaf);
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("attribute: loss function must return a scalar");
  }
  loss.backward();
  if (!leaf.has_grad()) return std::vector<double>(z.size(), 0.0);
  return {leaf.grad().begin(), leaf.grad().end()};
}

}  // namespace

AttributionMap attribute(const Tensor& z_hat, const std::function<Tensor(const Tensor&)>& loss_fn,
                         Method method, int ig_steps) {
  if (!grad_enabled()) throw std::logic_error("attribute: gradient recording is disabled");
  std::vector<double> g;
  if (method == Method::kGradInput) {
    g = input_gradient(z_hat, loss_fn);
  } else {
    if (ig_steps < 1) throw std::invalid_argument("attribute: ig_steps must be >= 1");
    g.assign(z_hat.size(), 0.0);
    for (int k = 1; k <= ig_steps; ++k) {
      const double t = double(k) / double(ig_steps);
      auto gk = input_gradient(z_hat * t, loss_fn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gk[i] / double(ig_steps);
    }
  }
  auto zv = z_hat.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= zv[i];
  return summarize(Tensor(z_hat.shape(), std::move(g)));
}

double xai_loss_value(const AttributionMap& a, const XaiLossConfig& c, bool* saturated) {
  double value = c.cap;
  if (a.pos_sum > 0.0 && a.pos_count > 0) {
    value = c.lambda / a.pos_sum + (1.0 - c.lambda) * double(a.M) / double(a.pos_count) - c.r;
  }
  const bool sat = !(value < c.cap);
  if (saturated) *saturated = sat;
  if (sat) {
    std::fprintf(stderr, "warning: xai loss saturated at %g\n", c.cap);
    return c.cap;
  }
  return value;
}

Tensor xai_loss(const Tensor& phi, const XaiLossConfig& c, bool* saturated) {
  const std::size_t m = phi.size();
  double pos_sum = 0.0;
  std::size_t count = 0;
  for (double v : phi.values()) {
    if (v > 0.0) {
      pos_sum += v;
      ++count;
    }
  }
  double value = c.cap;
  if (pos_sum > 0.0 && count > 0) {
    value = c.lambda / pos_sum + (1.0 - c.lambda) * double(m) / double(count) - c.r;
  }
  const bool sat = !(value < c.cap);
  if (saturated) *saturated = sat;
  if (sat) {
    std::fprintf(stderr, "warning: xai loss saturated at %g\n", c.cap);
    return Tensor::scalar(c.cap);
  }
  const double d = -c.lambda / (pos_sum * pos_sum);
  return make_result({1}, {value}, {phi}, [d](Node& node) {
    auto& P = *node.inputs[0];
    auto& g = P.grad_buffer();
    const double u = node.grad[0] * d;
    for (std::size_t i = 0; i < P.value.size(); ++i)
      if (P.value[i] > 0.0) g[i] += u;
  });
}

SliceSpec slice_spec(std::size_t H, std::size_t W, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("slice ratio must be in (0, 1], got " + std::to_string(ratio));
  }
  SliceSpec s;
  s.ratio = ratio;
  s.H = H;
  s.W = W;
  const double k = std::sqrt(ratio);
  s.S_h = std::size_t(std::floor(k * double(H)));
  s.S_w = std::size_t(std::floor(k * double(W)));
  if (s.S_h == 0 || s.S_w == 0) {
    throw std::invalid_argument("slice ratio " + std::to_string(ratio) + " leaves an empty crop of " +
                                std::to_string(H) + "x" + std::to_string(W));
  }
  s.p_h = (H - s.S_h) / 2;
  s.p_w = (W - s.S_w) / 2;
  return s;
}

Sliced slice(const Tensor& F, double ratio) {
  if (F.rank() != 3 && F.rank() != 4) throw ShapeError("slice: expected [C,H,W] or [N,C,H,W]");
  const std::size_t H = F.dim(F.rank() - 2), W = F.dim(F.rank() - 1);
  auto spec = slice_spec(H, W, ratio);
  if (spec.S_h == H && spec.S_w == W) return {F, spec};
  return {nn::crop2d(F, spec.p_h, spec.p_w, spec.S_h, spec.S_w), spec};
}

Tensor recover(const Tensor& crop, const SliceSpec& spec, Fill fill) {
  if (crop.rank() != 3 && crop.rank() != 4) throw ShapeError("recover: expected [C,H,W] or [N,C,H,W]");
  const std::size_t h = crop.dim(crop.rank() - 2), w = crop.dim(crop.rank() - 1);
  if (h != spec.S_h || w != spec.S_w || spec.p_h + spec.S_h > spec.H || spec.p_w + spec.S_w > spec.W) {
    throw std::invalid_argument("recover: crop " + std::to_string(h) + "x" + std::to_string(w) +
                                " does not fit slice spec");
  }
  nn::Pad2d rem{spec.p_h, spec.H - spec.S_h - spec.p_h, spec.p_w, spec.W - spec.S_w - spec.p_w};
  if (rem.top + rem.bottom + rem.left + rem.right == 0) return crop;
  if (fill == Fill::kZero) return nn::zero_pad2d(crop, rem);

  const bool need_h = rem.top + rem.bottom > 0, need_w = rem.left + rem.right > 0;
  if ((need_h && h < 2) || (need_w && w < 2)) {
    throw std::invalid_argument("recover: a crop of extent 1 cannot be reflection-padded");
  }
  Tensor cur = crop;
  std::size_t ch = h, cw = w;
  while (rem.top + rem.bottom + rem.left + rem.right > 0) {
    nn::Pad2d step{std::min(rem.top, ch - 1), std::min(rem.bottom, ch - 1), std::min(rem.left, cw - 1),
                   std::min(rem.right, cw - 1)};
    cur = nn::reflection_pad2d(cur, step);
    rem.top -= step.top;
    rem.bottom -= step.bottom;
    rem.left -= step.left;
    rem.right -= step.right;
    ch += step.top + step.bottom;
    cw += step.left + step.right;
  }
  return cur;
}

ImportanceStats importance_stats(const AttributionMap& a, bool per_channel) {
  ImportanceStats s;
  if (a.M == 0) return s;
  s.overall = double(a.pos_count) / double(a.M);
  if (!per_channel) return s;
  const Tensor& phi = a.phi;
  std::size_t axis;
  if (phi.rank() == 3) axis = 0;
  else if (phi.rank() == 4) axis = 1;
  else throw ShapeError("importance_stats: per-channel needs [C,H,W] or [N,C,H,W]");
  const std::size_t C = phi.dim(axis);
  const std::size_t plane = phi.dim(phi.rank() - 2) * phi.dim(phi.rank() - 1);
  std::vector<std::size_t> pos(C, 0), tot(C, 0);
  auto v = phi.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = (i / plane) % C;
    ++tot[c];
    pos[c] += v[i] > 0.0;
  }
  s.per_channel.resize(C);
  for (std::size_t c = 0; c < C; ++c) s.per_channel[c] = double(pos[c]) / double(tot[c]);
  return s;
}

}  // namespace semnn::xai
