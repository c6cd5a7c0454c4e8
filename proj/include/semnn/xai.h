#pragma once

#include <functional>
#include <vector>

#include "semnn/layers.h"
#include "semnn/tensor.h"

namespace semnn::xai {

// Per-element attribution scores over an offloaded latent.
struct AttributionMap {
  Tensor phi;
  std::size_t M = 0;
  double pos_sum = 0.0;
  std::size_t pos_count = 0;
};

AttributionMap summarize(Tensor phi);

enum class Method { kGradInput, kIntegratedGradients };

// phi = z * d loss_fn(z) / dz (gradient x input). With integrated gradients the
// gradient is averaged along the straight path 0 -> z over `ig_steps` points.
// loss_fn must return a scalar built from taped ops.
AttributionMap attribute(const Tensor& z_hat, const std::function<Tensor(const Tensor&)>& loss_fn,
                         Method method = Method::kGradInput, int ig_steps = 16);

struct XaiLossConfig {
  double lambda = 0.5;
  double r = 1.0;
  double cap = 1e4;
};

// lambda / pos_sum + (1 - lambda) M / pos_count - r. Saturates at `cap` when
// either summary is zero or the value reaches the cap.
double xai_loss_value(const AttributionMap& a, const XaiLossConfig& c, bool* saturated = nullptr);

// Taped version; every element of phi counts toward M (a batch is one map).
// Only pos_sum carries gradient, pos_count enters as a constant. A saturated
// loss is a constant.
Tensor xai_loss(const Tensor& phi, const XaiLossConfig& c, bool* saturated = nullptr);

struct SliceSpec {
  double ratio = 1.0;
  std::size_t H = 0, W = 0;
  std::size_t S_h = 0, S_w = 0;
  std::size_t p_h = 0, p_w = 0;

  std::size_t kept() const { return S_h * S_w; }
};

// S = floor(sqrt(ratio) * extent), p = floor((extent - S) / 2).
SliceSpec slice_spec(std::size_t H, std::size_t W, double ratio);

struct Sliced {
  Tensor crop;
  SliceSpec spec;
};

// Center crop of every channel; F is [C,H,W] or [N,C,H,W].
Sliced slice(const Tensor& F, double ratio);

enum class Fill { kReflect, kZero };

// Places the crop at its offsets and synthesizes the border. Reflection is
// repeated when the missing border is wider than the crop itself.
Tensor recover(const Tensor& crop, const SliceSpec& spec, Fill fill = Fill::kReflect);

struct ImportanceStats {
  double overall = 0.0;
  std::vector<double> per_channel;
};

// Fraction of strictly positive scores. Channel axis is 0 for [C,H,W] and 1
// for [N,C,H,W]; per_channel is left empty unless requested.
ImportanceStats importance_stats(const AttributionMap& a, bool per_channel);

}  // namespace semnn::xai
