#include "support/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "semnn/codec.h"
#include "semnn/layers.h"
#include "semnn/quantizer.h"
#include "semnn/xai.h"

namespace semnn::gradcheck {

double fd_relative_error(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, double h) {
  for (auto t : wrt) t.zero_grad();
  f().backward();
  std::vector<double> analytic, numeric;
  for (const auto& t : wrt) {
    if (t.has_grad()) analytic.insert(analytic.end(), t.grad().begin(), t.grad().end());
    else analytic.insert(analytic.end(), t.size(), 0.0);
  }
  NoGradGuard ng;
  for (auto t : wrt) {
    auto& v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = v[i];
      v[i] = x + h;
      const double up = f().item();
      v[i] = x - h;
      const double down = f().item();
      v[i] = x;
      numeric.push_back((up - down) / (2.0 * h));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  if (scale < 1e-12) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Uniform in [lo, hi], nudged away from zero so kinks and sign tests stay put.
Tensor rnd(const Shape& s, Rng& rng, double lo = -2.0, double hi = 2.0, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(s));
  for (auto& x : v) {
    do x = u(rng);
    while (std::abs(x) < 1e-2);
  }
  return Tensor(s, std::move(v), grad);
}

std::vector<double> weights(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  return w;
}

// Scalar probe of a tensor-valued op.
Tensor probe(const Tensor& y, const std::vector<double>& w) { return dot_const(y, w); }

std::vector<Tensor> handles(const nn::ParamList& p) {
  std::vector<Tensor> out;
  for (const auto& [n, t] : p) out.push_back(t);
  return out;
}

using Builder = std::function<double(Rng&)>;

double conv_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3), h = pick(rng, 4, 6);
  const std::size_t k = pick(rng, 1, 3);
  const int s = int(pick(rng, 1, 2)), p = int(pick(rng, 0, 1));
  auto x = rnd({n, ci, h, h}, rng), w = rnd({co, ci, k, k}, rng), b = rnd({co}, rng);
  const std::size_t o = (h + 2 * p - k) / s + 1;
  auto pw = weights(n * co * o * o, rng);
  return fd_relative_error([&] { return probe(conv2d(x, w, b, s, p), pw); }, {x, w, b});
}

double tconv_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3), h = pick(rng, 2, 4);
  const std::size_t k = pick(rng, 2, 4);
  const int s = int(pick(rng, 1, 2)), p = int(pick(rng, 0, 1));
  auto x = rnd({n, ci, h, h}, rng), w = rnd({ci, co, k, k}, rng), b = rnd({co}, rng);
  const std::size_t o = (h - 1) * s - 2 * p + k;
  auto pw = weights(n * co * o * o, rng);
  return fd_relative_error([&] { return probe(transpose_conv2d(x, w, b, s, p), pw); }, {x, w, b});
}

template <bool Inverse>
double gdn_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), h = pick(rng, 2, 4);
  auto x = rnd({n, c, h, h}, rng);
  auto beta = rnd({c}, rng, 0.5, 1.5), gamma = rnd({c, c}, rng, 0.01, 0.5);
  auto pw = weights(x.size(), rng);
  return fd_relative_error(
      [&] { return probe(Inverse ? nn::igdn(x, beta, gamma) : nn::gdn(x, beta, gamma), pw); }, {x, beta, gamma});
}

double prelu_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3), h = pick(rng, 1, 3);
  auto x = rnd({n, c, h, h}, rng);
  auto a = rnd({pick(rng, 0, 1) ? c : 1}, rng, 0.05, 0.5);
  auto pw = weights(x.size(), rng);
  return fd_relative_error([&] { return probe(nn::prelu(x, a), pw); }, {x, a});
}

double sigmoid_case(Rng& rng) {
  auto x = rnd({pick(rng, 1, 4), pick(rng, 1, 5)}, rng, -4.0, 4.0);
  auto pw = weights(x.size(), rng);
  return fd_relative_error([&] { return probe(nn::sigmoid(x), pw); }, {x});
}

double linear_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 4), in = pick(rng, 1, 5), out = pick(rng, 1, 4);
  auto x = rnd({n, in}, rng), w = rnd({out, in}, rng), b = rnd({out}, rng);
  auto pw = weights(n * out, rng);
  return fd_relative_error([&] { return probe(linear(x, w, b), pw); }, {x, w, b});
}

double mlp_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 4), in = pick(rng, 1, 5), hid = pick(rng, 2, 6), out = pick(rng, 1, 4);
  nn::Mlp m(in, hid, out, rng);
  auto x = rnd({n, in}, rng);
  auto pw = weights(n * out, rng);
  auto wrt = handles(m.params());
  wrt.push_back(x);
  return fd_relative_error([&] { return probe(nn::mlp_block(m, x), pw); }, wrt);
}

double gap_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 4);
  auto x = rnd({n, c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
  auto pw = weights(n * c, rng);
  return fd_relative_error([&] { return probe(global_avg_pool(x), pw); }, {x});
}

double pad_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), h = pick(rng, 2, 5), w = pick(rng, 2, 5);
  auto x = rnd({n, c, h, w}, rng);
  nn::Pad2d p{pick(rng, 0, h - 1), pick(rng, 0, h - 1), pick(rng, 0, w - 1), pick(rng, 0, w - 1)};
  const std::size_t oh = h + p.top + p.bottom, ow = w + p.left + p.right;
  auto pw = weights(n * c * oh * ow, rng);
  const int which = int(pick(rng, 0, 1));
  return fd_relative_error(
      [&] { return probe(which ? nn::reflection_pad2d(x, p) : nn::zero_pad2d(x, p), pw); }, {x});
}

double soft_quant_case(Rng& rng) {
  const std::size_t levels = pick(rng, 0, 1) ? 4 : 8;
  auto q = quant::make_quantizer(levels);
  quant::init_centers_uniform(q, -1.5, 1.5);
  auto jitter = weights(levels, rng);
  for (std::size_t j = 0; j < levels; ++j) q.centers.mutable_values()[j] += 0.05 * jitter[j];
  q.sigma = 0.5 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
  auto z = rnd({pick(rng, 1, 3), pick(rng, 1, 4)}, rng);
  auto w1 = weights(z.size(), rng), w2 = weights(z.size() * levels, rng);
  return fd_relative_error(
      [&] {
        auto r = quant::soft_quantize(z, q);
        return probe(r.z_soft, w1) + probe(r.assign, w2);
      },
      {z, q.centers});
}

double gate_case(Rng& rng, codec::GateMode mode) {
  codec::CodecConfig cc;
  cc.gate = mode;
  cc.gate_hidden = pick(rng, 2, 6);
  cc.ber_log_feature = pick(rng, 0, 1) == 1;
  const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 4), h = pick(rng, 1, 4);
  codec::AttentionGate g(c, cc, rng);
  auto x = rnd({n, c, h, h}, rng);
  std::vector<double> ber(n);
  for (auto& b : ber) b = std::uniform_real_distribution<double>(0.0, 0.05)(rng);
  auto pw = weights(x.size(), rng);
  auto wrt = handles(g.params());
  wrt.push_back(x);
  return fd_relative_error([&] { return probe(g(x, ber), pw); }, wrt);
}

double mse_case(Rng& rng) {
  const Shape s{pick(rng, 1, 3), pick(rng, 1, 5)};
  auto a = rnd(s, rng), b = rnd(s, rng);
  return fd_relative_error([&] { return nn::mse_loss(a, b); }, {a, b});
}

double ce_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 6);
  auto x = rnd({n, k}, rng, -3.0, 3.0);
  std::vector<int> labels(n);
  for (auto& l : labels) l = int(pick(rng, 0, k - 1));
  return fd_relative_error([&] { return nn::cross_entropy_loss(x, labels); }, {x});
}

double div_case(Rng& rng) {
  const std::size_t rows = pick(rng, 1, 6), levels = pick(rng, 0, 1) ? 4 : 8;
  auto a = rnd({rows, levels}, rng, 0.05, 1.0);
  return fd_relative_error([&] { return quant::div_loss(quant::usage_distribution(a)); }, {a});
}

double eq2_case(Rng& rng) {
  codec::CodecConfig cc;
  cc.in_channels = pick(rng, 2, 3);
  cc.height = cc.width = 4;
  cc.code_channels = 2;
  cc.blocks = pick(rng, 1, 2);
  cc.levels = 4;
  cc.gate_hidden = 3;
  codec::SemanticCodec cd(cc, rng());
  quant::init_centers_uniform(cd.quantizer, -0.6, 0.6);
  cd.quantizer.sigma = 2.0;
  const std::size_t n = 2, k = 3;
  nn::Linear head(cc.in_channels, k, rng);
  auto f = rnd({n, cc.in_channels, cc.height, cc.width}, rng);
  std::vector<int> labels{int(pick(rng, 0, k - 1)), int(pick(rng, 0, k - 1))};
  std::vector<double> ber{0.01, 0.04};
  const double alpha = 2.0, beta = 1.0;
  auto wrt = handles(cd.params());
  for (auto& t : handles(head.params())) wrt.push_back(t);
  return fd_relative_error(
      [&] {
        auto z = codec::encode(f, cd.encoder);
        auto soft = quant::soft_quantize(z, cd.quantizer);
        auto out = codec::decode(soft.z_soft, ber, cd.decoder);
        auto logits = head(global_avg_pool(out));
        return quant::div_loss(quant::usage_distribution(soft.assign)) * alpha +
               nn::cross_entropy_loss(logits, labels) * beta;
      },
      wrt);
}

double xai_case(Rng& rng) {
  const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
  auto z = rnd(s, rng, 0.2, 2.0);
  auto c = rnd(s, rng, -1.0, 1.0, false);
  // Keep at least one positive attribution.
  c.mutable_values()[0] = 0.5;
  xai::XaiLossConfig cfg;
  cfg.lambda = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
  return fd_relative_error([&] { return xai::xai_loss(z * c, cfg); }, {z});
}

}  // namespace

std::vector<GradCase> gradient_suite(std::size_t instances, std::uint64_t seed) {
  const std::vector<std::pair<std::string, Builder>> cases = {
      {"conv2d", conv_case},
      {"transpose_conv2d", tconv_case},
      {"gdn", gdn_case<false>},
      {"igdn", gdn_case<true>},
      {"prelu", prelu_case},
      {"sigmoid", sigmoid_case},
      {"linear", linear_case},
      {"mlp", mlp_case},
      {"global_avg_pool", gap_case},
      {"reflection/zero pad", pad_case},
      {"soft_quantize", soft_quant_case},
      {"attention gate (channel)", [](Rng& r) { return gate_case(r, codec::GateMode::kChannel); }},
      {"attention gate (spatial)", [](Rng& r) { return gate_case(r, codec::GateMode::kSpatial); }},
      {"mse_loss", mse_case},
      {"cross_entropy_loss", ce_case},
      {"div_loss", div_case},
      {"composite alpha*div + beta*ce", eq2_case},
      {"xai_loss via pos_sum", xai_case},
  };
  std::vector<GradCase> out;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    Rng rng(seed * 1000003ULL + c);
    GradCase g;
    g.name = cases[c].first;
    for (std::size_t i = 0; i < instances; ++i) {
      g.max_rel = std::max(g.max_rel, cases[c].second(rng));
      ++g.instances;
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace semnn::gradcheck
