#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "semnn/layers.h"
#include "support/gradcheck.h"

using namespace semnn;

namespace {

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0, bool grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(s));
  for (auto& x : v) x = u(rng);
  return Tensor(s, std::move(v), grad);
}

// out[i] = in[mirror(i - pad)] with mirror excluding the edge sample.
std::size_t mirror(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return std::size_t(i);
}

}  // namespace

TEST(Gdn, IdentityWhenGammaZero) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({3, 4, 4}, rng);
  auto y = nn::gdn(x, Tensor::full({3}, 1.0), Tensor::zeros({3, 3}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Gdn, ScalarValue) {
  auto y = nn::gdn(Tensor({1, 1, 1}, {3.0}), Tensor({1}, {1.0}), Tensor({1, 1}, {1.0}));
  EXPECT_NEAR(y[0], 3.0 / std::sqrt(10.0), 1e-15);
}

TEST(Gdn, InverseReconstructsInput) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    auto x = random_tensor({2, 3, 4, 4}, rng);
    auto beta = random_tensor({3}, rng, 0.5, 1.5), gamma = random_tensor({3, 3}, rng, 0.0, 0.3);
    auto y = nn::gdn(x, beta, gamma);
    auto inv = nn::gdn_inverse(y, beta, gamma, 200, 1e-13);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(inv.values[i], x[i], 1e-8);
  }
}

TEST(Gdn, InverseReportsResidualWhenNotConverged) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({1, 2, 3, 3}, rng);
  auto beta = Tensor::full({2}, 1.0), gamma = Tensor::full({2, 2}, 0.4);
  auto y = nn::gdn(x, beta, gamma);
  try {
    nn::gdn_inverse(y, beta, gamma, 1, 1e-14);
    FAIL() << "expected ConvergenceError";
  } catch (const nn::ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Gdn, FiniteAfterReprojection) {
  nn::GdnParams p(3);
  for (auto& v : p.beta.mutable_values()) v = -5.0;
  for (auto& v : p.gamma.mutable_values()) v = -1.0;
  p.reproject();
  for (double v : p.beta.values()) EXPECT_GE(v, nn::kBetaMin);
  for (double v : p.gamma.values()) EXPECT_GE(v, 0.0);
  std::mt19937_64 rng(4);
  auto x = random_tensor({3, 5, 5}, rng, -100.0, 100.0);
  auto y = nn::gdn(x, p.beta, p.gamma);
  for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
  y = nn::gdn(Tensor::zeros({3, 2, 2}), p.beta, p.gamma);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Igdn, IdentityWhenGammaZero) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 3, 3}, rng);
  auto y = nn::igdn(x, Tensor::full({2}, 1.0), Tensor::zeros({2, 2}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Igdn, PreservesShape) {
  std::mt19937_64 rng(6);
  nn::GdnParams p(4);
  auto x = random_tensor({2, 4, 5, 3}, rng);
  EXPECT_EQ(nn::igdn(x, p.beta, p.gamma).shape(), x.shape());
}

TEST(Prelu, Definition) {
  auto a = Tensor({1}, {0.25}, true);
  EXPECT_DOUBLE_EQ(nn::prelu(Tensor({1}, {-2.0}), a)[0], -0.5);
  EXPECT_DOUBLE_EQ(nn::prelu(Tensor({1}, {3.0}), Tensor({1}, {0.7}))[0], 3.0);
}

TEST(Prelu, SlopeGradientAtNegativeInput) {
  auto a = Tensor({1}, {0.25}, true);
  auto x = Tensor({1}, {-2.0});
  nn::prelu(x, a).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], -2.0);
  EXPECT_LT(gradcheck::fd_relative_error([&] { return nn::prelu(x, a); }, {a}), 1e-8);
}

TEST(ReflectionPad, Row) {
  auto y = nn::reflection_pad2d(Tensor({1, 1, 3}, {1, 2, 3}), {0, 0, 1, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 5}));
  const std::vector<double> want{2, 1, 2, 3, 2};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(y[i], want[i]);
}

TEST(ReflectionPad, ZeroPadIsIdentity) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({2, 3, 4}, rng);
  auto y = nn::reflection_pad2d(x, {});
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(ReflectionPad, RampMatchesIndexMirroring) {
  std::vector<double> ramp(9);
  for (std::size_t i = 0; i < 9; ++i) ramp[i] = double(i);
  auto y = nn::reflection_pad2d(Tensor({1, 3, 3}, ramp), {1, 1, 1, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 5, 5}));
  for (long r = 0; r < 5; ++r)
    for (long c = 0; c < 5; ++c) EXPECT_EQ(y[std::size_t(r * 5 + c)], ramp[mirror(r - 1, 3) * 3 + mirror(c - 1, 3)]);
  // corner reflects through both axes onto interior (1,1)
  EXPECT_EQ(y[0], 4.0);
}

TEST(ReflectionPad, RandomShapesMatchOracle) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> ext(1, 6);
  for (int t = 0; t < 50; ++t) {
    const std::size_t h = ext(rng), w = ext(rng);
    nn::Pad2d p{rng() % h, rng() % h, rng() % w, rng() % w};
    auto x = random_tensor({2, h, w}, rng);
    auto y = nn::reflection_pad2d(x, p);
    const std::size_t oh = h + p.top + p.bottom, ow = w + p.left + p.right;
    ASSERT_EQ(y.shape(), (Shape{2, oh, ow}));
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t q = 0; q < ow; ++q) {
          const auto sr = mirror(long(r) - long(p.top), long(h)), sq = mirror(long(q) - long(p.left), long(w));
          EXPECT_EQ(y[(c * oh + r) * ow + q], x[(c * h + sr) * w + sq]);
        }
  }
}

TEST(ReflectionPad, PadAsWideAsExtentRejected) {
  EXPECT_THROW(nn::reflection_pad2d(Tensor({1, 2, 2}, {1, 2, 3, 4}), {2, 0, 0, 0}), std::invalid_argument);
}

TEST(Mse, Values) {
  Tensor a({2}, {0, 0}, true), b({2}, {1, 1});
  EXPECT_DOUBLE_EQ(nn::mse_loss(a, a).item(), 0.0);
  auto l = nn::mse_loss(a, b);
  EXPECT_DOUBLE_EQ(l.item(), 1.0);
  l.backward();
  // 2 (a - b) / N
  EXPECT_DOUBLE_EQ(a.grad()[0], -1.0);
  EXPECT_DOUBLE_EQ(a.grad()[1], -1.0);
}

TEST(CrossEntropy, UniformLogits) {
  auto l = nn::cross_entropy_loss(Tensor::zeros({3, 8}), std::vector<int>{0, 3, 7});
  EXPECT_NEAR(l.item(), std::log(8.0), 1e-14);
}

TEST(CrossEntropy, ConfidentLogits) {
  std::vector<double> v(4, 0.0);
  v[2] = 20.0;
  EXPECT_LT(nn::cross_entropy_loss(Tensor({1, 4}, v), std::vector<int>{2}).item(), 1e-8);
}

TEST(CrossEntropy, MatchesLogSumExp) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + t % 4, k = 2 + t % 7;
    auto x = random_tensor({n, k}, rng, -30.0, 30.0);
    std::vector<int> y(n);
    for (auto& l : y) l = int(rng() % k);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double m = -1e300;
      for (std::size_t j = 0; j < k; ++j) m = std::max(m, x[i * k + j]);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(x[i * k + j] - m);
      ref += m + std::log(s) - x[i * k + std::size_t(y[i])];
    }
    EXPECT_NEAR(nn::cross_entropy_loss(x, y).item(), ref / double(n), 1e-10);
  }
}

TEST(CrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(nn::cross_entropy_loss(Tensor::zeros({1, 3}), std::vector<int>{3}), std::out_of_range);
}

TEST(Sigmoid, ZeroIsHalf) { EXPECT_DOUBLE_EQ(nn::sigmoid(Tensor({1}, {0.0}))[0], 0.5); }

TEST(GlobalAvgPool, ConstantMap) {
  auto y = global_avg_pool(Tensor::full({2, 3, 4, 4}, 1.5));
  ASSERT_EQ(y.shape(), (Shape{2, 3}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.5);
}

TEST(Mlp, ZeroWeightsGiveBias) {
  nn::Rng rng(1);
  nn::Mlp m(3, 4, 2, rng);
  for (auto& [n, t] : m.params()) {
    Tensor h = t;
    for (auto& v : h.mutable_values()) v = 0.0;
  }
  Tensor(m.fc2.bias).mutable_values() = {0.3, -0.2};
  auto y = m(Tensor::full({1, 3}, 5.0));
  EXPECT_DOUBLE_EQ(y[0], 0.3);
  EXPECT_DOUBLE_EQ(y[1], -0.2);
}

TEST(GradientSuite, EveryLayerMatchesFiniteDifferences) {
  for (const auto& g : gradcheck::gradient_suite(20)) {
    EXPECT_GE(g.instances, 20u) << g.name;
    EXPECT_LT(g.max_rel, 1e-4) << g.name;
  }
}
