#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "semnn/ops.h"
#include "support/gradcheck.h"

using namespace semnn;

namespace {

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, bool grad = false) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(numel(s));
  for (auto& x : v) x = u(rng);
  return Tensor(s, std::move(v), grad);
}

// Direct loops over (co, oy, ox, ci, ky, kx) with zero padding.
std::vector<double> naive_conv(const Tensor& x, const Tensor& k, const Tensor& b, int s, int p) {
  const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t co = k.dim(0), kk = k.dim(2);
  const std::size_t oh = (h + 2 * p - kk) / s + 1, ow = (w + 2 * p - kk) / s + 1;
  std::vector<double> out(co * oh * ow, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b.defined() ? b[o] : 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t ky = 0; ky < kk; ++ky)
            for (std::size_t kx = 0; kx < kk; ++kx) {
              const long iy = long(oy * s + ky) - p, ix = long(ox * s + kx) - p;
              if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
              acc += x[(c * h + iy) * w + ix] * k[((o * ci + c) * kk + ky) * kk + kx];
            }
        out[(o * oh + oy) * ow + ox] = acc;
      }
  return out;
}

double inner(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Elementwise, AddVectors) {
  auto r = Tensor({2}, {1, 2}) + Tensor({2}, {3, 4});
  EXPECT_EQ(r[0], 4);
  EXPECT_EQ(r[1], 6);
}

TEST(Elementwise, MulByZero) {
  auto r = Tensor({1}, {2}) * Tensor({1}, {0});
  EXPECT_EQ(r[0], 0);
}

TEST(Elementwise, AddZeroIsBitwiseIdentity) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 5}, rng);
  auto y = x + 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(std::memcmp(&x.values()[i], &y.values()[i], sizeof(double)), 0);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor({2}, {1, 2}) + Tensor({3}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, ValueCountMustMatchShape) { EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError); }

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 3, 3}, rng);
  auto y = conv2d(x, Tensor({1, 1, 1, 1}, {1}), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, AllOnesSum) {
  auto y = conv2d(Tensor::full({1, 2, 2}, 1.0), Tensor::full({1, 1, 2, 2}, 1.0), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 1 + trial % 2, p = (trial / 2) % 2;
    auto x = random_tensor({2, 5, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    auto y = conv2d(x, k, b, s, p);
    auto ref = naive_conv(x, k, b, s, p);
    ASSERT_EQ(y.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
  }
}

TEST(Conv2d, BatchedEqualsPerSample) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({3, 2, 6, 6}, rng), k = random_tensor({4, 2, 3, 3}, rng), b = random_tensor({4}, rng);
  auto y = conv2d(x, k, b, 2, 1);
  const std::size_t per_in = 2 * 36, per_out = y.size() / 3;
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor xn({2, 6, 6}, std::vector<double>(x.values().begin() + n * per_in, x.values().begin() + (n + 1) * per_in));
    auto ref = naive_conv(xn, k, b, 2, 1);
    for (std::size_t i = 0; i < per_out; ++i) EXPECT_NEAR(y[n * per_out + i], ref[i], 1e-10);
  }
}

TEST(TransposeConv2d, BroadcastsSingleValue) {
  auto y = transpose_conv2d(Tensor({1, 1, 1}, {2.5}), Tensor::full({1, 1, 2, 2}, 1.0), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (double v : y.values()) EXPECT_EQ(v, 2.5);
}

TEST(TransposeConv2d, StrideTwoUpsamplingShape) {
  auto y = transpose_conv2d(Tensor::full({1, 2, 2}, 1.0), Tensor::full({1, 1, 2, 2}, 1.0), Tensor(), 2, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4}));
}

TEST(TransposeConv2d, AdjointOfConv) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 1 + trial % 2, p = trial % 3 == 0 ? 0 : 1;
    const std::size_t h = 5 + trial % 3;
    auto x = random_tensor({2, h, h}, rng), k = random_tensor({3, 2, 3, 3}, rng);
    auto cx = conv2d(x, k, Tensor(), s, p);
    auto y = random_tensor(cx.shape(), rng);
    auto ty = transpose_conv2d(y, k, Tensor(), s, p);
    // Transpose output can be shorter than x when (h + 2p - k) % s != 0.
    if (ty.shape() != x.shape()) continue;
    EXPECT_NEAR(inner(cx.values(), y.values()), inner(x.values(), ty.values()), 1e-10);
  }
}

TEST(Backward, SumOfSquares) {
  Tensor x({2}, {1, 2}, true);
  sum(square(x)).backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, ConstantGetsNoGradient) {
  Tensor c({2}, {1, 2});
  Tensor x({2}, {3, 4}, true);
  sum(c * x).backward();
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  Tensor x({1}, {3}, true);
  auto y = x * x;
  auto z = y + y;  // d/dx 2x^2 = 4x
  sum(z).backward();
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x({1}, {3}, true);
  NoGradGuard ng;
  auto y = x * x;
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(Backward, RequiresScalar) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_THROW((x * 2.0).backward(), std::logic_error);
}

TEST(Backward, DeterministicGradients) {
  auto run = [] {
    std::mt19937_64 rng(9);
    auto x = random_tensor({1, 2, 5, 5}, rng, true), k = random_tensor({2, 2, 3, 3}, rng, true);
    sum(square(conv2d(x, k, Tensor(), 2, 1))).backward();
    return std::vector<double>(k.grad().begin(), k.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, ElementwiseOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    auto a = random_tensor({2, 3}, rng, true), b = random_tensor({3}, rng, true);
    for (auto& v : b.mutable_values()) v = 1.0 + std::abs(v);
    for (auto& v : a.mutable_values()) v = 0.2 + std::abs(v);
    auto f = [&] { return sum(log(a) * b + sqrt(a) / b - exp(a * 0.3) + relu(a - 1.1)); };
    EXPECT_LT(gradcheck::fd_relative_error(f, {a, b}), 1e-4);
  }
}

TEST(Backward, DotConstAndMeans) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    auto x = random_tensor({3, 4}, rng, true);
    std::vector<double> w{1, -2, 0.5, 3};
    auto f = [&] { return dot_const(mean_rows(x), w) + mean(square(x)); };
    EXPECT_LT(gradcheck::fd_relative_error(f, {x}), 1e-4);
  }
}

TEST(Backward, StraightThroughPassesGradientUnchanged) {
  Tensor x({3}, {0.1, 0.2, 0.3}, true);
  auto y = straight_through(x, {1, 2, 3});
  EXPECT_EQ(y[1], 2.0);
  dot_const(y, std::vector<double>{4, 5, 6}).backward();
  EXPECT_EQ(x.grad()[0], 4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Tensor, ValuesFiniteAfterForward) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 3, 6, 6}, rng), k = random_tensor({4, 3, 3, 3}, rng);
  auto y = conv2d(x, k, Tensor(), 1, 1);
  for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
}
