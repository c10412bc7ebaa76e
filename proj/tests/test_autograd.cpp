#include <gtest/gtest.h>

#include <random>

#include "floragan/network.hpp"
#include "test_support.hpp"

using namespace floragan;
using floragan::testing::gradient_error;
using floragan::testing::random_tensor;

namespace {

constexpr double kTol = 1e-6;

// Weighted sum so every output element carries a distinct upstream gradient.
Var<double> probe(const Var<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xabcdef);  // decorrelated from the inputs' streams
  Var<double> w(random_tensor<double>(y.shape(), rng));
  return reshape(matmul(reshape(y, {1, 1, static_cast<int>(y.value().size())}),
                        reshape(w, {1, 1, static_cast<int>(y.value().size())}), false, true),
                 {1, 1, 1});
}

}  // namespace

TEST(Autograd, Conv2dStridedPadded) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor<double>({3, 7, 6}, rng);
  const auto w = random_tensor<double>({4, 1, 3 * 9}, rng);
  const auto b = random_tensor<double>({4, 1, 1}, rng);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(conv2d(v[0], v[1], v[2], 3, 2, 1), 9); }, {x, w, b}),
            kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(conv2d(v[0], v[1], v[2], 3, 1, 0), 9); }, {x, w, b}),
            kTol);
}

TEST(Autograd, Conv2dPointwise) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor<double>({5, 3, 4}, rng);
  const auto w = random_tensor<double>({2, 1, 5}, rng);
  const auto b = random_tensor<double>({2, 1, 1}, rng);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(conv2d(v[0], v[1], v[2], 1, 1, 0), 3); }, {x, w, b}),
            kTol);
}

TEST(Autograd, TransposedConv) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor<double>({3, 4, 5}, rng);
  const auto w = random_tensor<double>({3, 1, 2 * 9}, rng);
  const auto b = random_tensor<double>({2, 1, 1}, rng);
  auto f = [](const auto& v) { return probe(conv_transpose2d(v[0], v[1], v[2], 3, 2, 1, 1), 4); };
  EXPECT_LT(gradient_error(f, {x, w, b}), kTol);
}

TEST(Autograd, TransposedConvIsAdjointOfConv) {
  // <conv(x), y> == <x, conv_t(y)> with shared weights and no bias.
  std::mt19937_64 rng(4);
  const auto x = random_tensor<double>({3, 8, 8}, rng);
  const auto w = random_tensor<double>({5, 1, 3 * 9}, rng);
  const auto y = random_tensor<double>({5, 4, 4}, rng);
  const auto cx = conv2d(Var<double>(x), Var<double>(w), Var<double>(), 3, 2, 1).value();
  // Both ops index the weight as (conv output channel, conv input channel * K * K).
  const auto ty = conv_transpose2d(Var<double>(y), Var<double>(w), Var<double>(), 3, 2, 1, 1).value();
  ASSERT_EQ(ty.shape(), x.shape());
  EXPECT_NEAR(cx.matrix().cwiseProduct(y.matrix()).sum(), x.matrix().cwiseProduct(ty.matrix()).sum(), 1e-10);
}

TEST(Autograd, InstanceNorm) {
  std::mt19937_64 rng(5);
  const auto x = random_tensor<double>({3, 4, 4}, rng);
  const auto g = random_tensor<double>({3, 1, 1}, rng, 0.5, 1.5);
  const auto s = random_tensor<double>({3, 1, 1}, rng);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(instance_norm(v[0]), 5); }, {x}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(instance_norm(v[0], v[1], v[2]), 5); }, {x, g, s}), kTol);
}

TEST(Autograd, InstanceNormStatistics) {
  std::mt19937_64 rng(6);
  const auto y = instance_norm(Var<double>(random_tensor<double>({4, 5, 5}, rng, -3, 7))).value().matrix();
  for (Eigen::Index c = 0; c < y.rows(); ++c) {
    EXPECT_NEAR(y.row(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.row(c).array().square()).mean(), 1.0, 1e-3);
  }
}

TEST(Autograd, Activations) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor<double>({2, 5, 5}, rng);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(relu(v[0]), 1); }, {x}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(leaky_relu(v[0], 0.2), 1); }, {x}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(floragan::tanh(v[0]), 1); }, {x}), kTol);
}

TEST(Autograd, ShuffleMeanSoftmax) {
  std::mt19937_64 rng(8);
  const auto x = random_tensor<double>({8, 3, 3}, rng);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(pixel_shuffle(v[0], 2), 2); }, {x}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(spatial_mean(v[0]), 2); }, {x}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(softmax_rows(v[0]), 2); }, {x}), kTol);
}

TEST(Autograd, Matmul) {
  std::mt19937_64 rng(9);
  const auto a = random_tensor<double>({3, 1, 4}, rng), b = random_tensor<double>({4, 1, 2}, rng);
  const auto c = random_tensor<double>({2, 1, 4}, rng);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(matmul(v[0], v[1]), 3); }, {a, b}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(matmul(v[0], v[1], false, true), 3); }, {a, c}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(matmul(v[0], v[1], true, false), 3); }, {b, b}), kTol);
  EXPECT_LT(gradient_error([](const auto& v) { return probe(matmul(v[0], v[1], true, true), 3); }, {b, c}), kTol);
}

TEST(Autograd, ResidualBlock) {
  std::mt19937_64 rng(10);
  const int c = 3;
  std::vector<Tensor<double>> in{random_tensor<double>({c, 4, 4}, rng), random_tensor<double>({c, 1, c * 9}, rng),
                                 random_tensor<double>({c, 1, 1}, rng), random_tensor<double>({c, 1, c * 9}, rng),
                                 random_tensor<double>({c, 1, 1}, rng)};
  auto f = [](const auto& v) { return probe(residual_block(v[0], v[1], v[2], v[3], v[4]), 6); };
  EXPECT_LT(gradient_error(f, in), kTol);
}

TEST(Autograd, SubpixelUpsample) {
  std::mt19937_64 rng(11);
  std::vector<Tensor<double>> in{random_tensor<double>({2, 3, 3}, rng), random_tensor<double>({8, 1, 2 * 9}, rng),
                                 random_tensor<double>({8, 1, 1}, rng)};
  auto f = [](const auto& v) { return probe(subpixel_upsample(v[0], v[1], v[2], 2), 7); };
  EXPECT_LT(gradient_error(f, in), kTol);
}

TEST(Autograd, SelfAttention) {
  std::mt19937_64 rng(12);
  const int c = 8;
  auto p = AttentionParams<double>::zeros(c);
  std::vector<Tensor<double>> in{random_tensor<double>({c, 3, 3}, rng)};
  for (auto* v : {&p.query_weight, &p.query_bias, &p.key_weight, &p.key_bias, &p.value_weight, &p.value_bias})
    in.push_back(random_tensor<double>(v->shape(), rng));
  in.push_back(Tensor<double>::constant({1, 1, 1}, 0.6));
  auto f = [](const std::vector<Var<double>>& v) {
    AttentionParams<double> a{v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    return probe(self_attention(v[0], a), 8);
  };
  EXPECT_LT(gradient_error(f, in), kTol);
}

TEST(Autograd, SpectralNormalizedWithFrozenVectors) {
  std::mt19937_64 rng(13);
  const auto w = random_tensor<double>({4, 1, 6}, rng);
  PowerIterationState<double> state;
  init_power_iteration(state, 4, 6, rng);
  power_iteration(w.matrix(), state, 3);
  auto f = [&state](const auto& v) { return probe(spectral_normalized(v[0], state, 1, false), 10); };
  EXPECT_LT(gradient_error(f, {w}), kTol);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  Var<double> x(Tensor<double>::constant({1, 1, 1}, 3.0), true);
  const Var<double> y = add(scale(x, 2.0), gate(x, x));  // 2x + x^2
  autograd::backward(y);
  EXPECT_DOUBLE_EQ(y.item(), 15.0);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 8.0);
}

TEST(Autograd, NoGradGuardBuildsNoGraph) {
  Var<double> x(Tensor<double>::constant({1, 2, 2}, 1.0), true);
  autograd::NoGradGuard guard;
  const auto y = relu(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}
