#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace hazeforge;
using T = Tensor<double>;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr double kTol = 1e-3;

T rand_t(std::mt19937_64& rng, const Shape& s, double lo = -1.0, double hi = 1.0) {
  return T::from_vector(s, oracle::random_values(rng, shape_numel(s), lo, hi));
}

// Res2Block exposes collect(); give it the parameters() the oracle expects.
struct BlockView {
  const Res2Block<double>& block;
  ParameterList<double> parameters() const {
    ParameterList<double> out;
    block.collect("b", out);
    return out;
  }
  T operator()(const T& x) const { return block(x); }
};

// Networks with ReLUs may straddle a kink at a few coordinates; allow at most 10%.
void expect_grad_ok(const oracle::GradCheck& r, std::uint64_t seed) {
  EXPECT_LE(r.rel_error, kTol) << "seed " << seed;
  EXPECT_LE(r.kinks * 10, r.checked) << "seed " << seed << ": " << r.kinks << " kinks of " << r.checked;
}

void zero_parameters(const ParameterList<double>& params) {
  for (auto p : params) {
    std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0);
  }
}

}  // namespace

TEST(Conv2dLayer, ParameterCount) {
  const Conv2d<float> conv(3, 3, 3, 1, 1);
  ParameterList<float> params;
  conv.collect("c", params);
  EXPECT_EQ(count_parameters(params), 84u);
  const Conv2d<float> no_bias(3, 3, 3, 1, 1, false);
  ParameterList<float> p2;
  no_bias.collect("c", p2);
  EXPECT_EQ(count_parameters(p2), 81u);
}

TEST(Conv2dLayer, InitBoundedByFanIn) {
  Conv2d<double> conv(4, 5, 3);
  std::mt19937_64 rng(1);
  conv.init(rng);
  const double bound = 1.0 / std::sqrt(36.0);
  for (double v : conv.weight().data()) {
    EXPECT_LE(std::abs(v), bound);
  }
}

TEST(Conv2dLayer, GradCheck) {
  for (auto seed : kSeeds) {
    std::mt19937_64 rng(seed);
    Conv2d<double> conv(3, 4, 3, 2, 1);
    conv.init(rng);
    ParameterList<double> params;
    conv.collect("c", params);
    std::vector<T> in = tensors_of(params);
    const T x = rand_t(rng, {2, 3, 6, 6});
    in.push_back(x);
    const auto r = oracle::check_gradients(in, [&](const std::vector<T>&) { return oracle::random_head(seed)(conv(x)); });
    expect_grad_ok(r, seed);
  }
}

TEST(Res2BlockTest, ZeroParametersGiveIdentity) {
  std::mt19937_64 rng(1);
  Res2Block<double> block(8, 4);
  block.init(rng);
  zero_parameters(BlockView{block}.parameters());
  const T x = rand_t(rng, {2, 8, 5, 5});
  EXPECT_EQ(block(x).data(), x.data());
}

TEST(Res2BlockTest, ShapeContract) {
  std::mt19937_64 rng(2);
  for (std::size_t c : {4, 8, 12, 16}) {
    Res2Block<double> block(c, 4);
    block.init(rng);
    const T x = rand_t(rng, {2, c, 3 + c % 5, 4});
    EXPECT_EQ(block(x).shape(), x.shape());
  }
  EXPECT_THROW(Res2Block<double>(6, 4), std::invalid_argument);
  EXPECT_THROW(Res2Block<double>(8, 1), std::invalid_argument);
  Res2Block<double> b(8, 4);
  EXPECT_THROW(b(T::zeros({1, 4, 3, 3})), std::invalid_argument);
}

TEST(Res2BlockTest, GradCheck) {
  for (auto seed : kSeeds) {
    std::mt19937_64 rng(seed);
    Res2Block<double> block(8, 4);
    block.init(rng);
    const auto r =
        oracle::check_parameter_gradients(BlockView{block}, rand_t(rng, {2, 8, 4, 4}), oracle::random_head(seed));
    expect_grad_ok(r, seed);
  }
}

TEST(DehazeNetTest, GradCheck) {
  const DehazeNetConfig cfg{2, 8, 1, 4, true};
  for (auto seed : kSeeds) {
    std::mt19937_64 rng(seed);
    DehazeNet<double> net(cfg);
    net.init(rng);
    const auto r = oracle::check_parameter_gradients(net, rand_t(rng, {1, 3, 6, 6}, 0.05, 0.95),
                                                     oracle::random_head(seed));
    expect_grad_ok(r, seed);
  }
}

TEST(DehazeNetTest, OutputRangeAndShape) {
  std::mt19937_64 rng(3);
  DehazeNet<float> net(DehazeNetConfig{});
  net.init(rng);
  const Tensor<float> y = net(images_to_tensor<float>({oracle::random_image(rng, 16, 12, 3)}));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 16, 12}));
  for (float v : y.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(net(Tensor<float>::zeros({1, 3, 5, 6})), std::invalid_argument);
  EXPECT_THROW(net(Tensor<float>::zeros({1, 1, 6, 6})), std::invalid_argument);
  EXPECT_THROW(DehazeNet<float>(DehazeNetConfig{4, 18, 1, 4, true}), std::invalid_argument);
}

TEST(DehazeNetTest, ZeroTailReproducesInput) {
  std::mt19937_64 rng(4);
  DehazeNet<double> net(DehazeNetConfig{});
  net.init(rng);
  for (auto p : net.parameters()) {
    if (p.name.rfind("tail.", 0) == 0) {
      std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0);
    }
  }
  const T x = rand_t(rng, {1, 3, 8, 8}, 0.01, 0.99);
  const T y = net(x);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_NEAR(y.data()[i], x.data()[i], 1e-12);
  }
}

TEST(DehazeNetTest, ParameterCounts) {
  EXPECT_EQ(DehazeNet<float>(DehazeNetConfig{}).param_count(), 12655u);
  const std::size_t paper = DehazeNet<float>(DehazeNetConfig::paper_scale()).param_count();
  EXPECT_GE(paper, 3'500'000u);
  EXPECT_LE(paper, 4'500'000u);
}

TEST(DehazeNetTest, InitIsSeedDeterministic) {
  DehazeNet<float> a(DehazeNetConfig{});
  DehazeNet<float> b(DehazeNetConfig{});
  DehazeNet<float> c(DehazeNetConfig{});
  std::mt19937_64 r1(9), r2(9), r3(10);
  a.init(r1);
  b.init(r2);
  c.init(r3);
  EXPECT_EQ(oracle::hash_parameters(a.parameters()), oracle::hash_parameters(b.parameters()));
  EXPECT_NE(oracle::hash_parameters(a.parameters()), oracle::hash_parameters(c.parameters()));
}

TEST(TNetTest, RangeShapeAndGradCheck) {
  std::mt19937_64 rng(5);
  TNet<float> tf(8);
  tf.init(rng);
  const Tensor<float> t = tf(images_to_tensor<float>({oracle::random_image(rng, 16, 24, 3)}));
  EXPECT_EQ(t.shape(), (Shape{1, 1, 16, 24}));
  for (float v : t.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 0.99f);
  }
  EXPECT_THROW(tf(Tensor<float>::zeros({1, 3, 12, 16})), std::invalid_argument);
  for (auto seed : kSeeds) {
    std::mt19937_64 r(seed);
    TNet<double> net(4);
    net.init(r);
    const auto res = oracle::check_parameter_gradients(net, rand_t(r, {1, 3, 8, 8}, 0.0, 1.0),
                                                       oracle::random_head(seed));
    expect_grad_ok(res, seed);
  }
}

TEST(PatchDiscriminatorTest, GridShapeAndGradCheck) {
  std::mt19937_64 rng(6);
  PatchDiscriminator<float> d(16);
  d.init(rng);
  const Tensor<float> out = d(Tensor<float>::full({2, 3, 64, 32}, 0.5f));
  EXPECT_EQ(out.shape(), (Shape{2, 1, 4, 2}));
  EXPECT_THROW(d(Tensor<float>::zeros({1, 3, 24, 32})), std::invalid_argument);
  for (auto seed : kSeeds) {
    std::mt19937_64 r(seed);
    PatchDiscriminator<double> net(2);
    net.init(r);
    const auto res = oracle::check_parameter_gradients(net, rand_t(r, {1, 3, 16, 16}, 0.0, 1.0),
                                                       oracle::random_head(seed));
    expect_grad_ok(res, seed);
  }
}

TEST(FeatureExtractorTest, FrozenAndSeeded) {
  RandomConvExtractor<double> a;
  RandomConvExtractor<double> b;
  RandomConvExtractor<double> other(RandomConvExtractorConfig{77});
  std::mt19937_64 rng(7);
  T x = rand_t(rng, {1, 3, 8, 8}, 0.0, 1.0);
  const auto fa = a.features(x);
  ASSERT_EQ(fa.size(), 3u);
  EXPECT_EQ(fa[0].shape(), (Shape{1, 8, 8, 8}));
  EXPECT_EQ(fa[2].shape(), (Shape{1, 32, 2, 2}));
  EXPECT_EQ(fa[2].data(), b.features(x).back().data());
  EXPECT_NE(fa[2].data(), other.features(x).back().data());
  // Only the input carries a gradient path: the stages never train.
  EXPECT_FALSE(fa[2].requires_grad());
  x.set_requires_grad(true);
  EXPECT_TRUE(a.features(x)[2].requires_grad());
}

TEST(ImageTensor, RoundTrip) {
  std::mt19937_64 rng(8);
  const std::vector<Image> imgs{oracle::random_image(rng, 4, 6, 3), oracle::random_image(rng, 4, 6, 3)};
  const auto t = images_to_tensor<float>(imgs);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 4, 6}));
  EXPECT_EQ(tensor_to_images(t), imgs);
  EXPECT_THROW(images_to_tensor<float>({imgs[0], Image(4, 5, 3)}), std::invalid_argument);
}
