#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace hazeforge;

namespace {

TransmissionMap random_t(std::mt19937_64& rng, std::size_t h, std::size_t w, float lo, float hi) {
  return TransmissionMap(oracle::random_image(rng, h, w, 1, lo, hi));
}

}  // namespace

TEST(Scatter, DirectEvaluation) {
  const Image j(1, 1, 3, 0.2f);
  const Image out = synthesize_haze(j, TransmissionMap::constant(1, 1, 0.5f), Airlight(0.8f));
  for (float v : out.data()) {
    EXPECT_NEAR(v, 0.5f, 1e-7f);
  }
}

TEST(Scatter, NoHazeAndOpaqueLimits) {
  std::mt19937_64 rng(1);
  const Image j = oracle::random_image(rng, 6, 5, 3);
  const Airlight a(0.9f, 0.7f, 0.8f);
  const Image clear = synthesize_haze(j, TransmissionMap::constant(6, 5, 0.99f), a);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < j.pixels(); ++i) {
      EXPECT_LE(std::abs(clear.plane(c)[i] - j.plane(c)[i]), 0.01f * std::abs(a[c] - j.plane(c)[i]) + 1e-6f);
    }
  }
  const Image opaque = synthesize_haze(j, TransmissionMap::constant(6, 5, 0.0f), a);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < j.pixels(); ++i) {
      EXPECT_EQ(opaque.plane(c)[i], a[c]);
    }
  }
}

TEST(Scatter, TransmissionIsClamped) {
  const TransmissionMap t(Image(2, 2, 1, 1.0f));
  EXPECT_FLOAT_EQ(t.at(1, 1), 0.99f);
  EXPECT_THROW(TransmissionMap(Image(2, 2, 3)), std::invalid_argument);
  EXPECT_THROW(Airlight(1.2f, 0.5f, 0.5f), std::invalid_argument);
  EXPECT_THROW(DensityFactor(0.0), std::invalid_argument);
  EXPECT_THROW(DensityFactor(-1.0), std::invalid_argument);
  EXPECT_THROW(synthesize_haze(Image(2, 3, 3), TransmissionMap::constant(3, 2, 0.5f), Airlight()),
               std::invalid_argument);
}

TEST(Scatter, HdaAdjustValues) {
  const TransmissionMap t = TransmissionMap::constant(1, 1, 0.81f);
  EXPECT_NEAR(hda_adjust(t, DensityFactor(0.5)).at(0, 0), 0.9f, 1e-6f);
  EXPECT_EQ(hda_adjust(t, DensityFactor(1.0)).at(0, 0), 0.81f);
  // t = 1 before clamping: whatever p, the adjusted value stays at the cap.
  const TransmissionMap one(Image(1, 1, 1, 1.0f));
  for (double p : {0.3, 0.5, 1.0, 1.4}) {
    EXPECT_LE(hda_adjust(one, DensityFactor(p)).at(0, 0), 0.99f);
  }
  EXPECT_FLOAT_EQ(hda_adjust(one, DensityFactor(0.01)).at(0, 0), 0.99f);
}

TEST(Scatter, HdaIdentityExponentMatchesSynthesis) {
  std::mt19937_64 rng(2);
  const Image j = oracle::random_image(rng, 7, 7, 3);
  const TransmissionMap t = random_t(rng, 7, 7, 0.05f, 0.99f);
  const Airlight a(0.85f, 0.9f, 0.8f);
  EXPECT_EQ(hda_rebuild(j, t, a, DensityFactor(1.0)), synthesize_haze(j, t, a));
}

TEST(Scatter, LargeExponentApproachesAirlightMonotonically) {
  std::mt19937_64 rng(3);
  const Image j = oracle::random_image(rng, 8, 8, 3);
  const TransmissionMap t = random_t(rng, 8, 8, 0.1f, 0.95f);
  const Airlight a(0.9f, 0.85f, 0.95f);
  std::vector<double> prev(j.size(), 1e9);
  for (double p : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const Image out = hda_rebuild(j, t, a, DensityFactor(p));
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < j.pixels(); ++i) {
        const double d = std::abs(double(out.plane(c)[i]) - a[c]);
        EXPECT_LE(d, prev[c * j.pixels() + i] + 1e-7);
        prev[c * j.pixels() + i] = d;
      }
    }
  }
  double sup = 0.0;
  for (double d : prev) {
    sup = std::max(sup, d);
  }
  EXPECT_LT(sup, 0.67);  // t <= 0.95 bounds the gap by 0.95^8 of |J - A|
}

TEST(Scatter, AlgebraicInversionRecoversScene) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Image j = oracle::random_image(rng, 1, 1, 3);
    const TransmissionMap t = random_t(rng, 1, 1, 0.05f, 0.99f);
    std::uniform_real_distribution<float> ua(0.0f, 1.0f);
    const Airlight a(ua(rng), ua(rng), ua(rng));
    const auto back = invert_scattering(synthesize_haze(j, t, a), t, a);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(back[c], j.data()[c], 1e-6);
    }
  }
}

TEST(Scatter, DensitySamplerStaysInRange) {
  std::mt19937_64 rng(5);
  const DensitySampler s(0.5, 1.4);
  for (int i = 0; i < 1000; ++i) {
    const double p = s(rng).value();
    EXPECT_GE(p, 0.5);
    EXPECT_LE(p, 1.4);
  }
  EXPECT_THROW(DensitySampler(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(DensitySampler(1.0, 0.5), std::invalid_argument);
}
