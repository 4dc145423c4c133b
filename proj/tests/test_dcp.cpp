#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace hazeforge;

namespace {

// A dark scene: every pixel has one zero channel, the others in [0, 0.3].
Image dark_object_scene(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> u(0.0f, 0.3f);
  std::uniform_int_distribution<int> pick(0, 2);
  std::vector<float> v(3 * n * n);
  for (std::size_t i = 0; i < n * n; ++i) {
    const int zero = pick(rng);
    for (int c = 0; c < 3; ++c) {
      v[c * n * n + i] = c == zero ? 0.0f : u(rng);
    }
  }
  return Image(n, n, 3, std::move(v));
}

// Dark objects below a band of sky whose radiance equals the airlight.
Image scene_with_sky(std::mt19937_64& rng, std::size_t n, const Airlight& a, std::size_t sky_rows) {
  Image img = dark_object_scene(rng, n);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < sky_rows; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        img.set(c, y, x, a[c]);
      }
    }
  }
  return img;
}

}  // namespace

TEST(DarkChannel, ConstantGrayAndPureRed) {
  const Image gray(10, 10, 3, 0.4f);
  EXPECT_EQ(dark_channel(gray, 5), Image(10, 10, 1, 0.4f));
  Image red(4, 4, 3, 0.0f);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      red.set(0, y, x, 1.0f);
    }
  }
  EXPECT_EQ(dark_channel(red, 3), Image(4, 4, 1, 0.0f));
}

TEST(DarkChannel, MatchesBruteForceOnSmallImages) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t h : {1, 2, 5, 16}) {
      for (std::size_t w : {1, 3, 16}) {
        const Image img = oracle::random_image(rng, h, w, 3);
        for (int patch : {1, 3, 5, 25}) {
          EXPECT_EQ(dark_channel(img, patch).data(), oracle::dark_channel(img, patch))
              << h << "x" << w << " patch " << patch;
        }
      }
    }
  }
}

TEST(Airlight, ConstantImage) {
  const Airlight a = estimate_airlight(Image(12, 12, 3, 0.35f), 5);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(a[c], 0.35f);
  }
}

TEST(Airlight, SaturatedPatchWins) {
  std::mt19937_64 rng(1);
  Image img = dark_object_scene(rng, 40);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 10; y < 20; ++y) {
      for (std::size_t x = 12; x < 22; ++x) {
        img.set(c, y, x, 1.0f);
      }
    }
  }
  const Airlight a = estimate_airlight(img, 7);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(a[c], 1.0f);
  }
}

TEST(Airlight, RecoversSynthesisAirlight) {
  std::mt19937_64 rng(2);
  const Image j = dark_object_scene(rng, 48);
  // Dense haze over a dark scene: every hazy pixel lies within t * max(J) of A.
  const Image dense = synthesize_haze(j, TransmissionMap::constant(48, 48, 0.05f), Airlight(0.8f));
  const Airlight a = estimate_airlight(dense, 15);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(a[c], 0.8f, 0.05f);
  }
  // At t = 0.3 the brightest hazy value is 0.3 * 0.3 + 0.56, so the estimate
  // is bounded by the scene: it must be a hazy pixel in [A(1 - t), A(1 - t) + 0.09].
  const Image hazy = synthesize_haze(j, TransmissionMap::constant(48, 48, 0.3f), Airlight(0.8f));
  const Airlight b = estimate_airlight(hazy, 15);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_GE(b[c], 0.56f - 1e-6f);
    EXPECT_LE(b[c], 0.65f + 1e-6f);
  }
  EXPECT_THROW(estimate_airlight(hazy, 15, 0.0), std::invalid_argument);
}

TEST(Airlight, SkyRegionGivesExactAirlight) {
  std::mt19937_64 rng(12);
  const Airlight truth(0.8f, 0.85f, 0.9f);
  const Image j = scene_with_sky(rng, 48, truth, 12);
  const Airlight a = estimate_airlight(synthesize_haze(j, TransmissionMap::constant(48, 48, 0.3f), truth), 15);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(a[c], truth[c], 1e-6f);
  }
}

TEST(Transmission, HazeFreeAndOpaqueCases) {
  std::mt19937_64 rng(3);
  const Image j = dark_object_scene(rng, 20);
  // Dark channel of a scene with a zero channel at every pixel is 0: t = 1 -> 0.99.
  const TransmissionMap t = estimate_transmission(j, Airlight(0.9f), 3);
  for (float v : t.image().data()) {
    EXPECT_FLOAT_EQ(v, 0.99f);
  }
  const Airlight a(0.7f, 0.8f, 0.9f);
  Image flat(6, 6, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 6; ++y) {
      for (std::size_t x = 0; x < 6; ++x) {
        flat.set(c, y, x, a[c]);
      }
    }
  }
  const TransmissionMap opaque = estimate_transmission(flat, a, 3, 0.95);
  for (float v : opaque.image().data()) {
    EXPECT_NEAR(v, 0.05f, 1e-6f);
  }
  EXPECT_THROW(estimate_transmission(flat, Airlight(0.0f, 0.5f, 0.5f), 3), std::invalid_argument);
  EXPECT_THROW(estimate_transmission(flat, a, 3, 0.0), std::invalid_argument);
}

TEST(Transmission, RecoversConstantTransmission) {
  std::mt19937_64 rng(4);
  const Image j = dark_object_scene(rng, 48);
  const Airlight a(0.85f);
  const Image hazy = synthesize_haze(j, TransmissionMap::constant(48, 48, 0.5f), a);
  const TransmissionMap t = estimate_transmission(hazy, a, 15);
  std::size_t close = 0;
  for (float v : t.image().data()) {
    close += std::abs(v - 0.5f) <= 0.1f;
  }
  EXPECT_GE(close, t.image().size() * 9 / 10);
}

TEST(DcpDehaze, ConstantImageStaysConstant) {
  const Image out = dcp_dehaze(Image(16, 16, 3, 0.6f), 5);
  const float v0 = out.data()[0];
  for (float v : out.data()) {
    EXPECT_EQ(v, v0);
  }
}

TEST(DcpDehaze, NearIdentityOnHazeFreeInput) {
  std::mt19937_64 rng(5);
  const Image j = dark_object_scene(rng, 40);
  const Image hazy = synthesize_haze(j, TransmissionMap::constant(40, 40, 0.99f), Airlight(0.9f));
  const Image out = dcp_dehaze(hazy, 7);
  std::size_t close = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    close += std::abs(out.data()[i] - hazy.data()[i]) <= 0.05f;
  }
  EXPECT_GE(close, out.size() * 95 / 100);
}

TEST(DcpDehaze, RoundTripAtModerateHaze) {
  std::mt19937_64 rng(6);
  const Airlight a(0.8f, 0.85f, 0.9f);
  const Image j = scene_with_sky(rng, 64, a, 10);
  const Image hazy = synthesize_haze(j, TransmissionMap::constant(64, 64, 0.6f), a);
  EXPECT_GE(psnr(dcp_dehaze(hazy, 15), j), 20.0);
}

TEST(DcpDehaze, ImprovesToyHazyImagesOnAverage) {
  std::mt19937_64 rng(7);
  double identity = 0.0;
  double dehazed = 0.0;
  for (int i = 0; i < 8; ++i) {
    const ToyScene s = make_toy_scene(rng, 96, kSyntheticRegime);
    identity += psnr(s.hazy, s.clean);
    dehazed += psnr(dcp_dehaze(s.hazy), s.clean);
  }
  EXPECT_GT(dehazed, identity);
}

TEST(DcpDehaze, PatchOneRuns) {
  std::mt19937_64 rng(8);
  const Image out = dcp_dehaze(oracle::random_image(rng, 9, 11, 3), 1);
  EXPECT_EQ(out.height(), 9u);
  EXPECT_THROW(dcp_dehaze(Image(4, 4, 3), 3, 0.95, 0.0), std::invalid_argument);
  EXPECT_THROW(dark_channel(Image(4, 4, 1), 3), std::invalid_argument);
}
