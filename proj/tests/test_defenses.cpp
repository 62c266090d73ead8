#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "advkit/defenses.hpp"
#include "advkit/errors.hpp"
#include "oracles.hpp"

using namespace advkit;

namespace {

Tensor random_image(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(std::move(shape), 0, 1, rng);
}

// Half-sample symmetric index: -1 -> 0, -2 -> 1, n -> n-1.
long mirror(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

// Direct 2-D Gaussian filter of one plane, normalised over the full window.
oracle::Vec blur_plane(const oracle::Vec& src, long h, long w, double sigma, int size) {
  const int r = size / 2;
  double norm = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) norm += oracle::gaussian_weight(dy, dx, sigma);
  }
  oracle::Vec out(src.size());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          acc += oracle::gaussian_weight(dy, dx, sigma) * src[mirror(y + dy, h) * w + mirror(x + dx, w)];
        }
      }
      out[y * w + x] = acc / norm;
    }
  }
  return out;
}

double mean(std::span<const Real> v) {
  double s = 0;
  for (Real x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Blur, KernelMatchesAnalyticGaussian) {
  const auto k = gaussian_kernel_2d(3, 1.0);
  ASSERT_EQ(k.size(), 9u);
  double norm = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) norm += oracle::gaussian_weight(dy, dx, 1.0);
  }
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      EXPECT_NEAR(k[(dy + 1) * 3 + dx + 1], oracle::gaussian_weight(dy, dx, 1.0) / norm, 1e-6);
    }
  }
  // centre of the 3x3, sigma 1 kernel
  EXPECT_NEAR(k[4], 0.2041799, 1e-6);
  EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-7);
  for (int size : {1, 5, 7}) {
    const auto k1 = gaussian_kernel_1d(size, 1.5);
    EXPECT_NEAR(std::accumulate(k1.begin(), k1.end(), 0.0), 1.0, 1e-7);
  }
}

TEST(Blur, InvalidParameters) {
  EXPECT_THROW(gaussian_kernel_1d(4, 1.0), InvalidArgument);
  EXPECT_THROW(gaussian_kernel_1d(3, 0.0), InvalidArgument);
  EXPECT_THROW(gaussian_blur(random_image({1, 4, 4}, 1), 1.0, 2), InvalidArgument);
  EXPECT_THROW(gaussian_blur(Tensor::zeros(Shape{4, 4}), 1.0, 3), InvalidShape);
}

TEST(Blur, ConstantImageUnchanged) {
  const Tensor x = Tensor::full(Shape{2, 3, 5, 6}, Real(0.37));
  const Tensor y = gaussian_blur(x, 1.3, 5);
  for (Real v : y.data()) EXPECT_NEAR(v, 0.37, 1e-6);
}

TEST(Blur, KernelOneIsIdentity) {
  const Tensor x = random_image({1, 3, 7, 5}, 2);
  const Tensor y = gaussian_blur(x, 2.0, 1);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Blur, MatchesDirectConvolution) {
  for (int size : {3, 5}) {
    const Tensor x = random_image({2, 6, 7}, 3 + size);
    const Tensor y = gaussian_blur(x, 1.0, size);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto in = x.data().subspan(c * 42, 42);
      const oracle::Vec ref = blur_plane(oracle::Vec(in.begin(), in.end()), 6, 7, 1.0, size);
      for (std::size_t i = 0; i < 42; ++i) EXPECT_NEAR(y.data()[c * 42 + i], ref[i], 1e-6);
    }
  }
}

TEST(Blur, PreservesMean) {
  const Tensor x = random_image({1, 1, 28, 28}, 4);
  const Tensor y = gaussian_blur(x, 1.0, 3);
  EXPECT_NEAR(mean(y.data()), mean(x.data()), 1e-4);
}

TEST(Transform, NearIdentityAtScaleOne) {
  const Tensor x = random_image({1, 1, 9, 9}, 5);
  const Tensor y = input_transform(x, 1.0, 256);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LE(std::abs(y.data()[i] - x.data()[i]), 1.0 / 510 + 1e-6);
}

TEST(Transform, ConstantImageOnlyQuantised) {
  const Tensor x = Tensor::full(Shape{1, 3, 8, 8}, Real(0.5));
  const Tensor y = input_transform(x, 2.0, 5);
  // 0.5 sits exactly on a level of a 5-level grid
  for (Real v : y.data()) EXPECT_NEAR(v, 0.5, 1e-6);
}

TEST(Transform, CheckerboardLosesContrast) {
  Tensor x(Shape{1, 1, 8, 8});
  for (std::size_t i = 0; i < 64; ++i) x.mutable_data()[i] = ((i / 8 + i % 8) % 2) ? 1 : 0;
  const Tensor y = input_transform(x, 2.0, 32);
  double lo = 1, hi = 0;
  for (Real v : y.data()) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  EXPECT_LT(hi - lo, 0.5);
}

TEST(Transform, OutputInUnitRangeOnLevels) {
  const Tensor x = random_image({2, 3, 10, 10}, 6);
  const int levels = 8;
  const Tensor y = input_transform(x, 3.0, levels);
  EXPECT_EQ(y.shape(), x.shape());
  for (Real v : y.data()) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 1);
    const double scaled = v * (levels - 1);
    EXPECT_NEAR(scaled, std::round(scaled), 1e-5);
  }
}

TEST(Defense, NoneMatchesUndefendedLogits) {
  Model m(make_architecture("small-a", {1, 8, 8}));
  m.initialize(2);
  const Tensor x = random_image({3, 1, 8, 8}, 7);
  const Tensor a = defended_forward(m, DefenseConfig{}, x);
  const Tensor b = m.forward(x).logits;
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);

  DefenseConfig blur{DefenseKind::kGaussianBlur};
  const Tensor c = defended_forward(m, blur, x);
  const Tensor d = m.forward(gaussian_blur(x, blur.sigma, blur.kernel_size)).logits;
  for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_EQ(c.data()[i], d.data()[i]);
  EXPECT_EQ(defended_predict(m, blur, x), m.predict(gaussian_blur(x, 1.0, 3)));
}

TEST(Defense, NamesAndValidation) {
  EXPECT_EQ(parse_defense("blur"), DefenseKind::kGaussianBlur);
  EXPECT_EQ(parse_defense("input-transform"), DefenseKind::kInputTransform);
  EXPECT_EQ(defense_name(parse_defense("none")), "none");
  EXPECT_THROW(parse_defense("jpeg"), InvalidArgument);
  DefenseConfig cfg;
  cfg.kernel_size = 4;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.quantization_levels = 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.transform_scale = 0.5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}
