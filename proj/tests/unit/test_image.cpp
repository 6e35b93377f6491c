#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "icl/error.hpp"
#include "icl/image.hpp"
#include "test_support.hpp"

using namespace icl;

namespace {

RgbImage filled(std::size_t w, std::size_t h, float v) { return RgbImage{w, h, std::vector<float>(w * h * 3, v)}; }

/// Direct 2-D convolution with clamped borders and a separately built kernel.
RgbImage reference_blur(const RgbImage& img, double sigma) {
    const int r = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> k;
    double sum = 0;
    for (int i = -r; i <= r; ++i) sum += k.emplace_back(std::exp(-i * i / (2 * sigma * sigma)));
    for (auto& x : k) x /= sum;
    RgbImage out = img;
    const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = std::clamp(x + dx, 0, w - 1), sy = std::clamp(y + dy, 0, h - 1);
                        acc += k[dy + r] * k[dx + r] * img.at(sx, sy, c);
                    }
                out.at(x, y, c) = static_cast<float>(acc);
            }
    return out;
}

} // namespace

TEST(Blur, ConstantImageIsFixedPoint) {
    for (double sigma : {0.5, 1.0, 5.0}) {
        const auto img = filled(13, 7, 117.0f);
        const auto out = blur_image(img, sigma);
        for (float v : out.pixels) EXPECT_NEAR(v, 117.0f, 1e-3);
    }
}

TEST(Blur, ImpulseResponseSumsToOne) {
    const double sigma = kDefaultBlurSigma;
    const std::size_t size = 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1;
    auto img = filled(size, size, 0.0f);
    const std::size_t mid = size / 2;
    for (std::size_t c = 0; c < 3; ++c) img.at(mid, mid, c) = 1.0f;
    const auto out = blur_image(img, sigma);
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) sum += out.at(x, y, c);
        EXPECT_NEAR(sum, 1.0, 1e-4);
    }
    double ksum = 0;
    for (double w : gaussian_kernel(sigma)) ksum += w;
    EXPECT_NEAR(ksum, 1.0, 1e-12);
    EXPECT_EQ(gaussian_kernel(sigma).size(), 31u);
}

TEST(Blur, MatchesReferenceConvolution) {
    std::mt19937 gen(3);
    std::uniform_real_distribution<float> u(0, 255);
    RgbImage img{20, 11, std::vector<float>(20 * 11 * 3)};
    for (auto& p : img.pixels) p = u(gen);
    for (double sigma : {1.0, 2.5, 5.0}) {
        const auto got = blur_image(img, sigma);
        const auto want = reference_blur(img, sigma);
        for (std::size_t i = 0; i < got.pixels.size(); ++i) ASSERT_NEAR(got.pixels[i], want.pixels[i], 1e-3);
    }
}

TEST(Blur, RejectsBadInput) {
    EXPECT_THROW(blur_image(RgbImage{}, 5.0), ValidationError);
    EXPECT_THROW(blur_image(filled(2, 2, 1), 0.0), ValidationError);
    EXPECT_THROW(blur_image(filled(2, 2, 1), -1.0), ValidationError);
}

TEST(Ppm, RoundTrip) {
    icl::testing::TempDir dir("ppm");
    RgbImage img{3, 2, {}};
    for (int i = 0; i < 18; ++i) img.pixels.push_back(static_cast<float>(i * 14));
    write_ppm(dir / "a.ppm", img);
    const auto back = read_ppm(dir / "a.ppm");
    EXPECT_EQ(back.width, 3u);
    EXPECT_EQ(back.height, 2u);
    EXPECT_EQ(back.pixels, img.pixels);
    EXPECT_THROW(read_ppm(dir / "missing.ppm"), IoError);
}
