#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace icl {

/// Interleaved RGB image with float channels (0..255 for 8-bit sources).
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> pixels; // width * height * 3

    float& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    float at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

inline constexpr double kDefaultBlurSigma = 5.0;

/// Normalized 1-D Gaussian of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with clamped edges.
RgbImage blur_image(const RgbImage& image, double sigma = kDefaultBlurSigma);

/// Binary PPM (P6, maxval 255).
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

} // namespace icl
