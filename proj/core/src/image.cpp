#include "icl/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "icl/error.hpp"

namespace icl {

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw ValidationError("blur sigma must be positive");
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double w = std::exp(-double(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (auto& w : k) w /= sum;
    return k;
}

RgbImage blur_image(const RgbImage& image, double sigma) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3)
        throw ValidationError("blur: empty or malformed image buffer");
    const auto kernel = gaussian_kernel(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const auto w = static_cast<std::ptrdiff_t>(image.width);
    const auto h = static_cast<std::ptrdiff_t>(image.height);
    auto clamp = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::clamp<std::ptrdiff_t>(v, 0, hi - 1); };

    std::vector<double> tmp(image.pixels.size());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] *
                           image.at(static_cast<std::size_t>(clamp(x + k, w)), static_cast<std::size_t>(y), c);
                tmp[static_cast<std::size_t>((y * w + x) * 3) + c] = acc;
            }

    RgbImage out{image.width, image.height, std::vector<float>(image.pixels.size())};
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] *
                           tmp[static_cast<std::size_t>((clamp(y + k, h) * w + x) * 3) + c];
                out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = static_cast<float>(acc);
            }
    return out;
}

namespace {

void skip_ws_and_comments(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string ignored;
            std::getline(in, ignored);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

} // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw ParseError(path.string() + ": not a binary PPM (P6)");
    std::size_t width = 0, height = 0, maxval = 0;
    skip_ws_and_comments(in);
    in >> width;
    skip_ws_and_comments(in);
    in >> height;
    skip_ws_and_comments(in);
    in >> maxval;
    in.get();
    if (!in || width == 0 || height == 0 || maxval != 255) throw ParseError(path.string() + ": bad PPM header");
    std::vector<unsigned char> bytes(width * height * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw ParseError(path.string() + ": truncated PPM data");
    RgbImage img{width, height, std::vector<float>(bytes.begin(), bytes.end())};
    return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    for (float v : image.pixels) {
        const auto b = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
        out.put(static_cast<char>(b));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace icl
