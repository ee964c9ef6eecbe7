#pragma once
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "exosim/rng.hpp"

namespace exosim {

// Grayscale frame, intensities in [0,1], row-major, origin top-left.
struct Image {
    int width = 128;
    int height = 128;
    std::vector<double> pix;

    Image() : pix(size_t(width) * size_t(height), 0.0) {}
    Image(int w, int h) : width(w), height(h), pix(size_t(w) * size_t(h), 0.0) {}

    double& at(int row, int col) { return pix[size_t(row) * size_t(width) + size_t(col)]; }
    double at(int row, int col) const { return pix[size_t(row) * size_t(width) + size_t(col)]; }

    int nonzero_count() const {
        int n = 0;
        for (double v : pix) n += (v != 0.0);
        return n;
    }

    bool operator==(const Image& o) const {
        return width == o.width && height == o.height && pix == o.pix;
    }
};

inline std::vector<uint8_t> to_bytes(const Image& img) {
    std::vector<uint8_t> b(img.pix.size());
    for (size_t i = 0; i < img.pix.size(); ++i) {
        const double v = std::min(std::max(img.pix[i], 0.0), 1.0);
        b[i] = uint8_t(std::floor(v * 255.0 + 0.5)); // round half up
    }
    return b;
}

inline void write_pgm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    const auto b = to_bytes(img);
    f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

inline Image read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255) throw std::runtime_error("unsupported PGM: " + path);
    f.get(); // single whitespace after header
    Image img(w, h);
    std::vector<uint8_t> b(size_t(w) * size_t(h));
    f.read(reinterpret_cast<char*>(b.data()), std::streamsize(b.size()));
    if (!f) throw std::runtime_error("truncated PGM: " + path);
    for (size_t i = 0; i < b.size(); ++i) img.pix[i] = double(b[i]) / 255.0;
    return img;
}

inline uint64_t image_content_hash(const Image& img) {
    const auto b = to_bytes(img);
    return fnv1a(b.data(), b.size());
}

// i.i.d. gaussian noise per pixel, clamped back to [0,1]
inline Image add_gaussian_noise(const Image& img, double mean, double variance, Rng& rng) {
    if (variance < 0) throw std::invalid_argument("variance must be >= 0");
    const double sd = std::sqrt(variance);
    Image out = img;
    for (double& v : out.pix) {
        v += rng.normal(mean, sd);
        v = std::min(std::max(v, 0.0), 1.0);
    }
    return out;
}

struct NoisePreset {
    double mean, variance;
};
inline constexpr NoisePreset kNoiseLow{0.01, 0.001};
inline constexpr NoisePreset kNoiseMedium{0.01, 0.01};
inline constexpr NoisePreset kNoiseHigh{0.01, 0.1};

// linear remap of [0,1] onto [out_low, out_high]
inline Image adjust_contrast(const Image& img, double out_low, double out_high) {
    if (!(0.0 <= out_low && out_low < out_high && out_high <= 1.0))
        throw std::invalid_argument("contrast bounds must satisfy 0 <= low < high <= 1");
    Image out = img;
    for (double& v : out.pix) v = out_low + v * (out_high - out_low);
    return out;
}

inline constexpr double kContrastLow[2] = {26.0 / 255.0, 200.0 / 255.0};
inline constexpr double kContrastHigh[2] = {174.0 / 255.0, 240.0 / 255.0};

} // namespace exosim
