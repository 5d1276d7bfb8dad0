#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "edms/tensor.hpp"

namespace edms {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major H×W×3 interleaved 8-bit RGB.
struct ImageU8 {
    int w = 0, h = 0;
    std::vector<uint8_t> data;

    ImageU8() = default;
    ImageU8(int w_, int h_) : w(w_), h(h_), data(std::size_t(w_) * h_ * 3, 0) {}

    uint8_t& at(int y, int x, int c) { return data[(std::size_t(y) * w + x) * 3 + c]; }
    uint8_t at(int y, int x, int c) const { return data[(std::size_t(y) * w + x) * 3 + c]; }
    bool operator==(const ImageU8&) const = default;
};

// H×W map of 8-bit class indices.
struct ClassMap {
    int w = 0, h = 0;
    std::vector<uint8_t> data;

    ClassMap() = default;
    ClassMap(int w_, int h_) : w(w_), h(h_), data(std::size_t(w_) * h_, 0) {}

    uint8_t& at(int y, int x) { return data[std::size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return data[std::size_t(y) * w + x]; }
    bool operator==(const ClassMap&) const = default;
};

// Binary PPM (P6) / PGM (P5), maxval 255.
void write_ppm(const ImageU8& img, const std::filesystem::path& path);
ImageU8 read_ppm(const std::filesystem::path& path);
void write_pgm(const ClassMap& map, const std::filesystem::path& path);
ClassMap read_pgm(const std::filesystem::path& path);

// Pads right/bottom to multiples of 8 with edge-inclusive mirroring.
// Requires w, h >= 8 so the mirror never runs out of source rows.
ImageU8 reflect_pad_to_multiple8(const ImageU8& img);
ImageU8 crop(const ImageU8& img, int w, int h);

// u8 -> float: v = u/127.5 - 1, as a 1×3×H×W tensor (channel-planar).
Tensor normalize_image(const ImageU8& img);
// float -> u8: u = clamp(round_half_away((v+1)*127.5), 0, 255).
ImageU8 denormalize_image(const Tensor& t);
// Raw u8 values as floats (0..255), 1×3×H×W.
Tensor image_as_float(const ImageU8& img);
// v = x/127.5 - 1 elementwise.
Tensor normalize_float(const Tensor& t);

}  // namespace edms
