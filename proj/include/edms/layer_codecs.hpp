#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edms/image.hpp"

namespace edms {

// Signed residual layer, stored channel-planar (c, y, x); values in
// [-255, 255] at the padded image dims.
struct ResidualPlane {
    int w = 0, h = 0;
    std::vector<int16_t> data;  // 3 * h * w

    ResidualPlane() = default;
    ResidualPlane(int w_, int h_) : w(w_), h(h_), data(std::size_t(w_) * h_ * 3, 0) {}

    int16_t& at(int c, int y, int x) { return data[(std::size_t(c) * h + y) * w + x]; }
    int16_t at(int c, int y, int x) const { return data[(std::size_t(c) * h + y) * w + x]; }
    bool operator==(const ResidualPlane&) const = default;
};

// Scalar quantizer step; Q = 1 keeps the residual lossless.
struct QuantSpec {
    int q = 1;  // 1..64
};

// Lossless compact-image codec: per channel in raster order, MED (LOCO-I)
// prediction with missing neighbors read as 0, coding (pixel - pred) mod 256
// through one adaptive model per channel.
std::vector<uint8_t> encode_compact(const ImageU8& img);
ImageU8 decode_compact(std::span<const uint8_t> bytes, int w, int h);

// qv = sign(r) * floor((|r| + Q/2) / Q), integer Q/2 (round half away from
// zero); dequantized value is qv * Q.
ResidualPlane quantize_residual(const ResidualPlane& r, QuantSpec q);
ResidualPlane dequantize_residual(const ResidualPlane& qplane, QuantSpec q);

// Zigzag token coding of the quantized residual: u = (qv <= 0 ? -2qv : 2qv-1),
// token min(u, 255) under a per-channel model, escape (u - 255) under a
// shared model. Decode returns the dequantized plane.
std::vector<uint8_t> encode_residual(const ResidualPlane& r, QuantSpec q);
ResidualPlane decode_residual(std::span<const uint8_t> bytes, int w, int h, QuantSpec q);

int med_predict(int left, int up, int upleft);

}  // namespace edms
