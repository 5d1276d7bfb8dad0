#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edms/container.hpp"
#include "edms/image.hpp"
#include "edms/layer_codecs.hpp"
#include "edms/weights.hpp"

namespace edms {

struct DigestMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SynthHashMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CodecStats {
    std::size_t header_bytes = 0;
    std::size_t compact_bytes = 0;
    std::size_t residual_bytes = 0;
    std::size_t hash_bytes = 0;
    std::size_t total_bytes = 0;
    double bpp = 0.0;
    double psnr_db = 0.0;   // NaN when the original is unavailable
    double ms_ssim = 0.0;   // NaN when the original is unavailable
    double enc_s = 0.0;
    double dec_s = 0.0;
    std::array<uint8_t, 8> synth_hash8{};
};

struct EncodeOptions {
    int q = 1;  // 1..64
    bool embed_synth_hash = false;
    bool enhance = true;  // false bypasses the segment-enhancement network
};

// Full encoder dataflow: pad, compact representation, lossless compact
// layer, matched synthesis from the transmitted bytes, quantized residual
// layer, container assembly. Everything downstream of the compact layer
// consumes the u8-quantized compact image so the decoder can repeat it
// bit-for-bit.
std::pair<std::vector<uint8_t>, CodecStats> encode(const ImageU8& img, const WeightSet& w,
                                                   const EncodeOptions& opt);

// Verifies the weight-digest prefix before touching the payload, repeats the
// encoder's synthesis, adds the residual, and crops to the original dims.
std::pair<ImageU8, CodecStats> decode(std::span<const uint8_t> container, const WeightSet& w);

struct MatchReport {
    bool match = false;
    std::array<uint8_t, 8> stored_hash8{};
    std::array<uint8_t, 8> recomputed_hash8{};
    std::size_t header_bytes = 0;
    std::size_t compact_bytes = 0;
    std::size_t residual_bytes = 0;
    std::size_t hash_bytes = 0;
    std::size_t total_bytes = 0;
    double bpp = 0.0;
};

// Recomputes the synthesis from the compact section and compares hash
// prefixes. Requires the synthesis-hash flag.
MatchReport verify_matched(std::span<const uint8_t> container, const WeightSet& w);

// Synthesis from the transmitted compact image (encode steps 5-8): the
// single code path shared by encoder and decoder.
ImageU8 synthesize(const ImageU8& compact_u8, int padded_w, int padded_h,
                   const WeightSet& w, bool enhance);

ImageU8 pad_and_validate(const ImageU8& img);

}  // namespace edms
