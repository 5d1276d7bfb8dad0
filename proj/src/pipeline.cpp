#include "edms/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "edms/entropy.hpp"
#include "edms/metrics.hpp"
#include "edms/nets.hpp"
#include "edms/segmenter.hpp"

namespace edms {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::array<uint8_t, 8> hash8_of(const ImageU8& img) {
    const Digest d = sha256(std::span<const uint8_t>(img.data.data(), img.data.size()));
    std::array<uint8_t, 8> h{};
    std::memcpy(h.data(), d.data(), 8);
    return h;
}

std::array<uint8_t, 8> digest_prefix(const WeightSet& w) {
    std::array<uint8_t, 8> p{};
    std::memcpy(p.data(), w.digest().data(), 8);
    return p;
}

double nan_value() { return std::nan(""); }

void require_networks(const WeightSet& w) {
    for (const char* prefix : {"compnet.", "finenet.", "smapnet.", "segmenter."}) {
        if (!w.has_prefix(prefix)) {
            throw WeightError(std::string("weight set missing network: ") + prefix);
        }
    }
}

ClassMap segment_from(const Tensor& up_norm, const WeightSet& w) {
    return forward_segmenter(up_norm, w, segmenter_classes(w));
}

}  // namespace

ImageU8 pad_and_validate(const ImageU8& img) {
    if (img.w < 8 || img.h < 8) throw ImageError("image too small (need >= 8x8)");
    if (img.w > 0xffff || img.h > 0xffff) throw ImageError("image dims exceed container limit");
    return reflect_pad_to_multiple8(img);
}

ImageU8 synthesize(const ImageU8& compact_u8, int padded_w, int padded_h,
                   const WeightSet& w, bool enhance) {
    // (5) up-sample the transmitted bytes, then normalize
    const Tensor up_raw = bilinear_resize(image_as_float(compact_u8), padded_h, padded_w);
    const Tensor up = normalize_float(up_raw);
    // (6) segment the up-sampled image, colorize through the fixed palette
    const ClassMap seg = segment_from(up, w);
    const Palette palette = default_palette(segmenter_classes(w));
    const Tensor seg_in = normalize_image(colorize(seg, palette));
    // (7) enhancement (skipped in the without-enhancement variant)
    const Tensor seg_final = enhance ? clamp_unit(forward_smapnet(seg_in, w)) : seg_in;
    // (8) synthesis
    return denormalize_image(forward_finenet(up, seg_final, w));
}

std::pair<std::vector<uint8_t>, CodecStats> encode(const ImageU8& img, const WeightSet& w,
                                                   const EncodeOptions& opt) {
    if (opt.q < 1 || opt.q > 64) throw ContainerError("quantizer step must be in [1, 64]");
    require_networks(w);
    const auto t0 = Clock::now();

    // (1) reflect-pad to multiples of 8
    const ImageU8 padded = pad_and_validate(img);
    // (2)-(3) compact representation, quantized to u8 for transmission
    const Tensor compact = forward_compnet(normalize_image(padded), w);
    const ImageU8 compact_u8 = denormalize_image(compact);
    // (4) lossless compact section
    const std::vector<uint8_t> compact_bytes = encode_compact(compact_u8);
    // (5)-(8) matched synthesis from the transmitted bytes
    const ImageU8 synth = synthesize(compact_u8, padded.w, padded.h, w, opt.enhance);
    // (9) residual against the padded original
    ResidualPlane residual(padded.w, padded.h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < padded.h; ++y) {
            for (int x = 0; x < padded.w; ++x) {
                residual.at(c, y, x) = int16_t(int(padded.at(y, x, c)) - int(synth.at(y, x, c)));
            }
        }
    }
    // (10) quantized residual section
    const QuantSpec q{opt.q};
    const std::vector<uint8_t> residual_bytes = encode_residual(residual, q);

    // (11) container
    ContainerHeader h;
    h.flags = (opt.embed_synth_hash ? kFlagSynthHash : 0) | (opt.enhance ? 0 : kFlagNoEnhance);
    h.q = uint16_t(opt.q);
    h.width = uint16_t(img.w);
    h.height = uint16_t(img.h);
    h.weight_digest8 = digest_prefix(w);
    const std::array<uint8_t, 8> synth_hash = hash8_of(synth);
    std::optional<std::array<uint8_t, 8>> embedded;
    if (opt.embed_synth_hash) embedded = synth_hash;
    std::vector<uint8_t> bytes = write_container(h, compact_bytes, residual_bytes, embedded);

    CodecStats st;
    st.header_bytes = kContainerHeaderSize;
    st.compact_bytes = compact_bytes.size();
    st.residual_bytes = residual_bytes.size();
    st.hash_bytes = opt.embed_synth_hash ? 8 : 0;
    st.total_bytes = bytes.size();
    st.bpp = 8.0 * double(st.total_bytes) / (double(img.w) * double(img.h));
    st.synth_hash8 = synth_hash;
    st.enc_s = seconds_since(t0);

    // score the reconstruction the decoder will produce
    const ResidualPlane dq = dequantize_residual(quantize_residual(residual, q), q);
    ImageU8 decoded(padded.w, padded.h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < padded.h; ++y) {
            for (int x = 0; x < padded.w; ++x) {
                const int v = int(synth.at(y, x, c)) + int(dq.at(c, y, x));
                decoded.at(y, x, c) = uint8_t(std::min(255, std::max(0, v)));
            }
        }
    }
    decoded = crop(decoded, img.w, img.h);
    st.psnr_db = psnr(img, decoded);
    // images below one MS-SSIM scale get the NaN sentinel
    st.ms_ssim = ms_ssim_scales_for(img.w, img.h) >= 1 ? ms_ssim(img, decoded) : nan_value();
    return {std::move(bytes), st};
}

std::pair<ImageU8, CodecStats> decode(std::span<const uint8_t> container, const WeightSet& w) {
    require_networks(w);
    const auto t0 = Clock::now();
    const ParsedContainer pc = parse_container(container);

    const std::array<uint8_t, 8> expect = digest_prefix(w);
    if (std::memcmp(expect.data(), pc.header.weight_digest8.data(), 8) != 0) {
        throw DigestMismatch("weight digest prefix does not match container");
    }

    const int padded_w = (pc.header.width + 7) / 8 * 8;
    const int padded_h = (pc.header.height + 7) / 8 * 8;
    const ImageU8 compact_u8 = decode_compact(pc.compact, padded_w / 8, padded_h / 8);
    const ImageU8 synth =
        synthesize(compact_u8, padded_w, padded_h, w, !pc.header.no_enhance());

    const std::array<uint8_t, 8> synth_hash = hash8_of(synth);
    if (pc.synth_hash8 && std::memcmp(pc.synth_hash8->data(), synth_hash.data(), 8) != 0) {
        throw SynthHashMismatch("synthesis hash mismatch: decoder is not matched");
    }

    const QuantSpec q{pc.header.q};
    const ResidualPlane residual = decode_residual(pc.residual, padded_w, padded_h, q);
    ImageU8 decoded(padded_w, padded_h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < padded_h; ++y) {
            for (int x = 0; x < padded_w; ++x) {
                const int v = int(synth.at(y, x, c)) + int(residual.at(c, y, x));
                decoded.at(y, x, c) = uint8_t(std::min(255, std::max(0, v)));
            }
        }
    }
    decoded = crop(decoded, pc.header.width, pc.header.height);

    CodecStats st;
    st.header_bytes = kContainerHeaderSize;
    st.compact_bytes = pc.header.compact_len;
    st.residual_bytes = pc.header.residual_len;
    st.hash_bytes = pc.synth_hash8 ? 8 : 0;
    st.total_bytes = container.size();
    st.bpp = 8.0 * double(st.total_bytes) / (double(pc.header.width) * double(pc.header.height));
    st.psnr_db = nan_value();
    st.ms_ssim = nan_value();
    st.synth_hash8 = synth_hash;
    st.dec_s = seconds_since(t0);
    return {std::move(decoded), st};
}

MatchReport verify_matched(std::span<const uint8_t> container, const WeightSet& w) {
    const ParsedContainer pc = parse_container(container);
    if (!pc.synth_hash8) {
        throw ContainerError("verify requires the synthesis-hash flag");
    }
    const std::array<uint8_t, 8> expect = digest_prefix(w);
    if (std::memcmp(expect.data(), pc.header.weight_digest8.data(), 8) != 0) {
        throw DigestMismatch("weight digest prefix does not match container");
    }

    MatchReport r;
    r.stored_hash8 = *pc.synth_hash8;
    r.header_bytes = kContainerHeaderSize;
    r.compact_bytes = pc.header.compact_len;
    r.residual_bytes = pc.header.residual_len;
    r.hash_bytes = 8;
    r.total_bytes = container.size();
    r.bpp = 8.0 * double(r.total_bytes) / (double(pc.header.width) * double(pc.header.height));

    const int padded_w = (pc.header.width + 7) / 8 * 8;
    const int padded_h = (pc.header.height + 7) / 8 * 8;
    try {
        const ImageU8 compact_u8 = decode_compact(pc.compact, padded_w / 8, padded_h / 8);
        const ImageU8 synth =
            synthesize(compact_u8, padded_w, padded_h, w, !pc.header.no_enhance());
        r.recomputed_hash8 = hash8_of(synth);
        r.match = std::memcmp(r.recomputed_hash8.data(), r.stored_hash8.data(), 8) == 0;
    } catch (const StreamError&) {
        // damaged payloads are a reported mismatch, not a crash
        r.match = false;
    }
    return r;
}

}  // namespace edms
