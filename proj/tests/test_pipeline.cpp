#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "edms/nets.hpp"
#include "edms/pipeline.hpp"
#include "edms/train.hpp"

using namespace edms;

namespace {

ImageU8 random_image(std::mt19937& rng, int w, int h) {
    ImageU8 img(w, h);
    for (uint8_t& v : img.data) v = uint8_t(rng() % 256u);
    return img;
}

const WeightSet& shared_weights() {
    static const WeightSet w = init_weights(1001, 4);
    return w;
}

}  // namespace

TEST_CASE("container format") {
    std::mt19937 rng(2);
    std::vector<uint8_t> compact(40), residual(77);
    for (auto& b : compact) b = uint8_t(rng());
    for (auto& b : residual) b = uint8_t(rng());
    ContainerHeader h;
    h.q = 4;
    h.width = 33;
    h.height = 17;

    SUBCASE("size identity without hash") {
        const std::vector<uint8_t> bytes = write_container(h, compact, residual, std::nullopt);
        CHECK(bytes.size() == kContainerHeaderSize + compact.size() + residual.size());
        const ParsedContainer pc = parse_container(bytes);
        CHECK(pc.header.q == 4);
        CHECK(pc.header.width == 33);
        CHECK(pc.header.height == 17);
        CHECK(std::equal(pc.compact.begin(), pc.compact.end(), compact.begin()));
        CHECK(std::equal(pc.residual.begin(), pc.residual.end(), residual.begin()));
        CHECK(!pc.synth_hash8);
    }
    SUBCASE("size identity with hash") {
        h.flags = kFlagSynthHash;
        std::array<uint8_t, 8> hash{1, 2, 3, 4, 5, 6, 7, 8};
        const std::vector<uint8_t> bytes = write_container(h, compact, residual, hash);
        CHECK(bytes.size() == kContainerHeaderSize + compact.size() + residual.size() + 8);
        const ParsedContainer pc = parse_container(bytes);
        REQUIRE(pc.synth_hash8.has_value());
        CHECK(*pc.synth_hash8 == hash);
    }
    SUBCASE("bad magic and truncation are rejected") {
        std::vector<uint8_t> bytes = write_container(h, compact, residual, std::nullopt);
        bytes[0] = 'X';
        CHECK_THROWS_AS(parse_container(bytes), ContainerError);
        bytes[0] = 'E';
        bytes.pop_back();
        CHECK_THROWS_AS(parse_container(bytes), ContainerError);
    }
}

TEST_CASE("lossless round-trip at Q=1, including minimal and odd dims") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(3);
    EncodeOptions opt;
    opt.q = 1;
    opt.embed_synth_hash = true;
    for (auto [iw, ih] : {std::pair{8, 8}, {16, 16}, {17, 9}, {23, 31}}) {
        const ImageU8 img = random_image(rng, iw, ih);
        auto [bytes, enc_stats] = encode(img, w, opt);
        auto [decoded, dec_stats] = decode(bytes, w);
        CHECK(decoded == img);
        CHECK(std::isinf(enc_stats.psnr_db));
        CHECK(enc_stats.synth_hash8 == dec_stats.synth_hash8);
        // rate accounting identity
        CHECK(enc_stats.total_bytes == kContainerHeaderSize + enc_stats.compact_bytes +
                                           enc_stats.residual_bytes + enc_stats.hash_bytes);
        CHECK(enc_stats.bpp ==
              doctest::Approx(8.0 * double(bytes.size()) / (iw * ih)).epsilon(1e-9));
    }
}

TEST_CASE("compact section dims follow the x8 rule through the container") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(4);
    const ImageU8 img = random_image(rng, 64, 64);
    auto [bytes, stats] = encode(img, w, {1, false, true});
    const ParsedContainer pc = parse_container(bytes);
    // the compact section must decode as an 8x8 image
    const ImageU8 compact = decode_compact(pc.compact, 8, 8);
    CHECK(compact.w == 8);
    CHECK(compact.h == 8);
}

TEST_CASE("distortion bound holds across quantizer steps") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(5);
    for (int q : {2, 4, 8, 32, 64}) {
        const ImageU8 img = random_image(rng, 24, 16);
        EncodeOptions opt;
        opt.q = q;
        auto [bytes, stats] = encode(img, w, opt);
        auto [decoded, _] = decode(bytes, w);
        const int bound = (q + 1) / 2;  // ceil(Q/2)
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            CHECK(std::abs(int(img.data[i]) - int(decoded.data[i])) <= bound);
        }
    }
}

TEST_CASE("weight digest mismatch is caught before decoding") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(6);
    const ImageU8 img = random_image(rng, 16, 16);
    auto [bytes, stats] = encode(img, w, {1, false, true});
    const WeightSet other = init_weights(2002, 4);
    CHECK_THROWS_AS(decode(bytes, other), DigestMismatch);
}

TEST_CASE("synthesis hashes stay matched across encoder and decoder") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(7);
    for (int i = 0; i < 5; ++i) {
        const ImageU8 img = random_image(rng, 8 + 8 * i, 8 + 4 * i);
        EncodeOptions opt;
        opt.q = 4;
        opt.embed_synth_hash = true;
        auto [bytes, enc_stats] = encode(img, w, opt);
        auto [decoded, dec_stats] = decode(bytes, w);
        CHECK(enc_stats.synth_hash8 == dec_stats.synth_hash8);
    }
}

TEST_CASE("verify_matched") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(8);
    const ImageU8 img = random_image(rng, 16, 16);
    EncodeOptions opt;
    opt.q = 2;
    opt.embed_synth_hash = true;
    auto [bytes, stats] = encode(img, w, opt);

    SUBCASE("untampered file matches and accounts for every byte") {
        const MatchReport r = verify_matched(bytes, w);
        CHECK(r.match);
        CHECK(r.total_bytes == bytes.size());
        CHECK(r.header_bytes + r.compact_bytes + r.residual_bytes + r.hash_bytes ==
              r.total_bytes);
        CHECK(r.bpp == doctest::Approx(8.0 * double(bytes.size()) / (16 * 16)).epsilon(1e-9));
    }
    SUBCASE("a flipped bit in the compact section reports a mismatch") {
        std::vector<uint8_t> tampered = bytes;
        tampered[kContainerHeaderSize + 5] ^= 0x10;
        const MatchReport r = verify_matched(tampered, w);
        CHECK(!r.match);
    }
    SUBCASE("hash flag is required") {
        auto [plain, s2] = encode(img, w, {2, false, true});
        CHECK_THROWS_AS(verify_matched(plain, w), ContainerError);
    }
    SUBCASE("decode rejects a tampered synthesis hash") {
        std::vector<uint8_t> tampered = bytes;
        tampered.back() ^= 0xff;
        CHECK_THROWS_AS(decode(tampered, w), SynthHashMismatch);
    }
}

TEST_CASE("the no-enhance variant round-trips through the container flag") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(9);
    const ImageU8 img = random_image(rng, 16, 16);
    EncodeOptions opt;
    opt.q = 1;
    opt.enhance = false;
    opt.embed_synth_hash = true;
    auto [bytes, stats] = encode(img, w, opt);
    CHECK(parse_container(bytes).header.no_enhance());
    auto [decoded, dec_stats] = decode(bytes, w);
    CHECK(decoded == img);
    CHECK(stats.synth_hash8 == dec_stats.synth_hash8);
}

TEST_CASE("images below 8x8 are rejected") {
    const WeightSet& w = shared_weights();
    std::mt19937 rng(10);
    const ImageU8 img = random_image(rng, 7, 12);
    CHECK_THROWS_AS(encode(img, w, {}), ImageError);
}

TEST_CASE("padding round-trip restores exact dims for odd sizes") {
    std::mt19937 rng(11);
    for (auto [iw, ih] : {std::pair{9, 8}, {15, 25}, {40, 33}}) {
        const ImageU8 img = random_image(rng, iw, ih);
        const ImageU8 padded = reflect_pad_to_multiple8(img);
        CHECK(padded.w % 8 == 0);
        CHECK(padded.h % 8 == 0);
        CHECK(crop(padded, iw, ih) == img);
    }
}
