#include "edms/layer_codecs.hpp"

#include <algorithm>
#include <cstdlib>

#include "edms/entropy.hpp"

namespace edms {

int med_predict(int left, int up, int upleft) {
    const int mn = std::min(left, up);
    const int mx = std::max(left, up);
    if (upleft >= mx) return mn;
    if (upleft <= mn) return mx;
    return left + up - upleft;
}

std::vector<uint8_t> encode_compact(const ImageU8& img) {
    RangeEncoder enc;
    std::vector<AdaptiveModel> models(3, AdaptiveModel(256));
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                const int left = x > 0 ? img.at(y, x - 1, c) : 0;
                const int up = y > 0 ? img.at(y - 1, x, c) : 0;
                const int upleft = (x > 0 && y > 0) ? img.at(y - 1, x - 1, c) : 0;
                const int pred = med_predict(left, up, upleft);
                const int sym = (int(img.at(y, x, c)) - pred) & 0xff;
                models[c].encode(enc, sym);
            }
        }
    }
    return enc.finish();
}

ImageU8 decode_compact(std::span<const uint8_t> bytes, int w, int h) {
    if (w < 1 || h < 1) throw ImageError("decode_compact: bad dims");
    RangeDecoder dec(bytes);
    std::vector<AdaptiveModel> models(3, AdaptiveModel(256));
    ImageU8 img(w, h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int left = x > 0 ? img.at(y, x - 1, c) : 0;
                const int up = y > 0 ? img.at(y - 1, x, c) : 0;
                const int upleft = (x > 0 && y > 0) ? img.at(y - 1, x - 1, c) : 0;
                const int pred = med_predict(left, up, upleft);
                const int sym = models[c].decode(dec);
                img.at(y, x, c) = uint8_t((pred + sym) & 0xff);
            }
        }
    }
    return img;
}

ResidualPlane quantize_residual(const ResidualPlane& r, QuantSpec q) {
    ResidualPlane out(r.w, r.h);
    const int half = q.q / 2;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const int v = r.data[i];
        const int mag = (std::abs(v) + half) / q.q;
        out.data[i] = int16_t(v < 0 ? -mag : mag);
    }
    return out;
}

ResidualPlane dequantize_residual(const ResidualPlane& qplane, QuantSpec q) {
    ResidualPlane out(qplane.w, qplane.h);
    for (std::size_t i = 0; i < qplane.data.size(); ++i) {
        out.data[i] = int16_t(qplane.data[i] * q.q);
    }
    return out;
}

std::vector<uint8_t> encode_residual(const ResidualPlane& r, QuantSpec q) {
    const ResidualPlane qp = quantize_residual(r, q);
    RangeEncoder enc;
    std::vector<AdaptiveModel> token(3, AdaptiveModel(256));
    AdaptiveModel escape(256);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < r.h; ++y) {
            for (int x = 0; x < r.w; ++x) {
                const int qv = qp.at(c, y, x);
                const int u = qv <= 0 ? -2 * qv : 2 * qv - 1;
                const int tok = std::min(u, 255);
                token[c].encode(enc, tok);
                if (tok == 255) escape.encode(enc, u - 255);
            }
        }
    }
    return enc.finish();
}

ResidualPlane decode_residual(std::span<const uint8_t> bytes, int w, int h, QuantSpec q) {
    RangeDecoder dec(bytes);
    std::vector<AdaptiveModel> token(3, AdaptiveModel(256));
    AdaptiveModel escape(256);
    ResidualPlane qp(w, h);
    const int qv_limit = (255 + q.q / 2) / q.q;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                int u = token[c].decode(dec);
                if (u == 255) u += escape.decode(dec);
                const int qv = (u & 1) ? (u + 1) / 2 : -u / 2;
                if (std::abs(qv) > qv_limit) {
                    throw StreamError("decoded residual value out of range");
                }
                qp.at(c, y, x) = int16_t(qv);
            }
        }
    }
    return dequantize_residual(qp, q);
}

}  // namespace edms
