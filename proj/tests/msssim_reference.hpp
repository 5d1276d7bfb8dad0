// Brute-force MS-SSIM reference, written independently of src/metrics.cpp:
// non-separable 2-D windows, direct per-window statistics, explicit scale
// recursion. Test-only oracle.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "edms/image.hpp"

namespace edms_test {

struct RefPlane {
    int w = 0, h = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[std::size_t(y) * w + x]; }
};

inline RefPlane ref_luma(const edms::ImageU8& img) {
    RefPlane p{img.w, img.h, {}};
    p.v.resize(std::size_t(img.w) * img.h);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            p.v[std::size_t(y) * img.w + x] =
                0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
        }
    }
    return p;
}

inline RefPlane ref_half(const RefPlane& p) {
    RefPlane o{p.w / 2, p.h / 2, {}};
    o.v.resize(std::size_t(o.w) * o.h);
    for (int y = 0; y < o.h; ++y) {
        for (int x = 0; x < o.w; ++x) {
            o.v[std::size_t(y) * o.w + x] =
                (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                 p.at(2 * y + 1, 2 * x + 1)) /
                4.0;
        }
    }
    return o;
}

inline void ref_terms(const RefPlane& a, const RefPlane& b, double& lum, double& cs) {
    const int win = 11;
    const double sigma = 1.5;
    double wsum = 0.0;
    double wtab[11][11];
    for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
            const double dy = i - 5, dx = j - 5;
            wtab[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            wsum += wtab[i][j];
        }
    }
    for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) wtab[i][j] /= wsum;
    }
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    double lum_acc = 0.0, cs_acc = 0.0;
    int count = 0;
    for (int y = 0; y + win <= a.h; ++y) {
        for (int x = 0; x + win <= a.w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    const double va = a.at(y + i, x + j);
                    const double vb = b.at(y + i, x + j);
                    ma += wtab[i][j] * va;
                    mb += wtab[i][j] * vb;
                    saa += wtab[i][j] * va * va;
                    sbb += wtab[i][j] * vb * vb;
                    sab += wtab[i][j] * va * vb;
                }
            }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            lum_acc += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            cs_acc += (2.0 * cov + c2) / (var_a + var_b + c2);
            ++count;
        }
    }
    lum = lum_acc / count;
    cs = cs_acc / count;
}

inline double ref_ms_ssim(const edms::ImageU8& ia, const edms::ImageU8& ib) {
    const double published[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int scales = 0;
    for (int s = 1; s <= 5; ++s) {
        if (std::min(ia.w, ia.h) >> (s - 1) >= 11) scales = s;
    }
    double weights[5];
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += published[s];
    for (int s = 0; s < scales; ++s) {
        weights[s] = scales < 5 ? published[s] / wsum : published[s];
    }
    RefPlane a = ref_luma(ia), b = ref_luma(ib);
    double out = 1.0;
    for (int s = 0; s < scales; ++s) {
        double lum = 0.0, cs = 0.0;
        ref_terms(a, b, lum, cs);
        lum = std::max(0.0, lum);
        cs = std::max(0.0, cs);
        if (s == scales - 1) {
            out *= std::pow(lum, weights[s]) * std::pow(cs, weights[s]);
        } else {
            out *= std::pow(cs, weights[s]);
            a = ref_half(a);
            b = ref_half(b);
        }
    }
    return out;
}

}  // namespace edms_test
