#include "edms/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace edms {

double psnr(const ImageU8& a, const ImageU8& b) {
    if (a.w != b.w || a.h != b.h) throw ImageError("psnr: dim mismatch");
    unsigned long long sum_sq = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const long long d = (long long)(a.data[i]) - (long long)(b.data[i]);
        sum_sq += (unsigned long long)(d * d);
    }
    if (sum_sq == 0) return std::numeric_limits<double>::infinity();
    const double mse = double(sum_sq) / double(a.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;

    double& at(int y, int x) { return v[std::size_t(y) * w + x]; }
    double at(int y, int x) const { return v[std::size_t(y) * w + x]; }
};

Plane luma(const ImageU8& img) {
    Plane p{img.w, img.h, std::vector<double>(std::size_t(img.w) * img.h)};
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            p.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                         0.114 * img.at(y, x, 2);
        }
    }
    return p;
}

std::vector<double> gaussian_taps(int window, double sigma) {
    std::vector<double> taps(window);
    const int r = window / 2;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = double(i - r);
        taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Separable valid-region Gaussian filter.
Plane blur(const Plane& p, const std::vector<double>& taps) {
    const int k = int(taps.size());
    const int ow = p.w - k + 1, oh = p.h - k + 1;
    Plane tmp{ow, p.h, std::vector<double>(std::size_t(ow) * p.h)};
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += taps[i] * p.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    }
    Plane out{ow, oh, std::vector<double>(std::size_t(ow) * oh)};
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += taps[i] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

Plane multiply(const Plane& a, const Plane& b) {
    Plane out{a.w, a.h, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

// 2x2 mean then decimate.
Plane downsample2(const Plane& p) {
    const int ow = p.w / 2, oh = p.h / 2;
    Plane out{ow, oh, std::vector<double>(std::size_t(ow) * oh)};
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                                   p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
        }
    }
    return out;
}

// Mean luminance term and mean contrast*structure term at one scale.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b,
                                     const MsSsimParams& p) {
    const std::vector<double> taps = gaussian_taps(p.window, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

    const Plane mu_a = blur(a, taps);
    const Plane mu_b = blur(b, taps);
    const Plane aa = blur(multiply(a, a), taps);
    const Plane bb = blur(multiply(b, b), taps);
    const Plane ab = blur(multiply(a, b), taps);

    double lum = 0.0, cs = 0.0;
    for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = aa.v[i] - ma * ma;
        const double vb = bb.v[i] - mb * mb;
        const double cov = ab.v[i] - ma * mb;
        lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += (2.0 * cov + c2) / (va + vb + c2);
    }
    lum /= double(mu_a.v.size());
    cs /= double(mu_a.v.size());
    return {lum, cs};
}

}  // namespace

int ms_ssim_scales_for(int w, int h, const MsSsimParams& p) {
    const int mind = std::min(w, h);
    int scales = 0;
    for (int s = 1; s <= p.scales; ++s) {
        if (mind >> (s - 1) >= p.window) scales = s;
    }
    return scales;
}

double ms_ssim(const ImageU8& a, const ImageU8& b, const MsSsimParams& p) {
    if (a.w != b.w || a.h != b.h) throw ImageError("ms_ssim: dim mismatch");
    const int scales = ms_ssim_scales_for(a.w, a.h, p);
    if (scales < 1) throw ImageError("ms_ssim: image too small for one scale");

    std::array<double, 5> weights = p.weights;
    if (scales < p.scales) {
        double sum = 0.0;
        for (int s = 0; s < scales; ++s) sum += weights[s];
        for (int s = 0; s < scales; ++s) weights[s] /= sum;
    }

    Plane pa = luma(a);
    Plane pb = luma(b);
    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        auto [lum, cs] = ssim_terms(pa, pb, p);
        // negative means are clamped before exponentiation (fractional powers
        // of negative values are undefined)
        lum = std::max(lum, 0.0);
        cs = std::max(cs, 0.0);
        if (s == scales - 1) {
            // luminance enters at the coarsest scale only
            result *= std::pow(lum, weights[s]) * std::pow(cs, weights[s]);
        } else {
            result *= std::pow(cs, weights[s]);
            pa = downsample2(pa);
            pb = downsample2(pb);
        }
    }
    return result;
}

}  // namespace edms
