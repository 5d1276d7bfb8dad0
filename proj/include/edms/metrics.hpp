#pragma once

#include <array>

#include "edms/image.hpp"

namespace edms {

struct MsSsimParams {
    int scales = 5;
    std::array<double, 5> weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

// RGB MSE over all pixels and channels; identical images return +infinity.
double psnr(const ImageU8& a, const ImageU8& b);

// Multiscale SSIM on Rec.601 luma. Requires min dim >= 11*2^(scales-1) for
// the requested scale count; smaller images automatically fall back to the
// deepest scale count that fits, with the leading weights renormalized to
// sum 1. Images below 11 pixels in either dim are an error.
double ms_ssim(const ImageU8& a, const ImageU8& b, const MsSsimParams& p = {});

// Scale count used for a given image size (the documented fallback rule).
int ms_ssim_scales_for(int w, int h, const MsSsimParams& p = {});

}  // namespace edms
