#include "edms/segmenter.hpp"

#include <limits>

namespace edms {

namespace {

// VGA text-mode 16-color palette, canonical order 0..15.
constexpr std::array<std::array<uint8_t, 3>, 16> kVgaColors = {{
    {0x00, 0x00, 0x00}, {0x00, 0x00, 0xAA}, {0x00, 0xAA, 0x00}, {0x00, 0xAA, 0xAA},
    {0xAA, 0x00, 0x00}, {0xAA, 0x00, 0xAA}, {0xAA, 0x55, 0x00}, {0xAA, 0xAA, 0xAA},
    {0x55, 0x55, 0x55}, {0x55, 0x55, 0xFF}, {0x55, 0xFF, 0x55}, {0x55, 0xFF, 0xFF},
    {0xFF, 0x55, 0x55}, {0xFF, 0x55, 0xFF}, {0xFF, 0xFF, 0x55}, {0xFF, 0xFF, 0xFF},
}};

}  // namespace

Palette default_palette(int num_classes) {
    if (num_classes < 2 || num_classes > 16) {
        throw ImageError("palette supports 2..16 classes");
    }
    Palette p;
    p.size = num_classes;
    p.colors = kVgaColors;
    return p;
}

ClassMap forward_segmenter(const Tensor& img_norm, const WeightSet& w, int num_classes) {
    if (num_classes < 2) throw ImageError("segmenter needs at least 2 classes");
    if (segmenter_classes(w) != num_classes) {
        throw WeightError("segmenter weight head does not match class count");
    }
    const Tensor logits = forward_segmenter_logits(img_norm, w);
    const int h = logits.dims.h, wd = logits.dims.w;
    ClassMap m(wd, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            int best = 0;
            float best_v = logits.at(0, 0, y, x);
            for (int c = 1; c < num_classes; ++c) {
                const float v = logits.at(0, c, y, x);
                if (v > best_v) {  // ties resolve to the smallest index
                    best_v = v;
                    best = c;
                }
            }
            m.at(y, x) = uint8_t(best);
        }
    }
    return m;
}

ImageU8 colorize(const ClassMap& m, const Palette& p) {
    ImageU8 img(m.w, m.h);
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            const int cls = m.at(y, x);
            if (cls >= p.size) throw ImageError("class index out of palette range");
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = p.colors[cls][c];
        }
    }
    return img;
}

ClassMap snap_to_palette(const ImageU8& img, const Palette& p) {
    ClassMap m(img.w, img.h);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            int best = 0;
            int best_d = std::numeric_limits<int>::max();
            for (int cls = 0; cls < p.size; ++cls) {
                int d = 0;
                for (int c = 0; c < 3; ++c) {
                    const int diff = int(img.at(y, x, c)) - int(p.colors[cls][c]);
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = cls;
                }
            }
            m.at(y, x) = uint8_t(best);
        }
    }
    return m;
}

std::pair<double, double> segment_scores(const ClassMap& pred, const ClassMap& truth,
                                         int num_classes) {
    if (pred.w != truth.w || pred.h != truth.h) throw ImageError("segment_scores: dim mismatch");
    const std::size_t n = pred.data.size();
    std::size_t match = 0;
    std::vector<std::size_t> inter(num_classes, 0), uni(num_classes, 0), in_truth(num_classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int a = pred.data[i], b = truth.data[i];
        if (a >= num_classes || b >= num_classes) throw ImageError("class index out of range");
        if (a == b) {
            ++match;
            ++inter[a];
            ++uni[a];
        } else {
            ++uni[a];
            ++uni[b];
        }
        ++in_truth[b];
    }
    double iou_sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (in_truth[c] == 0) continue;
        ++present;
        iou_sum += uni[c] > 0 ? double(inter[c]) / double(uni[c]) : 0.0;
    }
    const double acc = n > 0 ? double(match) / double(n) : 0.0;
    const double miou = present > 0 ? iou_sum / present : 0.0;
    return {acc, miou};
}

}  // namespace edms
