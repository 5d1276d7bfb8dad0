#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "edms/image.hpp"
#include "edms/nets.hpp"
#include "edms/tensor.hpp"

namespace edms {

// First L entries of a fixed color table (the 16-color VGA text-mode
// palette in canonical order). Entries are pairwise distinct; determinism
// is what matters here, not aesthetics.
struct Palette {
    int size = 0;
    std::array<std::array<uint8_t, 3>, 16> colors{};
};

Palette default_palette(int num_classes);

// Deterministic stand-in for the decoder-side segmentation branch:
// 3c16 -> 3c32 -> 3cL logits, per-pixel argmax with ties to the smallest
// class index. Identical (image, weights) bytes give identical maps.
ClassMap forward_segmenter(const Tensor& img_norm, const WeightSet& w, int num_classes);

ImageU8 colorize(const ClassMap& m, const Palette& p);

// Per pixel, argmin of squared RGB distance over the palette; ties to the
// smallest index. Inverse of colorize on palette-exact images.
ClassMap snap_to_palette(const ImageU8& img, const Palette& p);

// (pixel_accuracy, mean IoU over classes present in truth).
std::pair<double, double> segment_scores(const ClassMap& pred, const ClassMap& truth,
                                         int num_classes);

}  // namespace edms
