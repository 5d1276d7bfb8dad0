#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "edms/image.hpp"
#include "edms/weights.hpp"

namespace edms {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::string stage;  // "segmenter" | "base" | "smapnet"
    int batch = 32;
    float lr = 5e-4f;
    float final_lr_factor = 0.1f;  // final layer trains at one tenth
    int epochs = 150;
    uint64_t seed = 1;
    int image_size = 256;  // multiple of 8
    int classes = 4;
};

struct Sample {
    ImageU8 image;
    ClassMap labels;
};

using Dataset = std::vector<Sample>;

// Seeded synthetic scene generator: background class 0 plus random
// axis-aligned rectangles, circles, and triangles (classes 1..L-1), drawn
// with per-class base colors, per-instance brightness jitter, and additive
// Gaussian noise (sigma 4). The label map is the exact rendered occupancy;
// later shapes overwrite earlier ones. Same seed, same bytes.
Dataset gen_dataset(uint64_t seed, int count, int size, int num_classes);

// Directory layout: NNNN.ppm + NNNN.pgm pairs.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct AdamState {
    std::vector<float> m, v;
    int64_t step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Standard bias-corrected Adam update, in place.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& st, float lr);

struct TrainLogRow {
    int epoch = 0;
    std::string stage;
    double loss = 0.0;
};

struct TrainResult {
    WeightSet weights;
    std::vector<TrainLogRow> log;
};

void write_loss_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

// Per-pixel softmax cross-entropy training of the toy segmenter.
TrainResult train_segmenter(const TrainConfig& cfg, const Dataset& data);

// Step 1: joint CompNet + FineNet training against the ground-truth
// colorized segment, L1 on the synthesis plus L1 on the up-sampled compact.
// `carry` entries (e.g. a trained segmenter) pass through untouched.
TrainResult train_base(const TrainConfig& cfg, const Dataset& data, const WeightSet& carry);

// Step 2: SMapNet alone, mapping the degraded segment (compnet -> u8 ->
// up-sample -> segment -> colorize, exactly as the codec computes it) toward
// the ground-truth colorized segment. Base weights are frozen.
TrainResult train_smapnet(const TrainConfig& cfg, const Dataset& data, const WeightSet& base);

// Held-out enhancement scores: mean L1 to the ground-truth segment before
// and after SMapNet, and the matching mean-IoU pair.
struct EnhancementEval {
    double l1_degraded = 0.0;
    double l1_enhanced = 0.0;
    double miou_degraded = 0.0;
    double miou_enhanced = 0.0;
};

EnhancementEval evaluate_enhancement(const WeightSet& w, const Dataset& data);

// Pixel accuracy of the trained segmenter on original images.
double segmenter_accuracy(const WeightSet& w, const Dataset& data);

}  // namespace edms
