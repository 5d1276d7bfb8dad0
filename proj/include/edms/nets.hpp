#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edms/tensor.hpp"
#include "edms/weights.hpp"

namespace edms {

// Layer vocabulary shared by every network description:
//   kind 'c'  s×s conv, stride per entry, instance norm + activation
//   kind 'u'  3×3 fractional-strided conv (×2 up), instance norm + ReLU
//   kind 'r'  residual block: conv-IN-relu-conv-IN + identity
//   kind 'v'  shared-weight recursive unit (two 3×3 convs)
struct LayerSpec {
    std::string name;  // weight-name prefix, e.g. "finenet.l0"
    char kind = 'c';
    int s = 3;
    int filters = 0;
    int stride = 1;
    bool norm = true;
    char act = 'r';  // 'r' relu, 't' tanh, 'n' none
};

struct NetTopology {
    std::string name;
    int in_channels = 0;
    std::vector<LayerSpec> layers;
};

// The four fixed topologies. seg_classes parameterizes the segmenter head.
NetTopology compnet_topology();
NetTopology finenet_topology();
NetTopology smapnet_topology();
NetTopology segmenter_topology(int seg_classes);

// Inference forwards. Pure functions of (input bytes, WeightSet bytes);
// safe to call concurrently on a shared WeightSet.

// H, W multiples of 8, values in [-1, 1] -> 1×3×H/8×W/8 in (-1, 1).
Tensor forward_compnet(const Tensor& img_norm, const WeightSet& w);

// Channel-concatenates the up-sampled image and the segment map (6 input
// channels); output has the input spatial dims, values in (-1, 1).
Tensor forward_finenet(const Tensor& up_norm, const Tensor& seg, const WeightSet& w);

// x0 = head output; nine shared-weight recursions
// x_{t+1} = relu(x0 + C2(relu(C1(x_t)))); 3×3 tail conv with no activation.
// Output is unbounded; callers clamp.
Tensor forward_smapnet(const Tensor& seg_degraded, const WeightSet& w);

// Class logits (1×L×H×W), no activation on the final layer.
Tensor forward_segmenter_logits(const Tensor& img_norm, const WeightSet& w);

inline constexpr int kSmapnetRecursions = 9;

// Seeded random initialization of all four networks (uniform ±sqrt(1/fan_in)
// kernels, zero biases, unit gamma). Deterministic for a given seed.
WeightSet init_weights(uint64_t seed, int seg_classes);

// Number of classes the stored segmenter head supports.
int segmenter_classes(const WeightSet& w);

}  // namespace edms
