#include "edms/nets.hpp"

#include <random>

namespace edms {

NetTopology compnet_topology() {
    return {"compnet",
            3,
            {{"compnet.l0", 'c', 7, 64, 1, true, 'r'},
             {"compnet.l1", 'c', 3, 128, 2, true, 'r'},
             {"compnet.l2", 'c', 3, 256, 2, true, 'r'},
             {"compnet.l3", 'c', 3, 512, 2, true, 'r'},
             {"compnet.l4", 'c', 7, 3, 1, false, 't'}}};
}

NetTopology finenet_topology() {
    NetTopology t{"finenet",
                  6,
                  {{"finenet.l0", 'c', 7, 64, 1, true, 'r'},
                   {"finenet.l1", 'c', 3, 128, 2, true, 'r'},
                   {"finenet.l2", 'c', 3, 256, 2, true, 'r'},
                   {"finenet.l3", 'c', 3, 512, 2, true, 'r'}}};
    for (int i = 0; i < 9; ++i) {
        t.layers.push_back({"finenet.res" + std::to_string(i), 'r', 3, 512, 1, true, 'n'});
    }
    t.layers.push_back({"finenet.u0", 'u', 3, 256, 1, true, 'r'});
    t.layers.push_back({"finenet.u1", 'u', 3, 128, 1, true, 'r'});
    t.layers.push_back({"finenet.u2", 'u', 3, 64, 1, true, 'r'});
    t.layers.push_back({"finenet.l4", 'c', 7, 3, 1, false, 't'});
    return t;
}

NetTopology smapnet_topology() {
    return {"smapnet",
            3,
            {{"smapnet.l0", 'c', 3, 64, 1, true, 'r'},
             {"smapnet.rec", 'v', 3, 64, 1, false, 'r'},
             {"smapnet.l1", 'c', 3, 3, 1, false, 'n'}}};
}

NetTopology segmenter_topology(int seg_classes) {
    return {"segmenter",
            3,
            {{"segmenter.l0", 'c', 3, 16, 1, true, 'r'},
             {"segmenter.l1", 'c', 3, 32, 1, true, 'r'},
             {"segmenter.l2", 'c', 3, seg_classes, 1, false, 'n'}}};
}

namespace {

ConvView conv_view(const WeightSet& w, const std::string& prefix, int stride) {
    const WeightEntry& k = w.get(prefix + ".kernel");
    const WeightEntry& b = w.get(prefix + ".bias");
    if (k.dims.size() != 4 || k.dims[2] != k.dims[3]) {
        throw WeightError("bad kernel dims for " + prefix);
    }
    if (b.dims.size() != 1 || b.dims[0] != k.dims[0]) {
        throw WeightError("bad bias dims for " + prefix);
    }
    return {k.data.data(), int(k.dims[0]), int(k.dims[1]), int(k.dims[2]),
            b.data.data(), stride};
}

Tensor apply_norm(const WeightSet& w, const std::string& prefix, const Tensor& x) {
    const WeightEntry& g = w.get(prefix + ".gamma");
    const WeightEntry& b = w.get(prefix + ".beta");
    if (g.data.size() != std::size_t(x.dims.c) || b.data.size() != std::size_t(x.dims.c)) {
        throw WeightError("bad gamma/beta dims for " + prefix);
    }
    return instance_norm(x, g.data.data(), b.data.data(), 1e-5f);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.dims == b.dims)) throw TensorError("add: shape mismatch");
    Tensor out(a.dims);
    for (std::size_t i = 0; i < a.count(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Tensor apply_layer(const WeightSet& w, const LayerSpec& l, Tensor x) {
    switch (l.kind) {
        case 'c':
            x = conv2d(x, conv_view(w, l.name, l.stride));
            break;
        case 'u':
            x = conv2d_transpose(x, conv_view(w, l.name, 1));
            break;
        case 'r': {
            Tensor y = conv2d(x, conv_view(w, l.name + ".c0", 1));
            y = apply_norm(w, l.name + ".c0", y);
            y = relu(y);
            y = conv2d(y, conv_view(w, l.name + ".c1", 1));
            y = apply_norm(w, l.name + ".c1", y);
            return add(x, y);
        }
        case 'v': {
            const ConvView c1 = conv_view(w, l.name + ".c1", 1);
            const ConvView c2 = conv_view(w, l.name + ".c2", 1);
            const Tensor x0 = x;
            for (int t = 0; t < kSmapnetRecursions; ++t) {
                x = relu(add(x0, conv2d(relu(conv2d(x, c1)), c2)));
            }
            return x;
        }
        default:
            throw TensorError("unknown layer kind");
    }
    if (l.norm) x = apply_norm(w, l.name, x);
    if (l.act == 'r') x = relu(x);
    if (l.act == 't') x = tanh_act(x);
    return x;
}

Tensor run_net(const NetTopology& t, const WeightSet& w, Tensor x) {
    for (const LayerSpec& l : t.layers) x = apply_layer(w, l, std::move(x));
    return x;
}

}  // namespace

Tensor forward_compnet(const Tensor& img_norm, const WeightSet& w) {
    if (img_norm.dims.h % 8 != 0 || img_norm.dims.w % 8 != 0) {
        throw TensorError("forward_compnet: dims must be multiples of 8");
    }
    return run_net(compnet_topology(), w, img_norm);
}

Tensor forward_finenet(const Tensor& up_norm, const Tensor& seg, const WeightSet& w) {
    if (!(up_norm.dims == seg.dims)) throw TensorError("forward_finenet: dim mismatch");
    Tensor x(up_norm.dims.n, 6, up_norm.dims.h, up_norm.dims.w);
    const std::size_t plane = std::size_t(up_norm.dims.h) * up_norm.dims.w;
    for (int n = 0; n < up_norm.dims.n; ++n) {
        for (int c = 0; c < 3; ++c) {
            std::copy_n(up_norm.plane(n, c), plane, x.plane(n, c));
            std::copy_n(seg.plane(n, c), plane, x.plane(n, c + 3));
        }
    }
    return run_net(finenet_topology(), w, std::move(x));
}

Tensor forward_smapnet(const Tensor& seg_degraded, const WeightSet& w) {
    return run_net(smapnet_topology(), w, seg_degraded);
}

Tensor forward_segmenter_logits(const Tensor& img_norm, const WeightSet& w) {
    return run_net(segmenter_topology(segmenter_classes(w)), w, img_norm);
}

int segmenter_classes(const WeightSet& w) {
    const WeightEntry& k = w.get("segmenter.l2.kernel");
    return int(k.dims[0]);
}

namespace {

void init_conv(WeightSet& w, std::mt19937& rng, const std::string& prefix, int out_c,
               int in_c, int s, bool norm) {
    const float bound = std::sqrt(1.0f / (float(in_c) * float(s) * float(s)));
    WeightEntry k{prefix + ".kernel",
                  {uint32_t(out_c), uint32_t(in_c), uint32_t(s), uint32_t(s)},
                  {}};
    k.data.resize(k.count());
    for (float& v : k.data) {
        // 24-bit mantissa draw keeps the mapping identical everywhere.
        const float u = float(rng() >> 8) * (1.0f / 16777216.0f);
        v = (2.0f * u - 1.0f) * bound;
    }
    w.put(std::move(k));
    w.put({prefix + ".bias", {uint32_t(out_c)}, std::vector<float>(out_c, 0.0f)});
    if (norm) {
        w.put({prefix + ".gamma", {uint32_t(out_c)}, std::vector<float>(out_c, 1.0f)});
        w.put({prefix + ".beta", {uint32_t(out_c)}, std::vector<float>(out_c, 0.0f)});
    }
}

void init_net(WeightSet& w, std::mt19937& rng, const NetTopology& t) {
    int in_c = t.in_channels;
    for (const LayerSpec& l : t.layers) {
        switch (l.kind) {
            case 'c':
            case 'u':
                init_conv(w, rng, l.name, l.filters, in_c, l.s, l.norm);
                break;
            case 'r':
                init_conv(w, rng, l.name + ".c0", l.filters, in_c, l.s, true);
                init_conv(w, rng, l.name + ".c1", l.filters, l.filters, l.s, true);
                break;
            case 'v':
                init_conv(w, rng, l.name + ".c1", l.filters, in_c, l.s, false);
                init_conv(w, rng, l.name + ".c2", l.filters, l.filters, l.s, false);
                break;
        }
        in_c = l.filters;
    }
}

}  // namespace

WeightSet init_weights(uint64_t seed, int seg_classes) {
    WeightSet w;
    std::mt19937 rng(uint32_t(seed ^ (seed >> 32)));
    init_net(w, rng, compnet_topology());
    init_net(w, rng, finenet_topology());
    init_net(w, rng, smapnet_topology());
    init_net(w, rng, segmenter_topology(seg_classes));
    return w;
}

}  // namespace edms
