#include "edms/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "edms/layer_codecs.hpp"
#include "edms/nets.hpp"
#include "edms/segmenter.hpp"

namespace edms {

// --- Adam --------------------------------------------------------------------

namespace {

void adam_step_scaled(std::span<float> params, std::span<const float> grads, float scale,
                      AdamState& st, float lr) {
    if (params.size() != grads.size()) throw TrainError("adam_step: size mismatch");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0f);
        st.v.assign(params.size(), 0.0f);
        st.step = 0;
    }
    st.step += 1;
    const float b1 = st.beta1, b2 = st.beta2;
    const float bc1 = 1.0f - std::pow(b1, float(st.step));
    const float bc2 = 1.0f - std::pow(b2, float(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i] * scale;
        st.m[i] = b1 * st.m[i] + (1.0f - b1) * g;
        st.v[i] = b2 * st.v[i] + (1.0f - b2) * g * g;
        const float mhat = st.m[i] / bc1;
        const float vhat = st.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

}  // namespace

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& st, float lr) {
    adam_step_scaled(params, grads, 1.0f, st, lr);
}

// --- dataset generator -------------------------------------------------------

namespace {

struct Rng {
    std::mt19937 g;
    bool has_spare = false;
    float spare = 0.0f;

    explicit Rng(uint64_t seed) : g(uint32_t(seed ^ (seed >> 32))) {}

    int below(int n) { return int(g() % uint32_t(n)); }
    int range(int lo, int hi) { return lo + below(hi - lo + 1); }
    float unit_open() { return float((g() >> 8) + 1) * (1.0f / 16777216.0f); }  // (0, 1]
    float normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        const float u1 = unit_open();
        const float u2 = unit_open();
        const float r = std::sqrt(-2.0f * std::log(u1));
        const float a = 6.2831853071795864769f * u2;
        spare = r * std::sin(a);
        has_spare = true;
        return r * std::cos(a);
    }
};

// Base colors for class 0 (background) and up to 15 shape classes.
constexpr uint8_t kClassColors[16][3] = {
    {40, 40, 48},    {210, 70, 60},  {70, 200, 80},  {60, 90, 210},
    {220, 200, 60},  {200, 60, 200}, {60, 200, 200}, {230, 140, 50},
    {140, 230, 50},  {50, 140, 230}, {230, 50, 140}, {140, 50, 230},
    {50, 230, 140},  {180, 180, 180}, {120, 80, 40}, {80, 120, 160},
};

uint8_t clamp_u8(int v) { return uint8_t(std::min(255, std::max(0, v))); }

void fill_pixel(Sample& s, int y, int x, int cls, int jitter) {
    for (int c = 0; c < 3; ++c) {
        s.image.at(y, x, c) = clamp_u8(int(kClassColors[cls][c]) + jitter);
    }
    s.labels.at(y, x) = uint8_t(cls);
}

}  // namespace

Dataset gen_dataset(uint64_t seed, int count, int size, int num_classes) {
    if (num_classes < 2 || num_classes > 16) throw TrainError("classes must be in [2, 16]");
    if (size < 8) throw TrainError("image size must be >= 8");
    Rng rng(seed);
    Dataset data;
    data.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) {
        Sample s{ImageU8(size, size), ClassMap(size, size)};
        const int bg_jitter = rng.range(-30, 30);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) fill_pixel(s, y, x, 0, bg_jitter);
        }
        const int shapes = rng.range(2, 5);
        for (int k = 0; k < shapes; ++k) {
            const int cls = 1 + rng.below(num_classes - 1);
            const int type = rng.below(3);
            const int jitter = rng.range(-40, 40);
            if (type == 0) {  // axis-aligned rectangle
                const int x0 = rng.below(size), y0 = rng.below(size);
                const int rw = rng.range(size / 8, size / 2);
                const int rh = rng.range(size / 8, size / 2);
                for (int y = y0; y < std::min(size, y0 + rh); ++y) {
                    for (int x = x0; x < std::min(size, x0 + rw); ++x) {
                        fill_pixel(s, y, x, cls, jitter);
                    }
                }
            } else if (type == 1) {  // circle
                const int cx = rng.below(size), cy = rng.below(size);
                const int r = rng.range(std::max(2, size / 10), size / 3);
                for (int y = std::max(0, cy - r); y <= std::min(size - 1, cy + r); ++y) {
                    for (int x = std::max(0, cx - r); x <= std::min(size - 1, cx + r); ++x) {
                        const int dx = x - cx, dy = y - cy;
                        if (dx * dx + dy * dy <= r * r) fill_pixel(s, y, x, cls, jitter);
                    }
                }
            } else {  // right triangle, one of four orientations
                const int x0 = rng.below(size), y0 = rng.below(size);
                const int side = rng.range(std::max(3, size / 6), size / 2);
                const int o = rng.below(4);
                for (int y = y0; y < std::min(size, y0 + side); ++y) {
                    for (int x = x0; x < std::min(size, x0 + side); ++x) {
                        const int dx = x - x0, dy = y - y0;
                        const bool in = o == 0   ? dx + dy < side
                                        : o == 1 ? dx >= dy
                                        : o == 2 ? dx <= dy
                                                 : dx + dy >= side - 1;
                        if (in) fill_pixel(s, y, x, cls, jitter);
                    }
                }
            }
        }
        for (std::size_t p = 0; p < s.image.data.size(); ++p) {
            s.image.data[p] = clamp_u8(int(s.image.data[p]) + int(std::lround(4.0f * rng.normal())));
        }
        data.push_back(std::move(s));
    }
    return data;
}

namespace {

std::string sample_stem(int i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04d", i);
    return buf;
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::string stem = sample_stem(int(i));
        write_ppm(data[i].image, dir / (stem + ".ppm"));
        write_pgm(data[i].labels, dir / (stem + ".pgm"));
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset data;
    for (int i = 0;; ++i) {
        const std::string stem = sample_stem(i);
        const auto ppm = dir / (stem + ".ppm");
        const auto pgm = dir / (stem + ".pgm");
        if (!std::filesystem::exists(ppm)) break;
        if (!std::filesystem::exists(pgm)) throw TrainError("unpaired sample: " + stem);
        Sample s{read_ppm(ppm), read_pgm(pgm)};
        if (s.image.w != s.labels.w || s.image.h != s.labels.h) {
            throw TrainError("image/label dim mismatch: " + stem);
        }
        data.push_back(std::move(s));
    }
    return data;
}

void write_loss_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw TrainError("cannot open loss log: " + path.string());
    f << "epoch,stage,loss\n";
    for (const auto& row : log) {
        f << row.epoch << "," << row.stage << "," << row.loss << "\n";
    }
}

// --- trainable layer machinery ----------------------------------------------

namespace {

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.dims == b.dims)) throw TensorError("add: shape mismatch");
    Tensor out(a.dims);
    for (std::size_t i = 0; i < a.count(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

void accumulate(Tensor& into, const Tensor& g) {
    for (std::size_t i = 0; i < into.count(); ++i) into.data[i] += g.data[i];
}

void accumulate(std::vector<float>& into, const std::vector<float>& g) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

struct TConv {
    ConvParams p;
    bool transpose = false;
    bool final_layer = false;
    Tensor gk;
    std::vector<float> gb;
    AdamState ak, ab;
    Tensor x_cache;

    void load(const WeightSet& w, const std::string& prefix) {
        const WeightEntry& k = w.get(prefix + ".kernel");
        p.kernel = Tensor(int(k.dims[0]), int(k.dims[1]), int(k.dims[2]), int(k.dims[3]));
        p.kernel.data = k.data;
        p.bias = w.get(prefix + ".bias").data;
        gk = Tensor(p.kernel.dims);
        gb.assign(p.bias.size(), 0.0f);
    }
    void store(WeightSet& w, const std::string& prefix) const {
        const auto& d = p.kernel.dims;
        w.put({prefix + ".kernel",
               {uint32_t(d.n), uint32_t(d.c), uint32_t(d.h), uint32_t(d.w)},
               p.kernel.data});
        w.put({prefix + ".bias", {uint32_t(p.bias.size())}, p.bias});
    }
    Tensor fwd(const Tensor& x, bool record) {
        if (record) x_cache = x;
        return transpose ? conv2d_transpose(x, p) : conv2d(x, p);
    }
    Tensor bwd(const Tensor& gout) {
        ConvGrads g = transpose ? conv2d_transpose_backward(x_cache, p, gout)
                                : conv2d_backward(x_cache, p, gout);
        accumulate(gk, g.kernel);
        accumulate(gb, g.bias);
        return std::move(g.x);
    }
    void zero() {
        std::fill(gk.data.begin(), gk.data.end(), 0.0f);
        std::fill(gb.begin(), gb.end(), 0.0f);
    }
    void step(float lr, float final_factor, float scale) {
        const float l = final_layer ? lr * final_factor : lr;
        adam_step_scaled(p.kernel.data, gk.data, scale, ak, l);
        adam_step_scaled(p.bias, gb, scale, ab, l);
        zero();
    }
};

struct TNorm {
    NormParams p;
    std::vector<float> gg, gb;
    AdamState ag, ab;
    Tensor x_cache;

    void init(int c) {
        p.gamma.assign(c, 1.0f);
        p.beta.assign(c, 0.0f);
        gg.assign(c, 0.0f);
        gb.assign(c, 0.0f);
    }
    void load(const WeightSet& w, const std::string& prefix) {
        p.gamma = w.get(prefix + ".gamma").data;
        p.beta = w.get(prefix + ".beta").data;
        gg.assign(p.gamma.size(), 0.0f);
        gb.assign(p.beta.size(), 0.0f);
    }
    void store(WeightSet& w, const std::string& prefix) const {
        w.put({prefix + ".gamma", {uint32_t(p.gamma.size())}, p.gamma});
        w.put({prefix + ".beta", {uint32_t(p.beta.size())}, p.beta});
    }
    Tensor fwd(const Tensor& x, bool record) {
        if (record) x_cache = x;
        return instance_norm(x, p);
    }
    Tensor bwd(const Tensor& gout) {
        NormGrads g = instance_norm_backward(x_cache, p, gout);
        accumulate(gg, g.gamma);
        accumulate(gb, g.beta);
        return std::move(g.x);
    }
    void zero() {
        std::fill(gg.begin(), gg.end(), 0.0f);
        std::fill(gb.begin(), gb.end(), 0.0f);
    }
    void step(float lr, float scale) {
        adam_step_scaled(p.gamma, gg, scale, ag, lr);
        adam_step_scaled(p.beta, gb, scale, ab, lr);
        zero();
    }
};

// c/u layer: conv (or up-conv) + optional instance norm + activation.
struct TLayer {
    TConv conv;
    bool norm = true;
    TNorm in;
    char act = 'r';  // 'r' | 't' | 'n'
    Tensor act_cache;

    void load(const WeightSet& w, const std::string& prefix) {
        conv.load(w, prefix);
        if (norm) in.load(w, prefix);
    }
    void store(WeightSet& w, const std::string& prefix) const {
        conv.store(w, prefix);
        if (norm) in.store(w, prefix);
    }
    Tensor fwd(const Tensor& x, bool record) {
        Tensor y = conv.fwd(x, record);
        if (norm) y = in.fwd(y, record);
        if (act == 'r') {
            if (record) act_cache = y;
            return relu(y);
        }
        if (act == 't') {
            Tensor t = tanh_act(y);
            if (record) act_cache = t;
            return t;
        }
        return y;
    }
    Tensor bwd(Tensor gout) {
        if (act == 'r') gout = relu_backward(act_cache, gout);
        if (act == 't') gout = tanh_backward(act_cache, gout);
        if (norm) gout = in.bwd(gout);
        return conv.bwd(gout);
    }
    void zero() {
        conv.zero();
        if (norm) in.zero();
    }
    void step(float lr, float ff, float scale) {
        conv.step(lr, ff, scale);
        if (norm) in.step(lr, scale);
    }
};

// conv-IN-relu-conv-IN + identity, no post-add activation.
struct TRes {
    TConv c0, c1;
    TNorm n0, n1;
    Tensor relu_cache;

    void load(const WeightSet& w, const std::string& prefix) {
        c0.load(w, prefix + ".c0");
        n0.load(w, prefix + ".c0");
        c1.load(w, prefix + ".c1");
        n1.load(w, prefix + ".c1");
    }
    void store(WeightSet& w, const std::string& prefix) const {
        c0.store(w, prefix + ".c0");
        n0.store(w, prefix + ".c0");
        c1.store(w, prefix + ".c1");
        n1.store(w, prefix + ".c1");
    }
    Tensor fwd(const Tensor& x, bool record) {
        Tensor y = n0.fwd(c0.fwd(x, record), record);
        if (record) relu_cache = y;
        y = n1.fwd(c1.fwd(relu(y), record), record);
        return add(x, y);
    }
    Tensor bwd(const Tensor& gout) {
        Tensor g = c1.bwd(n1.bwd(gout));
        g = relu_backward(relu_cache, g);
        g = c0.bwd(n0.bwd(g));
        return add(g, gout);
    }
    void zero() {
        c0.zero();
        n0.zero();
        c1.zero();
        n1.zero();
    }
    void step(float lr, float ff, float scale) {
        c0.step(lr, ff, scale);
        n0.step(lr, scale);
        c1.step(lr, ff, scale);
        n1.step(lr, scale);
    }
};

// Nine applications of a shared (C1, C2) pair:
// x_{t+1} = relu(x0 + C2(relu(C1(x_t)))).
struct TRecursion {
    TConv c1, c2;
    std::vector<Tensor> xt_cache, u_cache, s_cache;

    void load(const WeightSet& w, const std::string& prefix) {
        c1.load(w, prefix + ".c1");
        c2.load(w, prefix + ".c2");
    }
    void store(WeightSet& w, const std::string& prefix) const {
        c1.store(w, prefix + ".c1");
        c2.store(w, prefix + ".c2");
    }
    Tensor fwd(const Tensor& x0, bool record) {
        if (record) {
            xt_cache.clear();
            u_cache.clear();
            s_cache.clear();
        }
        Tensor xt = x0;
        for (int t = 0; t < kSmapnetRecursions; ++t) {
            if (record) xt_cache.push_back(xt);
            Tensor u = conv2d(xt, c1.p);
            if (record) u_cache.push_back(u);
            Tensor v = conv2d(relu(u), c2.p);
            Tensor s = add(x0, v);
            if (record) s_cache.push_back(s);
            xt = relu(s);
        }
        return xt;
    }
    Tensor bwd(Tensor gout) {
        Tensor gx0(xt_cache[0].dims);
        for (int t = kSmapnetRecursions - 1; t >= 0; --t) {
            const Tensor gs = relu_backward(s_cache[t], gout);
            accumulate(gx0, gs);
            // through C2 and its relu input
            c2.x_cache = relu(u_cache[t]);
            Tensor gur = c2.bwd(gs);
            Tensor gu = relu_backward(u_cache[t], gur);
            c1.x_cache = xt_cache[t];
            gout = c1.bwd(gu);
        }
        return add(gx0, gout);  // chain into x0 via the first x_t = x0
    }
    void zero() {
        c1.zero();
        c2.zero();
    }
    void step(float lr, float ff, float scale) {
        c1.step(lr, ff, scale);
        c2.step(lr, ff, scale);
    }
};

struct TCompNet {
    std::array<TLayer, 5> l;

    void configure() {
        l[4].norm = false;
        l[4].act = 't';
        l[4].conv.final_layer = true;
        l[1].conv.p.stride = l[2].conv.p.stride = l[3].conv.p.stride = 2;
    }
    void load(const WeightSet& w) {
        configure();
        for (int i = 0; i < 5; ++i) l[i].load(w, "compnet.l" + std::to_string(i));
    }
    void store(WeightSet& w) const {
        for (int i = 0; i < 5; ++i) l[i].store(w, "compnet.l" + std::to_string(i));
    }
    Tensor fwd(const Tensor& x, bool record) {
        Tensor y = x;
        for (auto& layer : l) y = layer.fwd(y, record);
        return y;
    }
    Tensor bwd(Tensor g) {
        for (int i = 4; i >= 0; --i) g = l[i].bwd(std::move(g));
        return g;
    }
    void step(float lr, float ff, float scale) {
        for (auto& layer : l) layer.step(lr, ff, scale);
    }
};

struct TFineNet {
    std::array<TLayer, 4> down;
    std::array<TRes, 9> res;
    std::array<TLayer, 3> up;
    TLayer tail;

    void configure() {
        for (int i = 1; i < 4; ++i) down[i].conv.p.stride = 2;
        for (auto& u : up) u.conv.transpose = true;
        tail.norm = false;
        tail.act = 't';
        tail.conv.final_layer = true;
    }
    void load(const WeightSet& w) {
        configure();
        for (int i = 0; i < 4; ++i) down[i].load(w, "finenet.l" + std::to_string(i));
        for (int i = 0; i < 9; ++i) res[i].load(w, "finenet.res" + std::to_string(i));
        for (int i = 0; i < 3; ++i) up[i].load(w, "finenet.u" + std::to_string(i));
        tail.load(w, "finenet.l4");
    }
    void store(WeightSet& w) const {
        for (int i = 0; i < 4; ++i) down[i].store(w, "finenet.l" + std::to_string(i));
        for (int i = 0; i < 9; ++i) res[i].store(w, "finenet.res" + std::to_string(i));
        for (int i = 0; i < 3; ++i) up[i].store(w, "finenet.u" + std::to_string(i));
        tail.store(w, "finenet.l4");
    }
    Tensor fwd(const Tensor& x, bool record) {
        Tensor y = x;
        for (auto& layer : down) y = layer.fwd(y, record);
        for (auto& block : res) y = block.fwd(y, record);
        for (auto& layer : up) y = layer.fwd(y, record);
        return tail.fwd(y, record);
    }
    Tensor bwd(Tensor g) {
        g = tail.bwd(std::move(g));
        for (int i = 2; i >= 0; --i) g = up[i].bwd(std::move(g));
        for (int i = 8; i >= 0; --i) g = res[i].bwd(g);
        for (int i = 3; i >= 0; --i) g = down[i].bwd(std::move(g));
        return g;
    }
    void step(float lr, float ff, float scale) {
        for (auto& layer : down) layer.step(lr, ff, scale);
        for (auto& block : res) block.step(lr, ff, scale);
        for (auto& layer : up) layer.step(lr, ff, scale);
        tail.step(lr, ff, scale);
    }
};

struct TSMapNet {
    TLayer head;
    TRecursion rec;
    TConv tail;

    void load(const WeightSet& w) {
        head.load(w, "smapnet.l0");
        rec.load(w, "smapnet.rec");
        tail.load(w, "smapnet.l1");
        tail.final_layer = true;
    }
    void store(WeightSet& w) const {
        head.store(w, "smapnet.l0");
        rec.store(w, "smapnet.rec");
        tail.store(w, "smapnet.l1");
    }
    Tensor fwd(const Tensor& x, bool record) {
        return tail.fwd(rec.fwd(head.fwd(x, record), record), record);
    }
    Tensor bwd(Tensor g) { return head.bwd(rec.bwd(tail.bwd(g))); }
    void step(float lr, float ff, float scale) {
        head.step(lr, ff, scale);
        rec.step(lr, ff, scale);
        tail.step(lr, ff, scale);
    }
};

struct TSegmenter {
    std::array<TLayer, 3> l;

    void configure() {
        l[2].norm = false;
        l[2].act = 'n';
        l[2].conv.final_layer = true;
    }
    void load(const WeightSet& w) {
        configure();
        for (int i = 0; i < 3; ++i) l[i].load(w, "segmenter.l" + std::to_string(i));
    }
    void store(WeightSet& w) const {
        for (int i = 0; i < 3; ++i) l[i].store(w, "segmenter.l" + std::to_string(i));
    }
    Tensor fwd(const Tensor& x, bool record) {
        Tensor y = x;
        for (auto& layer : l) y = layer.fwd(y, record);
        return y;
    }
    Tensor bwd(Tensor g) {
        for (int i = 2; i >= 0; --i) g = l[i].bwd(std::move(g));
        return g;
    }
    void step(float lr, float ff, float scale) {
        for (auto& layer : l) layer.step(lr, ff, scale);
    }
};

void check_finite_loss(double loss, const char* stage) {
    if (!std::isfinite(loss)) {
        throw TrainError(std::string(stage) + ": training diverged (non-finite loss)");
    }
}

// Degraded segment exactly as the codec computes it (encode steps 3-6).
Tensor degraded_segment(const Sample& s, const WeightSet& w, const Palette& palette) {
    const Tensor compact = forward_compnet(normalize_image(s.image), w);
    const ImageU8 compact_u8 = denormalize_image(compact);
    const Tensor up =
        normalize_float(bilinear_resize(image_as_float(compact_u8), s.image.h, s.image.w));
    const ClassMap seg = forward_segmenter(up, w, palette.size);
    return normalize_image(colorize(seg, palette));
}

}  // namespace

// --- training stages ---------------------------------------------------------

TrainResult train_segmenter(const TrainConfig& cfg, const Dataset& data) {
    if (data.empty()) throw TrainError("train_segmenter: empty dataset");
    const WeightSet init = init_weights(cfg.seed, cfg.classes);
    TSegmenter net;
    net.load(init);

    TrainResult out;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < data.size(); start += std::size_t(cfg.batch)) {
            const std::size_t end = std::min(data.size(), start + std::size_t(cfg.batch));
            for (std::size_t i = start; i < end; ++i) {
                const Tensor logits = net.fwd(normalize_image(data[i].image), true);
                auto [loss, grad] = softmax_xent(logits, data[i].labels.data);
                epoch_loss += loss;
                net.bwd(std::move(grad));
            }
            net.step(cfg.lr, cfg.final_lr_factor, 1.0f / float(end - start));
        }
        epoch_loss /= double(data.size());
        check_finite_loss(epoch_loss, "segmenter");
        out.log.push_back({epoch, "segmenter", epoch_loss});
    }
    net.store(out.weights);
    return out;
}

TrainResult train_base(const TrainConfig& cfg, const Dataset& data, const WeightSet& carry) {
    if (data.empty()) throw TrainError("train_base: empty dataset");
    const WeightSet init = init_weights(cfg.seed, cfg.classes);
    TCompNet comp;
    TFineNet fine;
    comp.load(init);
    fine.load(init);
    const Palette palette = default_palette(cfg.classes);

    TrainResult out;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < data.size(); start += std::size_t(cfg.batch)) {
            const std::size_t end = std::min(data.size(), start + std::size_t(cfg.batch));
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = data[i];
                const Tensor x = normalize_image(s.image);
                const Tensor gt_seg = normalize_image(colorize(s.labels, palette));

                const Tensor compact = comp.fwd(x, true);
                const Tensor up = bilinear_resize(compact, s.image.h, s.image.w);

                Tensor cat(1, 6, up.dims.h, up.dims.w);
                const std::size_t plane = std::size_t(up.dims.h) * up.dims.w;
                for (int c = 0; c < 3; ++c) {
                    std::copy_n(up.plane(0, c), plane, cat.plane(0, c));
                    std::copy_n(gt_seg.plane(0, c), plane, cat.plane(0, c + 3));
                }
                const Tensor synth = fine.fwd(cat, true);

                auto [loss_synth, g_synth] = l1_loss(synth, x);
                auto [loss_up, g_up] = l1_loss(up, x);
                epoch_loss += double(loss_synth) + double(loss_up);

                const Tensor g_cat = fine.bwd(std::move(g_synth));
                for (int c = 0; c < 3; ++c) {
                    const float* src = g_cat.plane(0, c);
                    float* dst = g_up.plane(0, c);
                    for (std::size_t j = 0; j < plane; ++j) dst[j] += src[j];
                }
                comp.bwd(bilinear_resize_backward(compact.dims, g_up));
            }
            const float scale = 1.0f / float(end - start);
            comp.step(cfg.lr, cfg.final_lr_factor, scale);
            fine.step(cfg.lr, cfg.final_lr_factor, scale);
        }
        epoch_loss /= double(data.size());
        check_finite_loss(epoch_loss, "base");
        out.log.push_back({epoch, "base", epoch_loss});
    }
    for (const auto& e : carry.entries()) out.weights.put(e);
    comp.store(out.weights);
    fine.store(out.weights);
    return out;
}

TrainResult train_smapnet(const TrainConfig& cfg, const Dataset& data, const WeightSet& base) {
    if (data.empty()) throw TrainError("train_smapnet: empty dataset");
    for (const char* prefix : {"compnet.", "finenet.", "segmenter."}) {
        if (!base.has_prefix(prefix)) {
            throw TrainError(std::string("train_smapnet: base weights missing ") + prefix);
        }
    }
    const Palette palette = default_palette(segmenter_classes(base));

    // The degraded segments are pure functions of the frozen base weights:
    // compute each pair once.
    std::vector<Tensor> degraded, target;
    degraded.reserve(data.size());
    target.reserve(data.size());
    for (const Sample& s : data) {
        degraded.push_back(degraded_segment(s, base, palette));
        target.push_back(normalize_image(colorize(s.labels, palette)));
    }

    const WeightSet init = init_weights(cfg.seed, palette.size);
    TSMapNet net;
    net.load(init);

    TrainResult out;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < data.size(); start += std::size_t(cfg.batch)) {
            const std::size_t end = std::min(data.size(), start + std::size_t(cfg.batch));
            for (std::size_t i = start; i < end; ++i) {
                const Tensor raw = net.fwd(degraded[i], true);
                const Tensor enhanced = clamp_unit(raw);
                auto [loss, grad] = l1_loss(enhanced, target[i]);
                epoch_loss += loss;
                net.bwd(clamp_unit_backward(raw, grad));
            }
            net.step(cfg.lr, cfg.final_lr_factor, 1.0f / float(end - start));
        }
        epoch_loss /= double(data.size());
        check_finite_loss(epoch_loss, "smapnet");
        out.log.push_back({epoch, "smapnet", epoch_loss});
    }
    for (const auto& e : base.entries()) out.weights.put(e);
    net.store(out.weights);
    return out;
}

EnhancementEval evaluate_enhancement(const WeightSet& w, const Dataset& data) {
    if (data.empty()) throw TrainError("evaluate_enhancement: empty dataset");
    const Palette palette = default_palette(segmenter_classes(w));
    EnhancementEval ev;
    for (const Sample& s : data) {
        const Tensor deg = degraded_segment(s, w, palette);
        const Tensor enhanced = clamp_unit(forward_smapnet(deg, w));
        const Tensor gt = normalize_image(colorize(s.labels, palette));
        ev.l1_degraded += double(l1_loss(deg, gt).first);
        ev.l1_enhanced += double(l1_loss(enhanced, gt).first);
        const ClassMap deg_classes = snap_to_palette(denormalize_image(deg), palette);
        const ClassMap enh_classes = snap_to_palette(denormalize_image(enhanced), palette);
        ev.miou_degraded += segment_scores(deg_classes, s.labels, palette.size).second;
        ev.miou_enhanced += segment_scores(enh_classes, s.labels, palette.size).second;
    }
    const double n = double(data.size());
    ev.l1_degraded /= n;
    ev.l1_enhanced /= n;
    ev.miou_degraded /= n;
    ev.miou_enhanced /= n;
    return ev;
}

double segmenter_accuracy(const WeightSet& w, const Dataset& data) {
    if (data.empty()) throw TrainError("segmenter_accuracy: empty dataset");
    const int L = segmenter_classes(w);
    double acc = 0.0;
    for (const Sample& s : data) {
        const ClassMap pred = forward_segmenter(normalize_image(s.image), w, L);
        acc += segment_scores(pred, s.labels, L).first;
    }
    return acc / double(data.size());
}

}  // namespace edms
