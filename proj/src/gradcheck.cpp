#include "edms/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "edms/tensor.hpp"

namespace edms {

const char* op_name(OpId op) {
    switch (op) {
        case OpId::Conv2d: return "conv2d";
        case OpId::Conv2dTranspose: return "conv2d_transpose";
        case OpId::InstanceNorm: return "instance_norm";
        case OpId::Relu: return "relu";
        case OpId::TanhAct: return "tanh_act";
        case OpId::BilinearResize: return "bilinear_resize";
        case OpId::ClampUnit: return "clamp_unit";
        case OpId::L1Loss: return "l1_loss";
        case OpId::SoftmaxXent: return "softmax_xent";
    }
    return "?";
}

std::vector<OpId> all_checked_ops() {
    return {OpId::Conv2d,         OpId::Conv2dTranspose, OpId::InstanceNorm,
            OpId::Relu,           OpId::TanhAct,         OpId::BilinearResize,
            OpId::ClampUnit,      OpId::L1Loss,          OpId::SoftmaxXent};
}

namespace {

constexpr double kStep = 1e-4;

struct Trial {
    // J as a float64 function of the flattened check point.
    std::function<double(const std::vector<double>&)> eval64;
    std::vector<double> point;    // from the float32 values
    std::vector<float> analytic;  // float32 backward, same flattening
};

struct Rng {
    std::mt19937 g;
    explicit Rng(uint64_t seed) : g(uint32_t(seed ^ (seed >> 32))) {}
    int range(int lo, int hi) { return lo + int(g() % uint32_t(hi - lo + 1)); }
    // uniform in (-1, 1), nudged away from zero by `margin`
    float value(float margin = 0.0f) {
        const float u = float((g() >> 8) + 1) * (1.0f / 16777216.0f);
        float v = 2.0f * u - 1.0f;
        if (margin > 0.0f) v += v >= 0.0f ? margin : -margin;
        return v;
    }
    Tensor tensor(Dims d, float margin = 0.0f) {
        Tensor t(d);
        for (float& v : t.data) v = value(margin);
        return t;
    }
};

double inner64(const Tensor& f32_upstream, const TensorT<double>& out) {
    double j = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        j += double(f32_upstream.data[i]) * out.data[i];
    }
    return j;
}

std::vector<double> flatten(std::initializer_list<const std::vector<float>*> parts) {
    std::vector<double> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

std::vector<float> flatten32(std::initializer_list<const std::vector<float>*> parts) {
    std::vector<float> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

Trial make_conv_trial(Rng& rng, bool transpose) {
    const int in_c = rng.range(1, 3);
    const int out_c = rng.range(1, 3);
    const int s = transpose ? 3 : (rng.range(0, 1) ? 3 : 1);
    const int stride = transpose ? 1 : rng.range(1, 2);
    const int pad = (s - 1) / 2;
    const int h = rng.range(std::max(2, pad), 5);
    const int w = rng.range(std::max(2, pad), 5);

    ConvParams p;
    p.kernel = rng.tensor({out_c, in_c, s, s});
    p.bias.resize(out_c);
    for (float& b : p.bias) b = rng.value();
    p.stride = stride;
    const Tensor x = rng.tensor({1, in_c, h, w});

    const Tensor out = transpose ? conv2d_transpose(x, p) : conv2d(x, p);
    const Tensor upstream = rng.tensor(out.dims);
    const ConvGrads g = transpose ? conv2d_transpose_backward(x, p, upstream)
                                  : conv2d_backward(x, p, upstream);

    Trial t;
    t.point = flatten({&x.data, &p.kernel.data, &p.bias});
    t.analytic = flatten32({&g.x.data, &g.kernel.data, &g.bias});
    const Dims xd = x.dims, kd = p.kernel.dims;
    t.eval64 = [=](const std::vector<double>& v) {
        TensorT<double> x64(xd);
        ConvParamsT<double> p64;
        p64.kernel = TensorT<double>(kd);
        p64.bias.resize(std::size_t(out_c));
        p64.stride = stride;
        std::size_t k = 0;
        for (auto& e : x64.data) e = v[k++];
        for (auto& e : p64.kernel.data) e = v[k++];
        for (auto& e : p64.bias) e = v[k++];
        const TensorT<double> out64 = transpose ? conv2d_transpose(x64, p64) : conv2d(x64, p64);
        return inner64(upstream, out64);
    };
    return t;
}

Trial make_norm_trial(Rng& rng) {
    const int c = rng.range(1, 3);
    const int h = rng.range(2, 5);
    const int w = rng.range(2, 5);
    NormParams p;
    p.gamma.resize(c);
    p.beta.resize(c);
    for (float& v : p.gamma) v = rng.value() + 1.5f;  // keep gamma away from 0
    for (float& v : p.beta) v = rng.value();
    const Tensor x = rng.tensor({1, c, h, w});

    const Tensor out = instance_norm(x, p);
    const Tensor upstream = rng.tensor(out.dims);
    const NormGrads g = instance_norm_backward(x, p, upstream);

    Trial t;
    t.point = flatten({&x.data, &p.gamma, &p.beta});
    t.analytic = flatten32({&g.x.data, &g.gamma, &g.beta});
    const Dims xd = x.dims;
    const float eps = p.epsilon;
    t.eval64 = [=](const std::vector<double>& v) {
        TensorT<double> x64(xd);
        NormParamsT<double> p64;
        p64.gamma.resize(std::size_t(c));
        p64.beta.resize(std::size_t(c));
        p64.epsilon = double(eps);
        std::size_t k = 0;
        for (auto& e : x64.data) e = v[k++];
        for (auto& e : p64.gamma) e = v[k++];
        for (auto& e : p64.beta) e = v[k++];
        return inner64(upstream, instance_norm(x64, p64));
    };
    return t;
}

enum class Pointwise { Relu, Tanh, Clamp };

Trial make_pointwise_trial(Rng& rng, Pointwise kind) {
    const Dims d{1, rng.range(1, 3), rng.range(1, 5), rng.range(1, 5)};
    // keep samples away from the relu/clamp kinks
    const float margin = kind == Pointwise::Tanh ? 0.0f : 0.05f;
    Tensor x = rng.tensor(d, margin);
    if (kind == Pointwise::Clamp) {
        // spread values so both branches appear but stay off the +-1 kinks
        for (float& v : x.data) v *= 1.4f;
        for (float& v : x.data) {
            if (std::abs(std::abs(v) - 1.0f) < 0.05f) v *= 1.2f;
        }
    }

    const Tensor upstream = rng.tensor(d);
    Tensor analytic;
    switch (kind) {
        case Pointwise::Relu: analytic = relu_backward(x, upstream); break;
        case Pointwise::Tanh: analytic = tanh_backward(tanh_act(x), upstream); break;
        case Pointwise::Clamp: analytic = clamp_unit_backward(x, upstream); break;
    }

    Trial t;
    t.point = flatten({&x.data});
    t.analytic = analytic.data;
    t.eval64 = [=](const std::vector<double>& v) {
        TensorT<double> x64(d);
        for (std::size_t i = 0; i < v.size(); ++i) x64.data[i] = v[i];
        TensorT<double> out;
        switch (kind) {
            case Pointwise::Relu: out = relu(x64); break;
            case Pointwise::Tanh: out = tanh_act(x64); break;
            case Pointwise::Clamp: out = clamp_unit(x64); break;
        }
        return inner64(upstream, out);
    };
    return t;
}

Trial make_bilinear_trial(Rng& rng) {
    const Dims d{1, rng.range(1, 2), rng.range(1, 5), rng.range(1, 5)};
    const int oh = rng.range(1, 7);
    const int ow = rng.range(1, 7);
    const Tensor x = rng.tensor(d);
    const Tensor out = bilinear_resize(x, oh, ow);
    const Tensor upstream = rng.tensor(out.dims);
    const Tensor analytic = bilinear_resize_backward(d, upstream);

    Trial t;
    t.point = flatten({&x.data});
    t.analytic = analytic.data;
    t.eval64 = [=](const std::vector<double>& v) {
        TensorT<double> x64(d);
        for (std::size_t i = 0; i < v.size(); ++i) x64.data[i] = v[i];
        return inner64(upstream, bilinear_resize(x64, oh, ow));
    };
    return t;
}

Trial make_l1_trial(Rng& rng) {
    const Dims d{1, rng.range(1, 3), rng.range(1, 4), rng.range(1, 4)};
    Tensor pred = rng.tensor(d);
    Tensor target = rng.tensor(d);
    for (std::size_t i = 0; i < pred.count(); ++i) {
        // keep |pred - target| off the kink
        if (std::abs(pred.data[i] - target.data[i]) < 0.05f) pred.data[i] += 0.1f;
    }
    const auto [loss, grad] = l1_loss(pred, target);
    (void)loss;

    Trial t;
    t.point = flatten({&pred.data});
    t.analytic = grad.data;
    t.eval64 = [=](const std::vector<double>& v) {
        double sum = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            sum += std::abs(v[i] - double(target.data[i]));
        }
        return sum / double(v.size());
    };
    return t;
}

Trial make_xent_trial(Rng& rng) {
    const int L = rng.range(2, 5);
    const Dims d{1, L, rng.range(1, 4), rng.range(1, 4)};
    const Tensor logits = rng.tensor(d);
    std::vector<uint8_t> classes(std::size_t(d.h) * d.w);
    for (auto& c : classes) c = uint8_t(rng.range(0, L - 1));
    const auto [loss, grad] = softmax_xent(logits, classes);
    (void)loss;

    Trial t;
    t.point = flatten({&logits.data});
    t.analytic = grad.data;
    t.eval64 = [=](const std::vector<double>& v) {
        const std::size_t hw = std::size_t(d.h) * d.w;
        double total = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            double mx = v[i];
            for (int c = 1; c < L; ++c) mx = std::max(mx, v[std::size_t(c) * hw + i]);
            double denom = 0.0;
            for (int c = 0; c < L; ++c) denom += std::exp(v[std::size_t(c) * hw + i] - mx);
            const double z = v[std::size_t(classes[i]) * hw + i] - mx;
            total -= z - std::log(denom);
        }
        return total / double(hw);
    };
    return t;
}

Trial make_trial(OpId op, Rng& rng) {
    switch (op) {
        case OpId::Conv2d: return make_conv_trial(rng, false);
        case OpId::Conv2dTranspose: return make_conv_trial(rng, true);
        case OpId::InstanceNorm: return make_norm_trial(rng);
        case OpId::Relu: return make_pointwise_trial(rng, Pointwise::Relu);
        case OpId::TanhAct: return make_pointwise_trial(rng, Pointwise::Tanh);
        case OpId::BilinearResize: return make_bilinear_trial(rng);
        case OpId::ClampUnit: return make_pointwise_trial(rng, Pointwise::Clamp);
        case OpId::L1Loss: return make_l1_trial(rng);
        case OpId::SoftmaxXent: return make_xent_trial(rng);
    }
    throw TensorError("unknown op");
}

}  // namespace

GradCheckReport gradient_check(OpId op, int trials, double tolerance, uint64_t seed) {
    Rng rng(seed);
    GradCheckReport rep;
    rep.op = op;
    rep.trials = trials;
    std::size_t worst_index = 0;
    int worst_trial = -1;

    for (int trial = 0; trial < trials; ++trial) {
        Trial t = make_trial(op, rng);
        std::vector<double> point = t.point;
        for (std::size_t i = 0; i < point.size(); ++i) {
            const double saved = point[i];
            point[i] = saved + kStep;
            const double jp = t.eval64(point);
            point[i] = saved - kStep;
            const double jm = t.eval64(point);
            point[i] = saved;
            const double fd = (jp - jm) / (2.0 * kStep);
            const double a = double(t.analytic[i]);
            if (std::abs(a) < 1e-6 && std::abs(fd) < 1e-6) continue;
            const double rel = std::abs(a - fd) / std::max(std::abs(a), std::abs(fd));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                worst_index = i;
                worst_trial = trial;
            }
        }
    }
    rep.pass = rep.max_rel_err < tolerance;
    std::ostringstream os;
    os << op_name(op) << ": max rel err " << rep.max_rel_err;
    if (worst_trial >= 0) os << " (trial " << worst_trial << ", element " << worst_index << ")";
    rep.detail = os.str();
    return rep;
}

}  // namespace edms
