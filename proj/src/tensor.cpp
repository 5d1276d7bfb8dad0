#include "edms/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace edms {

std::string Dims::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

void ensure_finite(const Tensor& t, const char* op) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw TensorError(std::string(op) + ": non-finite value in output");
        }
    }
}

namespace {

template <typename T>
void ensure_finite_t(const TensorT<T>& t, const char* op) {
    for (T v : t.data) {
        if (!std::isfinite(v)) {
            throw TensorError(std::string(op) + ": non-finite value in output");
        }
    }
}

// Edge-inclusive mirror: -1 -> 0, h -> h-1. Valid while pad <= dim.
inline int reflect_index(int i, int dim) {
    if (i < 0) return -i - 1;
    if (i >= dim) return 2 * dim - 1 - i;
    return i;
}

// One (n, c) plane with symmetric reflection padding of width p.
template <typename T>
std::vector<T> padded_plane(const TensorT<T>& x, int n, int c, int p) {
    const int h = x.dims.h, w = x.dims.w;
    std::vector<T> out(std::size_t(h + 2 * p) * (w + 2 * p));
    const T* src = x.plane(n, c);
    for (int y = -p; y < h + p; ++y) {
        const T* row = src + std::size_t(reflect_index(y, h)) * w;
        T* dst = out.data() + std::size_t(y + p) * (w + 2 * p);
        for (int xx = -p; xx < w + p; ++xx) {
            dst[xx + p] = row[reflect_index(xx, w)];
        }
    }
    return out;
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvViewT<T>& p) {
    const int s = p.s;
    const int pad = (s - 1) / 2;
    const int in_c = p.in_c;
    const int out_c = p.out_c;
    if (s % 2 == 0) throw TensorError("conv2d: kernel size must be odd");
    if (x.dims.c != in_c) {
        throw TensorError("conv2d: channel mismatch, input " + x.dims.str());
    }
    if (x.dims.h < pad || x.dims.w < pad) {
        throw TensorError("conv2d: input smaller than reflection width");
    }
    if (p.stride != 1 && p.stride != 2) throw TensorError("conv2d: stride must be 1 or 2");

    const int oh = (x.dims.h + 2 * pad - s) / p.stride + 1;
    const int ow = (x.dims.w + 2 * pad - s) / p.stride + 1;
    const int pw = x.dims.w + 2 * pad;
    TensorT<T> out(x.dims.n, out_c, oh, ow);

    for (int n = 0; n < x.dims.n; ++n) {
        for (int ic = 0; ic < in_c; ++ic) {
            const std::vector<T> xp = padded_plane(x, n, ic, pad);
            for (int oc = 0; oc < out_c; ++oc) {
                // Tap-outer accumulation: every output element receives its
                // terms in the normative (in_c, kr, kc) order.
                const T* kbase = p.kernel + (std::size_t(oc) * in_c + ic) * s * s;
                T* dst = out.plane(n, oc);
                for (int kr = 0; kr < s; ++kr) {
                    for (int kc = 0; kc < s; ++kc) {
                        const T kv = kbase[kr * s + kc];
                        for (int oy = 0; oy < oh; ++oy) {
                            const T* srow = xp.data() + std::size_t(oy * p.stride + kr) * pw + kc;
                            T* drow = dst + std::size_t(oy) * ow;
                            if (p.stride == 1) {
                                for (int ox = 0; ox < ow; ++ox) drow[ox] += kv * srow[ox];
                            } else {
                                for (int ox = 0; ox < ow; ++ox) drow[ox] += kv * srow[2 * ox];
                            }
                        }
                    }
                }
            }
        }
        for (int oc = 0; oc < out_c; ++oc) {
            T* dst = out.plane(n, oc);
            const T b = p.bias[oc];
            for (std::size_t i = 0; i < std::size_t(oh) * ow; ++i) dst[i] += b;
        }
    }
    ensure_finite_t(out, "conv2d");
    return out;
}

template <typename T>
TensorT<T> conv2d_transpose(const TensorT<T>& x, const ConvViewT<T>& p) {
    const int s = p.s;
    if (s != 3) throw TensorError("conv2d_transpose: kernel size must be 3");
    if (x.dims.c != p.in_c) {
        throw TensorError("conv2d_transpose: channel mismatch");
    }
    const int in_c = p.in_c;
    const int out_c = p.out_c;
    const int h = x.dims.h, w = x.dims.w;
    const int oh = 2 * h, ow = 2 * w;
    TensorT<T> out(x.dims.n, out_c, oh, ow);

    for (int n = 0; n < x.dims.n; ++n) {
        for (int oc = 0; oc < out_c; ++oc) {
            T* dst = out.plane(n, oc);
            for (int ic = 0; ic < in_c; ++ic) {
                const T* src = x.plane(n, ic);
                const T* kbase = p.kernel + (std::size_t(oc) * in_c + ic) * s * s;
                for (int iy = 0; iy < h; ++iy) {
                    for (int ix = 0; ix < w; ++ix) {
                        const T v = src[std::size_t(iy) * w + ix];
                        for (int kr = 0; kr < s; ++kr) {
                            const int oy = 2 * iy + kr - 1;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kc = 0; kc < s; ++kc) {
                                const int ox = 2 * ix + kc - 1;
                                if (ox < 0 || ox >= ow) continue;
                                dst[std::size_t(oy) * ow + ox] += v * kbase[kr * s + kc];
                            }
                        }
                    }
                }
            }
            const T b = p.bias[oc];
            for (std::size_t i = 0; i < std::size_t(oh) * ow; ++i) dst[i] += b;
        }
    }
    ensure_finite_t(out, "conv2d_transpose");
    return out;
}

template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const T* gamma, const T* beta, T epsilon) {
    if (!(epsilon > T(0))) throw TensorError("instance_norm: epsilon must be positive");
    TensorT<T> out(x.dims);
    const std::size_t hw = std::size_t(x.dims.h) * x.dims.w;
    for (int n = 0; n < x.dims.n; ++n) {
        for (int c = 0; c < x.dims.c; ++c) {
            const T* src = x.plane(n, c);
            // float64 moment accumulation, rounded to T before the
            // elementwise pass (normative).
            double sum = 0.0;
            for (std::size_t i = 0; i < hw; ++i) sum += double(src[i]);
            const double mean64 = sum / double(hw);
            double var_sum = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                const double d = double(src[i]) - mean64;
                var_sum += d * d;
            }
            const T mean = T(mean64);
            const T var = T(var_sum / double(hw));
            const T inv_std = T(1) / std::sqrt(var + epsilon);
            const T g = gamma[c], b = beta[c];
            T* dst = out.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                dst[i] = g * ((src[i] - mean) * inv_std) + b;
            }
        }
    }
    ensure_finite_t(out, "instance_norm");
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> out(x.dims);
    for (std::size_t i = 0; i < x.count(); ++i) out.data[i] = std::max(T(0), x.data[i]);
    return out;
}

template <typename T>
TensorT<T> tanh_act(const TensorT<T>& x) {
    TensorT<T> out(x.dims);
    for (std::size_t i = 0; i < x.count(); ++i) out.data[i] = std::tanh(x.data[i]);
    return out;
}

template <typename T>
TensorT<T> clamp_unit(const TensorT<T>& x) {
    TensorT<T> out(x.dims);
    for (std::size_t i = 0; i < x.count(); ++i) {
        out.data[i] = std::min(T(1), std::max(T(-1), x.data[i]));
    }
    return out;
}

template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw TensorError("bilinear_resize: output dims must be >= 1");
    const int h = x.dims.h, w = x.dims.w;
    TensorT<T> out(x.dims.n, x.dims.c, out_h, out_w);
    for (int n = 0; n < x.dims.n; ++n) {
        for (int c = 0; c < x.dims.c; ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (int oy = 0; oy < out_h; ++oy) {
                double sy = (double(oy) + 0.5) * double(h) / double(out_h) - 0.5;
                sy = std::min(std::max(sy, 0.0), double(h - 1));
                const int y0 = int(sy);
                const int y1 = std::min(y0 + 1, h - 1);
                const T fy = T(sy - double(y0));
                for (int ox = 0; ox < out_w; ++ox) {
                    double sx = (double(ox) + 0.5) * double(w) / double(out_w) - 0.5;
                    sx = std::min(std::max(sx, 0.0), double(w - 1));
                    const int x0 = int(sx);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const T fx = T(sx - double(x0));
                    const T top = (T(1) - fx) * src[std::size_t(y0) * w + x0] +
                                  fx * src[std::size_t(y0) * w + x1];
                    const T bot = (T(1) - fx) * src[std::size_t(y1) * w + x0] +
                                  fx * src[std::size_t(y1) * w + x1];
                    dst[std::size_t(oy) * out_w + ox] = (T(1) - fy) * top + fy * bot;
                }
            }
        }
    }
    ensure_finite_t(out, "bilinear_resize");
    return out;
}

template Tensor conv2d(const Tensor&, const ConvView&);
template Tensor64 conv2d(const Tensor64&, const ConvViewT<double>&);
template Tensor conv2d_transpose(const Tensor&, const ConvView&);
template Tensor64 conv2d_transpose(const Tensor64&, const ConvViewT<double>&);
template Tensor instance_norm(const Tensor&, const float*, const float*, float);
template Tensor64 instance_norm(const Tensor64&, const double*, const double*, double);
template Tensor relu(const Tensor&);
template Tensor64 relu(const Tensor64&);
template Tensor tanh_act(const Tensor&);
template Tensor64 tanh_act(const Tensor64&);
template Tensor clamp_unit(const Tensor&);
template Tensor64 clamp_unit(const Tensor64&);
template Tensor bilinear_resize(const Tensor&, int, int);
template Tensor64 bilinear_resize(const Tensor64&, int, int);

// --- backward ---------------------------------------------------------------

ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& gout) {
    const int s = p.kernel_size();
    const int pad = p.padding();
    const int in_c = p.in_channels();
    const int out_c = p.out_channels();
    const int oh = gout.dims.h, ow = gout.dims.w;
    const int ph = x.dims.h + 2 * pad, pw = x.dims.w + 2 * pad;

    ConvGrads g;
    g.x = Tensor(x.dims);
    g.kernel = Tensor(p.kernel.dims);
    g.bias.assign(out_c, 0.0f);

    for (int n = 0; n < x.dims.n; ++n) {
        for (int oc = 0; oc < out_c; ++oc) {
            const float* go = gout.plane(n, oc);
            float acc = 0.0f;
            for (std::size_t i = 0; i < std::size_t(oh) * ow; ++i) acc += go[i];
            g.bias[oc] += acc;
        }
        for (int ic = 0; ic < in_c; ++ic) {
            const std::vector<float> xp = padded_plane(x, n, ic, pad);
            std::vector<float> gpad(std::size_t(ph) * pw, 0.0f);
            for (int oc = 0; oc < out_c; ++oc) {
                const float* go = gout.plane(n, oc);
                const float* kbase = p.kernel.plane(oc, ic);
                float* kg = g.kernel.plane(oc, ic);
                for (int kr = 0; kr < s; ++kr) {
                    for (int kc = 0; kc < s; ++kc) {
                        const float kv = kbase[kr * s + kc];
                        float kacc = 0.0f;
                        for (int oy = 0; oy < oh; ++oy) {
                            const std::size_t base = std::size_t(oy * p.stride + kr) * pw + kc;
                            const float* grow = go + std::size_t(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                const std::size_t si = base + std::size_t(ox * p.stride);
                                gpad[si] += kv * grow[ox];
                                kacc += grow[ox] * xp[si];
                            }
                        }
                        kg[kr * s + kc] += kacc;
                    }
                }
            }
            // Fold padded-region gradients back through the reflection map
            // (padded raster order).
            float* gx = g.x.plane(n, ic);
            for (int y = -pad; y < x.dims.h + pad; ++y) {
                const int sy = reflect_index(y, x.dims.h);
                const float* grow = gpad.data() + std::size_t(y + pad) * pw;
                for (int xx = -pad; xx < x.dims.w + pad; ++xx) {
                    gx[std::size_t(sy) * x.dims.w + reflect_index(xx, x.dims.w)] += grow[xx + pad];
                }
            }
        }
    }
    return g;
}

ConvGrads conv2d_transpose_backward(const Tensor& x, const ConvParams& p, const Tensor& gout) {
    const int s = p.kernel_size();
    const int in_c = p.in_channels();
    const int out_c = p.out_channels();
    const int h = x.dims.h, w = x.dims.w;
    const int oh = gout.dims.h, ow = gout.dims.w;

    ConvGrads g;
    g.x = Tensor(x.dims);
    g.kernel = Tensor(p.kernel.dims);
    g.bias.assign(out_c, 0.0f);

    for (int n = 0; n < x.dims.n; ++n) {
        for (int oc = 0; oc < out_c; ++oc) {
            const float* go = gout.plane(n, oc);
            float acc = 0.0f;
            for (std::size_t i = 0; i < std::size_t(oh) * ow; ++i) acc += go[i];
            g.bias[oc] += acc;

            for (int ic = 0; ic < in_c; ++ic) {
                const float* src = x.plane(n, ic);
                const float* kbase = p.kernel.plane(oc, ic);
                float* kg = g.kernel.plane(oc, ic);
                float* gx = g.x.plane(n, ic);
                for (int iy = 0; iy < h; ++iy) {
                    for (int ix = 0; ix < w; ++ix) {
                        const float v = src[std::size_t(iy) * w + ix];
                        float gacc = 0.0f;
                        for (int kr = 0; kr < s; ++kr) {
                            const int oy = 2 * iy + kr - 1;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kc = 0; kc < s; ++kc) {
                                const int ox = 2 * ix + kc - 1;
                                if (ox < 0 || ox >= ow) continue;
                                const float gv = go[std::size_t(oy) * ow + ox];
                                gacc += gv * kbase[kr * s + kc];
                                kg[kr * s + kc] += gv * v;
                            }
                        }
                        gx[std::size_t(iy) * w + ix] += gacc;
                    }
                }
            }
        }
    }
    return g;
}

NormGrads instance_norm_backward(const Tensor& x, const NormParams& p, const Tensor& gout) {
    NormGrads g;
    g.x = Tensor(x.dims);
    g.gamma.assign(p.gamma.size(), 0.0f);
    g.beta.assign(p.beta.size(), 0.0f);
    const std::size_t hw = std::size_t(x.dims.h) * x.dims.w;
    for (int n = 0; n < x.dims.n; ++n) {
        for (int c = 0; c < x.dims.c; ++c) {
            const float* src = x.plane(n, c);
            const float* go = gout.plane(n, c);
            double sum = 0.0;
            for (std::size_t i = 0; i < hw; ++i) sum += double(src[i]);
            const double mean = sum / double(hw);
            double var_sum = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                const double d = double(src[i]) - mean;
                var_sum += d * d;
            }
            const float m = float(mean);
            const float inv_std = 1.0f / std::sqrt(float(var_sum / double(hw)) + p.epsilon);

            // dgamma = sum(go * xhat), dbeta = sum(go),
            // dx = gamma*inv_std*(go - mean(go) - xhat*mean(go*xhat))
            double sum_go = 0.0, sum_go_xhat = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                const float xhat = (src[i] - m) * inv_std;
                sum_go += double(go[i]);
                sum_go_xhat += double(go[i]) * double(xhat);
            }
            g.beta[c] += float(sum_go);
            g.gamma[c] += float(sum_go_xhat);
            const float mean_go = float(sum_go / double(hw));
            const float mean_go_xhat = float(sum_go_xhat / double(hw));
            const float scale = p.gamma[c] * inv_std;
            float* gx = g.x.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                const float xhat = (src[i] - m) * inv_std;
                gx[i] = scale * (go[i] - mean_go - xhat * mean_go_xhat);
            }
        }
    }
    return g;
}

Tensor relu_backward(const Tensor& x, const Tensor& gout) {
    Tensor g(x.dims);
    for (std::size_t i = 0; i < x.count(); ++i) {
        g.data[i] = x.data[i] > 0.0f ? gout.data[i] : 0.0f;
    }
    return g;
}

Tensor tanh_backward(const Tensor& y, const Tensor& gout) {
    Tensor g(y.dims);
    for (std::size_t i = 0; i < y.count(); ++i) {
        g.data[i] = gout.data[i] * (1.0f - y.data[i] * y.data[i]);
    }
    return g;
}

Tensor clamp_unit_backward(const Tensor& x, const Tensor& gout) {
    Tensor g(x.dims);
    for (std::size_t i = 0; i < x.count(); ++i) {
        g.data[i] = (x.data[i] >= -1.0f && x.data[i] <= 1.0f) ? gout.data[i] : 0.0f;
    }
    return g;
}

Tensor bilinear_resize_backward(Dims in_dims, const Tensor& gout) {
    const int h = in_dims.h, w = in_dims.w;
    const int out_h = gout.dims.h, out_w = gout.dims.w;
    Tensor g(in_dims);
    for (int n = 0; n < in_dims.n; ++n) {
        for (int c = 0; c < in_dims.c; ++c) {
            const float* go = gout.plane(n, c);
            float* dst = g.plane(n, c);
            for (int oy = 0; oy < out_h; ++oy) {
                double sy = (double(oy) + 0.5) * double(h) / double(out_h) - 0.5;
                sy = std::min(std::max(sy, 0.0), double(h - 1));
                const int y0 = int(sy);
                const int y1 = std::min(y0 + 1, h - 1);
                const float fy = float(sy - double(y0));
                for (int ox = 0; ox < out_w; ++ox) {
                    double sx = (double(ox) + 0.5) * double(w) / double(out_w) - 0.5;
                    sx = std::min(std::max(sx, 0.0), double(w - 1));
                    const int x0 = int(sx);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const float fx = float(sx - double(x0));
                    const float gv = go[std::size_t(oy) * out_w + ox];
                    dst[std::size_t(y0) * w + x0] += (1.0f - fy) * (1.0f - fx) * gv;
                    dst[std::size_t(y0) * w + x1] += (1.0f - fy) * fx * gv;
                    dst[std::size_t(y1) * w + x0] += fy * (1.0f - fx) * gv;
                    dst[std::size_t(y1) * w + x1] += fy * fx * gv;
                }
            }
        }
    }
    return g;
}

std::pair<float, Tensor> l1_loss(const Tensor& pred, const Tensor& target) {
    if (!(pred.dims == target.dims)) throw TensorError("l1_loss: shape mismatch");
    Tensor grad(pred.dims);
    double sum = 0.0;
    const float inv_n = 1.0f / float(pred.count());
    for (std::size_t i = 0; i < pred.count(); ++i) {
        const float d = pred.data[i] - target.data[i];
        sum += std::abs(double(d));
        grad.data[i] = (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f)) * inv_n;
    }
    return {float(sum / double(pred.count())), std::move(grad)};
}

std::pair<float, Tensor> softmax_xent(const Tensor& logits, const std::vector<uint8_t>& classes) {
    const int L = logits.dims.c;
    const std::size_t npix = std::size_t(logits.dims.n) * logits.dims.h * logits.dims.w;
    if (classes.size() != npix) throw TensorError("softmax_xent: class count mismatch");
    Tensor grad(logits.dims);
    const std::size_t hw = std::size_t(logits.dims.h) * logits.dims.w;
    double loss = 0.0;
    const float inv_n = 1.0f / float(npix);
    std::vector<float> probs(L);
    for (int n = 0; n < logits.dims.n; ++n) {
        for (std::size_t i = 0; i < hw; ++i) {
            float mx = logits.data[logits.index(n, 0, 0, 0) + i];
            for (int c = 1; c < L; ++c) {
                mx = std::max(mx, logits.data[logits.index(n, c, 0, 0) + i]);
            }
            float denom = 0.0f;
            for (int c = 0; c < L; ++c) {
                probs[c] = std::exp(logits.data[logits.index(n, c, 0, 0) + i] - mx);
                denom += probs[c];
            }
            const int cls = classes[std::size_t(n) * hw + i];
            if (cls >= L) throw TensorError("softmax_xent: class index out of range");
            loss -= std::log(double(probs[cls]) / double(denom));
            for (int c = 0; c < L; ++c) {
                const float p = probs[c] / denom;
                grad.data[logits.index(n, c, 0, 0) + i] =
                    (p - (c == cls ? 1.0f : 0.0f)) * inv_n;
            }
        }
    }
    return {float(loss / double(npix)), std::move(grad)};
}

}  // namespace edms
