#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace edms {

struct Dims {
    int n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const {
        return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
    }
    bool operator==(const Dims&) const = default;
    std::string str() const;
};

// Rank-4 (n, c, h, w) row-major tensor. All network math runs on the float
// instantiation; the double instantiation exists for the finite-difference
// shadow evaluation in gradient_check.
template <typename T>
struct TensorT {
    Dims dims;
    std::vector<T> data;

    TensorT() = default;
    TensorT(int n, int c, int h, int w)
        : dims{n, c, h, w}, data(dims.count(), T(0)) {}
    explicit TensorT(Dims d) : dims(d), data(d.count(), T(0)) {}

    std::size_t index(int n, int c, int y, int x) const {
        return ((std::size_t(n) * dims.c + c) * dims.h + y) * dims.w + x;
    }
    T& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

    T* plane(int n, int c) { return data.data() + index(n, c, 0, 0); }
    const T* plane(int n, int c) const { return data.data() + index(n, c, 0, 0); }

    std::size_t count() const { return data.size(); }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(dims);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Convolution parameters. kernel dims are (out_c, in_c, s, s) with s odd;
// reflection padding of width (s-1)/2 is implied, stride is 1 or 2.
template <typename T>
struct ConvParamsT {
    TensorT<T> kernel;
    std::vector<T> bias;
    int stride = 1;

    int out_channels() const { return kernel.dims.n; }
    int in_channels() const { return kernel.dims.c; }
    int kernel_size() const { return kernel.dims.h; }
    int padding() const { return (kernel.dims.h - 1) / 2; }
};

using ConvParams = ConvParamsT<float>;

// Borrowed view of convolution parameters; lets callers run kernels straight
// out of a WeightSet without copying.
template <typename T>
struct ConvViewT {
    const T* kernel = nullptr;  // (out_c, in_c, s, s) row-major
    int out_c = 0, in_c = 0, s = 0;
    const T* bias = nullptr;  // out_c
    int stride = 1;
};

using ConvView = ConvViewT<float>;

template <typename T>
ConvViewT<T> view(const ConvParamsT<T>& p) {
    return {p.kernel.data.data(), p.out_channels(), p.in_channels(), p.kernel_size(),
            p.bias.data(), p.stride};
}

template <typename T>
struct NormParamsT {
    std::vector<T> gamma;
    std::vector<T> beta;
    T epsilon = T(1e-5);
};

using NormParams = NormParamsT<float>;

// Thrown when a kernel precondition fails or a kernel produces non-finite
// values (the Tensor invariant forbids NaN/Inf after every kernel).
struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- forward kernels -------------------------------------------------------
//
// Accumulation orders are normative: encoder and decoder must synthesize
// bit-identical images, so no kernel may reassociate its sums (builds also
// disable FMA contraction).

// Per output element: sum over in_c (outer), kernel row, kernel column
// (inner), then add bias. Symmetric reflection padding of width (s-1)/2.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvViewT<T>& p);
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvParamsT<T>& p) {
    return conv2d(x, view(p));
}

// Fractional stride 1/2 (up-factor 2, crop 1, trailing output pad 1), s = 3.
// Output is exactly (2h, 2w). Input elements scatter in row-major order
// within each input channel.
template <typename T>
TensorT<T> conv2d_transpose(const TensorT<T>& x, const ConvViewT<T>& p);
template <typename T>
TensorT<T> conv2d_transpose(const TensorT<T>& x, const ConvParamsT<T>& p) {
    return conv2d_transpose(x, view(p));
}

// Per (n, c) plane: y = gamma*(x - mean)/sqrt(var + eps) + beta with biased
// variance. Moments accumulate in float64 and are rounded to T before the
// elementwise pass.
template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const T* gamma, const T* beta, T epsilon);
template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const NormParamsT<T>& p) {
    if (int(p.gamma.size()) != x.dims.c || int(p.beta.size()) != x.dims.c) {
        throw TensorError("instance_norm: gamma/beta length mismatch");
    }
    return instance_norm(x, p.gamma.data(), p.beta.data(), p.epsilon);
}

template <typename T> TensorT<T> relu(const TensorT<T>& x);
template <typename T> TensorT<T> tanh_act(const TensorT<T>& x);
template <typename T> TensorT<T> clamp_unit(const TensorT<T>& x);  // clamp to [-1, 1]

// Half-pixel-center bilinear: source coord of output (i, j) is
// ((i+0.5)*h/out_h - 0.5, (j+0.5)*w/out_w - 0.5), clamped to the source
// rectangle; 4-tap blend in T.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int out_h, int out_w);

// --- backward kernels (float only; used by module train) -------------------

struct ConvGrads {
    Tensor x;
    Tensor kernel;
    std::vector<float> bias;
};

struct NormGrads {
    Tensor x;
    std::vector<float> gamma;
    std::vector<float> beta;
};

ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& gout);
ConvGrads conv2d_transpose_backward(const Tensor& x, const ConvParams& p, const Tensor& gout);
NormGrads instance_norm_backward(const Tensor& x, const NormParams& p, const Tensor& gout);
Tensor relu_backward(const Tensor& x, const Tensor& gout);
// Takes the forward *output* y = tanh(x): grad = gout * (1 - y^2).
Tensor tanh_backward(const Tensor& y, const Tensor& gout);
Tensor clamp_unit_backward(const Tensor& x, const Tensor& gout);
Tensor bilinear_resize_backward(Dims in_dims, const Tensor& gout);

// Mean absolute difference and its gradient w.r.t. pred.
std::pair<float, Tensor> l1_loss(const Tensor& pred, const Tensor& target);

// Per-pixel softmax cross-entropy over dim c, averaged over n*h*w, with u8
// class targets of length n*h*w (row-major).
std::pair<float, Tensor> softmax_xent(const Tensor& logits, const std::vector<uint8_t>& classes);

void ensure_finite(const Tensor& t, const char* op);

}  // namespace edms
