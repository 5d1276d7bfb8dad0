#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <random>
#include <thread>

#include "edms/gradcheck.hpp"
#include "edms/tensor.hpp"

using namespace edms;

namespace {

Tensor random_tensor(std::mt19937& rng, Dims d, float scale = 1.0f) {
    Tensor t(d);
    for (float& v : t.data) {
        v = scale * (2.0f * float(rng() >> 8) * (1.0f / 16777216.0f) - 1.0f);
    }
    return t;
}

ConvParams random_conv(std::mt19937& rng, int out_c, int in_c, int s, int stride) {
    ConvParams p;
    p.kernel = random_tensor(rng, {out_c, in_c, s, s});
    p.bias.resize(out_c);
    for (float& b : p.bias) b = 2.0f * float(rng() >> 8) * (1.0f / 16777216.0f) - 1.0f;
    p.stride = stride;
    return p;
}

int mirror(int i, int dim) {
    if (i < 0) return -i - 1;
    if (i >= dim) return 2 * dim - 1 - i;
    return i;
}

// Independent direct-summation oracle with the same per-element term order.
Tensor conv2d_oracle(const Tensor& x, const ConvParams& p) {
    const int s = p.kernel_size(), pad = p.padding(), st = p.stride;
    const int oh = (x.dims.h + 2 * pad - s) / st + 1;
    const int ow = (x.dims.w + 2 * pad - s) / st + 1;
    Tensor out(x.dims.n, p.out_channels(), oh, ow);
    for (int n = 0; n < x.dims.n; ++n) {
        for (int oc = 0; oc < p.out_channels(); ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = 0.0f;
                    for (int ic = 0; ic < p.in_channels(); ++ic) {
                        for (int kr = 0; kr < s; ++kr) {
                            for (int kc = 0; kc < s; ++kc) {
                                const int sy = mirror(oy * st + kr - pad, x.dims.h);
                                const int sx = mirror(ox * st + kc - pad, x.dims.w);
                                acc += x.at(n, ic, sy, sx) * p.kernel.at(oc, ic, kr, kc);
                            }
                        }
                    }
                    out.at(n, oc, oy, ox) = acc + p.bias[oc];
                }
            }
        }
    }
    return out;
}

// Zero-insertion oracle: scatter transposed conv == zero-insert, zero-pad 1,
// correlate with the flipped kernel.
Tensor convt_oracle(const Tensor& x, const ConvParams& p) {
    const int h = x.dims.h, w = x.dims.w;
    const int oh = 2 * h, ow = 2 * w;
    Tensor out(x.dims.n, p.out_channels(), oh, ow);
    auto z_at = [&](int n, int ic, int zy, int zx) -> float {
        if (zy < 0 || zy >= oh || zx < 0 || zx >= ow) return 0.0f;
        if (zy % 2 || zx % 2) return 0.0f;
        return x.at(n, ic, zy / 2, zx / 2);
    };
    for (int n = 0; n < x.dims.n; ++n) {
        for (int oc = 0; oc < p.out_channels(); ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = 0.0f;
                    for (int ic = 0; ic < p.in_channels(); ++ic) {
                        for (int j = 0; j < 3; ++j) {
                            for (int jc = 0; jc < 3; ++jc) {
                                acc += z_at(n, ic, oy - 1 + j, ox - 1 + jc) *
                                       p.kernel.at(oc, ic, 2 - j, 2 - jc);
                            }
                        }
                    }
                    out.at(n, oc, oy, ox) = acc + p.bias[oc];
                }
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("conv2d constant input stays constant under reflection padding") {
    Tensor x(1, 1, 3, 3);
    for (float& v : x.data) v = 1.0f;
    ConvParams p;
    p.kernel = Tensor(1, 1, 3, 3);
    for (float& v : p.kernel.data) v = 1.0f;
    p.bias = {0.0f};
    const Tensor y = conv2d(x, p);
    REQUIRE(y.dims == Dims{1, 1, 3, 3});
    for (float v : y.data) CHECK(v == 9.0f);
}

TEST_CASE("conv2d 1x1 identity kernel is the identity map, bit-exact") {
    std::mt19937 rng(7);
    const Tensor x = random_tensor(rng, {2, 3, 5, 4});
    ConvParams p;
    p.kernel = Tensor(3, 3, 1, 1);
    for (int c = 0; c < 3; ++c) p.kernel.at(c, c, 0, 0) = 1.0f;
    p.bias = {0.0f, 0.0f, 0.0f};
    const Tensor y = conv2d(x, p);
    REQUIRE(y.dims == x.dims);
    CHECK(std::memcmp(y.data.data(), x.data.data(), x.count() * 4) == 0);
}

TEST_CASE("conv2d matches the naive oracle to 0 ULP") {
    std::mt19937 rng(11);
    SUBCASE("the stride-2 spec example") {
        const Tensor x = random_tensor(rng, {1, 2, 5, 5});
        const ConvParams p = random_conv(rng, 4, 2, 3, 2);
        const Tensor y = conv2d(x, p);
        REQUIRE(y.dims == Dims{1, 4, 3, 3});
        const Tensor ref = conv2d_oracle(x, p);
        CHECK(std::memcmp(y.data.data(), ref.data.data(), y.count() * 4) == 0);
    }
    SUBCASE("random shapes up to 8") {
        for (int trial = 0; trial < 40; ++trial) {
            const int s = (rng() % 2) ? 3 : 7;
            const int in_c = 1 + int(rng() % 3);
            const int out_c = 1 + int(rng() % 4);
            const int pad = (s - 1) / 2;
            const int h = pad + int(rng() % (9 - pad));
            const int w = pad + int(rng() % (9 - pad));
            const int stride = 1 + int(rng() % 2);
            const Tensor x = random_tensor(rng, {1, in_c, std::max(h, 1), std::max(w, 1)});
            const ConvParams p = random_conv(rng, out_c, in_c, s, stride);
            const Tensor y = conv2d(x, p);
            const Tensor ref = conv2d_oracle(x, p);
            REQUIRE(y.dims == ref.dims);
            CHECK(std::memcmp(y.data.data(), ref.data.data(), y.count() * 4) == 0);
        }
    }
}

TEST_CASE("conv2d errors") {
    std::mt19937 rng(3);
    const Tensor x = random_tensor(rng, {1, 2, 4, 4});
    CHECK_THROWS_AS(conv2d(x, random_conv(rng, 2, 3, 3, 1)), TensorError);
    const Tensor tiny = random_tensor(rng, {1, 1, 2, 2});
    CHECK_THROWS_AS(conv2d(tiny, random_conv(rng, 1, 1, 7, 1)), TensorError);
}

TEST_CASE("conv2d_transpose scatters one input onto single kernel taps") {
    std::mt19937 rng(5);
    const float v = 0.8125f;
    Tensor x(1, 1, 1, 1);
    x.data[0] = v;
    const ConvParams p = random_conv(rng, 1, 1, 3, 1);
    Tensor noBias = p;
    noBias.bias = {0.0f};
    const Tensor y = conv2d_transpose(x, noBias);
    REQUIRE(y.dims == Dims{1, 1, 2, 2});
    CHECK(y.at(0, 0, 0, 0) == v * p.kernel.at(0, 0, 1, 1));
    CHECK(y.at(0, 0, 0, 1) == v * p.kernel.at(0, 0, 1, 2));
    CHECK(y.at(0, 0, 1, 0) == v * p.kernel.at(0, 0, 2, 1));
    CHECK(y.at(0, 0, 1, 1) == v * p.kernel.at(0, 0, 2, 2));
}

TEST_CASE("conv2d_transpose zero input broadcasts the bias") {
    std::mt19937 rng(9);
    Tensor x(1, 2, 3, 4);
    ConvParams p = random_conv(rng, 3, 2, 3, 1);
    const Tensor y = conv2d_transpose(x, p);
    REQUIRE(y.dims == Dims{1, 3, 6, 8});
    for (int oc = 0; oc < 3; ++oc) {
        for (int i = 0; i < 48; ++i) CHECK(y.plane(0, oc)[i] == p.bias[oc]);
    }
}

TEST_CASE("conv2d_transpose matches the zero-insertion oracle") {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const int in_c = 1 + int(rng() % 3);
        const int out_c = 1 + int(rng() % 3);
        const int h = 1 + int(rng() % 4);
        const int w = 1 + int(rng() % 4);
        const Tensor x = random_tensor(rng, {1, in_c, h, w});
        const ConvParams p = random_conv(rng, out_c, in_c, 3, 1);
        const Tensor y = conv2d_transpose(x, p);
        const Tensor ref = convt_oracle(x, p);
        REQUIRE(y.dims == ref.dims);
        CHECK(std::memcmp(y.data.data(), ref.data.data(), y.count() * 4) == 0);
    }
}

TEST_CASE("instance_norm constant plane collapses to beta") {
    Tensor x(1, 2, 3, 3);
    for (float& v : x.data) v = 4.25f;
    NormParams p;
    p.gamma = {2.0f, 3.0f};
    p.beta = {0.5f, -1.5f};
    const Tensor y = instance_norm(x, p);
    for (int i = 0; i < 9; ++i) {
        CHECK(y.plane(0, 0)[i] == 0.5f);
        CHECK(y.plane(0, 1)[i] == -1.5f);
    }
}

TEST_CASE("instance_norm two-pixel closed form") {
    Tensor x(1, 1, 1, 2);
    x.data = {-1.0f, 1.0f};
    NormParams p;
    p.gamma = {1.0f};
    p.beta = {0.0f};
    const Tensor y = instance_norm(x, p);
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);  // 0.99999500...
    CHECK(y.data[0] == doctest::Approx(-expected).epsilon(1e-6));
    CHECK(y.data[1] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("instance_norm is affine invariant to float32 round-off") {
    std::mt19937 rng(17);
    NormParams p;
    p.gamma = {1.3f, 0.7f};
    p.beta = {0.2f, -0.4f};
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_tensor(rng, {1, 2, 4, 5});
        Tensor y(x.dims);
        const float a = 0.5f + 2.0f * float(rng() >> 8) * (1.0f / 16777216.0f);
        const float b = 2.0f * float(rng() >> 8) * (1.0f / 16777216.0f) - 1.0f;
        for (std::size_t i = 0; i < x.count(); ++i) y.data[i] = a * x.data[i] + b;
        const Tensor nx = instance_norm(x, p);
        const Tensor ny = instance_norm(y, p);
        for (std::size_t i = 0; i < x.count(); ++i) {
            CHECK(nx.data[i] == doctest::Approx(ny.data[i]).epsilon(1e-4));
        }
    }
}

TEST_CASE("instance_norm normalizes moments when gamma=1, beta=0") {
    std::mt19937 rng(23);
    NormParams p;
    p.gamma = {1.0f};
    p.beta = {0.0f};
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_tensor(rng, {1, 1, 6, 6});
        const Tensor y = instance_norm(x, p);
        double mean = 0.0;
        for (float v : y.data) mean += v;
        mean /= double(y.count());
        double var = 0.0;
        for (float v : y.data) var += (v - mean) * (v - mean);
        var /= double(y.count());
        CHECK(std::abs(mean) <= 1e-4);
        CHECK(std::abs(var - 1.0) <= 1e-3);
    }
}

TEST_CASE("activations") {
    Tensor x(1, 1, 1, 4);
    x.data = {-1.5f, 2.0f, 0.0f, 1.0f};
    const Tensor r = relu(x);
    CHECK(r.data[0] == 0.0f);
    CHECK(r.data[1] == 2.0f);
    const Tensor t = tanh_act(x);
    CHECK(t.data[2] == 0.0f);
    // reference math-library value, +-1 ULP
    const float expected = float(std::tanh(1.0));
    const bool within_ulp = t.data[3] == expected ||
                            t.data[3] == std::nextafter(expected, 0.0f) ||
                            t.data[3] == std::nextafter(expected, 1.0f);
    CHECK(within_ulp);
}

TEST_CASE("bilinear_resize") {
    SUBCASE("constant image stays constant") {
        Tensor x(1, 1, 3, 3);
        for (float& v : x.data) v = 7.5f;
        const Tensor y = bilinear_resize(x, 7, 5);
        for (float v : y.data) CHECK(v == 7.5f);
    }
    SUBCASE("1x1 source replicates") {
        Tensor x(1, 2, 1, 1);
        x.data = {3.0f, -2.0f};
        const Tensor y = bilinear_resize(x, 4, 4);
        for (int i = 0; i < 16; ++i) {
            CHECK(y.plane(0, 0)[i] == 3.0f);
            CHECK(y.plane(0, 1)[i] == -2.0f);
        }
    }
    SUBCASE("2x2 to 4x4 follows the half-pixel formula") {
        Tensor x(1, 1, 2, 2);
        x.at(0, 0, 0, 0) = 0.0f;
        x.at(0, 0, 0, 1) = 255.0f;
        x.at(0, 0, 1, 0) = 0.0f;
        x.at(0, 0, 1, 1) = 255.0f;
        const Tensor y = bilinear_resize(x, 4, 4);
        // src_x = -0.25, 0.25, 0.75, 1.25 -> clamped blends
        const float expected[4] = {0.0f, 63.75f, 191.25f, 255.0f};
        for (int row = 0; row < 4; ++row) {
            for (int col = 0; col < 4; ++col) {
                CHECK(y.at(0, 0, row, col) == doctest::Approx(expected[col]).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("kernels are deterministic across repeats and threads") {
    std::mt19937 rng(29);
    const Tensor x = random_tensor(rng, {1, 3, 8, 8});
    const ConvParams p = random_conv(rng, 4, 3, 3, 1);
    const Tensor first = conv2d(x, p);
    std::array<Tensor, 4> results;
    std::array<std::thread, 4> threads;
    for (int i = 0; i < 4; ++i) {
        threads[i] = std::thread([&, i] { results[i] = conv2d(x, p); });
    }
    for (auto& t : threads) t.join();
    for (const Tensor& r : results) {
        CHECK(std::memcmp(r.data.data(), first.data.data(), first.count() * 4) == 0);
    }
}

TEST_CASE("backward closed-form cases") {
    Tensor x(1, 1, 1, 2);
    x.data = {-0.5f, 0.5f};
    Tensor g(1, 1, 1, 2);
    g.data = {3.0f, 3.0f};
    const Tensor gr = relu_backward(x, g);
    CHECK(gr.data[0] == 0.0f);  // relu backward at x<0 is 0 regardless of upstream
    CHECK(gr.data[1] == 3.0f);

    Tensor y0(1, 1, 1, 1);
    y0.data = {0.0f};  // tanh(0)
    Tensor gu(1, 1, 1, 1);
    gu.data = {2.5f};
    CHECK(tanh_backward(y0, gu).data[0] == 2.5f);  // upstream * (1 - tanh(0)^2)
}

TEST_CASE("conv2d kernel gradient matches float64 finite differences tightly") {
    std::mt19937 rng(31);
    const Tensor x = random_tensor(rng, {1, 1, 3, 3});
    const ConvParams p = random_conv(rng, 1, 1, 3, 1);
    const Tensor upstream = random_tensor(rng, {1, 1, 3, 3});
    const ConvGrads g = conv2d_backward(x, p, upstream);

    ConvParamsT<double> p64;
    p64.kernel = p.kernel.cast<double>();
    p64.bias.assign(p.bias.begin(), p.bias.end());
    p64.stride = 1;
    const TensorT<double> x64 = x.cast<double>();
    const double h = 1e-4;
    for (int i = 0; i < 9; ++i) {
        ConvParamsT<double> pp = p64;
        pp.kernel.data[i] += h;
        ConvParamsT<double> pm = p64;
        pm.kernel.data[i] -= h;
        const TensorT<double> op = conv2d(x64, pp);
        const TensorT<double> om = conv2d(x64, pm);
        double jp = 0.0, jm = 0.0;
        for (int k = 0; k < 9; ++k) {
            jp += double(upstream.data[k]) * op.data[k];
            jm += double(upstream.data[k]) * om.data[k];
        }
        const double fd = (jp - jm) / (2.0 * h);
        const double a = double(g.kernel.data[i]);
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-12});
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("gradient_check passes for every differentiable op") {
    for (OpId op : all_checked_ops()) {
        const GradCheckReport rep = gradient_check(op, 10, 1e-4, 99);
        INFO(rep.detail);
        CHECK(rep.pass);
    }
}

TEST_CASE("gradient_check on relu is a vacuous parameter pass with input grads checked") {
    const GradCheckReport rep = gradient_check(OpId::Relu, 10, 1e-4, 7);
    CHECK(rep.pass);
    CHECK(rep.trials == 10);
}
