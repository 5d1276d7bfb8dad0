#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "edms/segmenter.hpp"
#include "edms/train.hpp"
#include "edms/weights.hpp"

using namespace edms;

namespace {

TrainConfig toy_config(const std::string& stage, int epochs, uint64_t seed = 5) {
    TrainConfig cfg;
    cfg.stage = stage;
    cfg.batch = 4;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.image_size = 16;
    cfg.classes = 4;
    return cfg;
}

}  // namespace

TEST_CASE("gen_dataset is seeded-deterministic") {
    const Dataset a = gen_dataset(9, 4, 32, 4);
    const Dataset b = gen_dataset(9, 4, 32, 4);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].labels == b[i].labels);
    }
    const Dataset c = gen_dataset(10, 4, 32, 4);
    CHECK(a[0].image != c[0].image);
}

TEST_CASE("gen_dataset count 0 gives an empty list") {
    CHECK(gen_dataset(1, 0, 32, 4).empty());
}

TEST_CASE("gen_dataset labels stay within the class range") {
    const Dataset data = gen_dataset(77, 6, 24, 3);
    for (const Sample& s : data) {
        for (uint8_t v : s.labels.data) CHECK(v < 3);
    }
}

TEST_CASE("dataset saves and loads through the NNNN.ppm/pgm layout") {
    const Dataset data = gen_dataset(3, 3, 16, 4);
    const auto dir = std::filesystem::temp_directory_path() / "edms_test_dataset";
    std::filesystem::remove_all(dir);
    save_dataset(data, dir);
    const Dataset loaded = load_dataset(dir);
    REQUIRE(loaded.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(loaded[i].image == data[i].image);
        CHECK(loaded[i].labels == data[i].labels);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradients leave parameters unchanged") {
        std::vector<float> p = {1.0f, -2.0f, 0.5f};
        const std::vector<float> g(3, 0.0f);
        AdamState st;
        for (int i = 0; i < 5; ++i) adam_step(p, g, st, 0.1f);
        CHECK(p == std::vector<float>{1.0f, -2.0f, 0.5f});
    }
    SUBCASE("first step moves by about -lr*sign(g)") {
        std::vector<float> p = {0.0f, 0.0f};
        const std::vector<float> g = {0.3f, -2.0f};
        AdamState st;
        adam_step(p, g, st, 0.01f);
        CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-3));
        CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-3));
    }
    SUBCASE("ten steps on f(x)=x^2 strictly shrink |x|") {
        std::vector<float> x = {1.0f};
        AdamState st;
        float prev = 1.0f;
        for (int i = 0; i < 10; ++i) {
            const std::vector<float> g = {2.0f * x[0]};
            adam_step(x, g, st, 0.1f);
            CHECK(std::abs(x[0]) < std::abs(prev));
            prev = x[0];
        }
    }
}

TEST_CASE("train_segmenter smoke: one epoch, finite loss") {
    const Dataset data = gen_dataset(21, 4, 16, 4);
    const TrainResult r = train_segmenter(toy_config("segmenter", 1), data);
    REQUIRE(r.log.size() == 1);
    CHECK(std::isfinite(r.log[0].loss));
    CHECK(r.weights.has_prefix("segmenter."));
}

TEST_CASE("train_segmenter loss decreases and training is byte-deterministic") {
    const Dataset data = gen_dataset(22, 6, 16, 4);
    const TrainConfig cfg = toy_config("segmenter", 8);
    const TrainResult a = train_segmenter(cfg, data);
    CHECK(a.log.back().loss <= a.log.front().loss);
    const TrainResult b = train_segmenter(cfg, data);
    CHECK(a.weights.digest() == b.weights.digest());
}

TEST_CASE("trained segmenter exceeds 0.9 held-out pixel accuracy") {
    // documented toy recipe, scaled to unit-test time
    const Dataset train = gen_dataset(100, 24, 32, 4);
    const Dataset held_out = gen_dataset(200, 8, 32, 4);
    TrainConfig cfg = toy_config("segmenter", 30, 7);
    cfg.batch = 8;
    cfg.image_size = 32;
    const TrainResult r = train_segmenter(cfg, train);
    const double acc = segmenter_accuracy(r.weights, held_out);
    INFO("held-out accuracy " << acc);
    CHECK(acc > 0.9);
}

TEST_CASE("frozen-at-zero synthesis head converges to the constant L1 bound") {
    // with every weight zero and only the final bias learnable the synthesis
    // is tanh(b) per channel; the reachable optimum is the per-channel median
    std::mt19937 rng(31);
    Tensor target(1, 3, 8, 8);
    for (float& v : target.data) v = 2.0f * float(rng() >> 8) * (1.0f / 16777216.0f) - 1.0f;

    double lower_bound = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<float> vals(target.plane(0, c), target.plane(0, c) + 64);
        std::sort(vals.begin(), vals.end());
        const float median = 0.5f * (vals[31] + vals[32]);
        for (float v : vals) lower_bound += std::abs(v - median);
    }
    lower_bound /= double(target.count());

    std::vector<float> bias(3, 0.0f);
    AdamState st;
    float loss = 0.0f;
    for (int step = 0; step < 400; ++step) {
        Tensor synth(1, 3, 8, 8);
        for (int c = 0; c < 3; ++c) {
            const float t = std::tanh(bias[c]);
            for (int i = 0; i < 64; ++i) synth.plane(0, c)[i] = t;
        }
        auto [l, grad] = l1_loss(synth, target);
        loss = l;
        const Tensor gpre = tanh_backward(synth, grad);
        std::vector<float> gbias(3, 0.0f);
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < 64; ++i) gbias[c] += gpre.plane(0, c)[i];
        }
        adam_step(bias, gbias, st, 0.05f);
    }
    CHECK(double(loss) <= lower_bound + 0.02);
}

TEST_CASE("train_base toy run: final loss below initial, weights reload cleanly") {
    const Dataset data = gen_dataset(23, 4, 16, 4);
    TrainConfig cfg = toy_config("base", 5);
    const TrainResult r = train_base(cfg, data, WeightSet{});
    REQUIRE(r.log.size() == 5);
    CHECK(r.log.back().loss < r.log.front().loss);
    CHECK(r.weights.has_prefix("compnet."));
    CHECK(r.weights.has_prefix("finenet."));

    const auto path = std::filesystem::temp_directory_path() / "edms_test_base.edmw";
    save_weights(r.weights, path);
    const WeightSet loaded = load_weights(path);
    CHECK(loaded.digest() == r.weights.digest());
    std::filesystem::remove(path);
}

TEST_CASE("train_smapnet freezes base weights and trains only smapnet") {
    const Dataset data = gen_dataset(24, 3, 16, 4);
    TrainConfig cfg = toy_config("smapnet", 2);

    WeightSet base;
    const TrainResult seg = train_segmenter(toy_config("segmenter", 2), data);
    for (const auto& e : seg.weights.entries()) base.put(e);
    const TrainResult b = train_base(toy_config("base", 1), data, base);
    const TrainResult r = train_smapnet(cfg, data, b.weights);

    CHECK(r.weights.has_prefix("smapnet."));
    for (const auto& e : b.weights.entries()) {
        if (e.name.starts_with("smapnet.")) continue;
        const WeightEntry& after = r.weights.get(e.name);
        CHECK(after.data == e.data);
    }
}

TEST_CASE("train_smapnet requires the base stages first") {
    const Dataset data = gen_dataset(25, 2, 16, 4);
    CHECK_THROWS_AS(train_smapnet(toy_config("smapnet", 1), data, WeightSet{}), TrainError);
}

TEST_CASE("loss log CSV schema") {
    const std::vector<TrainLogRow> log = {{1, "base", 0.5}, {2, "base", 0.25}};
    const auto path = std::filesystem::temp_directory_path() / "edms_test_log.csv";
    write_loss_log(log, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "epoch,stage,loss");
    std::getline(f, line);
    CHECK(line == "1,base,0.5");
    std::filesystem::remove(path);
}
