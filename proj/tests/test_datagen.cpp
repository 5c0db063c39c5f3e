#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "slmtl/datagen.hpp"

using namespace slmtl;

namespace {

ToySpec toy_spec(double noise = 0.0) {
    ToySpec spec;
    spec.output_dim = 1;
    spec.n_train = 200;
    spec.n_val = 50;
    spec.n_test = 50;
    spec.noise_fraction = Vec(2, noise);
    spec.seed = 11;
    return spec;
}

int flagged_count(const std::vector<std::uint8_t>& flags) {
    int n = 0;
    for (auto f : flags) n += f;
    return n;
}

}  // namespace

TEST_CASE("toy: clean generation carries no flags") {
    const auto data = generate_toy(toy_spec(0.0));
    for (int t = 0; t < 2; ++t) {
        CHECK(flagged_count(data.train.corrupted[t]) == 0);
        CHECK(flagged_count(data.val.corrupted[t]) == 0);
        CHECK(flagged_count(data.test.corrupted[t]) == 0);
    }
    CHECK(data.train.size() == 200);
    CHECK(data.val.size() == 50);
    CHECK(data.test.size() == 50);
}

TEST_CASE("toy: zero sigma zeroes the targets") {
    ToySpec spec = toy_spec(0.0);
    spec.sigma = Vec{0.0, 0.0};
    const auto data = generate_toy(spec);
    for (int t = 0; t < 2; ++t) {
        for (double v : data.train.Y[t].data) {
            CHECK(v == 0.0);
        }
    }
}

TEST_CASE("toy: exact corruption counts per task") {
    ToySpec spec = toy_spec(0.4);
    spec.n_train = 1000;
    const auto data = generate_toy(spec);
    CHECK(flagged_count(data.train.corrupted[0]) == 400);
    CHECK(flagged_count(data.train.corrupted[1]) == 400);
    // validation and test stay unaltered
    CHECK(flagged_count(data.val.corrupted[0]) == 0);
    CHECK(flagged_count(data.test.corrupted[1]) == 0);
}

TEST_CASE("toy: targets bounded by sigma before noise") {
    ToySpec spec = toy_spec(0.3);
    spec.sigma = Vec{0.7, 2.0};
    const auto data = generate_toy(spec);
    for (int t = 0; t < 2; ++t) {
        for (int j = 0; j < data.train.size(); ++j) {
            if (!data.train.corrupted[t][j]) {
                CHECK(std::abs(data.train.Y[t](j, 0)) <= spec.sigma[static_cast<size_t>(t)]);
            }
        }
        for (double v : data.test.Y[t].data) {
            CHECK(std::abs(v) <= spec.sigma[static_cast<size_t>(t)]);
        }
    }
}

TEST_CASE("toy: vector targets share the basis and flag whole samples") {
    ToySpec spec = toy_spec(0.5);
    spec.output_dim = 7;
    spec.n_train = 40;
    const auto data = generate_toy(spec);
    CHECK(data.train.Y[0].cols == 7);
    CHECK(data.val.Y[1].cols == 7);
    CHECK(flagged_count(data.train.corrupted[0]) == 20);
    // clean rows stay inside the tanh envelope on every component
    for (int j = 0; j < data.train.size(); ++j) {
        if (data.train.corrupted[0][j]) continue;
        for (int r = 0; r < 7; ++r) {
            CHECK(std::abs(data.train.Y[0](j, r)) <= 1.0);
        }
    }
}

TEST_CASE("toy: regeneration is bitwise identical, noise stream is separate") {
    const auto a = generate_toy(toy_spec(0.4));
    const auto b = generate_toy(toy_spec(0.4));
    CHECK(a.train.X.data == b.train.X.data);
    CHECK(a.train.Y[0].data == b.train.Y[0].data);
    CHECK(a.train.corrupted[0] == b.train.corrupted[0]);
    CHECK(a.test.Y[1].data == b.test.Y[1].data);

    // same seed, different noise level: inputs and clean targets unchanged
    const auto clean = generate_toy(toy_spec(0.0));
    CHECK(a.train.X.data == clean.train.X.data);
    CHECK(a.val.Y[0].data == clean.val.Y[0].data);
    for (int j = 0; j < a.train.size(); ++j) {
        if (!a.train.corrupted[0][j]) {
            CHECK(a.train.Y[0](j, 0) == clean.train.Y[0](j, 0));
        }
    }
}

TEST_CASE("uniform flip: identity at zero, forced complement with two classes") {
    const std::vector<int> labels{0, 1, 0, 1, 1, 0};
    Rng rng(3);
    const auto [same, no_flags] = apply_uniform_flip(labels, 0.0, 2, rng);
    CHECK(same == labels);
    CHECK(flagged_count(no_flags) == 0);

    Rng rng2(4);
    const auto [flipped, flags] = apply_uniform_flip(labels, 1.0, 2, rng2);
    CHECK(flagged_count(flags) == 6);
    for (size_t j = 0; j < labels.size(); ++j) {
        CHECK(flipped[j] == 1 - labels[j]);
    }
}

TEST_CASE("uniform flip: flipped labels always differ, exact count") {
    Rng label_rng(5);
    std::vector<int> labels(500);
    for (int& l : labels) l = static_cast<int>(label_rng.uniform_int(6));
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);
        const auto [flipped, flags] = apply_uniform_flip(labels, 0.37, 6, rng);
        CHECK(flagged_count(flags) == static_cast<int>(std::floor(0.37 * 500)));
        for (size_t j = 0; j < labels.size(); ++j) {
            if (flags[j]) {
                CHECK(flipped[j] != labels[j]);
                CHECK(flipped[j] >= 0);
                CHECK(flipped[j] < 6);
            } else {
                CHECK(flipped[j] == labels[j]);
            }
        }
    }
    Rng rng(1);
    CHECK_THROWS(apply_uniform_flip(labels, 0.5, 1, rng));
}

TEST_CASE("background flip: targets the background class only") {
    const std::vector<int> labels{0, 1, 2, 3, 1, 2, 0, 3, 1, 2};
    Rng rng(9);
    const auto [flipped, flags] = apply_background_flip(labels, 0.3, 0, rng);
    CHECK(flagged_count(flags) == 3);
    int pre_bg = 0, post_bg = 0;
    for (size_t j = 0; j < labels.size(); ++j) {
        pre_bg += labels[j] == 0;
        post_bg += flipped[j] == 0;
        if (flags[j]) {
            CHECK(labels[j] != 0);
            CHECK(flipped[j] == 0);
        }
    }
    CHECK(post_bg >= pre_bg);

    // all-background input has nothing to flip
    const std::vector<int> bg(8, 2);
    Rng rng2(10);
    const auto [same, no_flags] = apply_background_flip(bg, 0.9, 2, rng2);
    CHECK(same == bg);
    CHECK(flagged_count(no_flags) == 0);
}

TEST_CASE("classify: flip modes and flags") {
    ClassifySpec spec;
    spec.n_train = 400;
    spec.n_val = 80;
    spec.n_test = 80;
    spec.seed = 21;

    const auto clean = generate_classify(spec);
    CHECK(clean.n_tasks() == 4);
    for (int t = 0; t < 4; ++t) {
        CHECK(flagged_count(clean.train.corrupted[t]) == 0);
    }
    // binary one-vs-rest targets
    for (double v : clean.train.Y[0].data) {
        CHECK((v == 0.0 || v == 1.0));
    }

    spec.flip_mode = FlipMode::Uniform;
    spec.flip_fraction = 1.0;
    const auto all_flipped = generate_classify(spec);
    CHECK(flagged_count(all_flipped.train.corrupted[0]) == 400);
    // validation and test untouched
    CHECK(flagged_count(all_flipped.val.corrupted[0]) == 0);
    CHECK(all_flipped.val.Y[0].data == clean.val.Y[0].data);

    spec.flip_mode = FlipMode::Background;
    spec.flip_fraction = 0.2;
    spec.background_class = 1;
    const auto bg = generate_classify(spec);
    CHECK(flagged_count(bg.train.corrupted[0]) == 80);
    // flagged samples are all labeled as the background class: task that
    // detects class 1 must read 1.0 there
    int bg_task = -1;
    for (int t = 0; t < 4; ++t) {
        bool all_one = true;
        for (int j = 0; j < 400; ++j) {
            if (bg.train.corrupted[t][j] && bg.train.Y[t](j, 0) != 1.0) all_one = false;
        }
        if (all_one) bg_task = t;
    }
    CHECK(bg_task == 1);  // main class 0 is task 0, class 1 is task 1
}

TEST_CASE("next_batch: ranges, determinism, flags carried") {
    const auto data = generate_toy(toy_spec(0.5));
    Rng a(31), b(31);
    const TaskBatch ba = next_batch(data.train, 16, a);
    const TaskBatch bb = next_batch(data.train, 16, b);
    CHECK(ba.indices == bb.indices);
    CHECK(ba.X.data == bb.X.data);
    for (int j = 0; j < 16; ++j) {
        CHECK(ba.indices[j] >= 0);
        CHECK(ba.indices[j] < data.train.size());
        CHECK(ba.corrupted[0][j] == data.train.corrupted[0][ba.indices[j]]);
        CHECK(ba.Y[1](j, 0) == data.train.Y[1](ba.indices[j], 0));
    }

    // batches larger than the split are allowed (with replacement)
    Rng c(32);
    const TaskBatch big = next_batch(data.val, data.val.size() + 10, c);
    CHECK(big.size() == data.val.size() + 10);
}

TEST_CASE("next_batch: inclusion frequencies are uniform") {
    ToySpec spec = toy_spec(0.0);
    spec.n_train = 50;
    const auto data = generate_toy(spec);
    Rng rng(77);
    std::vector<int> counts(50, 0);
    const int draws = 10000;
    const int batch = 10;
    for (int k = 0; k < draws / batch; ++k) {
        const TaskBatch b = next_batch(data.train, batch, rng);
        for (int idx : b.indices) counts[static_cast<size_t>(idx)] += 1;
    }
    // binomial(10^4, 1/50): mean 200, sigma ~ 14
    const double p = 1.0 / 50.0;
    const double mean = draws * p;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (int c : counts) {
        CHECK(std::abs(c - mean) <= 3.0 * sigma);
    }
}

TEST_CASE("export: header and row shape") {
    ToySpec spec = toy_spec(0.2);
    spec.n_train = 5;
    spec.input_dim = 3;
    const auto data = generate_toy(spec);
    std::ostringstream out;
    export_split_csv(data.train, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "x0,x1,x2,y0,y1,flag0,flag1");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 5);
}
