#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slmtl/tensor.hpp"

using namespace slmtl;

TEST_CASE("dot: hand values") {
    CHECK(dot(Vec{1, 2}, Vec{3, -1}) == doctest::Approx(1.0));
    CHECK(dot(Vec{0, 0, 0}, Vec{5, 5, 5}) == 0.0);
}

TEST_CASE("dot: squared norm oracle on random vectors") {
    Rng rng(99);
    Vec a(10);
    for (double& v : a) {
        v = rng.normal();
    }
    double expected = 0.0;
    for (double v : a) {
        expected += v * v;
    }
    CHECK(dot(a, a) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("dot: symmetry exact and non-negative on diagonal") {
    Rng rng(7);
    for (int rep = 0; rep < 25; ++rep) {
        Vec a(17), b(17);
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        CHECK(dot(a, b) == dot(b, a));
        CHECK(dot(a, a) >= 0.0);
    }
}

TEST_CASE("dot: dimension mismatch is fatal") {
    CHECK_THROWS(dot(Vec{1.0}, Vec{1.0, 2.0}));
}

TEST_CASE("axpy: identities and hand value") {
    const Vec y{1.0, 1.0};
    CHECK(axpy(0.0, Vec{5.0, -3.0}, y) == y);
    const Vec r = axpy(-0.1, Vec{1.0, 0.0}, y);
    CHECK(r[0] == doctest::Approx(0.9));
    CHECK(r[1] == doctest::Approx(1.0));
}

TEST_CASE("axpy: elementwise loop oracle on 50-dim inputs") {
    Rng rng(123);
    Vec x(50), y(50);
    for (double& v : x) v = rng.normal();
    for (double& v : y) v = rng.normal();
    const double eta = 0.37;
    const Vec r = axpy(-eta, x, y);
    for (size_t k = 0; k < x.size(); ++k) {
        CHECK(r[k] == doctest::Approx(y[k] - eta * x[k]).epsilon(1e-15));
    }
    CHECK_THROWS(axpy(1.0, Vec{1.0}, Vec{1.0, 2.0}));
}

TEST_CASE("gaussian_matrix: zero std gives the zero matrix") {
    Rng rng(5);
    const Matrix m = gaussian_matrix(rng, 4, 6, 0.0);
    for (double v : m.data) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("gaussian_matrix: identical seeds are bitwise identical") {
    Rng a(42), b(42);
    const Matrix ma = gaussian_matrix(a, 8, 9, 1.3);
    const Matrix mb = gaussian_matrix(b, 8, 9, 1.3);
    CHECK(ma.data == mb.data);

    Rng c(43);
    const Matrix mc = gaussian_matrix(c, 8, 9, 1.3);
    CHECK(ma.data != mc.data);
}

TEST_CASE("gaussian_matrix: sample moments at 1e5 draws") {
    Rng rng(2024);
    const Matrix m = gaussian_matrix(rng, 1000, 100, 1.0);
    double mean = 0.0;
    for (double v : m.data) mean += v;
    mean /= static_cast<double>(m.data.size());
    double var = 0.0;
    for (double v : m.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m.data.size() - 1);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.02);
    CHECK(m.all_finite());
}

TEST_CASE("rng: uniform_int stays in bounds and covers values") {
    Rng rng(11);
    std::vector<int> seen(5, 0);
    for (int k = 0; k < 2000; ++k) {
        const auto v = rng.uniform_int(5);
        REQUIRE(v < 5);
        seen[static_cast<size_t>(v)] += 1;
    }
    for (int c : seen) {
        CHECK(c > 300);
    }
}

TEST_CASE("rng: forked streams are reproducible and distinct") {
    const Rng root(77);
    Rng a = root.fork(1);
    Rng b = root.fork(1);
    Rng c = root.fork(2);
    CHECK(a.next_u64() == b.next_u64());
    Rng a2 = root.fork(1);
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("rng: uniform in [0,1)") {
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}
