#include "slmtl/tensor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slmtl {

void require(bool cond, const std::string& what) {
    if (!cond) {
        throw std::runtime_error(what);
    }
}

double Matrix::sum() const {
    double s = 0.0;
    for (double v : data) {
        s += v;
    }
    return s;
}

bool Matrix::all_finite() const {
    return slmtl::all_finite(data);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() {
    return engine_();
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // Cosine branch of Box-Muller; the sine companion is discarded so each
    // call consumes exactly two engine draws.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
    require(bound > 0, "uniform_int: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r = next_u64();
    while (r >= limit) {
        r = next_u64();
    }
    return r % bound;
}

Rng Rng::fork(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        s += a[k] * b[k];
    }
    return s;
}

double dot(const Vec& a, const Vec& b) {
    return dot(std::span<const double>(a), std::span<const double>(b));
}

Vec axpy(double alpha, const Vec& x, const Vec& y) {
    require(x.size() == y.size(), "axpy: dimension mismatch");
    Vec out(y);
    axpy_inplace(alpha, x, out);
    return out;
}

void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), "axpy: dimension mismatch");
    for (size_t k = 0; k < x.size(); ++k) {
        y[k] += alpha * x[k];
    }
}

double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

Matrix gaussian_matrix(Rng& rng, int rows, int cols, double std) {
    require(std >= 0.0, "gaussian_matrix: std must be non-negative");
    Matrix m(rows, cols);
    for (double& v : m.data) {
        v = std * rng.normal();
    }
    return m;
}

bool all_finite(std::span<const double> a) {
    for (double v : a) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace slmtl
