#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

/// Minimal deterministic dense linear algebra and RNG utilities.
///
/// All floating point work is done in 64-bit doubles. Reductions use a fixed
/// left-to-right summation order so that results are reproducible bit-for-bit
/// for a given seed and build.
namespace slmtl {

using Vec = std::vector<double>;

/// Throws std::runtime_error on violated preconditions (dimension mismatches,
/// bad configuration values). These are fatal by contract.
void require(bool cond, const std::string& what);

/// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }

    double sum() const;
    bool all_finite() const;
};

/// Seeded random generator with a pinned draw discipline.
///
/// Engine: std::mt19937_64 (bit-exact across platforms by the standard).
/// Distribution transforms are implemented here rather than with
/// std::*_distribution, whose output is implementation-defined:
///   uniform()     -> (next() >> 11) * 2^-53, uniform in [0, 1)
///   normal()      -> Box-Muller cosine branch, two fresh uniforms per call
///   uniform_int(n)-> unbiased rejection sampling on next()
/// fork(stream) derives an independent child generator from (seed, stream)
/// via splitmix64, so that consumers (data, init, batching, weighting) can
/// be reseeded independently of one another.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform double in [0, 1).
    double uniform();
    /// Standard normal deviate.
    double normal();
    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t uniform_int(std::uint64_t bound);
    /// Independent child generator for the given stream id.
    Rng fork(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// Inner product with fixed left-to-right accumulation.
double dot(std::span<const double> a, std::span<const double> b);
double dot(const Vec& a, const Vec& b);

/// y + alpha * x, inputs unmodified.
Vec axpy(double alpha, const Vec& x, const Vec& y);
/// In-place y += alpha * x.
void axpy_inplace(double alpha, std::span<const double> x, std::span<double> y);

double norm2(std::span<const double> a);

/// Matrix with i.i.d. Normal(0, std^2) entries, drawn row-major.
Matrix gaussian_matrix(Rng& rng, int rows, int cols, double std);

bool all_finite(std::span<const double> a);

}  // namespace slmtl
