#include "snnlm/tensor.hpp"

#include <cmath>
#include <numbers>

namespace snnlm {

std::uint64_t Rng::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw ArgumentError("uniform: lo must be < hi");
    }
    const double v = lo + (hi - lo) * next_double();
    // Rounding can land exactly on hi for wide ranges.
    return v < hi ? v : std::nextafter(hi, lo);
}

double Rng::normal() {
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw ArgumentError("below: n must be positive");
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    Rng mix(root ^ h);
    return mix.next_u64();
}

static float uniform_float(Rng& rng, float lo, float hi) {
    float v = static_cast<float>(rng.uniform(lo, hi));
    // Narrowing to float may round up onto hi.
    if (!(v < hi)) {
        v = std::nextafter(hi, lo);
    }
    return v;
}

Matrix rand_uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, float lo, float hi) {
    if (!(lo < hi)) {
        throw ArgumentError("rand_uniform: lo must be < hi");
    }
    if (rows < 1 || cols < 1) {
        throw DimensionError("rand_uniform: dimensions must be >= 1");
    }
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out.data()[i] = uniform_float(rng, lo, hi);
    }
    return out;
}

Vector rand_uniform(Rng& rng, Eigen::Index size, float lo, float hi) {
    Matrix m = rand_uniform(rng, size, 1, lo, hi);
    return Eigen::Map<Vector>(m.data(), size);
}

Matrix rand_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, float stddev) {
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<float>(rng.normal() * stddev);
    }
    return out;
}

}  // namespace snnlm
