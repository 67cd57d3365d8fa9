#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string_view>

#include "snnlm/error.hpp"

namespace snnlm {

// Row-major to match the checkpoint payload layout.
template <class F>
using MatrixX = Eigen::Matrix<F, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class F>
using VectorX = Eigen::Matrix<F, Eigen::Dynamic, 1>;

using Matrix = MatrixX<float>;
using Vector = VectorX<float>;
using MatrixD = MatrixX<double>;
using VectorD = VectorX<double>;
using IntMatrix = MatrixX<std::int32_t>;
using IntVector = VectorX<std::int32_t>;

// SplitMix64. Chosen because the whole stream is defined by integer
// arithmetic and is therefore identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double next_double();
    // Uniform in [lo, hi); requires lo < hi.
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (one value per call, no caching).
    double normal();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Derive an independent child seed for a named consumer of the root seed:
// splitmix64(root ^ fnv1a64(name)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

// Dense product with every dot product accumulated in double and narrowed
// once at the end, so results do not depend on blocking or vectorization.
template <class DA, class DB>
MatrixX<typename DA::Scalar> matmul(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    using F = typename DA::Scalar;
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                             std::to_string(b.rows()) + " disagree");
    }
    MatrixX<F> out(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                acc += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
            }
            out(i, j) = static_cast<F>(acc);
        }
    }
    return out;
}

Matrix rand_uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, float lo, float hi);
Vector rand_uniform(Rng& rng, Eigen::Index size, float lo, float hi);
Matrix rand_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, float stddev);

// Numerically stable sigmoid.
inline double sigmoid(double z) {
    if (z >= 0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace snnlm
