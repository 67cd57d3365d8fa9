#pragma once

#include <string>

#include <algorithm>
#include <cmath>
#include <optional>

#include "snnlm/tensor.hpp"

namespace snnlm {

enum class QuantMode {
    symmetric,         // levels in [-2^(b-1), 2^(b-1)-1]
    symmetric_narrow,  // levels in [-(2^(b-1)-1), 2^(b-1)-1], mirrors the rate code range
    asymmetric,        // levels in [0, 2^b-1] around a zero point
};

std::string to_string(QuantMode mode);
QuantMode quant_mode_from_string(const std::string& name);

struct QuantSpec {
    int bits = 8;
    QuantMode mode = QuantMode::symmetric;
    int clip_lo = -128;
    int clip_hi = 127;

    static QuantSpec symmetric(int bits);
    static QuantSpec narrow(int bits);
    static QuantSpec asymmetric(int bits);

    // 2^(b-1) - 1, the level reached by max|x|.
    int max_level() const { return (1 << (bits - 1)) - 1; }
    void validate() const;
};

struct QuantResult {
    Matrix values;
    IntMatrix levels;
    double scale = 1.0;
    int zero_point = 0;
};

// Half-away-from-zero, which keeps quantize(-x) == -quantize(x).
inline double round_half_away(double v) { return std::round(v); }

// Scale the quantizer derives from data: max|x| / (2^(b-1)-1), or 1 when x
// is all zeros. Asymmetric mode spreads [min, max] over 2^b - 1 steps.
template <class Derived>
double compute_scale(const Eigen::MatrixBase<Derived>& x, const QuantSpec& spec) {
    spec.validate();
    if (x.size() == 0) {
        throw ArgumentError("quantize: empty tensor");
    }
    if (spec.mode == QuantMode::asymmetric) {
        const double lo = std::min(0.0, static_cast<double>(x.minCoeff()));
        const double hi = std::max(0.0, static_cast<double>(x.maxCoeff()));
        const double range = hi - lo;
        return range > 0.0 ? range / static_cast<double>((1 << spec.bits) - 1) : 1.0;
    }
    const double max_abs = static_cast<double>(x.cwiseAbs().maxCoeff());
    return max_abs > 0.0 ? max_abs / static_cast<double>(spec.max_level()) : 1.0;
}

template <class Derived>
int compute_zero_point(const Eigen::MatrixBase<Derived>& x, const QuantSpec& spec, double scale) {
    if (spec.mode != QuantMode::asymmetric) {
        return 0;
    }
    const double lo = std::min(0.0, static_cast<double>(x.minCoeff()));
    return static_cast<int>(round_half_away(-lo / scale));
}

// Integer levels of x under a frozen scale: clip(round(x / s) + zp, lo, hi).
template <class Derived>
IntMatrix quantize_levels(const Eigen::MatrixBase<Derived>& x, const QuantSpec& spec, double scale,
                          int zero_point = 0) {
    IntMatrix levels(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double q = round_half_away(static_cast<double>(x(r, c)) / scale) + zero_point;
            levels(r, c) = static_cast<std::int32_t>(
                std::clamp(q, static_cast<double>(spec.clip_lo), static_cast<double>(spec.clip_hi)));
        }
    }
    return levels;
}

// Dequantized values s * (levels - zp), narrowed to float.
Matrix dequantize(const IntMatrix& levels, double scale, int zero_point = 0);

template <class Derived>
QuantResult quantize_with_scale(const Eigen::MatrixBase<Derived>& x, const QuantSpec& spec, double scale,
                                int zero_point = 0) {
    spec.validate();
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ArgumentError("quantize: scale must be positive and finite");
    }
    QuantResult out;
    out.scale = scale;
    out.zero_point = zero_point;
    out.levels = quantize_levels(x, spec, scale, zero_point);
    out.values = dequantize(out.levels, scale, zero_point);
    return out;
}

template <class Derived>
QuantResult quantize(const Eigen::MatrixBase<Derived>& x, const QuantSpec& spec) {
    const double s = compute_scale(x, spec);
    return quantize_with_scale(x, spec, s, compute_zero_point(x, spec, s));
}

// Clipped straight-through estimator: the upstream gradient passes where
// the pre-rounding level lies inside the clip range and is zeroed outside.
Matrix ste_grad(const Matrix& upstream_grad, const Matrix& x, const QuantSpec& spec, double scale,
                int zero_point = 0);
Matrix ste_grad(const Matrix& upstream_grad, const Matrix& x, const QuantSpec& spec);

struct QSynapsisResult {
    Matrix z;            // Q_post(W Q_pre(x) + b), one row per input row
    IntMatrix pre_levels;
    IntMatrix post_levels;
    double pre_scale = 1.0;
    double post_scale = 1.0;
};

// Quantize-linear-quantize. Rows of x are independent inputs; weight is
// out x in. The pre-activation is formed in double as s_pre * (W levels) + b.
// Scales left empty are derived from the data being quantized.
QSynapsisResult qsynapsis_forward(const Matrix& weight, const Vector& bias, const QuantSpec& pre_spec,
                                  const QuantSpec& post_spec, const Matrix& x,
                                  std::optional<double> pre_scale = std::nullopt,
                                  std::optional<double> post_scale = std::nullopt);

// Pre-activation for already-quantized input levels: s_pre * (levels W^T) + b.
MatrixD qsynapsis_preactivation(const Matrix& weight, const Vector& bias, const IntMatrix& pre_levels,
                                double pre_scale);

}  // namespace snnlm
