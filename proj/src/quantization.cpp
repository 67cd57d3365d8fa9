#include "snnlm/quantization.hpp"

#include <string>

namespace snnlm {

std::string to_string(QuantMode mode) {
    switch (mode) {
        case QuantMode::symmetric: return "symmetric";
        case QuantMode::symmetric_narrow: return "symmetric_narrow";
        case QuantMode::asymmetric: return "asymmetric";
    }
    return "unknown";
}

QuantMode quant_mode_from_string(const std::string& name) {
    if (name == "symmetric") return QuantMode::symmetric;
    if (name == "symmetric_narrow") return QuantMode::symmetric_narrow;
    if (name == "asymmetric") return QuantMode::asymmetric;
    throw ConfigError("unknown quantization mode '" + name + "'");
}

QuantSpec QuantSpec::symmetric(int bits) {
    QuantSpec s;
    s.bits = bits;
    s.mode = QuantMode::symmetric;
    s.clip_lo = bits >= 2 ? -(1 << (bits - 1)) : 0;
    s.clip_hi = bits >= 2 ? (1 << (bits - 1)) - 1 : 0;
    return s;
}

QuantSpec QuantSpec::narrow(int bits) {
    QuantSpec s = symmetric(bits);
    s.mode = QuantMode::symmetric_narrow;
    s.clip_lo = -s.clip_hi;
    return s;
}

QuantSpec QuantSpec::asymmetric(int bits) {
    QuantSpec s;
    s.bits = bits;
    s.mode = QuantMode::asymmetric;
    s.clip_lo = 0;
    s.clip_hi = bits >= 2 ? (1 << bits) - 1 : 0;
    return s;
}

void QuantSpec::validate() const {
    if (bits < 2 || bits > 24) {
        throw ArgumentError("QuantSpec: bit width must be in [2, 24], got " + std::to_string(bits));
    }
    if (clip_lo >= clip_hi) {
        throw ArgumentError("QuantSpec: clip_lo must be below clip_hi");
    }
    if (mode == QuantMode::symmetric && (clip_lo != -(1 << (bits - 1)) || clip_hi != max_level())) {
        throw ArgumentError("QuantSpec: symmetric clip bounds must be [-2^(b-1), 2^(b-1)-1]");
    }
}

Matrix dequantize(const IntMatrix& levels, double scale, int zero_point) {
    Matrix out(levels.rows(), levels.cols());
    for (Eigen::Index i = 0; i < levels.size(); ++i) {
        out.data()[i] = static_cast<float>(scale * static_cast<double>(levels.data()[i] - zero_point));
    }
    return out;
}

Matrix ste_grad(const Matrix& upstream_grad, const Matrix& x, const QuantSpec& spec, double scale,
                int zero_point) {
    if (upstream_grad.rows() != x.rows() || upstream_grad.cols() != x.cols()) {
        throw DimensionError("ste_grad: gradient and input shapes differ");
    }
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double level = static_cast<double>(x.data()[i]) / scale + zero_point;
        const bool inside = level >= spec.clip_lo && level <= spec.clip_hi;
        out.data()[i] = inside ? upstream_grad.data()[i] : 0.0f;
    }
    return out;
}

Matrix ste_grad(const Matrix& upstream_grad, const Matrix& x, const QuantSpec& spec) {
    const double s = compute_scale(x, spec);
    return ste_grad(upstream_grad, x, spec, s, compute_zero_point(x, spec, s));
}

MatrixD qsynapsis_preactivation(const Matrix& weight, const Vector& bias, const IntMatrix& pre_levels,
                                double pre_scale) {
    if (pre_levels.cols() != weight.cols()) {
        throw DimensionError("qsynapsis: input width " + std::to_string(pre_levels.cols()) +
                             " does not match weight columns " + std::to_string(weight.cols()));
    }
    if (bias.size() != weight.rows()) {
        throw DimensionError("qsynapsis: bias length does not match weight rows");
    }
    MatrixD y = pre_levels.cast<double>() * weight.cast<double>().transpose();
    y *= pre_scale;
    y.rowwise() += bias.cast<double>().transpose();
    return y;
}

QSynapsisResult qsynapsis_forward(const Matrix& weight, const Vector& bias, const QuantSpec& pre_spec,
                                  const QuantSpec& post_spec, const Matrix& x, std::optional<double> pre_scale,
                                  std::optional<double> post_scale) {
    if (pre_spec.mode == QuantMode::asymmetric || post_spec.mode == QuantMode::asymmetric) {
        throw ArgumentError("qsynapsis: asymmetric quantizers are not supported around a linear map");
    }
    QSynapsisResult out;
    out.pre_scale = pre_scale ? *pre_scale : compute_scale(x, pre_spec);
    out.pre_levels = quantize_levels(x, pre_spec, out.pre_scale);
    const MatrixD y = qsynapsis_preactivation(weight, bias, out.pre_levels, out.pre_scale);
    out.post_scale = post_scale ? *post_scale : compute_scale(y, post_spec);
    out.post_levels = quantize_levels(y, post_spec, out.post_scale);
    out.z = dequantize(out.post_levels, out.post_scale);
    return out;
}

}  // namespace snnlm
