#include "snnlm/synapsis.hpp"

#include <string>

namespace snnlm {

void SynapsisLayer::validate() const {
    if (!(scaling_factor > 0.0)) {
        throw ArgumentError("SynapsisLayer: scaling_factor must be positive");
    }
    if (steps < 1) {
        throw ArgumentError("SynapsisLayer: steps must be >= 1");
    }
    if (bias.size() != weight.rows()) {
        throw DimensionError("SynapsisLayer: bias length does not match weight rows");
    }
}

Vector spike_matvec(const Matrix& weight, const Eigen::Ref<const VectorX<std::int8_t>>& spikes) {
    if (spikes.size() != weight.cols()) {
        throw DimensionError("spike_matvec: spike vector length does not match weight columns");
    }
    for (Eigen::Index j = 0; j < spikes.size(); ++j) {
        if (spikes(j) < -1 || spikes(j) > 1) {
            throw PreconditionError("spike_matvec: spikes must be ternary");
        }
    }
    VectorD acc = VectorD::Zero(weight.rows());
    spike_accumulate(weight, spikes, acc);
    return acc.cast<float>();
}

SynapsisRun synapsis_run(const SynapsisLayer& layer, const Vector& x) {
    layer.validate();
    if (x.size() != layer.weight.cols()) {
        throw DimensionError("synapsis: input length " + std::to_string(x.size()) + " does not match weight columns " +
                             std::to_string(layer.weight.cols()));
    }
    const VectorD scaled = x.cast<double>() / layer.scaling_factor;
    if (scaled.size() > 0 && scaled.cwiseAbs().maxCoeff() > 1.0) {
        throw PreconditionError("synapsis: |x / scaling_factor| exceeds 1");
    }
    const SpikeTrain train = encode_rate(scaled, layer.steps);
    SynapsisRun run;
    run.pre_counts = train.accumulated;
    run.accumulated = VectorD::Zero(layer.weight.rows());
    for (int t = 0; t < layer.steps; ++t) {
        spike_accumulate(layer.weight, train.spikes.row(t), run.accumulated);
    }
    return run;
}

Vector synapsis_forward(const SynapsisLayer& layer, const Vector& x) {
    const SynapsisRun run = synapsis_run(layer, x);
    const Vector h = (run.accumulated / static_cast<double>(layer.steps)).cast<float>();
    return h + layer.bias;
}

VectorD synapsis_forward_rescaled(const SynapsisLayer& layer, const Vector& x) {
    const SynapsisRun run = synapsis_run(layer, x);
    return run.accumulated * (layer.scaling_factor / static_cast<double>(layer.steps)) + layer.bias.cast<double>();
}

}  // namespace snnlm
