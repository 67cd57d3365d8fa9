#pragma once

#include <cstdint>

#include "snnlm/tensor.hpp"

namespace snnlm {

// Integrate-and-fire neuron with a linearly growing threshold
// theta(t) = theta_base + t * alpha that emits +1 / -1 spikes.
struct EiIfParams {
    double theta_base = 1.0;
    double alpha = 0.0;
    // Fraction of the membrane potential removed after every step.
    double attenuation_rate = 1.0;
};

struct EiIfState {
    double v = 0.0;
    std::int64_t t = 0;
};

struct EiIfStep {
    int spike = 0;
    EiIfState state;
};

EiIfStep ei_if_step(const EiIfParams& params, const EiIfState& state, double input_current);

// Threshold schedule under which a constant input x in [-1, 1] yields the
// signed count sign(x) * min(T, floor(T|x| + 1/2)), i.e. round-half-away(T x).
EiIfParams rate_schedule(int steps);

using SpikeMatrix = MatrixX<std::int8_t>;

// Per-step ternary spikes (steps x elements) and their signed sums.
struct SpikeTrain {
    int steps = 0;
    SpikeMatrix spikes;
    IntVector accumulated;
};

// Summary of one neuron driven by a constant current for a full window.
struct NeuronRun {
    int count = 0;
    // 1-based step of the first spike of either sign, 0 when silent.
    int first_spike = 0;
    // Mean membrane potential right before the spike decision.
    double mean_v = 0.0;
};

NeuronRun run_neuron(const EiIfParams& params, double input_current, int steps);

// Rate-code each element of x (pre-scaled into [-1, 1]) over `steps` steps.
template <class Derived>
SpikeTrain encode_rate(const Eigen::MatrixBase<Derived>& x, int steps) {
    if (steps < 1) {
        throw ArgumentError("encode_rate: steps must be >= 1");
    }
    const Eigen::Index n = x.size();
    SpikeTrain train;
    train.steps = steps;
    train.spikes = SpikeMatrix::Zero(steps, n);
    train.accumulated = IntVector::Zero(n);
    const EiIfParams schedule = rate_schedule(steps);
    Eigen::Index idx = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index r = 0; r < x.rows(); ++r, ++idx) {
            const double value = static_cast<double>(x(r, c));
            if (!(std::abs(value) <= 1.0)) {
                throw PreconditionError("encode_rate: |x| must be <= 1 (scale the input first)");
            }
            EiIfState state;
            for (int t = 0; t < steps; ++t) {
                const EiIfStep step = ei_if_step(schedule, state, value);
                state = step.state;
                train.spikes(t, idx) = static_cast<std::int8_t>(step.spike);
                train.accumulated(idx) += step.spike;
            }
        }
    }
    return train;
}

// accumulated / steps.
Vector decode_rate(const SpikeTrain& train, int steps);

}  // namespace snnlm
