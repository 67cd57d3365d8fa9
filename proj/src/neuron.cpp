#include "snnlm/neuron.hpp"

#include <cmath>

namespace snnlm {

EiIfStep ei_if_step(const EiIfParams& params, const EiIfState& state, double input_current) {
    if (!std::isfinite(input_current)) {
        throw NumericError("ei_if_step: non-finite input current");
    }
    if (state.t < 0) {
        throw PreconditionError("ei_if_step: negative step counter");
    }
    EiIfStep out;
    out.state.t = state.t + 1;
    double v = state.v + input_current;
    const double theta = params.theta_base + static_cast<double>(out.state.t) * params.alpha;
    if (v >= theta) {
        out.spike = 1;
    } else if (v <= -theta) {
        out.spike = -1;
    }
    v *= 1.0 - params.attenuation_rate;
    out.state.v = v;
    return out;
}

EiIfParams rate_schedule(int steps) {
    if (steps < 1) {
        throw ArgumentError("rate_schedule: steps must be >= 1");
    }
    const double inv = 1.0 / static_cast<double>(steps);
    return EiIfParams{-0.5 * inv, inv, 1.0};
}

NeuronRun run_neuron(const EiIfParams& params, double input_current, int steps) {
    NeuronRun run;
    EiIfState state;
    double v_sum = 0.0;
    for (int t = 0; t < steps; ++t) {
        v_sum += state.v + input_current;
        const EiIfStep step = ei_if_step(params, state, input_current);
        state = step.state;
        if (step.spike != 0 && run.first_spike == 0) {
            run.first_spike = t + 1;
        }
        run.count += step.spike;
    }
    run.mean_v = steps > 0 ? v_sum / steps : 0.0;
    return run;
}

Vector decode_rate(const SpikeTrain& train, int steps) {
    if (steps != train.steps) {
        throw ArgumentError("decode_rate: steps does not match the spike train length");
    }
    return train.accumulated.cast<float>() / static_cast<float>(steps);
}

}  // namespace snnlm
