#pragma once

#include "snnlm/neuron.hpp"
#include "snnlm/tensor.hpp"

namespace snnlm {

// Spike-driven linear layer. Inputs are divided by scaling_factor, rate
// coded over `steps` steps, and the ternary spikes drive the weights by
// signed accumulation only.
struct SynapsisLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
    double scaling_factor = 1.0;
    int steps = 1;

    void validate() const;
};

// weight * spikes computed by gathering columns: +W[:, j] for a +1 spike,
// -W[:, j] for a -1 spike, nothing for 0. Accumulates into `acc`.
template <class SpikeVec>
void spike_accumulate(const Matrix& weight, const SpikeVec& spikes, VectorD& acc) {
    for (Eigen::Index j = 0; j < weight.cols(); ++j) {
        const int s = static_cast<int>(spikes(j));
        if (s > 0) {
            for (Eigen::Index i = 0; i < weight.rows(); ++i) acc(i) += weight(i, j);
        } else if (s < 0) {
            for (Eigen::Index i = 0; i < weight.rows(); ++i) acc(i) -= weight(i, j);
        }
    }
}

Vector spike_matvec(const Matrix& weight, const Eigen::Ref<const VectorX<std::int8_t>>& spikes);

struct SynapsisRun {
    IntVector pre_counts;  // S_pre, one signed count per input
    VectorD accumulated;   // sum over steps of W s_pre(t), without bias
};

// Encode an input whose scaled magnitude is already known to be <= 1 and
// drive the weights step by step.
SynapsisRun synapsis_run(const SynapsisLayer& layer, const Vector& x);

// H / T = W (S_pre / T) + b, in the scaled input units of the layer.
Vector synapsis_forward(const SynapsisLayer& layer, const Vector& x);

// Same accumulation rescaled back to input units: W (S_pre s / T) + b.
VectorD synapsis_forward_rescaled(const SynapsisLayer& layer, const Vector& x);

}  // namespace snnlm
