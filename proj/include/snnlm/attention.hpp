#pragma once

#include <string>
#include <vector>

#include "snnlm/neuron.hpp"
#include "snnlm/tensor.hpp"

namespace snnlm {

// Where the k spikes of an element with |count| = k land inside a window.
enum class SpikeSchedule {
    front_loaded,  // steps 1..k, what the rate-code neuron produces
    strided,       // spike i of k at step ceil(i * T / k)
};

// How spike matrices of the two operands are combined per step.
enum class Accumulation {
    // A += S_Q(t) C_K(t)^T + C_Q(t-1) S_K(t)^T with running counts C; after T
    // steps A equals C_Q C_K^T exactly. Decoded with a 1/T^2 factor.
    cumulative_outer,
    // A += S_Q(t) S_K(t)^T, coincident spikes only. Decoded with 1/T.
    coincident,
};

std::string to_string(SpikeSchedule schedule);
SpikeSchedule spike_schedule_from_string(const std::string& name);
std::string to_string(Accumulation accumulation);
Accumulation accumulation_from_string(const std::string& name);

struct AttentionOptions {
    SpikeSchedule schedule = SpikeSchedule::strided;
    Accumulation accumulation = Accumulation::cumulative_outer;
};

struct AttentionScores {
    IntMatrix accumulated;  // m x n signed counts
    int steps = 1;
    double scale_q = 1.0;
    double scale_k = 1.0;
    Accumulation accumulation = Accumulation::cumulative_outer;
};

// Step (1-based) at which spike `index` (1-based) of `magnitude` spikes fires.
int spike_step(int index, int magnitude, int steps, SpikeSchedule schedule);

// Per-step ternary spikes (rows x cols) for a matrix of signed counts.
std::vector<SpikeMatrix> spike_steps(const IntMatrix& counts, int steps, SpikeSchedule schedule);

// Number of steps on which two single-sign trains with counts a and b fire
// together, with the sign of a * b. Under the front-loaded schedule this is
// sign(a b) * min(|a|, |b|).
int coincidence_count(int a, int b, int steps, SpikeSchedule schedule);

// Spike-domain Q K^T from already rate-coded operands (counts in [-T, T]).
AttentionScores snn_matmul_counts(const IntMatrix& q_counts, const IntMatrix& k_counts, int steps, double scale_q,
                                  double scale_k, const AttentionOptions& options = {});

// Rate-code rows of Q (m x d) and K (n x d) after dividing by their scales,
// then accumulate spike products with additions and subtractions only.
AttentionScores snn_matmul(const Matrix& q, const Matrix& k, int steps, double scale_q, double scale_k,
                           const AttentionOptions& options = {});

// Accumulated counts back to the units of Q K^T.
Matrix decode_scores(const AttentionScores& scores);

// Row-wise normalization of accumulated counts: subtract the row minimum,
// divide by the row sum, uniform when every entry is equal. With `causal`,
// entry (i, j) is only visible for j <= i and masked entries are 0.
Matrix snn_softmax(const AttentionScores& scores, bool causal = false);

// The same normalization on real-valued scores.
Matrix linear_normalize(const Matrix& scores, bool causal = false);

}  // namespace snnlm
