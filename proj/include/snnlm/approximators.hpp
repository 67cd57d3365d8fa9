#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "snnlm/tensor.hpp"

namespace snnlm {

// Function-approximating neuron: V(t) = lambda_d V(t-1) + x, threshold
// theta(t) = theta_base + alpha t, spikes of amplitude a_pos / a_neg with
// the threshold subtracted from (added to) V on firing. Stored as float so
// a serialized bank evaluates identically after reload.
struct CustomNeuronParams {
    float a_pos = 0.0f;
    float a_neg = 0.0f;
    float theta_base = 1.0f;
    float alpha = 0.0f;
    float decay = 1.0f;
    int steps = 16;

    void validate() const;
};

struct SpikeTally {
    int positive = 0;
    int negative = 0;
};

SpikeTally custom_neuron_tally(const CustomNeuronParams& params, double x);

// Amplitude-weighted spike sum after `steps` steps of constant input x.
double custom_neuron_run(const CustomNeuronParams& params, double x);

enum class ApproxKind { square, sqrt, silu_pos, silu_neg, zero };
enum class PartitionKind { power, logarithmic, fixed };

struct Partition {
    PartitionKind kind = PartitionKind::power;
    double power = 1.5;             // used by PartitionKind::power
    std::vector<double> edges;      // used by PartitionKind::fixed
};

std::string to_string(ApproxKind kind);
ApproxKind approx_kind_from_string(const std::string& name);
double approx_target(ApproxKind kind, double x);

// Segment edges x_0 < ... < x_N for the partition of [lo, hi].
std::vector<float> partition_edges(double lo, double hi, int segments, const Partition& partition);

struct ApproximatorBank {
    ApproxKind kind = ApproxKind::square;
    Partition partition;
    std::vector<float> bounds;                             // N + 1 edges
    std::vector<std::vector<CustomNeuronParams>> neurons;  // summed neurons per segment
    // Beyond the upper edge the output continues linearly with this slope
    // when `extend_upper` is set; otherwise inputs clamp to the edge.
    bool extend_upper = false;
    float tail_slope = 0.0f;
    double fit_mse = 0.0;
    double fit_max_rel_error = 0.0;

    int segments() const { return static_cast<int>(neurons.size()); }
    void validate() const;
};

struct FitOptions {
    int steps = 96;              // T_n
    int samples = 64;            // uniform sample points per segment
    int refinement_levels = 3;
    int random_trials = 64;      // seeded perturbations after the grid search
    double amplitude_limit = 2.0;
    bool relative = false;       // weight residuals by 1 / target^2
    double mse_ceiling = 1e30;   // FitError above this
    int neurons_first_segment = 1;
};

// Per-segment derivative-free search over (theta_base, alpha, decay) with
// the amplitudes solved in closed form by least squares.
ApproximatorBank fit_bank(ApproxKind target, double lo, double hi, int segments, const Partition& partition,
                          const FitOptions& options, Rng& rng);

double approx_eval(const ApproximatorBank& bank, double x);

// SiLU from its two halves; exactly 0 below -6.
double silu_approx(const ApproximatorBank& pos_bank, const ApproximatorBank& neg_bank, double x);

inline double silu_exact(double x) { return x * sigmoid(x); }

// RMS normalization where the element squares and the root come from
// pluggable functions.
template <class SquareFn, class SqrtFn>
Vector rmsnorm_with(const Vector& x, const Vector& w, double eps, SquareFn&& square, SqrtFn&& root) {
    if (x.size() < 1 || w.size() != x.size()) {
        throw DimensionError("rmsnorm: x and w must be non-empty and of equal length");
    }
    if (!(eps > 0.0)) {
        throw ArgumentError("rmsnorm: eps must be positive");
    }
    double mean = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) mean += square(static_cast<double>(x(i)));
    mean /= static_cast<double>(x.size());
    double denom = root(mean + eps);
    if (!(denom > 0.0)) {
        denom = std::sqrt(mean + eps);
    }
    Vector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        out(i) = static_cast<float>(static_cast<double>(x(i)) / denom * static_cast<double>(w(i)));
    }
    return out;
}

Vector rmsnorm_exact(const Vector& x, const Vector& w, double eps);

// Spiking RMSNorm: squares through the square bank (on |x|), the root
// through the sqrt bank, with an exact-sqrt fallback if the bank output is
// not positive.
Vector snn_rmsnorm(const Vector& x, const Vector& w, double eps, const ApproximatorBank& square_bank,
                   const ApproximatorBank& sqrt_bank);

// snn_rmsnorm on x / 2^k, with k the smallest shift that brings every entry
// inside the square bank's domain. RMSNorm ignores the scale of x, so only
// eps is rescaled (by 4^-k) to keep the result unchanged.
Vector snn_rmsnorm_ranged(const Vector& x, const Vector& w, double eps, const ApproximatorBank& square_bank,
                          const ApproximatorBank& sqrt_bank);

// The four banks the spiking model needs.
struct ApproximatorSet {
    ApproximatorBank square;
    ApproximatorBank sqrt;
    ApproximatorBank silu_pos;
    ApproximatorBank silu_neg;
};

struct ApproximatorConfig {
    double square_hi = 4.0;
    int square_segments = 16;
    double square_power = 1.5;
    double sqrt_lo = 1e-4;
    double sqrt_hi = 16.0;
    int sqrt_segments = 48;
    double silu_pos_hi = 8.0;
    FitOptions fit;
    double square_mse_gate = 1e-2;
    double sqrt_rel_gate = 0.05;
    double silu_mse_gate = 1e-2;
};

ApproximatorBank fit_square_bank(const ApproximatorConfig& config, Rng& rng);
ApproximatorBank fit_sqrt_bank(const ApproximatorConfig& config, Rng& rng);
ApproximatorBank fit_silu_pos_bank(const ApproximatorConfig& config, Rng& rng);
ApproximatorBank fit_silu_neg_bank(const ApproximatorConfig& config, Rng& rng);
ApproximatorSet fit_approximators(const ApproximatorConfig& config, std::uint64_t seed);

// Evaluation metrics on the documented grids.
double square_grid_mse(const ApproximatorBank& bank, double hi, int points = 2001);
// Max relative error on a log grid of [lo, hi].
double sqrt_grid_max_rel_error(const ApproximatorBank& bank, double lo, double hi, int points = 2001);
double silu_grid_mse(const ApproximatorBank& pos, const ApproximatorBank& neg, double lo = -6.0, double hi = 4.0,
                     int points = 2001);

}  // namespace snnlm
