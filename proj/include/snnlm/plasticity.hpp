#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "snnlm/model.hpp"
#include "snnlm/neuron.hpp"
#include "snnlm/training.hpp"

namespace snnlm {

struct StdpParams {
    double a_plus = 1.0;
    double a_minus = 1.0;
    double tau_plus = 4.0;   // steps
    double tau_minus = 4.0;  // steps
    void validate() const;
};

// dt = t_post - t_pre. dt > 0: A+ exp(-dt / tau+); dt <= 0: -A- exp(dt / tau-).
double stdp_delta(double dt, const StdpParams& p);

// Moving-average loss baseline over the last `window` task losses.
struct ModulationState {
    double beta_mod = 1.0;
    int window = 32;
    std::deque<double> recent_losses;
    double baseline = 0.0;
    bool initialized() const { return !recent_losses.empty(); }
};

// sigma(beta_mod * (baseline - l_task)). Before the first update the
// baseline is taken to be l_task itself.
double global_modulation(double l_task, const ModulationState& m);
ModulationState update_baseline(ModulationState m, double l_task);

// eta_w * G * (delta - w).
double weight_update(double w, double delta, double g, double eta_w);

struct NeuronRates {
    double eta_theta = 1e-3;
    double eta_theta_task = 1e-3;
    double eta_alpha = 1e-3;
    double eta_alpha_task = 1e-3;
    double eta_r = 1e-3;
    double eta_r_task = 1e-3;
};

// Homeostatic view of one neuron: running averages and targets.
struct NeuronPlasticityState {
    double s_bar = 0.0;  // mean |spike count| per token
    double v_bar = 0.0;  // mean membrane potential
    double s_target = 0.0;
    double v_target = 0.0;
    double v_rest = 0.0;
    NeuronRates rates;
    bool homeostatic_sign_flip = false;
};

// dL_task / d(theta_base, alpha, r) of one neuron.
struct TaskGradients {
    double theta_base = 0.0;
    double alpha = 0.0;
    double r = 0.0;
};

struct NeuronParamDelta {
    double theta_base = 0.0;
    double alpha = 0.0;
    double r = 0.0;
};

// Homeostatic terms scaled by G plus task-gradient terms. The task terms
// descend the loss (-eta' dL/dparam); absent gradients contribute nothing.
NeuronParamDelta neuron_param_update(const NeuronPlasticityState& n, double g, const TaskGradients* grads);

// Expected first-spike step for independent per-step spike probabilities
// p_1..p_L; the mass of never spiking within the window sits at L + 1.
double expected_time_steps(std::span<const double> p);
// d expected_time_steps / d p_t.
std::vector<double> expected_time_steps_grad(std::span<const double> p);

// sigma((v - theta) / lambda_scale).
double spike_probability(double v, double theta, double lambda_scale);

// sigma(pre_activity + post_activity - l_task).
double synaptic_tag(double pre_activity, double post_activity, double l_task);

struct CompositeLossWeights {
    double lambda_w = 1.0;
    double lambda_theta = 1.0;
    double lambda_alpha = 1.0;
    double lambda_r = 1.0;
    double lambda_c = 1.0;
    double lambda_t = 1.0;
    double lambda_task = 1.0;
    double lambda_reg = 1.0;
    void validate() const;
};

// Flattened state the composite loss is evaluated on. Synapse vectors share
// one index; rows hold the post-neuron index into the per-neuron vectors.
struct CompositeSnapshot {
    std::vector<double> w;
    std::vector<double> delta;
    std::vector<double> tag;
    // Synapses whose pre/post never co-fired carry no STDP term.
    std::vector<bool> has_delta;
    std::vector<double> s_bar;
    std::vector<double> v_bar;
    std::vector<double> weight_sums;  // sum_j w_ij per post neuron
    std::vector<double> c_targets;
    double s_target = 0.0;
    double v_target = 0.0;
    double v_rest = 0.0;
    double t_exp = 0.0;
    double t_target = 0.0;
    double l_task = 0.0;
};

struct CompositeBreakdown {
    double stdp = 0.0;
    double theta = 0.0;
    double alpha = 0.0;
    double r = 0.0;
    double c = 0.0;
    double t = 0.0;
    double task = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

CompositeBreakdown composite_loss(const CompositeLossWeights& weights, const CompositeSnapshot& snap);

// Smooth surrogate of one encoder neuron driven by a constant input x:
// spike indicators become sigma((V_t - theta_t) / lambda) - sigma((-V_t - theta_t) / lambda)
// and per-step firing probabilities sigma((|V_t| - theta_t) / lambda).
struct NeuronSurrogate {
    double count = 0.0;
    double d_count_theta = 0.0;
    double d_count_alpha = 0.0;
    double d_count_r = 0.0;
    double t_exp = 0.0;
    double d_t_theta = 0.0;
    double d_t_alpha = 0.0;
    double d_t_r = 0.0;
    double mean_v = 0.0;
    double d_mean_v_r = 0.0;
};

NeuronSurrogate neuron_surrogate(const EiIfParams& params, double x, int steps, double lambda_scale);

enum class PlasticityRule { local, composite };
std::string to_string(PlasticityRule rule);
PlasticityRule plasticity_rule_from_string(const std::string& name);

struct PlasticityConfig {
    PlasticityRule rule = PlasticityRule::local;
    StdpParams stdp;
    double beta_mod = 1.0;
    int window = 32;
    double eta_w = 1e-3;
    NeuronRates rates;
    double s_target_fraction = 0.2;  // S_target = fraction * T
    double v_target = 0.0;
    double v_rest = 0.0;
    double t_target_fraction = 0.5;  // T_target = fraction * T
    double ema = 0.99;
    double surrogate_scale = 1.0;
    double tag_threshold = 0.5;
    double weight_clip = 0.0;  // 0: no clipping
    bool homeostatic_sign_flip = false;
    bool task_gradients = true;
    CompositeLossWeights lambdas;
    void validate() const;
};

// Running per-feature averages of one encoder site.
struct SiteStats {
    VectorD s_bar;
    VectorD v_bar;
    VectorD rate;  // |count| / T
};

struct PlasticityState {
    ModulationState modulation;
    std::map<std::string, SiteStats> stats;
    // Per linear site: sum_j w_ij at the first step (C_i).
    std::map<std::string, VectorD> c_targets;
    std::int64_t step = 0;
};

PlasticityState make_plasticity_state(const PlasticityConfig& config);

struct StdpMetrics {
    std::int64_t step = 0;
    double l_task = 0.0;
    double g = 0.0;
    double baseline = 0.0;
    double mean_abs_dw = 0.0;
    std::int64_t updated_synapses = 0;
    double tagged_fraction = 0.0;
    double mean_abs_dtheta = 0.0;
    double t_exp = 0.0;
    CompositeBreakdown composite;
};

// Spike records of one window, as produced by forward_snn.
struct WindowTrace {
    const Window* window = nullptr;
    SnnTrace trace;
    double loss = 0.0;
};

// Plasticity update from recorded traces. Throws ContractError when the
// model is not a converted spiking model or a trace lacks an encoder site.
StdpMetrics apply_plasticity(Model& model, std::span<const WindowTrace> traces, PlasticityState& state,
                             const PlasticityConfig& config);

// Runs the spiking forward on every window of the batch with traces, then
// applies the plasticity update.
StdpMetrics stdp_finetune_step(Model& model, std::span<const Window> batch, PlasticityState& state,
                               const PlasticityConfig& config);

struct StdpRunOptions {
    int steps = 200;
    int batch = 1;  // windows per step
    // Compare the L_task EMA against the frozen starting model on the same
    // batch stream.
    bool gate = false;
    double gate_ema = 0.9;
    double gate_tolerance = 0.05;
};

struct StdpRecord {
    StdpMetrics metrics;
    double l_task_ema = 0.0;
    double reference_loss = 0.0;  // frozen model, gate runs only
    double reference_ema = 0.0;
};

struct StdpRunReport {
    std::vector<StdpRecord> records;
    double final_ema = 0.0;
    double reference_ema = 0.0;
    // final_ema / reference_ema, gate runs only.
    double ema_ratio = 0.0;
    bool gate_passed = true;
};

// Fine-tunes for options.steps steps on windows drawn uniformly with a
// generator seeded by `seed`.
using StdpCallback = std::function<void(const StdpRecord&)>;
StdpRunReport run_stdp(Model& model, std::span<const Window> windows, const PlasticityConfig& config,
                       const StdpRunOptions& options, std::uint64_t seed, const StdpCallback& on_step = {});

}  // namespace snnlm
