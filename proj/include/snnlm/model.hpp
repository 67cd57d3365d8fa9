#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snnlm/approximators.hpp"
#include "snnlm/attention.hpp"
#include "snnlm/neuron.hpp"
#include "snnlm/quantization.hpp"
#include "snnlm/tensor.hpp"

namespace snnlm {

enum class ModelMode { ann, snn };

// Attention normalization of the ann path: exact softmax, or the linear
// shift-and-divide normalization the spiking path uses.
enum class AnnAttention { softmax, linear };
std::string to_string(AnnAttention kind);
AnnAttention ann_attention_from_string(const std::string& name);

std::string to_string(ModelMode mode);
ModelMode model_mode_from_string(const std::string& name);

struct ModelConfig {
    int vocab_size = 257;  // bytes plus a begin-of-text token
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 128;
    int steps = 7;  // rate-code window T
    int bits = 4;
    int max_seq_len = 64;
    ModelMode mode = ModelMode::ann;
    // Only symmetric_narrow converts; the other modes train in ann mode.
    QuantMode quant_mode = QuantMode::symmetric_narrow;
    AnnAttention ann_attention = AnnAttention::softmax;
    double rmsnorm_eps = 1e-5;
    AttentionOptions attention;

    int head_dim() const { return d_model / n_heads; }
    // 2^(bits-1) - 1: the window that makes rate levels equal quantizer levels.
    int matched_steps() const { return (1 << (bits - 1)) - 1; }
    QuantSpec quant_spec() const;
    void validate() const;
};

struct LayerWeights {
    Vector attn_norm;
    Matrix wq, wk, wv, wo;
    Vector bq, bk, bv, bo;
    Vector mlp_norm;
    Matrix w_gate, w_up, w_down;
    Vector b_gate, b_up, b_down;
};

// Per-feature offsets from the rate-code schedule of one encoder site,
// written by the plasticity rules.
struct NeuronDeltas {
    Vector theta_base;
    Vector alpha;
    Vector attenuation;
};

struct Model {
    ModelConfig config;
    Matrix tok_emb;  // vocab x d
    Matrix pos_emb;  // max_seq_len x d
    std::vector<LayerWeights> layers;
    Vector final_norm;
    Matrix head;  // vocab x d
    Vector head_bias;

    // Frozen quantizer scale s per quantizer site (ann mode).
    std::map<std::string, double> scales;
    // Encoder scaling factor per site (snn mode).
    std::map<std::string, double> scaling_factors;
    std::map<std::string, NeuronDeltas> neuron_deltas;
    std::optional<ApproximatorSet> banks;
};

Model init_model(const ModelConfig& config, Rng& rng);
Model zeros_like(const Model& model);

struct ParamRef {
    std::string name;
    float* data;
    std::vector<std::int64_t> shape;
    std::int64_t size() const;
};

// Every trainable tensor with a stable name, in checkpoint directory order.
std::vector<ParamRef> named_parameters(Model& model);
std::vector<std::pair<std::string, const float*>> named_parameters_const(const Model& model);

// A linear map between a pre-quantizer (encoder) site and an optional
// post-quantizer site. The head has no post site.
struct LinearSite {
    std::string name;
    std::string pre;
    std::string post;
    int layer = -1;  // -1 for the head
};

std::vector<LinearSite> linear_sites(const ModelConfig& config);
// Every quantizer / encoder site in forward order.
std::vector<std::string> quant_sites(const ModelConfig& config);
const Matrix& site_weight(const Model& model, const LinearSite& site);
Matrix& site_weight(Model& model, const LinearSite& site);
const Vector& site_bias(const Model& model, const LinearSite& site);

// Activations recorded at the boundaries the equivalence audit compares.
struct ForwardTaps {
    // Raw input of every linear site (before its pre-quantizer / encoder).
    std::map<std::string, Matrix> linear_inputs;
    // Post-quantizer (ann) or decoded post-neuron (snn) output of every site.
    std::map<std::string, Matrix> site_outputs;
    // Inputs of the non-linear blocks, keyed "layers.<l>.attn_norm" etc.
    std::map<std::string, Matrix> nonlinear_inputs;
    std::map<std::string, Matrix> nonlinear_outputs;
    std::map<std::string, std::int64_t> spike_counts;
};

// Per-element record of an encoder site in snn mode.
struct EncoderTrace {
    Matrix scaled_input;  // x / scaling_factor after saturation
    IntMatrix counts;
    IntMatrix first_spike;
    Matrix mean_v;
};

struct SnnTrace {
    std::map<std::string, EncoderTrace> encoders;
};

// Encoder parameters of feature `feature` at `site` (schedule plus deltas).
EiIfParams encoder_params(const Model& model, const std::string& site, Eigen::Index feature);

Matrix forward(const Model& model, std::span<const int> tokens, ForwardTaps* taps = nullptr);
Matrix forward_ann(const Model& model, std::span<const int> tokens, ForwardTaps* taps = nullptr);
Matrix forward_snn(const Model& model, std::span<const int> tokens, ForwardTaps* taps = nullptr,
                   SnnTrace* trace = nullptr);

void check_tokens(const ModelConfig& config, std::span<const int> tokens);

// Mean negative log-likelihood of targets under row-wise softmax(logits).
double task_loss(const Matrix& logits, std::span<const int> targets);

std::vector<int> argmax_rows(const Matrix& logits);

// Exact building blocks shared by the ann path and the audit.
Matrix rmsnorm_rows(const Matrix& x, const Vector& w, double eps);
Matrix causal_softmax(const Matrix& scores);

// One quantizer site under the model's policy: frozen scale when known,
// otherwise max|x| of this tensor.
QuantResult quantize_site(const Model& model, const std::string& site, const Matrix& x);
double site_scale(const Model& model, const std::string& site, const Matrix& x);

// Rate-code x at an snn encoder site: divide by the scaling factor,
// saturate into [-1, 1], run each feature's neuron for T steps.
IntMatrix encode_site(const Model& model, const std::string& site, const MatrixD& x, EncoderTrace* trace = nullptr);
double site_scaling(const Model& model, const std::string& site);

// Spike-driven linear map from front-loaded encoder counts (one row per
// token). weight_t is the transposed weight (in x out) so each spike adds
// one contiguous row. Returns W (counts s / T) + b in double.
MatrixD synapsis_from_counts(const MatrixD& weight_t, const Vector& bias, const IntMatrix& counts, double scaling,
                             int steps);

}  // namespace snnlm
