#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "snnlm/model.hpp"

namespace snnlm {

inline constexpr int kBosToken = 256;

// Byte-level tokenizer: one token per byte.
std::vector<int> tokenize_bytes(std::string_view text);
std::string detokenize_bytes(std::span<const int> tokens);

// A next-token window: tokens = BOS + bytes[0..L-2], targets = bytes[0..L-1].
struct Window {
    std::vector<int> tokens;
    std::vector<int> targets;
};

struct Corpus {
    std::vector<Window> train;
    std::vector<Window> eval;
};

// Split the byte stream into non-overlapping windows of seq_len bytes; the
// last eval_fraction of the windows is held out.
Corpus make_corpus(std::string_view text, int seq_len, double eval_fraction);

// `tokens` consecutive bytes from the held-out tail of make_corpus(text,
// seq_len, eval_fraction), starting at an offset drawn from `seed`.
std::vector<int> held_out_stream(std::string_view text, int seq_len, double eval_fraction, int tokens,
                                 std::uint64_t seed);

enum class OptimizerKind { sgd_momentum, adam };
std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
    int epochs = 3;
    int batch_size = 8;
    int seq_len = 64;
    int max_steps = 0;  // 0: run every epoch to the end
    OptimizerKind optimizer = OptimizerKind::sgd_momentum;
    double lr = 0.1;
    double momentum = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;  // global L2 norm, 0 disables
    double scale_momentum = 0.9;  // EMA of observed quantizer scales
    double eval_fraction = 0.1;
    int eval_windows = 32;
    void validate() const;
};

struct TrainRecord {
    int step = 0;
    int epoch = 0;
    double loss = 0.0;
};

// Optimizer moments and the global step, carried across resumed runs.
struct TrainState {
    std::int64_t step = 0;
    std::vector<Eigen::VectorXf> m;
    std::vector<Eigen::VectorXf> v;
};

struct TrainReport {
    std::vector<TrainRecord> curve;
    double initial_eval_loss = 0.0;
    double final_eval_loss = 0.0;
    std::int64_t steps = 0;
};

// Mean task loss of the model in its own mode over the windows.
double evaluate(const Model& model, std::span<const Window> windows);

// Loss and parameter gradients of one batch under fake quantization with the
// model's running scales. Observed per-site scales are max-merged into
// `observed`. grads must come from zeros_like(model).
double loss_and_grad(const Model& model, std::span<const Window* const> batch, Model& grads,
                     std::map<std::string, double>& observed);

// Loss of one sequence under the frozen-scale quantized ann path (whatever
// the model's mode) and its gradients: parameters are accumulated into
// param_grads (from zeros_like) and dL/d(site output) is stored per
// quantizer site. Serves as the differentiable proxy of the spiking model.
double task_gradients(const Model& model, std::span<const int> tokens, std::span<const int> targets,
                      Model* param_grads, std::map<std::string, Matrix>* site_grads);

// Quantization-aware next-token training with straight-through gradients.
// Updates model.scales with the EMA of observed scales. On a non-finite loss
// the model is restored to the last good step and TrainingError is thrown.
using StepCallback = std::function<void(const TrainRecord&)>;
TrainReport train_ann(Model& model, const Corpus& corpus, const TrainConfig& config, std::uint64_t seed,
                      TrainState* state = nullptr, const StepCallback& on_step = {});

// Sets a frozen scale for every quantizer site as the max over the windows.
void calibrate(Model& model, std::span<const Window> windows);

}  // namespace snnlm
