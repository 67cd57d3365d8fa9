#include "snnlm/config.hpp"

#include <fstream>
#include <sstream>

#include "snnlm/error.hpp"

namespace snnlm {

using nlohmann::json;

ModelConfig RunConfig::resolved_model() const {
    ModelConfig m = model;
    m.steps = model_steps > 0 ? model_steps : m.matched_steps();
    return m;
}

namespace {

template <class T>
using Ref = T& (*)(RunConfig&);

template <class T>
bool json_matches(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v.is_boolean();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        return v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
        return v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
        return v.is_number();
    } else {
        return v.is_string();
    }
}

template <class T>
const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "bool";
    if constexpr (std::is_same_v<T, std::uint64_t>) return "uint";
    if constexpr (std::is_integral_v<T>) return "int";
    if constexpr (std::is_floating_point_v<T>) return "float";
    return "string";
}

template <class T>
ConfigKey key(std::string name, std::string doc, Ref<T> ref) {
    ConfigKey k;
    k.name = name;
    k.type = type_name<T>();
    k.doc = std::move(doc);
    k.set = [ref, name](RunConfig& c, const json& v) {
        if (!json_matches<T>(v)) throw ConfigError("config key '" + name + "' expects type " + type_name<T>());
        ref(c) = v.get<T>();
    };
    k.get = [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); };
    return k;
}

template <class E>
ConfigKey enum_key(std::string name, std::string doc, Ref<E> ref, std::string (*to_str)(E),
                   E (*from_str)(const std::string&)) {
    ConfigKey k;
    k.name = name;
    k.type = "enum";
    k.doc = std::move(doc);
    k.set = [ref, from_str, name](RunConfig& c, const json& v) {
        if (!v.is_string()) throw ConfigError("config key '" + name + "' expects type string");
        try {
            ref(c) = from_str(v.get<std::string>());
        } catch (const Error& e) {
            throw ConfigError("config key '" + name + "': " + e.what());
        }
    };
    k.get = [ref, to_str](const RunConfig& c) { return json(to_str(ref(const_cast<RunConfig&>(c)))); };
    return k;
}

#define REF(type, expr) +[](RunConfig& c) -> type& { return expr; }

std::vector<ConfigKey> build_keys() {
    std::vector<ConfigKey> k;
    k.push_back(key<std::uint64_t>("run.seed", "root seed; every module derives its own stream from it",
                                   REF(std::uint64_t, c.seed)));

    k.push_back(key<int>("model.vocab_size", "token vocabulary (256 bytes + BOS)", REF(int, c.model.vocab_size)));
    k.push_back(key<int>("model.d_model", "residual width", REF(int, c.model.d_model)));
    k.push_back(key<int>("model.n_heads", "attention heads", REF(int, c.model.n_heads)));
    k.push_back(key<int>("model.n_layers", "transformer blocks", REF(int, c.model.n_layers)));
    k.push_back(key<int>("model.d_ff", "gated MLP hidden width", REF(int, c.model.d_ff)));
    k.push_back(key<int>("model.bits", "quantizer bit width b", REF(int, c.model.bits)));
    k.push_back(key<int>("model.steps", "rate-code window T; 0 selects 2^(b-1)-1", REF(int, c.model_steps)));
    k.push_back(key<int>("model.max_seq_len", "context length", REF(int, c.model.max_seq_len)));
    k.push_back(enum_key<QuantMode>("model.quant_mode", "symmetric_narrow | symmetric | asymmetric",
                                    REF(QuantMode, c.model.quant_mode), to_string, quant_mode_from_string));
    k.push_back(enum_key<AnnAttention>("model.ann_attention", "ann attention normalization: softmax | linear",
                                       REF(AnnAttention, c.model.ann_attention), to_string,
                                       ann_attention_from_string));
    k.push_back(key<double>("model.rmsnorm_eps", "RMSNorm epsilon", REF(double, c.model.rmsnorm_eps)));
    k.push_back(enum_key<SpikeSchedule>("model.spike_schedule", "SNNMatmul spike placement: strided | front_loaded",
                                        REF(SpikeSchedule, c.model.attention.schedule), to_string,
                                        spike_schedule_from_string));
    k.push_back(enum_key<Accumulation>("model.accumulation", "SNNMatmul accumulation: cumulative_outer | coincident",
                                       REF(Accumulation, c.model.attention.accumulation), to_string,
                                       accumulation_from_string));

    k.push_back(key<std::string>("train.corpus", "training text (bytes)", REF(std::string, c.corpus)));
    k.push_back(key<std::string>("train.resume", "checkpoint to resume from (empty: fresh init)",
                                 REF(std::string, c.resume)));
    k.push_back(key<int>("train.epochs", "passes over the training windows", REF(int, c.train.epochs)));
    k.push_back(key<int>("train.batch_size", "windows per step", REF(int, c.train.batch_size)));
    k.push_back(key<int>("train.seq_len", "window length in bytes", REF(int, c.train.seq_len)));
    k.push_back(key<int>("train.max_steps", "stop after this many steps; 0 runs every epoch",
                         REF(int, c.train.max_steps)));
    k.push_back(enum_key<OptimizerKind>("train.optimizer", "sgd_momentum | adam", REF(OptimizerKind, c.train.optimizer),
                                        to_string, optimizer_from_string));
    k.push_back(key<double>("train.lr", "learning rate", REF(double, c.train.lr)));
    k.push_back(key<double>("train.momentum", "SGD momentum", REF(double, c.train.momentum)));
    k.push_back(key<double>("train.adam_beta1", "Adam beta1", REF(double, c.train.adam_beta1)));
    k.push_back(key<double>("train.adam_beta2", "Adam beta2", REF(double, c.train.adam_beta2)));
    k.push_back(key<double>("train.adam_eps", "Adam epsilon", REF(double, c.train.adam_eps)));
    k.push_back(key<double>("train.grad_clip", "global gradient norm clip; 0 disables", REF(double, c.train.grad_clip)));
    k.push_back(key<double>("train.scale_momentum", "EMA momentum of observed quantizer scales",
                            REF(double, c.train.scale_momentum)));
    k.push_back(key<double>("train.eval_fraction", "held-out fraction of windows", REF(double, c.train.eval_fraction)));
    k.push_back(key<int>("train.eval_windows", "held-out windows used for the eval loss",
                         REF(int, c.train.eval_windows)));

    k.push_back(key<double>("approx.square_hi", "square bank upper edge", REF(double, c.approx.square_hi)));
    k.push_back(key<int>("approx.square_segments", "square bank segments", REF(int, c.approx.square_segments)));
    k.push_back(key<double>("approx.square_power", "power-law partition exponent", REF(double, c.approx.square_power)));
    k.push_back(key<double>("approx.sqrt_lo", "sqrt bank lower edge", REF(double, c.approx.sqrt_lo)));
    k.push_back(key<double>("approx.sqrt_hi", "sqrt bank upper edge", REF(double, c.approx.sqrt_hi)));
    k.push_back(key<int>("approx.sqrt_segments", "sqrt bank log segments", REF(int, c.approx.sqrt_segments)));
    k.push_back(key<double>("approx.silu_pos_hi", "positive SiLU bank upper edge", REF(double, c.approx.silu_pos_hi)));
    k.push_back(key<int>("approx.fit_steps", "steps T_n of every approximating neuron", REF(int, c.approx.fit.steps)));
    k.push_back(key<int>("approx.fit_samples", "fit samples per segment", REF(int, c.approx.fit.samples)));
    k.push_back(key<int>("approx.fit_refinement_levels", "grid refinement levels",
                         REF(int, c.approx.fit.refinement_levels)));
    k.push_back(key<int>("approx.fit_random_trials", "seeded perturbation trials per segment",
                         REF(int, c.approx.fit.random_trials)));
    k.push_back(key<double>("approx.fit_amplitude_limit", "per-spike amplitude clamp (+-)",
                            REF(double, c.approx.fit.amplitude_limit)));
    k.push_back(key<double>("approx.square_mse_gate", "square bank MSE gate on [0, square_hi]",
                            REF(double, c.approx.square_mse_gate)));
    k.push_back(key<double>("approx.sqrt_rel_gate", "sqrt bank max relative error gate",
                            REF(double, c.approx.sqrt_rel_gate)));
    k.push_back(key<double>("approx.silu_mse_gate", "SiLU MSE gate on [-6, 4]", REF(double, c.approx.silu_mse_gate)));

    k.push_back(key<std::string>("convert.input", "ann checkpoint to convert", REF(std::string, c.convert_input)));
    k.push_back(key<std::string>("convert.banks", "bank file written by fit-approximators",
                                 REF(std::string, c.convert_banks)));
    k.push_back(key<int>("convert.steps", "rate-code window of the snn model; 0 selects 2^(b-1)-1",
                         REF(int, c.convert_steps)));

    k.push_back(key<std::string>("audit.ann", "ann checkpoint", REF(std::string, c.audit_ann)));
    k.push_back(key<std::string>("audit.snn", "snn checkpoint", REF(std::string, c.audit_snn)));
    k.push_back(key<int>("audit.tokens", "tokens in the audited stream", REF(int, c.audit_tokens)));
    k.push_back(key<double>("audit.min_agreement", "argmax agreement required under --strict",
                            REF(double, c.audit_min_agreement)));

    k.push_back(key<std::string>("stdp.input", "snn checkpoint to fine-tune", REF(std::string, c.stdp_input)));
    k.push_back(key<int>("stdp.steps", "plasticity steps", REF(int, c.stdp.steps)));
    k.push_back(key<int>("stdp.batch", "windows per plasticity step", REF(int, c.stdp.batch)));
    k.push_back(key<bool>("stdp.gate", "also run the frozen model and enforce the stability gate",
                          REF(bool, c.stdp.gate)));
    k.push_back(key<double>("stdp.gate_ema", "EMA factor of the gated L_task", REF(double, c.stdp.gate_ema)));
    k.push_back(key<double>("stdp.gate_tolerance", "allowed relative rise of the L_task EMA",
                            REF(double, c.stdp.gate_tolerance)));

    k.push_back(enum_key<PlasticityRule>("plasticity.rule",
                                         "local (modulated STDP + homeostasis) | composite (descent on the full loss)",
                                         REF(PlasticityRule, c.plasticity.rule), to_string,
                                         plasticity_rule_from_string));
    k.push_back(key<double>("plasticity.a_plus", "STDP A+", REF(double, c.plasticity.stdp.a_plus)));
    k.push_back(key<double>("plasticity.a_minus", "STDP A-", REF(double, c.plasticity.stdp.a_minus)));
    k.push_back(key<double>("plasticity.tau_plus", "STDP tau+ in steps", REF(double, c.plasticity.stdp.tau_plus)));
    k.push_back(key<double>("plasticity.tau_minus", "STDP tau- in steps", REF(double, c.plasticity.stdp.tau_minus)));
    k.push_back(key<double>("plasticity.beta_mod", "sigmoid scale of the global modulation G",
                            REF(double, c.plasticity.beta_mod)));
    k.push_back(key<int>("plasticity.window", "loss baseline window W", REF(int, c.plasticity.window)));
    k.push_back(key<double>("plasticity.eta_w", "synaptic learning rate", REF(double, c.plasticity.eta_w)));
    k.push_back(key<double>("plasticity.eta_theta", "homeostatic threshold rate",
                            REF(double, c.plasticity.rates.eta_theta)));
    k.push_back(key<double>("plasticity.eta_theta_task", "task-gradient threshold rate",
                            REF(double, c.plasticity.rates.eta_theta_task)));
    k.push_back(key<double>("plasticity.eta_alpha", "homeostatic threshold-slope rate",
                            REF(double, c.plasticity.rates.eta_alpha)));
    k.push_back(key<double>("plasticity.eta_alpha_task", "task-gradient threshold-slope rate",
                            REF(double, c.plasticity.rates.eta_alpha_task)));
    k.push_back(key<double>("plasticity.eta_r", "homeostatic decay-rate rate", REF(double, c.plasticity.rates.eta_r)));
    k.push_back(key<double>("plasticity.eta_r_task", "task-gradient decay-rate rate",
                            REF(double, c.plasticity.rates.eta_r_task)));
    k.push_back(key<double>("plasticity.s_target_fraction", "spike-count target as a fraction of T",
                            REF(double, c.plasticity.s_target_fraction)));
    k.push_back(key<double>("plasticity.v_target", "membrane potential target", REF(double, c.plasticity.v_target)));
    k.push_back(key<double>("plasticity.v_rest", "resting potential", REF(double, c.plasticity.v_rest)));
    k.push_back(key<double>("plasticity.t_target_fraction", "expected first-spike target as a fraction of T",
                            REF(double, c.plasticity.t_target_fraction)));
    k.push_back(key<double>("plasticity.ema", "EMA factor of the per-neuron running averages",
                            REF(double, c.plasticity.ema)));
    k.push_back(key<double>("plasticity.surrogate_scale", "lambda of the spike-probability sigmoid",
                            REF(double, c.plasticity.surrogate_scale)));
    k.push_back(key<double>("plasticity.tag_threshold", "synapses update only where Tag >= this",
                            REF(double, c.plasticity.tag_threshold)));
    k.push_back(key<double>("plasticity.weight_clip", "clamp updated weights to +-this; 0 disables",
                            REF(double, c.plasticity.weight_clip)));
    k.push_back(key<bool>("plasticity.homeostatic_sign_flip", "negate the homeostatic threshold term",
                          REF(bool, c.plasticity.homeostatic_sign_flip)));
    k.push_back(key<bool>("plasticity.task_gradients", "include the task-gradient terms",
                          REF(bool, c.plasticity.task_gradients)));
    k.push_back(key<double>("plasticity.lambda_w", "composite loss: STDP term", REF(double, c.plasticity.lambdas.lambda_w)));
    k.push_back(key<double>("plasticity.lambda_theta", "composite loss: spike-count term",
                            REF(double, c.plasticity.lambdas.lambda_theta)));
    k.push_back(key<double>("plasticity.lambda_alpha", "composite loss: potential-target term",
                            REF(double, c.plasticity.lambdas.lambda_alpha)));
    k.push_back(key<double>("plasticity.lambda_r", "composite loss: resting-potential term",
                            REF(double, c.plasticity.lambdas.lambda_r)));
    k.push_back(key<double>("plasticity.lambda_c", "composite loss: synaptic-sum term",
                            REF(double, c.plasticity.lambdas.lambda_c)));
    k.push_back(key<double>("plasticity.lambda_t", "composite loss: first-spike time term",
                            REF(double, c.plasticity.lambdas.lambda_t)));
    k.push_back(key<double>("plasticity.lambda_task", "composite loss: task term",
                            REF(double, c.plasticity.lambdas.lambda_task)));
    k.push_back(key<double>("plasticity.lambda_reg", "composite loss: L2 term",
                            REF(double, c.plasticity.lambdas.lambda_reg)));

    k.push_back(key<std::string>("generate.checkpoint", "checkpoint to decode with (either mode)",
                                 REF(std::string, c.generate_checkpoint)));
    k.push_back(key<std::string>("generate.prompt", "prompt text", REF(std::string, c.prompt)));
    k.push_back(key<int>("generate.max_new_tokens", "tokens to generate", REF(int, c.max_new_tokens)));
    k.push_back(key<double>("generate.temperature", "sampling temperature; 0 is greedy", REF(double, c.temperature)));
    return k;
}

#undef REF

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const json& value) {
    for (const ConfigKey& k : config_keys()) {
        if (k.name == key) {
            k.set(config, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "' (see --help for the key list)");
}

void set_config_assignment(RunConfig& config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // A string-typed key keeps the raw text even when it parses as JSON.
    for (const ConfigKey& k : config_keys()) {
        if (k.name == key && (k.type == "string" || k.type == "enum") && !value.is_string()) value = text;
    }
    set_config_value(config, key, value);
}

void apply_config_json(RunConfig& config, const json& object) {
    if (!object.is_object()) throw ConfigError("config file must hold a flat JSON object");
    for (const auto& [key, value] : object.items()) set_config_value(config, key, value);
}

void load_config_file(RunConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config '" + path + "'");
    json object = json::parse(in, nullptr, false);
    if (object.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    apply_config_json(config, object);
}

json config_to_json(const RunConfig& config) {
    json out = json::object();
    for (const ConfigKey& k : config_keys()) out[k.name] = k.get(config);
    return out;
}

std::string config_help() {
    const RunConfig defaults;
    std::ostringstream os;
    os << "Config keys (JSON file via --config, or --set key=value):\n";
    for (const ConfigKey& k : config_keys()) {
        os << "  " << k.name << " (" << k.type << ", default " << k.get(defaults).dump() << ")\n      " << k.doc
           << "\n";
    }
    return os.str();
}

}  // namespace snnlm
