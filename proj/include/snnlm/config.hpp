#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "snnlm/approximators.hpp"
#include "snnlm/model.hpp"
#include "snnlm/plasticity.hpp"
#include "snnlm/training.hpp"

namespace snnlm {

// Every setting of every command, addressed by flat "module.key" names.
struct RunConfig {
    std::uint64_t seed = 1813;

    ModelConfig model;
    // 0: use the matched window 2^(bits-1)-1.
    int model_steps = 0;

    TrainConfig train;
    std::string corpus = "data/corpus.txt";
    std::string resume;  // checkpoint to continue training from

    ApproximatorConfig approx;

    std::string convert_input;  // ann checkpoint
    std::string convert_banks;  // bank file from fit-approximators
    int convert_steps = 0;      // 0: matched window

    std::string audit_ann;
    std::string audit_snn;
    int audit_tokens = 1024;
    double audit_min_agreement = 0.9;  // enforced with --strict

    std::string stdp_input;
    PlasticityConfig plasticity;
    StdpRunOptions stdp;

    std::string generate_checkpoint;
    std::string prompt = "The ";
    int max_new_tokens = 64;
    double temperature = 0.0;

    // ModelConfig with the window resolved.
    ModelConfig resolved_model() const;
};

struct ConfigKey {
    std::string name;
    std::string type;
    std::string doc;
    std::function<void(RunConfig&, const nlohmann::json&)> set;
    std::function<nlohmann::json(const RunConfig&)> get;
};

// The registry, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Sets one key from a JSON value. Unknown keys and ill-typed values raise
// ConfigError naming the key.
void set_config_value(RunConfig& config, const std::string& key, const nlohmann::json& value);
// "key=value" from the command line; the value is parsed as JSON when it
// parses, otherwise taken as a string.
void set_config_assignment(RunConfig& config, const std::string& assignment);
// Applies a flat JSON object of key -> value.
void apply_config_json(RunConfig& config, const nlohmann::json& object);
void load_config_file(RunConfig& config, const std::string& path);

nlohmann::json config_to_json(const RunConfig& config);
// One line per key: name, type, default, description.
std::string config_help();

}  // namespace snnlm
