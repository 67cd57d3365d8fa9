#include "doctest.h"
#include "snnlm/config.hpp"

using namespace snnlm;

TEST_CASE("assignments set typed values") {
    RunConfig c;
    set_config_assignment(c, "model.bits=6");
    set_config_assignment(c, "train.lr=0.05");
    set_config_assignment(c, "model.quant_mode=symmetric");
    set_config_assignment(c, "generate.prompt=42");
    set_config_assignment(c, "stdp.gate=true");
    CHECK(c.model.bits == 6);
    CHECK(c.train.lr == doctest::Approx(0.05));
    CHECK(c.model.quant_mode == QuantMode::symmetric);
    CHECK(c.prompt == "42");
    CHECK(c.stdp.gate);
    CHECK(c.resolved_model().steps == 31);
    set_config_assignment(c, "model.steps=5");
    CHECK(c.resolved_model().steps == 5);
}

TEST_CASE("unknown keys and ill-typed values are rejected") {
    RunConfig c;
    CHECK_THROWS_AS(set_config_assignment(c, "model.widht=3"), ConfigError);
    CHECK_THROWS_AS(set_config_assignment(c, "model.bits=four"), ConfigError);
    CHECK_THROWS_AS(set_config_assignment(c, "model.bits=2.5"), ConfigError);
    CHECK_THROWS_AS(set_config_assignment(c, "model.quant_mode=ternary"), ConfigError);
    CHECK_THROWS_AS(set_config_assignment(c, "noequals"), ConfigError);
    CHECK_THROWS_AS(apply_config_json(c, nlohmann::json::array()), ConfigError);
    try {
        set_config_value(c, "train.epochs", "x");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
    }
}

TEST_CASE("json round trip over every key") {
    RunConfig c;
    c.seed = 99;
    c.model.d_model = 32;
    c.plasticity.rule = PlasticityRule::composite;
    const nlohmann::json j = config_to_json(c);
    RunConfig back;
    apply_config_json(back, j);
    CHECK(config_to_json(back) == j);
    CHECK(back.seed == 99);
}

TEST_CASE("help documents every key") {
    const std::string help = config_help();
    CHECK(config_keys().size() > 50);
    for (const ConfigKey& k : config_keys()) {
        CHECK_MESSAGE(help.find(k.name) != std::string::npos, k.name);
        CHECK_FALSE(k.doc.empty());
    }
}
