#pragma once

#include <vector>

#include "snnlm/approximators.hpp"
#include "snnlm/model.hpp"
#include "snnlm/training.hpp"

namespace snnlm::test {

// A model small enough for exhaustive checks.
inline ModelConfig tiny_config(int bits = 4) {
    ModelConfig c;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_layers = 1;
    c.d_ff = 32;
    c.max_seq_len = 16;
    c.bits = bits;
    c.steps = c.matched_steps();
    return c;
}

inline std::vector<Window> random_windows(Rng& rng, int count, int len) {
    std::vector<Window> out;
    for (int w = 0; w < count; ++w) {
        Window win;
        win.tokens.push_back(kBosToken);
        for (int i = 0; i < len; ++i) win.targets.push_back(static_cast<int>(rng.below(256)));
        win.tokens.insert(win.tokens.end(), win.targets.begin(), win.targets.end() - 1);
        out.push_back(std::move(win));
    }
    return out;
}

// Randomly initialized ann model with frozen scales from random windows.
inline Model calibrated_model(std::uint64_t seed, int bits = 4) {
    Rng rng(seed);
    Model m = init_model(tiny_config(bits), rng);
    calibrate(m, random_windows(rng, 4, m.config.max_seq_len));
    return m;
}

// Default banks, fitted once per test binary.
inline const ApproximatorSet& default_banks() {
    static const ApproximatorSet banks = fit_approximators(ApproximatorConfig{}, 11);
    return banks;
}

}  // namespace snnlm::test
