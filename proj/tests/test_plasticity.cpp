#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "snnlm/conversion.hpp"
#include "snnlm/plasticity.hpp"

using namespace snnlm;

namespace {

Model converted(std::uint64_t seed) { return convert(test::calibrated_model(seed), test::default_banks()); }

std::vector<WindowTrace> traces_for(const Model& m, const std::vector<Window>& windows) {
    std::vector<WindowTrace> out;
    for (const Window& w : windows) {
        WindowTrace wt;
        wt.window = &w;
        const Matrix logits = forward_snn(m, w.tokens, nullptr, &wt.trace);
        wt.loss = task_loss(logits, w.targets);
        out.push_back(std::move(wt));
    }
    return out;
}

PlasticityConfig zero_rates() {
    PlasticityConfig c;
    c.eta_w = 0.0;
    c.rates = NeuronRates{0, 0, 0, 0, 0, 0};
    return c;
}

}  // namespace

TEST_CASE("stdp window branches") {
    const StdpParams p;
    CHECK(stdp_delta(2.0, p) == doctest::Approx(std::exp(-0.5)));
    CHECK(stdp_delta(-2.0, p) == doctest::Approx(-std::exp(-0.5)));
    CHECK(stdp_delta(0.0, p) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(stdp_delta(std::nan(""), p), ArgumentError);
}

TEST_CASE("global modulation and baseline") {
    ModulationState m;
    CHECK(global_modulation(3.0, m) == doctest::Approx(0.5));
    m = update_baseline(m, 2.0);
    m = update_baseline(m, 4.0);
    m = update_baseline(m, 6.0);
    CHECK(m.baseline == doctest::Approx(4.0));
    CHECK(global_modulation(2.0, m) == doctest::Approx(0.880797).epsilon(1e-6));
    CHECK(global_modulation(2.0, m) > 0.5);
    CHECK(global_modulation(6.0, m) < 0.5);
    m.window = 2;
    m = update_baseline(m, 8.0);
    CHECK(m.recent_losses.size() == 2);
    CHECK(m.baseline == doctest::Approx(7.0));
}

TEST_CASE("weight and neuron updates") {
    CHECK(weight_update(0.5, 1.0, 1.0, 0.1) == doctest::Approx(0.05));
    NeuronPlasticityState n;
    n.s_target = 20.0;
    n.s_bar = 10.0;
    n.rates.eta_theta = 1e-3;
    CHECK(neuron_param_update(n, 1.0, nullptr).theta_base == doctest::Approx(0.01));
    n.homeostatic_sign_flip = true;
    CHECK(neuron_param_update(n, 1.0, nullptr).theta_base == doctest::Approx(-0.01));
    n.homeostatic_sign_flip = false;
    const TaskGradients g{2.0, 0.0, 0.0};
    CHECK(neuron_param_update(n, 1.0, &g).theta_base == doctest::Approx(0.01 - 2e-3));
}

TEST_CASE("expected first-spike step matches brute-force enumeration") {
    Rng rng(12);
    for (int len = 1; len <= 12; ++len) {
        std::vector<double> p(static_cast<std::size_t>(len));
        for (double& x : p) x = rng.next_double();
        double expected = 0.0;
        for (unsigned pattern = 0; pattern < (1u << len); ++pattern) {
            double prob = 1.0;
            int first = len + 1;
            for (int t = 0; t < len; ++t) {
                const bool fire = (pattern >> t) & 1u;
                prob *= fire ? p[static_cast<std::size_t>(t)] : 1.0 - p[static_cast<std::size_t>(t)];
                if (fire && first == len + 1) first = t + 1;
            }
            expected += prob * first;
        }
        CHECK(std::abs(expected_time_steps(p) - expected) < 1e-9);

        const std::vector<double> grad = expected_time_steps_grad(p);
        for (std::size_t j = 0; j < p.size(); ++j) {
            std::vector<double> up = p, down = p;
            const double h = 1e-6;
            up[j] = std::min(1.0, p[j] + h);
            down[j] = std::max(0.0, p[j] - h);
            const double fd = (expected_time_steps(up) - expected_time_steps(down)) / (up[j] - down[j]);
            CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
    const std::vector<double> half(30, 0.5);
    CHECK(expected_time_steps(half) == doctest::Approx(2.0).epsilon(1e-6));
    const std::vector<double> never(5, 0.0);
    CHECK(expected_time_steps(never) == 6.0);
    const std::vector<double> bad = {1.5};
    CHECK_THROWS_AS(expected_time_steps(bad), ArgumentError);
}

TEST_CASE("tag and spike probability") {
    CHECK(synaptic_tag(1.0, 1.0, 0.0) == doctest::Approx(0.880797).epsilon(1e-6));
    CHECK(spike_probability(1.0, 1.0, 0.5) == doctest::Approx(0.5));
    CHECK_THROWS_AS(spike_probability(1.0, 1.0, 0.0), ArgumentError);
}

TEST_CASE("composite loss re-sums its terms") {
    CompositeSnapshot s;
    s.w = {0.5, -0.2, 0.1};
    s.delta = {1.0, 0.0, 7.0};
    s.tag = {0.8, 0.3, 0.9};
    s.has_delta = {true, true, false};
    s.s_bar = {1.0, 3.0};
    s.v_bar = {0.2, -0.1};
    s.weight_sums = {0.3, 0.1};
    s.c_targets = {0.4, 0.1};
    s.s_target = 2.0;
    s.v_target = 0.0;
    s.v_rest = 0.1;
    s.t_exp = 3.0;
    s.t_target = 4.0;
    s.l_task = 2.5;
    CompositeLossWeights w;
    w.lambda_reg = 0.5;
    const CompositeBreakdown b = composite_loss(w, s);
    CHECK(b.stdp == doctest::Approx(0.8 * 0.25 + 0.3 * 0.04));
    CHECK(b.theta == doctest::Approx(1.0 + 1.0));
    CHECK(b.alpha == doctest::Approx(0.04 + 0.01));
    CHECK(b.r == doctest::Approx(0.01 + 0.04));
    CHECK(b.c == doctest::Approx(0.01));
    CHECK(b.t == doctest::Approx(1.0));
    CHECK(b.task == doctest::Approx(2.5));
    CHECK(b.reg == doctest::Approx(0.5 * 0.30));
    CHECK(b.total == doctest::Approx(b.stdp + b.theta + b.alpha + b.r + b.c + b.t + b.task + b.reg));
    for (double term : {b.stdp, b.theta, b.alpha, b.r, b.c, b.t, b.task, b.reg}) CHECK(term >= 0.0);
    CompositeLossWeights none{0, 0, 0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(none.validate(), ConfigError);
}

TEST_CASE("neuron surrogate derivatives match finite differences") {
    const EiIfParams base{0.1, 0.05, 0.5};
    const double lambda = 0.3;
    const int steps = 7;
    const double x = 0.37;
    const NeuronSurrogate s = neuron_surrogate(base, x, steps, lambda);
    const double h = 1e-6;
    auto fd = [&](auto field, auto get) {
        EiIfParams up = base, down = base;
        up.*field += h;
        down.*field -= h;
        return (get(neuron_surrogate(up, x, steps, lambda)) - get(neuron_surrogate(down, x, steps, lambda))) / (2 * h);
    };
    auto count = [](const NeuronSurrogate& n) { return n.count; };
    auto texp = [](const NeuronSurrogate& n) { return n.t_exp; };
    auto mv = [](const NeuronSurrogate& n) { return n.mean_v; };
    CHECK(s.d_count_theta == doctest::Approx(fd(&EiIfParams::theta_base, count)).epsilon(1e-5));
    CHECK(s.d_count_alpha == doctest::Approx(fd(&EiIfParams::alpha, count)).epsilon(1e-5));
    CHECK(s.d_count_r == doctest::Approx(fd(&EiIfParams::attenuation_rate, count)).epsilon(1e-5));
    CHECK(s.d_t_theta == doctest::Approx(fd(&EiIfParams::theta_base, texp)).epsilon(1e-5));
    CHECK(s.d_t_alpha == doctest::Approx(fd(&EiIfParams::alpha, texp)).epsilon(1e-5));
    CHECK(s.d_t_r == doctest::Approx(fd(&EiIfParams::attenuation_rate, texp)).epsilon(1e-5));
    CHECK(s.d_mean_v_r == doctest::Approx(fd(&EiIfParams::attenuation_rate, mv)).epsilon(1e-5));
}

TEST_CASE("rule names round trip") {
    CHECK(plasticity_rule_from_string("composite") == PlasticityRule::composite);
    CHECK(to_string(PlasticityRule::local) == "local");
    CHECK_THROWS_AS(plasticity_rule_from_string("hebb"), ConfigError);
}

TEST_CASE("zero learning rates leave the model bit-identical") {
    Model m = converted(41);
    const Model before = m;
    Rng rng(1);
    const std::vector<Window> windows = test::random_windows(rng, 2, 12);
    for (PlasticityRule rule : {PlasticityRule::local, PlasticityRule::composite}) {
        PlasticityConfig c = zero_rates();
        c.rule = rule;
        PlasticityState st = make_plasticity_state(c);
        const auto traces = traces_for(m, windows);
        apply_plasticity(m, traces, st, c);
        CHECK(m.neuron_deltas.empty());
        const auto pa = named_parameters(m);
        const auto pb = named_parameters(const_cast<Model&>(before));
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(std::memcmp(pa[i].data, pb[i].data, sizeof(float) * static_cast<std::size_t>(pa[i].size())) == 0);
        }
        CHECK(st.step == 1);
    }
}

TEST_CASE("plasticity contracts") {
    Model m = converted(42);
    Rng rng(2);
    const std::vector<Window> windows = test::random_windows(rng, 1, 8);
    PlasticityConfig c;
    PlasticityState st = make_plasticity_state(c);
    auto traces = traces_for(m, windows);
    traces[0].trace.encoders.erase(traces[0].trace.encoders.begin());
    CHECK_THROWS_AS(apply_plasticity(m, traces, st, c), ContractError);

    Model ann = test::calibrated_model(42);
    CHECK_THROWS_AS(stdp_finetune_step(ann, windows, st, c), ContractError);
    CHECK_THROWS_AS(apply_plasticity(m, std::span<const WindowTrace>{}, st, c), ContractError);
}

TEST_CASE("default plasticity step is deterministic and moves neuron parameters") {
    Rng rng(3);
    const std::vector<Window> windows = test::random_windows(rng, 2, 12);
    Model a = converted(43);
    Model b = a;
    for (PlasticityRule rule : {PlasticityRule::local, PlasticityRule::composite}) {
        PlasticityConfig c;
        c.rule = rule;
        PlasticityState sa = make_plasticity_state(c);
        PlasticityState sb = make_plasticity_state(c);
        const StdpMetrics ma = stdp_finetune_step(a, windows, sa, c);
        const StdpMetrics mb = stdp_finetune_step(b, windows, sb, c);
        CHECK(ma.l_task == mb.l_task);
        CHECK(ma.g == doctest::Approx(0.5));
        CHECK(ma.mean_abs_dtheta > 0.0);
        CHECK_FALSE(a.neuron_deltas.empty());
        REQUIRE(a.neuron_deltas.size() == b.neuron_deltas.size());
        for (const auto& [site, d] : a.neuron_deltas) CHECK(d.theta_base == b.neuron_deltas.at(site).theta_base);
        if (rule == PlasticityRule::composite) CHECK(ma.composite.total >= ma.composite.task);
    }
}

TEST_CASE("run_stdp gate compares against the frozen model") {
    Model m = converted(44);
    Rng rng(4);
    const std::vector<Window> windows = test::random_windows(rng, 3, 12);
    StdpRunOptions o;
    o.steps = 3;
    o.gate = true;
    const StdpRunReport r = run_stdp(m, windows, zero_rates(), o, 9);
    CHECK(r.records.size() == 3);
    CHECK(r.ema_ratio == doctest::Approx(1.0));
    CHECK(r.gate_passed);
}
