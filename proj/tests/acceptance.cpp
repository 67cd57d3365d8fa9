// Acceptance run: one PASS/FAIL line per criterion, plus INFO lines with the
// measured quantities. Exit status is 0 when the failing criteria are exactly
// the ones listed in --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"
#include "snnlm/approximators.hpp"
#include "snnlm/attention.hpp"
#include "snnlm/checkpoint.hpp"
#include "snnlm/conversion.hpp"
#include "snnlm/model.hpp"
#include "snnlm/neuron.hpp"
#include "snnlm/plasticity.hpp"
#include "snnlm/quantization.hpp"
#include "snnlm/synapsis.hpp"
#include "snnlm/training.hpp"

namespace fs = std::filesystem;
using namespace snnlm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

void info(int criterion, const std::string& text) { std::cout << "  INFO " << criterion << ": " << text << std::endl; }

struct Result {
    int id = 0;
    std::string title;
    bool pass = true;
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures.push_back(what);
        }
    }
};

void report(const Result& r) {
    std::cout << "CRITERION " << r.id << " " << (r.pass ? "PASS" : "FAIL") << ": " << r.title;
    if (!r.pass) {
        std::cout << " [";
        for (std::size_t i = 0; i < r.failures.size(); ++i) std::cout << (i ? "; " : "") << r.failures[i];
        std::cout << "]";
    }
    std::cout << std::endl;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_params(const Model& a, const Model& b) {
    Model& ma = const_cast<Model&>(a);
    Model& mb = const_cast<Model&>(b);
    const auto pa = named_parameters(ma);
    const auto pb = named_parameters(mb);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (std::memcmp(pa[i].data, pb[i].data, sizeof(float) * static_cast<std::size_t>(pa[i].size())) != 0) {
            return false;
        }
    }
    return true;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

// Shared state of the run: the corpus, banks and one trained model per width.
struct Context {
    std::uint64_t seed = 1813;
    std::string text;
    Corpus corpus;
    ApproximatorSet banks;
    std::map<int, Model> ann;  // bits -> trained ann model
    std::map<int, TrainReport> train_reports;
    std::map<int, double> train_seconds;
    Model init4;  // bits = 4 model at initialization
};

ModelConfig toy_config(int bits) {
    ModelConfig c;  // 2 layers, d_model 64
    c.bits = bits;
    c.steps = c.matched_steps();
    return c;
}

// Criterion 1: rate-code counts equal quantizer levels.
Result criterion1(std::uint64_t seed) {
    Result r{1, "quantizer and rate code agree exactly on 1e5 scalars per width", true, {}};
    const auto t0 = Clock::now();
    Rng rng(derive_seed(seed, "acceptance.c1"));
    for (int bits : {3, 4, 6, 8}) {
        const int steps = (1 << (bits - 1)) - 1;
        Matrix x(1, 100000);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(0, i) = static_cast<float>(rng.uniform(-1.0, 1.0));
        const SpikeTrain train = encode_rate(x, steps);
        const IntMatrix levels = quantize_levels(x, QuantSpec::narrow(bits), 1.0 / steps);
        Eigen::Index mismatches = 0;
        for (Eigen::Index i = 0; i < x.size(); ++i) mismatches += train.accumulated(i) != levels(0, i);
        info(1, "bits " + std::to_string(bits) + ", T=" + std::to_string(steps) + ": " + std::to_string(mismatches) +
                    " mismatches");
        r.require(mismatches == 0, "bits " + std::to_string(bits) + " has mismatches");
    }
    const double secs = seconds_since(t0);
    info(1, "runtime " + fmt(secs, 3) + " s");
    r.require(secs < 10.0, "runtime " + fmt(secs, 3) + " s exceeds 10 s");
    return r;
}

// Criterion 2: the spike-driven layer reproduces the quantized layer.
Result criterion2(std::uint64_t seed) {
    Result r{2, "Synapsis output equals QSynapsis output exactly (b=4, 16x16, 100 inputs)", true, {}};
    Rng rng(derive_seed(seed, "acceptance.c2"));
    const int bits = 4;
    const int steps = (1 << (bits - 1)) - 1;
    const QuantSpec spec = QuantSpec::narrow(bits);
    std::int64_t mismatches = 0;
    std::int64_t compared = 0;
    for (int model = 0; model < 10; ++model) {
        const Matrix w = rand_uniform(rng, 16, 16, -0.5f, 0.5f);
        const Vector b = rand_uniform(rng, 16, -0.1f, 0.1f);
        const Matrix x = rand_uniform(rng, 100, 16, -1.0f, 1.0f);
        const double max_abs = x.cwiseAbs().maxCoeff();
        const double s_pre = max_abs / steps;
        const MatrixD calib = qsynapsis_preactivation(w, b, quantize_levels(x, spec, s_pre), s_pre);
        const double s_post = calib.cwiseAbs().maxCoeff() / steps;
        const QSynapsisResult q = qsynapsis_forward(w, b, spec, spec, x, s_pre, s_post);

        const SynapsisLayer layer{w, b, max_abs, steps};
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Vector xi = x.row(i).transpose();
            const SynapsisRun run = synapsis_run(layer, xi);
            const VectorD pre = run.accumulated * (layer.scaling_factor / steps) + b.cast<double>();
            const VectorD scaled = (pre / (s_post * steps)).cwiseMax(-1.0).cwiseMin(1.0);
            const SpikeTrain post = encode_rate(scaled, steps);
            for (Eigen::Index o = 0; o < 16; ++o) {
                const float z = static_cast<float>(post.accumulated(o) * s_post);
                ++compared;
                mismatches += post.accumulated(o) != q.post_levels(i, o) || z != q.z(i, o) ||
                              run.pre_counts(o) != q.pre_levels(i, o);
            }
        }
    }
    info(2, std::to_string(compared) + " elements over 10 random layers, " + std::to_string(mismatches) +
                " mismatches");
    r.require(mismatches == 0, std::to_string(mismatches) + " mismatching elements");
    return r;
}

// Criterion 3: end-to-end audit of trained two-layer models.
Result criterion3(Context& ctx) {
    Result r{3, "conversion audit: zero linear gaps, agreement >= 0.9, agreement non-decreasing in bits", true, {}};
    std::map<int, double> medians;
    for (int bits : {4, 6, 8}) {
        const auto t0 = Clock::now();
        const Model snn = convert(ctx.ann.at(bits), ctx.banks);
        std::vector<double> agreement;
        double max_gap = 0.0;
        bool within = true;
        for (int k = 0; k < 10; ++k) {
            const std::vector<int> stream = held_out_stream(ctx.text, 64, 0.1, 1024,
                                                            derive_seed(ctx.seed, "audit.stream/" + std::to_string(k)));
            const EquivalenceReport rep = audit_equivalence(ctx.ann.at(bits), snn, stream);
            agreement.push_back(rep.argmax_agreement);
            max_gap = std::max(max_gap, rep.max_linear_gap);
            within = within && rep.linear_within_bound && rep.matched;
        }
        medians[bits] = median(agreement);
        const auto [lo, hi] = std::minmax_element(agreement.begin(), agreement.end());
        info(3, "bits " + std::to_string(bits) + " (T=" + std::to_string(snn.config.steps) + "): max linear gap " +
                    fmt(max_gap) + ", agreement median " + fmt(medians[bits]) + " [" + fmt(*lo) + ", " + fmt(*hi) +
                    "], " + fmt(seconds_since(t0), 3) + " s");
        r.require(max_gap == 0.0 && within, "bits " + std::to_string(bits) + " linear gap " + fmt(max_gap));
        r.require(medians[bits] >= 0.9, "bits " + std::to_string(bits) + " agreement " + fmt(medians[bits]) + " < 0.9");
    }
    r.require(medians[6] >= medians[4] && medians[8] >= medians[6],
              "agreement not monotone: " + fmt(medians[4]) + ", " + fmt(medians[6]) + ", " + fmt(medians[8]));

    // Next-token agreement of greedy continuation over 500 held-out prompts.
    const Model snn4 = convert(ctx.ann.at(4), ctx.banks);
    const std::vector<int> stream = held_out_stream(ctx.text, 64, 0.1, 500 * 16, derive_seed(ctx.seed, "prompts"));
    int agree = 0;
    for (int p = 0; p < 500; ++p) {
        std::vector<int> tokens{kBosToken};
        tokens.insert(tokens.end(), stream.begin() + p * 16, stream.begin() + p * 16 + 16);
        const std::vector<int> a = argmax_rows(forward(ctx.ann.at(4), tokens));
        const std::vector<int> s = argmax_rows(forward(snn4, tokens));
        agree += a.back() == s.back();
    }
    info(3, "bits 4 greedy next-token agreement over 500 prompts: " + fmt(agree / 500.0));

    // Same pipeline with an ann trained under the spiking path's attention normalization.
    Rng rng(derive_seed(ctx.seed, "model.init"));
    ModelConfig lin_cfg = toy_config(4);
    lin_cfg.ann_attention = AnnAttention::linear;
    Model lin = init_model(lin_cfg, rng);
    train_ann(lin, ctx.corpus, TrainConfig{}, derive_seed(ctx.seed, "train"));
    const Model lin_snn = convert(lin, ctx.banks);
    std::vector<double> lin_agreement;
    for (int k = 0; k < 10; ++k) {
        const std::vector<int> s = held_out_stream(ctx.text, 64, 0.1, 1024,
                                                   derive_seed(ctx.seed, "audit.stream/" + std::to_string(k)));
        lin_agreement.push_back(audit_equivalence(lin, lin_snn, s).argmax_agreement);
    }
    info(3, "bits 4 with model.ann_attention=linear: agreement median " + fmt(median(lin_agreement)));
    return r;
}

// Criterion 4: spike-domain Q K^T converges with the window.
Result criterion4(std::uint64_t seed) {
    Result r{4, "SNNMatmul error shrinks with T and the front-loaded min law is exact", true, {}};
    const std::vector<int> windows = {8, 16, 32, 64};
    std::map<int, std::vector<double>> errors;
    for (int s = 0; s < 20; ++s) {
        Rng rng(derive_seed(seed, "acceptance.c4/" + std::to_string(s)));
        const Matrix q = rand_uniform(rng, 8, 16, -1.0f, 1.0f);
        const Matrix k = rand_uniform(rng, 8, 16, -1.0f, 1.0f);
        const MatrixD exact = q.cast<double>() * k.cast<double>().transpose();
        const double sq = q.cwiseAbs().maxCoeff();
        const double sk = k.cwiseAbs().maxCoeff();
        for (int t : windows) {
            const Matrix d = decode_scores(snn_matmul(q, k, t, sq, sk));
            errors[t].push_back((d.cast<double>() - exact).cwiseAbs().mean());
        }
    }
    std::string line;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const double m = median(errors[windows[i]]);
        line += (i ? ", " : "") + std::string("T=") + std::to_string(windows[i]) + " " + fmt(m);
        if (i > 0) {
            r.require(m <= median(errors[windows[i - 1]]), "median error rises at T=" + std::to_string(windows[i]));
        }
    }
    info(4, "median mean-abs error: " + line);
    int law_failures = 0;
    for (int t : {7, 8, 16}) {
        for (int a = -t; a <= t; ++a) {
            for (int b = -t; b <= t; ++b) {
                const int expected =
                    (a == 0 || b == 0) ? 0 : ((a > 0) == (b > 0) ? 1 : -1) * std::min(std::abs(a), std::abs(b));
                law_failures += coincidence_count(a, b, t, SpikeSchedule::front_loaded) != expected;
            }
        }
    }
    info(4, "min-law violations over T in {7, 8, 16}: " + std::to_string(law_failures));
    r.require(law_failures == 0, "min law violated");
    return r;
}

// Criterion 5: approximator accuracy gates.
Result criterion5(const Context& ctx) {
    Result r{5, "approximator gates (square, sqrt, SiLU, RMSNorm)", true, {}};
    const ApproximatorSet& b = ctx.banks;
    const double square = square_grid_mse(b.square, 4.0);
    const double sqrt_rel = sqrt_grid_max_rel_error(b.sqrt, 1e-3, 16.0);
    const double silu = silu_grid_mse(b.silu_pos, b.silu_neg, -6.0, 4.0);
    bool tail_zero = true;
    for (double x = -6.0 - 1e-6; x > -200.0; x *= 1.05) tail_zero = tail_zero && silu_approx(b.silu_pos, b.silu_neg, x) == 0.0;
    tail_zero = tail_zero && silu_approx(b.silu_pos, b.silu_neg, -1e6) == 0.0;

    Rng rng(derive_seed(ctx.seed, "acceptance.c5"));
    double worst_norm = 0.0;
    for (int v = 0; v < 200; ++v) {
        const Vector x = rand_uniform(rng, 64, -2.0f, 2.0f);
        const Vector w = rand_uniform(rng, 64, 0.5f, 1.5f);
        const Vector exact = rmsnorm_exact(x, w, 1e-5);
        const Vector approx = snn_rmsnorm_ranged(x, w, 1e-5, b.square, b.sqrt);
        worst_norm = std::max(worst_norm, static_cast<double>((approx - exact).norm() / exact.norm()));
    }
    info(5, "square MSE " + fmt(square) + ", sqrt max rel " + fmt(sqrt_rel) + ", SiLU MSE " + fmt(silu) +
                ", SiLU tail zero " + (tail_zero ? "yes" : "no") + ", RMSNorm worst rel " + fmt(worst_norm));
    r.require(square <= 1e-2, "square MSE " + fmt(square));
    r.require(sqrt_rel <= 0.05, "sqrt rel error " + fmt(sqrt_rel));
    r.require(silu <= 1e-2, "SiLU MSE " + fmt(silu));
    r.require(tail_zero, "SiLU below -6 is not exactly 0");
    r.require(worst_norm <= 0.05, "RMSNorm rel error " + fmt(worst_norm));
    return r;
}

// Criterion 6: plasticity laws.
Result criterion6(const Context& ctx) {
    Result r{6, "plasticity unit laws", true, {}};
    const StdpParams p;
    r.require(stdp_delta(0.0, p) == -p.a_minus, "dt=0 branch");
    r.require(std::abs(stdp_delta(p.tau_plus, p) - p.a_plus * std::exp(-1.0)) <= 1e-9, "dt=tau+ branch");
    ModulationState m;
    m = update_baseline(m, 2.7);
    r.require(global_modulation(m.baseline, m) == 0.5, "G(baseline, baseline) != 0.5");

    Rng rng(derive_seed(ctx.seed, "acceptance.c6"));
    double worst_t = 0.0;
    for (int len = 1; len <= 12; ++len) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> probs(static_cast<std::size_t>(len));
            for (double& x : probs) x = rng.next_double();
            double brute = 0.0;
            for (unsigned pattern = 0; pattern < (1u << len); ++pattern) {
                double prob = 1.0;
                int first = len + 1;
                for (int t = 0; t < len; ++t) {
                    const bool fire = (pattern >> t) & 1u;
                    prob *= fire ? probs[static_cast<std::size_t>(t)] : 1.0 - probs[static_cast<std::size_t>(t)];
                    if (fire && first == len + 1) first = t + 1;
                }
                brute += prob * first;
            }
            worst_t = std::max(worst_t, std::abs(brute - expected_time_steps(probs)));
        }
    }
    r.require(worst_t <= 1e-9, "expected_time_steps error " + fmt(worst_t));

    CompositeSnapshot s;
    for (int i = 0; i < 50; ++i) {
        s.w.push_back(rng.uniform(-1, 1));
        s.delta.push_back(rng.uniform(-1, 1));
        s.tag.push_back(rng.next_double());
        s.has_delta.push_back(i % 3 != 0);
    }
    for (int i = 0; i < 10; ++i) {
        s.s_bar.push_back(rng.uniform(0, 7));
        s.v_bar.push_back(rng.uniform(-1, 1));
        s.weight_sums.push_back(rng.uniform(-2, 2));
        s.c_targets.push_back(rng.uniform(-2, 2));
    }
    s.s_target = 1.4;
    s.t_exp = 2.3;
    s.t_target = 3.5;
    s.l_task = 2.2;
    const CompositeBreakdown cb = composite_loss(CompositeLossWeights{}, s);
    const double sum = cb.stdp + cb.theta + cb.alpha + cb.r + cb.c + cb.t + cb.task + cb.reg;
    r.require(std::abs(sum - cb.total) <= 1e-9, "composite breakdown does not sum to total");

    // Zero-rate step on the converted bits=4 model.
    Model snn = convert(ctx.ann.at(4), ctx.banks);
    const std::vector<std::uint8_t> before = serialize_checkpoint(Checkpoint{snn, {}, {}});
    PlasticityConfig zero;
    zero.eta_w = 0.0;
    zero.rates = NeuronRates{0, 0, 0, 0, 0, 0};
    PlasticityState st = make_plasticity_state(zero);
    const std::vector<Window> batch(ctx.corpus.train.begin(), ctx.corpus.train.begin() + 2);
    stdp_finetune_step(snn, batch, st, zero);
    const bool identical = serialize_checkpoint(Checkpoint{snn, {}, {}}) == before;
    r.require(identical, "zero-rate step changed the model");
    info(6, "expected_time_steps worst error " + fmt(worst_t) + ", composite residual " + fmt(std::abs(sum - cb.total)) +
                ", zero-rate step identical " + (identical ? "yes" : "no"));
    return r;
}

// Criterion 7: training and fine-tuning sanity.
Result criterion7(Context& ctx) {
    Result r{7, "training reduces loss >= 20%, lr=0 is a no-op, 200-step STDP keeps L_task EMA within +5%", true, {}};
    const TrainReport& rep = ctx.train_reports.at(4);
    const double reduction = 1.0 - rep.final_eval_loss / rep.initial_eval_loss;
    info(7, "bits 4, 3 epochs: eval loss " + fmt(rep.initial_eval_loss) + " -> " + fmt(rep.final_eval_loss) + " (" +
                fmt(100.0 * reduction, 3) + "% lower), " + fmt(ctx.train_seconds.at(4), 3) + " s");
    r.require(reduction >= 0.2, "loss reduction " + fmt(100.0 * reduction, 3) + "%");
    r.require(ctx.train_seconds.at(4) < 600.0, "training took longer than 10 minutes");

    Model frozen = ctx.init4;
    TrainConfig zero;
    zero.lr = 0.0;
    zero.max_steps = 20;
    train_ann(frozen, ctx.corpus, zero, derive_seed(ctx.seed, "train"));
    const bool unchanged = same_params(frozen, ctx.init4);
    info(7, "lr=0 for 20 steps leaves weights unchanged: " + std::string(unchanged ? "yes" : "no"));
    r.require(unchanged, "lr=0 changed weights");

    auto stdp_run = [&](const PlasticityConfig& cfg) {
        Model snn = convert(ctx.ann.at(4), ctx.banks);
        StdpRunOptions o;
        o.steps = 200;
        o.gate = true;
        StdpRunReport out = run_stdp(snn, ctx.corpus.train, cfg, o, derive_seed(ctx.seed, "stdp"));
        bool g_inside = true;
        for (const StdpRecord& rec : out.records) g_inside = g_inside && rec.metrics.g > 0.0 && rec.metrics.g < 1.0;
        return std::make_pair(out, g_inside);
    };
    const auto t0 = Clock::now();
    const auto [defaults, g_ok] = stdp_run(PlasticityConfig{});
    info(7, "STDP defaults: L_task EMA " + fmt(defaults.final_ema) + " vs frozen " + fmt(defaults.reference_ema) +
                ", ratio " + fmt(defaults.ema_ratio) + ", G in (0,1) throughout " + (g_ok ? "yes" : "no") + ", " +
                fmt(seconds_since(t0), 3) + " s");
    r.require(defaults.gate_passed, "STDP EMA ratio " + fmt(defaults.ema_ratio) + " > 1.05 at default rates");

    PlasticityConfig variant;
    const int steps = ctx.ann.at(4).config.matched_steps();
    variant.homeostatic_sign_flip = true;
    variant.rates.eta_theta = 1e-3 / steps;
    variant.rates.eta_alpha = 1e-3 / (steps * steps);
    const auto [alt, alt_g] = stdp_run(variant);
    info(7, "STDP variant (threshold term sign flipped, eta_theta=1e-3/T, eta_alpha=1e-3/T^2): ratio " +
                fmt(alt.ema_ratio) + (alt.gate_passed ? " (within gate)" : " (outside gate)"));
    return r;
}

int run_cli(const fs::path& dir, const std::string& cli, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Criterion 8: determinism and formats.
Result criterion8(const Context& ctx, const std::string& cli, const fs::path& corpus, const fs::path& workdir) {
    Result r{8, "deterministic commands, bit-identical BTSF round trip, schema-valid reports", true, {}};
    const std::string common = "--seed 77 --set train.corpus='" + fs::absolute(corpus).string() + "'";
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"fit-approximators", "--out banks.json"},
        {"train-ann", "--set train.max_steps=20 --set train.eval_windows=4 --out ann.btsf"},
        {"convert", "--set convert.input=ann.btsf --set convert.banks=banks.json --out snn.btsf"},
        {"audit", "--set audit.ann=ann.btsf --set audit.snn=snn.btsf --set audit.tokens=256 --out audit.json"},
        {"stdp", "--set stdp.input=snn.btsf --set stdp.steps=3 --out stdp.btsf"},
        {"generate",
         "--set generate.checkpoint=snn.btsf --set generate.max_new_tokens=8 --set generate.temperature=0.8 "
         "--out generate.json"},
    };
    const std::vector<std::string> artifacts = {
        "banks.json", "banks.json.report.json", "ann.btsf", "ann.btsf.log.jsonl", "snn.btsf", "audit.json",
        "stdp.btsf", "stdp.btsf.metrics.jsonl", "generate.json"};
    std::map<std::string, std::vector<std::uint64_t>> hashes;
    for (const char* run : {"run_a", "run_b"}) {
        const fs::path dir = workdir / run;
        fs::remove_all(dir);
        fs::create_directories(dir);
        for (const auto& [command, args] : commands) {
            const int code = run_cli(dir, cli, command + " " + common + " " + args);
            r.require(code == 0, command + " exited " + std::to_string(code));
        }
        for (const std::string& a : artifacts) {
            const fs::path f = dir / a;
            if (!fs::exists(f)) {
                r.require(false, std::string(run) + " missing " + a);
                continue;
            }
            hashes[a].push_back(fnv1a(read_file_bytes(f.string())));
        }
    }
    int identical = 0;
    for (const std::string& a : artifacts) {
        const auto& h = hashes[a];
        const bool same = h.size() == 2 && h[0] == h[1];
        identical += same;
        r.require(same, a + " differs between runs");
    }
    info(8, std::to_string(identical) + "/" + std::to_string(artifacts.size()) +
                " artifacts hash-identical across two runs of every command");

    int roundtrips = 0;
    for (const char* name : {"ann.btsf", "snn.btsf", "stdp.btsf"}) {
        const fs::path f = workdir / "run_a" / name;
        if (!fs::exists(f)) continue;
        const std::vector<std::uint8_t> bytes = read_file_bytes(f.string());
        const bool same = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
        roundtrips += same;
        r.require(same, std::string(name) + " does not round-trip");
    }
    Checkpoint trained{ctx.ann.at(4), TrainState{}, {}};
    const std::vector<std::uint8_t> bytes = serialize_checkpoint(trained);
    const bool mem_same = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
    r.require(mem_same, "trained checkpoint does not round-trip");
    info(8, std::to_string(roundtrips + mem_same) + "/4 checkpoints round-trip bit-identically");

    const fs::path audit = workdir / "run_a" / "audit.json";
    if (fs::exists(audit)) {
        const std::vector<std::string> problems = validate_report(nlohmann::json::parse(read_text(audit)));
        info(8, "audit report schema violations: " + std::to_string(problems.size()));
        r.require(problems.empty(), "audit report violates the schema");
    }
    return r;
}

std::set<int> parse_ids(const std::string& list) {
    std::set<int> ids;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) ids.insert(std::stoi(item));
    }
    return ids;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run over criteria 1-8"};
    std::string cli;
    std::string corpus = "data/corpus.txt";
    std::string workdir = "acceptance_work";
    std::string expect_fail;
    std::uint64_t seed = 1813;
    app.add_option("--cli", cli, "path of the snnlm executable")->required();
    app.add_option("--corpus", corpus, "training text");
    app.add_option("--workdir", workdir, "scratch directory for command runs");
    app.add_option("--expect-fail", expect_fail, "comma-separated criteria known to fail");
    app.add_option("--seed", seed, "root seed");
    CLI11_PARSE(app, argc, argv);
    cli = fs::absolute(cli).string();

    try {
        const auto t_start = Clock::now();
        fs::create_directories(workdir);
        Context ctx;
        ctx.seed = seed;
        ctx.text = read_text(corpus);
        ctx.corpus = make_corpus(ctx.text, 64, 0.1);

        std::vector<Result> results;
        results.push_back(criterion1(seed));
        report(results.back());
        results.push_back(criterion2(seed));
        report(results.back());

        ctx.banks = fit_approximators(ApproximatorConfig{}, derive_seed(seed, "approximators"));
        for (int bits : {4, 6, 8}) {
            Rng rng(derive_seed(seed, "model.init"));
            Model m = init_model(toy_config(bits), rng);
            if (bits == 4) ctx.init4 = m;
            const auto t0 = Clock::now();
            ctx.train_reports[bits] = train_ann(m, ctx.corpus, TrainConfig{}, derive_seed(seed, "train"));
            ctx.train_seconds[bits] = seconds_since(t0);
            ctx.ann[bits] = std::move(m);
        }

        results.push_back(criterion3(ctx));
        report(results.back());
        results.push_back(criterion4(seed));
        report(results.back());
        results.push_back(criterion5(ctx));
        report(results.back());
        results.push_back(criterion6(ctx));
        report(results.back());
        results.push_back(criterion7(ctx));
        report(results.back());
        results.push_back(criterion8(ctx, cli, corpus, workdir));
        report(results.back());

        std::set<int> failed;
        for (const Result& r : results) {
            if (!r.pass) failed.insert(r.id);
        }
        const std::set<int> expected = parse_ids(expect_fail);
        std::cout << "SUMMARY: " << results.size() - failed.size() << "/" << results.size() << " criteria pass";
        if (!failed.empty()) {
            std::cout << "; failing:";
            for (int id : failed) std::cout << " " << id;
        }
        std::cout << "; " << fmt(seconds_since(t_start), 4) << " s" << std::endl;
        if (failed != expected) {
            std::cout << "UNEXPECTED: failing set differs from --expect-fail" << std::endl;
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 3;
    }
}
