// snnlm: fit approximators, train, convert, audit, fine-tune and sample.
// Exit codes: 0 ok, 1 input error, 2 gate failure, 3 internal error.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "snnlm/checkpoint.hpp"
#include "snnlm/config.hpp"
#include "snnlm/conversion.hpp"
#include "snnlm/error.hpp"
#include "snnlm/plasticity.hpp"
#include "snnlm/training.hpp"

namespace {

using nlohmann::json;
using namespace snnlm;

constexpr int kGateFailure = 2;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool strict = false;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "flat JSON config file (module.key -> value)");
    cmd->add_option("--set", o.sets, "override one config key: key=value (repeatable)");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&o](const std::uint64_t& s) {
            o.seed = s;
            o.seed_given = true;
        },
        "root seed (overrides run.seed)");
    cmd->add_flag("--strict", o.strict, "treat soft gates as failures");
    cmd->add_option("--out", o.out, "primary output path");
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) load_config_file(cfg, o.config_path);
    for (const std::string& s : o.sets) set_config_assignment(cfg, s);
    if (o.seed_given) cfg.seed = o.seed;
    return cfg;
}

std::string require_path(const std::string& value, const std::string& key) {
    if (value.empty()) throw InputError("config key '" + key + "' is required");
    return value;
}

std::string out_path(const CommonOptions& o, const std::string& fallback) { return o.out.empty() ? fallback : o.out; }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open corpus '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (text.empty()) throw InputError("corpus '" + path + "' is empty");
    return text;
}

void write_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

ApproximatorSet load_banks(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw FormatError("bank file '" + path + "' is not valid JSON");
    return approximator_set_from_json(j.at("banks"));
}

int cmd_fit_approximators(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const std::string out = out_path(o, "banks.json");
    const ApproximatorConfig& ac = cfg.approx;
    const ApproximatorSet banks = fit_approximators(ac, derive_seed(cfg.seed, "approximators"));

    struct Gate {
        std::string bank;
        std::string metric;
        double value;
        double limit;
    };
    const std::vector<Gate> gates = {
        {"square", "mse_on_[0,square_hi]", square_grid_mse(banks.square, ac.square_hi), ac.square_mse_gate},
        {"sqrt", "max_rel_error_on_[1e-3,sqrt_hi]", sqrt_grid_max_rel_error(banks.sqrt, 1e-3, ac.sqrt_hi),
         ac.sqrt_rel_gate},
        {"silu", "mse_on_[-6,4]", silu_grid_mse(banks.silu_pos, banks.silu_neg), ac.silu_mse_gate},
    };
    json report{{"seed", cfg.seed}, {"config", config_to_json(cfg)}, {"banks", json::array()}};
    std::vector<std::string> failing;
    for (const Gate& g : gates) {
        const bool ok = g.value <= g.limit;
        report["banks"].push_back(
            json{{"bank", g.bank}, {"metric", g.metric}, {"value", g.value}, {"limit", g.limit}, {"passed", ok}});
        if (!ok) failing.push_back(g.bank);
    }
    report["fit_mse"] = json{{"square", banks.square.fit_mse},
                             {"sqrt", banks.sqrt.fit_mse},
                             {"silu_pos", banks.silu_pos.fit_mse},
                             {"silu_neg", banks.silu_neg.fit_mse}};
    report["passed"] = failing.empty();
    write_text(out, json{{"banks", to_json(banks)}}.dump(1) + "\n");
    write_text(out + ".report.json", report.dump(1) + "\n");
    for (const Gate& g : gates) {
        std::cout << g.bank << " " << g.metric << " = " << g.value << " (limit " << g.limit << ")\n";
    }
    if (!failing.empty()) {
        for (const std::string& b : failing) std::cerr << "fit gate failed for bank '" << b << "'\n";
        return kGateFailure;
    }
    return 0;
}

int cmd_train_ann(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const std::string out = out_path(o, "ann.btsf");
    const std::string text = read_text(cfg.corpus);
    Checkpoint ckpt;
    TrainState state;
    if (!cfg.resume.empty()) {
        ckpt = load_checkpoint(cfg.resume);
        if (ckpt.model.config.mode != ModelMode::ann) throw InputError("train-ann: resume checkpoint is not ann mode");
        if (ckpt.train_state) state = *ckpt.train_state;
    } else {
        Rng rng(derive_seed(cfg.seed, "model.init"));
        ckpt.model = init_model(cfg.resolved_model(), rng);
    }
    if (cfg.train.seq_len > ckpt.model.config.max_seq_len) {
        throw ConfigError("train.seq_len exceeds model.max_seq_len");
    }
    const Corpus corpus = make_corpus(text, cfg.train.seq_len, cfg.train.eval_fraction);
    std::ostringstream log;
    TrainReport report;
    try {
        report = train_ann(ckpt.model, corpus, cfg.train, derive_seed(cfg.seed, "train"), &state,
                           [&](const TrainRecord& r) {
                               log << json{{"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss}}.dump() << "\n";
                           });
    } catch (const TrainingError&) {
        // The model was restored to its last finite state.
        save_checkpoint(out + ".last_good.btsf", Checkpoint{ckpt.model, state, ckpt.info});
        write_text(out + ".log.jsonl", log.str());
        throw;
    }
    log << json{{"initial_eval_loss", report.initial_eval_loss},
                {"final_eval_loss", report.final_eval_loss},
                {"steps", report.steps}}
               .dump()
        << "\n";
    ckpt.train_state = state;
    ckpt.info = json{{"command", "train-ann"}, {"seed", cfg.seed}, {"final_eval_loss", report.final_eval_loss}};
    save_checkpoint(out, ckpt);
    write_text(out + ".log.jsonl", log.str());
    std::cout << "eval loss " << report.initial_eval_loss << " -> " << report.final_eval_loss << " after "
              << report.steps << " steps\n";
    return 0;
}

int cmd_convert(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const std::string out = out_path(o, "snn.btsf");
    const Checkpoint ann = load_checkpoint(require_path(cfg.convert_input, "convert.input"));
    const ApproximatorSet banks = load_banks(require_path(cfg.convert_banks, "convert.banks"));
    ConvertOptions opts;
    if (cfg.convert_steps > 0) opts.steps = cfg.convert_steps;
    ConversionSummary summary;
    Checkpoint snn;
    snn.model = convert(ann.model, banks, opts, &summary);
    snn.info = json{{"command", "convert"}, {"source", ann.info}};
    save_checkpoint(out, snn);
    std::cout << "layers " << ann.model.config.n_layers << ", T=" << summary.steps << ", bits=" << summary.bits << "\n"
              << "quantizers -> rate encoders: " << summary.encoder_sites.size() << "\n"
              << "QSynapsis -> Synapsis: " << summary.synapsis_sites.size() << "\n";
    for (const std::string& s : summary.synapsis_sites) std::cout << "  synapsis " << s << "\n";
    return 0;
}

int cmd_audit(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const Checkpoint ann = load_checkpoint(require_path(cfg.audit_ann, "audit.ann"));
    const Checkpoint snn = load_checkpoint(require_path(cfg.audit_snn, "audit.snn"));
    const std::string text = read_text(cfg.corpus);
    const std::vector<int> stream = held_out_stream(text, cfg.train.seq_len, cfg.train.eval_fraction, cfg.audit_tokens,
                                                    derive_seed(cfg.seed, "audit.stream"));
    const EquivalenceReport report = audit_equivalence(ann.model, snn.model, stream);
    const json doc = to_json(report);
    const std::vector<std::string> problems = validate_report(doc);
    if (!problems.empty()) throw std::runtime_error("audit report violates its schema: " + problems.front());
    if (o.out.empty()) {
        std::cout << doc.dump(1) << "\n";
    } else {
        write_text(o.out, doc.dump(1) + "\n");
    }
    std::cerr << "max linear gap " << report.max_linear_gap << ", argmax agreement " << report.argmax_agreement
              << (report.matched ? "" : " (T/bits not matched)") << "\n";
    int code = 0;
    if (!report.linear_within_bound && (report.matched || o.strict)) {
        std::cerr << "gate: a Synapsis-site gap exceeds its bound\n";
        code = kGateFailure;
    }
    if (o.strict && report.argmax_agreement < cfg.audit_min_agreement) {
        std::cerr << "gate: argmax agreement below audit.min_agreement\n";
        code = kGateFailure;
    }
    return code;
}

json metrics_json(const StdpRecord& r, bool gate) {
    const StdpMetrics& m = r.metrics;
    const CompositeBreakdown& c = m.composite;
    json j{{"step", m.step},
           {"l_task", m.l_task},
           {"l_task_ema", r.l_task_ema},
           {"g", m.g},
           {"baseline", m.baseline},
           {"mean_abs_dw", m.mean_abs_dw},
           {"updated_synapses", m.updated_synapses},
           {"tagged_fraction", m.tagged_fraction},
           {"mean_abs_dtheta", m.mean_abs_dtheta},
           {"t_exp", m.t_exp},
           {"loss_terms", {{"stdp", c.stdp},
                           {"theta", c.theta},
                           {"alpha", c.alpha},
                           {"r", c.r},
                           {"c", c.c},
                           {"t", c.t},
                           {"task", c.task},
                           {"reg", c.reg},
                           {"total", c.total}}}};
    if (gate) {
        j["reference_loss"] = r.reference_loss;
        j["reference_ema"] = r.reference_ema;
    }
    return j;
}

int cmd_stdp(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const std::string out = out_path(o, "stdp.btsf");
    Checkpoint ckpt = load_checkpoint(require_path(cfg.stdp_input, "stdp.input"));
    if (ckpt.model.config.mode != ModelMode::snn) throw ContractError("stdp: input checkpoint is not an snn model");
    if (!ckpt.model.banks) throw ContractError("stdp: input checkpoint has no approximator banks");
    const std::string text = read_text(cfg.corpus);
    const Corpus corpus = make_corpus(text, std::min(cfg.train.seq_len, ckpt.model.config.max_seq_len),
                                      cfg.train.eval_fraction);
    std::ostringstream metrics;
    const StdpRunReport report =
        run_stdp(ckpt.model, corpus.train, cfg.plasticity, cfg.stdp, derive_seed(cfg.seed, "stdp"),
                 [&](const StdpRecord& r) { metrics << metrics_json(r, cfg.stdp.gate).dump() << "\n"; });
    // Provenance stays untouched so a zero-rate run reproduces its input.
    save_checkpoint(out, ckpt);
    write_text(out + ".metrics.jsonl", metrics.str());
    std::cout << "steps " << report.records.size() << ", final L_task EMA " << report.final_ema << "\n";
    if (cfg.stdp.gate) {
        std::cout << "frozen EMA " << report.reference_ema << ", ratio " << report.ema_ratio << " -> "
                  << (report.gate_passed ? "within" : "outside") << " tolerance\n";
        if (!report.gate_passed) return kGateFailure;
    }
    return 0;
}

int cmd_generate(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const Checkpoint ckpt = load_checkpoint(require_path(cfg.generate_checkpoint, "generate.checkpoint"));
    const Model& model = ckpt.model;
    if (cfg.max_new_tokens < 0) throw ConfigError("generate.max_new_tokens must be >= 0");
    if (!(cfg.temperature >= 0.0)) throw ConfigError("generate.temperature must be >= 0");
    std::vector<int> tokens{kBosToken};
    const std::vector<int> prompt = tokenize_bytes(cfg.prompt);
    tokens.insert(tokens.end(), prompt.begin(), prompt.end());
    check_tokens(model.config, tokens);
    Rng rng(derive_seed(cfg.seed, "generate"));
    std::int64_t spikes = 0;
    std::vector<int> generated;
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx_len = static_cast<std::size_t>(model.config.max_seq_len);
    for (int i = 0; i < cfg.max_new_tokens; ++i) {
        const std::size_t start = tokens.size() > ctx_len ? tokens.size() - ctx_len : 0;
        const std::span<const int> ctx(tokens.data() + start, tokens.size() - start);
        ForwardTaps taps;
        const Matrix logits = forward(model, ctx, &taps);
        for (const auto& [site, n] : taps.spike_counts) spikes += n;
        Eigen::VectorXd row = logits.row(logits.rows() - 1).cast<double>().transpose();
        if (kBosToken < row.size()) row(kBosToken) = -std::numeric_limits<double>::infinity();
        int next = 0;
        if (cfg.temperature == 0.0) {
            row.maxCoeff(&next);
        } else {
            const Eigen::VectorXd z = (row.array() - row.maxCoeff()) / cfg.temperature;
            const Eigen::VectorXd p = z.array().exp();
            double u = rng.next_double() * p.sum();
            next = static_cast<int>(p.size()) - 1;
            for (Eigen::Index k = 0; k < p.size(); ++k) {
                u -= p(k);
                if (u < 0.0) {
                    next = static_cast<int>(k);
                    break;
                }
            }
        }
        tokens.push_back(next);
        generated.push_back(next);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string completion = detokenize_bytes(generated);
    std::cout << cfg.prompt << completion << "\n";
    std::cerr << generated.size() << " tokens, " << (secs > 0 ? generated.size() / secs : 0.0) << " tokens/s, mode "
              << to_string(model.config.mode);
    if (model.config.mode == ModelMode::snn) std::cerr << ", " << spikes << " spikes";
    std::cerr << "\n";
    if (!o.out.empty()) {
        json doc{{"prompt", cfg.prompt},
                 {"completion", completion},
                 {"tokens", generated},
                 {"mode", to_string(model.config.mode)},
                 {"spikes", spikes}};
        // Sampled bytes need not form UTF-8; "tokens" keeps them exactly.
        write_text(o.out, doc.dump(1, ' ', false, json::error_handler_t::replace) + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spiking transformer toolkit: quantized training, ann-to-snn conversion, audits, plasticity"};
    app.require_subcommand(1);
    app.footer(snnlm::config_help());
    CommonOptions opts;
    struct Command {
        const char* name;
        const char* help;
        int (*run)(const CommonOptions&);
    };
    const Command commands[] = {
        {"fit-approximators", "fit the square / sqrt / SiLU neuron banks and write a fit report", cmd_fit_approximators},
        {"train-ann", "quantization-aware training of the ann model", cmd_train_ann},
        {"convert", "convert an ann checkpoint into a spiking one", cmd_convert},
        {"audit", "ann vs snn equivalence report", cmd_audit},
        {"stdp", "plasticity fine-tuning of a spiking checkpoint", cmd_stdp},
        {"generate", "autoregressive decoding in either mode", cmd_generate},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const Command& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, opts);
        subs.emplace_back(sub, &c);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    try {
        for (const auto& [sub, cmd] : subs) {
            if (sub->parsed()) return cmd->run(opts);
        }
        return 1;
    } catch (const snnlm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
