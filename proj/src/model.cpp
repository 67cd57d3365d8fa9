#include "snnlm/model.hpp"

#include <cmath>
#include <string>

namespace snnlm {

std::string to_string(ModelMode mode) { return mode == ModelMode::ann ? "ann" : "snn"; }

ModelMode model_mode_from_string(const std::string& name) {
    if (name == "ann") return ModelMode::ann;
    if (name == "snn") return ModelMode::snn;
    throw FormatError("unknown model mode '" + name + "'");
}

std::string to_string(AnnAttention kind) { return kind == AnnAttention::linear ? "linear" : "softmax"; }

AnnAttention ann_attention_from_string(const std::string& name) {
    if (name == "softmax") return AnnAttention::softmax;
    if (name == "linear") return AnnAttention::linear;
    throw FormatError("unknown ann attention '" + name + "'");
}

void ModelConfig::validate() const {
    if (vocab_size < 2 || d_model < 1 || n_heads < 1 || n_layers < 0 || d_ff < 1 || max_seq_len < 1) {
        throw ConfigError("model: sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("model: d_model must be divisible by n_heads");
    }
    if (bits < 2 || bits > 16) {
        throw ConfigError("model: bits must be in [2, 16]");
    }
    if (steps < 1) {
        throw ConfigError("model: steps must be >= 1");
    }
    if (!(rmsnorm_eps > 0.0)) {
        throw ConfigError("model: rmsnorm_eps must be positive");
    }
}

QuantSpec ModelConfig::quant_spec() const {
    switch (quant_mode) {
        case QuantMode::symmetric:
            return QuantSpec::symmetric(bits);
        case QuantMode::asymmetric:
            return QuantSpec::asymmetric(bits);
        case QuantMode::symmetric_narrow:
            break;
    }
    return QuantSpec::narrow(bits);
}

namespace {

std::string layer_prefix(int l) { return "layers." + std::to_string(l) + "."; }

Matrix gather_rows(const Matrix& table, std::span<const int> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    return out;
}

}  // namespace

Model init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    const int d = config.d_model;
    const int f = config.d_ff;
    Model m;
    m.config = config;
    m.tok_emb = rand_normal(rng, config.vocab_size, d, 0.3f);
    m.pos_emb = rand_normal(rng, config.max_seq_len, d, 0.05f);
    const float in_std = 1.0f / std::sqrt(static_cast<float>(d));
    const float ff_std = 1.0f / std::sqrt(static_cast<float>(f));
    const float out_scale = 1.0f / std::sqrt(2.0f * std::max(1, config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
        LayerWeights w;
        w.attn_norm = Vector::Ones(d);
        w.wq = rand_normal(rng, d, d, in_std);
        w.wk = rand_normal(rng, d, d, in_std);
        w.wv = rand_normal(rng, d, d, in_std);
        w.wo = rand_normal(rng, d, d, in_std * out_scale);
        w.bq = w.bk = w.bv = w.bo = Vector::Zero(d);
        w.mlp_norm = Vector::Ones(d);
        w.w_gate = rand_normal(rng, f, d, in_std);
        w.w_up = rand_normal(rng, f, d, in_std);
        w.w_down = rand_normal(rng, d, f, ff_std * out_scale);
        w.b_gate = w.b_up = Vector::Zero(f);
        w.b_down = Vector::Zero(d);
        m.layers.push_back(std::move(w));
    }
    m.final_norm = Vector::Ones(d);
    m.head = rand_normal(rng, config.vocab_size, d, in_std);
    m.head_bias = Vector::Zero(config.vocab_size);
    return m;
}

Model zeros_like(const Model& model) {
    Model z = model;
    for (ParamRef& p : named_parameters(z)) {
        std::fill(p.data, p.data + p.size(), 0.0f);
    }
    z.scales.clear();
    z.scaling_factors.clear();
    z.neuron_deltas.clear();
    z.banks.reset();
    return z;
}

std::int64_t ParamRef::size() const {
    std::int64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

namespace {

template <class M, class Fn>
void visit_parameters(M& model, Fn&& fn) {
    auto mat = [&](const std::string& name, auto& t) { fn(name, t, std::vector<std::int64_t>{t.rows(), t.cols()}); };
    auto vec = [&](const std::string& name, auto& t) { fn(name, t, std::vector<std::int64_t>{t.size()}); };
    mat("tok_emb", model.tok_emb);
    mat("pos_emb", model.pos_emb);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& w = model.layers[l];
        const std::string p = layer_prefix(static_cast<int>(l));
        vec(p + "attn_norm", w.attn_norm);
        mat(p + "wq", w.wq);
        vec(p + "bq", w.bq);
        mat(p + "wk", w.wk);
        vec(p + "bk", w.bk);
        mat(p + "wv", w.wv);
        vec(p + "bv", w.bv);
        mat(p + "wo", w.wo);
        vec(p + "bo", w.bo);
        vec(p + "mlp_norm", w.mlp_norm);
        mat(p + "w_gate", w.w_gate);
        vec(p + "b_gate", w.b_gate);
        mat(p + "w_up", w.w_up);
        vec(p + "b_up", w.b_up);
        mat(p + "w_down", w.w_down);
        vec(p + "b_down", w.b_down);
    }
    vec("final_norm", model.final_norm);
    mat("head", model.head);
    vec("head_bias", model.head_bias);
}

}  // namespace

std::vector<ParamRef> named_parameters(Model& model) {
    std::vector<ParamRef> out;
    visit_parameters(model, [&](const std::string& name, auto& t, std::vector<std::int64_t> shape) {
        out.push_back(ParamRef{name, t.data(), std::move(shape)});
    });
    return out;
}

std::vector<std::pair<std::string, const float*>> named_parameters_const(const Model& model) {
    std::vector<std::pair<std::string, const float*>> out;
    visit_parameters(model, [&](const std::string& name, const auto& t, std::vector<std::int64_t>) {
        out.emplace_back(name, t.data());
    });
    return out;
}

std::vector<LinearSite> linear_sites(const ModelConfig& config) {
    std::vector<LinearSite> out;
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string p = layer_prefix(l);
        out.push_back({p + "q", p + "attn_in", p + "q_out", l});
        out.push_back({p + "k", p + "attn_in", p + "k_out", l});
        out.push_back({p + "v", p + "attn_in", p + "v_out", l});
        out.push_back({p + "o", p + "ctx_in", p + "o_out", l});
        out.push_back({p + "gate", p + "mlp_in", p + "gate_out", l});
        out.push_back({p + "up", p + "mlp_in", p + "up_out", l});
        out.push_back({p + "down", p + "down_in", p + "down_out", l});
    }
    out.push_back({"head", "head_in", "", -1});
    return out;
}

std::vector<std::string> quant_sites(const ModelConfig& config) {
    std::vector<std::string> out;
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string p = layer_prefix(l);
        for (const char* s : {"attn_in", "q_out", "k_out", "v_out", "ctx_in", "o_out", "mlp_in", "gate_out", "up_out",
                              "down_in", "down_out"}) {
            out.push_back(p + s);
        }
    }
    out.push_back("head_in");
    return out;
}

namespace {

template <class M>
auto& weight_of(M& model, const LinearSite& site) {
    if (site.layer < 0) return model.head;
    auto& w = model.layers[static_cast<std::size_t>(site.layer)];
    const std::string kind = site.name.substr(site.name.rfind('.') + 1);
    if (kind == "q") return w.wq;
    if (kind == "k") return w.wk;
    if (kind == "v") return w.wv;
    if (kind == "o") return w.wo;
    if (kind == "gate") return w.w_gate;
    if (kind == "up") return w.w_up;
    if (kind == "down") return w.w_down;
    throw ArgumentError("unknown linear site " + site.name);
}

}  // namespace

const Matrix& site_weight(const Model& model, const LinearSite& site) { return weight_of(model, site); }
Matrix& site_weight(Model& model, const LinearSite& site) { return weight_of(model, site); }

const Vector& site_bias(const Model& model, const LinearSite& site) {
    if (site.layer < 0) return model.head_bias;
    const auto& w = model.layers[static_cast<std::size_t>(site.layer)];
    const std::string kind = site.name.substr(site.name.rfind('.') + 1);
    if (kind == "q") return w.bq;
    if (kind == "k") return w.bk;
    if (kind == "v") return w.bv;
    if (kind == "o") return w.bo;
    if (kind == "gate") return w.b_gate;
    if (kind == "up") return w.b_up;
    if (kind == "down") return w.b_down;
    throw ArgumentError("unknown linear site " + site.name);
}

void check_tokens(const ModelConfig& config, std::span<const int> tokens) {
    if (tokens.empty()) {
        throw InputError("forward: empty token sequence");
    }
    if (static_cast<int>(tokens.size()) > config.max_seq_len) {
        throw InputError("forward: sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                         std::to_string(config.max_seq_len));
    }
    for (int t : tokens) {
        if (t < 0 || t >= config.vocab_size) {
            throw InputError("forward: token " + std::to_string(t) + " outside the vocabulary");
        }
    }
}

Matrix rmsnorm_rows(const Matrix& x, const Vector& w, double eps) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out.row(r) = rmsnorm_exact(x.row(r).transpose(), w, eps).transpose();
    }
    return out;
}

Matrix causal_softmax(const Matrix& scores) {
    Matrix out = Matrix::Zero(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const Eigen::Index visible = std::min<Eigen::Index>(i + 1, scores.cols());
        double mx = scores(i, 0);
        for (Eigen::Index j = 1; j < visible; ++j) mx = std::max(mx, static_cast<double>(scores(i, j)));
        double sum = 0.0;
        for (Eigen::Index j = 0; j < visible; ++j) sum += std::exp(static_cast<double>(scores(i, j)) - mx);
        for (Eigen::Index j = 0; j < visible; ++j) {
            out(i, j) = static_cast<float>(std::exp(static_cast<double>(scores(i, j)) - mx) / sum);
        }
    }
    return out;
}

double site_scale(const Model& model, const std::string& site, const Matrix& x) {
    const auto it = model.scales.find(site);
    if (it != model.scales.end()) return it->second;
    return compute_scale(x, model.config.quant_spec());
}

QuantResult quantize_site(const Model& model, const std::string& site, const Matrix& x) {
    const QuantSpec spec = model.config.quant_spec();
    const double s = site_scale(model, site, x);
    return quantize_with_scale(x, spec, s, compute_zero_point(x, spec, s));
}

namespace {

// The ann linear site: quantized input levels -> double pre-activation ->
// post quantizer. Returns the float output.
struct AnnLinear {
    Matrix out;
    double post_scale = 1.0;
};

AnnLinear ann_linear(const Model& model, const LinearSite& site, const QuantResult& pre, ForwardTaps* taps) {
    const IntMatrix centred = pre.levels.array() - pre.zero_point;
    const MatrixD y = qsynapsis_preactivation(site_weight(model, site), site_bias(model, site), centred, pre.scale);
    AnnLinear r;
    if (site.post.empty()) {
        r.out = y.cast<float>();
        return r;
    }
    const QuantSpec spec = model.config.quant_spec();
    const auto it = model.scales.find(site.post);
    r.post_scale = it != model.scales.end() ? it->second : compute_scale(y, spec);
    const int zp = compute_zero_point(y, spec, r.post_scale);
    r.out = dequantize(quantize_levels(y, spec, r.post_scale, zp), r.post_scale, zp);
    if (taps) taps->site_outputs[site.post] = r.out;
    return r;
}

}  // namespace

Matrix forward_ann(const Model& model, std::span<const int> tokens, ForwardTaps* taps) {
    const ModelConfig& cfg = model.config;
    check_tokens(cfg, tokens);
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const auto sites = linear_sites(cfg);
    Matrix x = gather_rows(model.tok_emb, tokens) + model.pos_emb.topRows(n);
    const int dh = cfg.head_dim();
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));

    auto record_input = [&](const LinearSite& s, const Matrix& in) {
        if (taps) taps->linear_inputs[s.name] = in;
    };
    auto record_pre = [&](const std::string& site, const QuantResult& q) {
        if (taps) taps->site_outputs[site] = q.values;
    };

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& w = model.layers[static_cast<std::size_t>(l)];
        const std::string p = layer_prefix(l);
        const LinearSite* ls = &sites[static_cast<std::size_t>(l) * 7];

        const Matrix h1 = rmsnorm_rows(x, w.attn_norm, cfg.rmsnorm_eps);
        if (taps) {
            taps->nonlinear_inputs[p + "attn_norm"] = x;
            taps->nonlinear_outputs[p + "attn_norm"] = h1;
        }
        const QuantResult hq = quantize_site(model, p + "attn_in", h1);
        record_pre(p + "attn_in", hq);
        for (int s = 0; s < 3; ++s) record_input(ls[s], h1);
        const Matrix q = ann_linear(model, ls[0], hq, taps).out;
        const Matrix k = ann_linear(model, ls[1], hq, taps).out;
        const Matrix v = ann_linear(model, ls[2], hq, taps).out;

        Matrix ctx(n, cfg.d_model);
        Matrix probs_all(n, n * cfg.n_heads);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const Matrix scores = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * inv_sqrt;
            const Matrix probs = cfg.ann_attention == AnnAttention::softmax ? causal_softmax(scores)
                                                                            : linear_normalize(scores, true);
            ctx.middleCols(h * dh, dh) = probs * v.middleCols(h * dh, dh);
            probs_all.middleCols(h * n, n) = probs;
        }
        if (taps) taps->nonlinear_outputs[p + "attn_probs"] = probs_all;

        record_input(ls[3], ctx);
        const QuantResult cq = quantize_site(model, p + "ctx_in", ctx);
        record_pre(p + "ctx_in", cq);
        x += ann_linear(model, ls[3], cq, taps).out;

        const Matrix h2 = rmsnorm_rows(x, w.mlp_norm, cfg.rmsnorm_eps);
        if (taps) {
            taps->nonlinear_inputs[p + "mlp_norm"] = x;
            taps->nonlinear_outputs[p + "mlp_norm"] = h2;
        }
        const QuantResult mq = quantize_site(model, p + "mlp_in", h2);
        record_pre(p + "mlp_in", mq);
        record_input(ls[4], h2);
        record_input(ls[5], h2);
        const Matrix g = ann_linear(model, ls[4], mq, taps).out;
        const Matrix u = ann_linear(model, ls[5], mq, taps).out;
        Matrix act(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            act.data()[i] = static_cast<float>(silu_exact(g.data()[i])) * u.data()[i];
        }
        if (taps) {
            taps->nonlinear_inputs[p + "silu"] = g;
            Matrix sg = g.unaryExpr([](float z) { return static_cast<float>(silu_exact(z)); });
            taps->nonlinear_outputs[p + "silu"] = sg;
        }
        record_input(ls[6], act);
        const QuantResult aq = quantize_site(model, p + "down_in", act);
        record_pre(p + "down_in", aq);
        x += ann_linear(model, ls[6], aq, taps).out;
    }

    const Matrix hf = rmsnorm_rows(x, model.final_norm, cfg.rmsnorm_eps);
    if (taps) {
        taps->nonlinear_inputs["final_norm"] = x;
        taps->nonlinear_outputs["final_norm"] = hf;
    }
    const LinearSite& head = sites.back();
    record_input(head, hf);
    const QuantResult fq = quantize_site(model, "head_in", hf);
    record_pre("head_in", fq);
    return ann_linear(model, head, fq, taps).out;
}

double site_scaling(const Model& model, const std::string& site) {
    const auto it = model.scaling_factors.find(site);
    if (it == model.scaling_factors.end()) {
        throw ContractError("snn forward: no encoder scaling factor for site '" + site + "'");
    }
    return it->second;
}

EiIfParams encoder_params(const Model& model, const std::string& site, Eigen::Index feature) {
    EiIfParams p = rate_schedule(model.config.steps);
    const auto it = model.neuron_deltas.find(site);
    if (it != model.neuron_deltas.end()) {
        const NeuronDeltas& d = it->second;
        p.theta_base += static_cast<double>(d.theta_base(feature));
        p.alpha += static_cast<double>(d.alpha(feature));
        p.attenuation_rate = std::clamp(p.attenuation_rate + static_cast<double>(d.attenuation(feature)), 0.0, 1.0);
    }
    return p;
}

IntMatrix encode_site(const Model& model, const std::string& site, const MatrixD& x, EncoderTrace* trace) {
    const int steps = model.config.steps;
    const double scaling = site_scaling(model, site);
    IntMatrix counts(x.rows(), x.cols());
    if (trace) {
        trace->scaled_input.resize(x.rows(), x.cols());
        trace->counts.resize(x.rows(), x.cols());
        trace->first_spike.resize(x.rows(), x.cols());
        trace->mean_v.resize(x.rows(), x.cols());
    }
    std::vector<EiIfParams> params;
    params.reserve(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index f = 0; f < x.cols(); ++f) params.push_back(encoder_params(model, site, f));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            const double scaled = std::clamp(x(r, f) / scaling, -1.0, 1.0);
            const NeuronRun run = run_neuron(params[static_cast<std::size_t>(f)], scaled, steps);
            counts(r, f) = std::clamp(run.count, -steps, steps);
            if (trace) {
                trace->scaled_input(r, f) = static_cast<float>(scaled);
                trace->counts(r, f) = run.count;
                trace->first_spike(r, f) = run.first_spike;
                trace->mean_v(r, f) = static_cast<float>(run.mean_v);
            }
        }
    }
    return counts;
}

MatrixD synapsis_from_counts(const MatrixD& weight_t, const Vector& bias, const IntMatrix& counts, double scaling,
                             int steps) {
    if (counts.cols() != weight_t.rows()) {
        throw DimensionError("synapsis: count width does not match weight columns");
    }
    MatrixD out(counts.rows(), weight_t.cols());
    VectorD acc(weight_t.cols());
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        acc.setZero();
        int longest = 0;
        for (Eigen::Index j = 0; j < counts.cols(); ++j) longest = std::max(longest, std::abs(counts(r, j)));
        // Step t carries a spike for every input whose front-loaded train is
        // still active (|count| >= t).
        for (int t = 1; t <= longest; ++t) {
            for (Eigen::Index j = 0; j < counts.cols(); ++j) {
                const int c = counts(r, j);
                if (c >= t) {
                    acc += weight_t.row(j).transpose();
                } else if (-c >= t) {
                    acc -= weight_t.row(j).transpose();
                }
            }
        }
        out.row(r) = (acc * (scaling / steps) + bias.cast<double>()).transpose();
    }
    return out;
}

namespace {

struct SnnContext {
    const Model& model;
    ForwardTaps* taps;
    SnnTrace* trace;

    IntMatrix encode(const std::string& site, const MatrixD& x) {
        EncoderTrace* t = nullptr;
        if (trace) t = &trace->encoders[site];
        IntMatrix c = encode_site(model, site, x, t);
        if (taps) {
            taps->spike_counts[site] += c.cwiseAbs().cast<std::int64_t>().sum();
            taps->site_outputs[site] = decode(site, c);
        }
        return c;
    }

    Matrix decode(const std::string& site, const IntMatrix& counts) const {
        const double step = site_scaling(model, site) / model.config.steps;
        return (counts.cast<double>() * step).cast<float>();
    }

    MatrixD synapse(const LinearSite& site, const IntMatrix& pre_counts) const {
        const MatrixD wt = site_weight(model, site).cast<double>().transpose();
        return synapsis_from_counts(wt, site_bias(model, site), pre_counts, site_scaling(model, site.pre),
                                    model.config.steps);
    }

    Matrix rmsnorm(const std::string& name, const Matrix& x, const Vector& w) {
        const ApproximatorSet& banks = *model.banks;
        Matrix out(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            out.row(r) =
                snn_rmsnorm_ranged(x.row(r).transpose(), w, model.config.rmsnorm_eps, banks.square, banks.sqrt).transpose();
        }
        if (taps) {
            taps->nonlinear_inputs[name] = x;
            taps->nonlinear_outputs[name] = out;
        }
        return out;
    }
};

}  // namespace

Matrix forward_snn(const Model& model, std::span<const int> tokens, ForwardTaps* taps, SnnTrace* trace) {
    const ModelConfig& cfg = model.config;
    check_tokens(cfg, tokens);
    if (!model.banks) {
        throw ContractError("snn forward: model has no approximator banks (convert it first)");
    }
    const ApproximatorSet& banks = *model.banks;
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const auto sites = linear_sites(cfg);
    const int dh = cfg.head_dim();
    SnnContext ctx_{model, taps, trace};

    Matrix x = gather_rows(model.tok_emb, tokens) + model.pos_emb.topRows(n);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& w = model.layers[static_cast<std::size_t>(l)];
        const std::string p = layer_prefix(l);
        const LinearSite* ls = &sites[static_cast<std::size_t>(l) * 7];

        const Matrix h1 = ctx_.rmsnorm(p + "attn_norm", x, w.attn_norm);
        if (taps) for (int s = 0; s < 3; ++s) taps->linear_inputs[ls[s].name] = h1;
        const IntMatrix c_in = ctx_.encode(p + "attn_in", h1.cast<double>());
        const IntMatrix cq = ctx_.encode(p + "q_out", ctx_.synapse(ls[0], c_in));
        const IntMatrix ck = ctx_.encode(p + "k_out", ctx_.synapse(ls[1], c_in));
        const IntMatrix cv = ctx_.encode(p + "v_out", ctx_.synapse(ls[2], c_in));
        const Matrix v = ctx_.decode(p + "v_out", cv);
        const double sq = site_scaling(model, p + "q_out");
        const double sk = site_scaling(model, p + "k_out");

        Matrix attn(n, cfg.d_model);
        Matrix probs_all(n, n * cfg.n_heads);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const AttentionScores scores = snn_matmul_counts(cq.middleCols(h * dh, dh), ck.middleCols(h * dh, dh),
                                                             cfg.steps, sq, sk, cfg.attention);
            const Matrix probs = snn_softmax(scores, true);
            attn.middleCols(h * dh, dh) = probs * v.middleCols(h * dh, dh);
            probs_all.middleCols(h * n, n) = probs;
        }
        if (taps) {
            taps->nonlinear_outputs[p + "attn_probs"] = probs_all;
            taps->linear_inputs[ls[3].name] = attn;
        }
        const IntMatrix c_ctx = ctx_.encode(p + "ctx_in", attn.cast<double>());
        const IntMatrix c_o = ctx_.encode(p + "o_out", ctx_.synapse(ls[3], c_ctx));
        x += ctx_.decode(p + "o_out", c_o);

        const Matrix h2 = ctx_.rmsnorm(p + "mlp_norm", x, w.mlp_norm);
        if (taps) taps->linear_inputs[ls[4].name] = taps->linear_inputs[ls[5].name] = h2;
        const IntMatrix c_m = ctx_.encode(p + "mlp_in", h2.cast<double>());
        const Matrix g = ctx_.decode(p + "gate_out", ctx_.encode(p + "gate_out", ctx_.synapse(ls[4], c_m)));
        const Matrix u = ctx_.decode(p + "up_out", ctx_.encode(p + "up_out", ctx_.synapse(ls[5], c_m)));
        Matrix sg(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            sg.data()[i] = static_cast<float>(silu_approx(banks.silu_pos, banks.silu_neg, g.data()[i]));
        }
        if (taps) {
            taps->nonlinear_inputs[p + "silu"] = g;
            taps->nonlinear_outputs[p + "silu"] = sg;
        }
        const Matrix act = sg.cwiseProduct(u);
        if (taps) taps->linear_inputs[ls[6].name] = act;
        const IntMatrix c_a = ctx_.encode(p + "down_in", act.cast<double>());
        const IntMatrix c_d = ctx_.encode(p + "down_out", ctx_.synapse(ls[6], c_a));
        x += ctx_.decode(p + "down_out", c_d);
    }
    const Matrix hf = ctx_.rmsnorm("final_norm", x, model.final_norm);
    if (taps) taps->linear_inputs["head"] = hf;
    const IntMatrix c_f = ctx_.encode("head_in", hf.cast<double>());
    return ctx_.synapse(sites.back(), c_f).cast<float>();
}

Matrix forward(const Model& model, std::span<const int> tokens, ForwardTaps* taps) {
    return model.config.mode == ModelMode::ann ? forward_ann(model, tokens, taps) : forward_snn(model, tokens, taps);
}

double task_loss(const Matrix& logits, std::span<const int> targets) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
        throw DimensionError("task_loss: one target per logits row required");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const int target = targets[static_cast<std::size_t>(r)];
        if (target < 0 || target >= logits.cols()) throw InputError("task_loss: target outside the vocabulary");
        const double mx = logits.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += std::exp(static_cast<double>(logits(r, c)) - mx);
        total += mx + std::log(sum) - static_cast<double>(logits(r, target));
    }
    return total / static_cast<double>(logits.rows());
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index idx;
        logits.row(r).maxCoeff(&idx);
        out.push_back(static_cast<int>(idx));
    }
    return out;
}

}  // namespace snnlm
