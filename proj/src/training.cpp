#include "snnlm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace snnlm {

std::vector<int> tokenize_bytes(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(static_cast<unsigned char>(c));
    return out;
}

std::string detokenize_bytes(std::span<const int> tokens) {
    std::string out;
    for (int t : tokens) {
        if (t >= 0 && t < 256) out.push_back(static_cast<char>(t));
    }
    return out;
}

Corpus make_corpus(std::string_view text, int seq_len, double eval_fraction) {
    if (seq_len < 2) throw ArgumentError("corpus: seq_len must be >= 2");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) throw ArgumentError("corpus: eval_fraction must be in [0, 1)");
    const std::vector<int> bytes = tokenize_bytes(text);
    const std::size_t n_windows = bytes.size() / static_cast<std::size_t>(seq_len);
    if (n_windows < 2) throw InputError("corpus: text too short for two windows of " + std::to_string(seq_len));
    std::vector<Window> all;
    for (std::size_t w = 0; w < n_windows; ++w) {
        Window win;
        const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(w * static_cast<std::size_t>(seq_len));
        win.targets.assign(begin, begin + seq_len);
        win.tokens.push_back(kBosToken);
        win.tokens.insert(win.tokens.end(), begin, begin + seq_len - 1);
        all.push_back(std::move(win));
    }
    auto n_eval = static_cast<std::size_t>(std::floor(eval_fraction * static_cast<double>(n_windows)));
    if (eval_fraction > 0.0) n_eval = std::max<std::size_t>(n_eval, 1);
    Corpus c;
    c.train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_eval));
    c.eval.assign(all.end() - static_cast<std::ptrdiff_t>(n_eval), all.end());
    return c;
}

std::vector<int> held_out_stream(std::string_view text, int seq_len, double eval_fraction, int tokens,
                                 std::uint64_t seed) {
    if (tokens < 1) throw ArgumentError("held-out stream: tokens must be >= 1");
    const Corpus corpus = make_corpus(text, seq_len, eval_fraction);
    const std::size_t begin = corpus.train.size() * static_cast<std::size_t>(seq_len);
    const std::size_t span = text.size() - begin;
    const auto need = static_cast<std::size_t>(tokens);
    if (span < need) {
        throw InputError("held-out stream: only " + std::to_string(span) + " held-out bytes for " +
                         std::to_string(tokens) + " tokens");
    }
    Rng rng(seed);
    const std::size_t offset = begin + static_cast<std::size_t>(rng.below(span - need + 1));
    return tokenize_bytes(text.substr(offset, need));
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
    throw ConfigError("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs < 0 || batch_size < 1 || seq_len < 2 || max_steps < 0 || eval_windows < 1) {
        throw ConfigError("train: epochs/batch_size/seq_len/max_steps/eval_windows out of range");
    }
    if (!(lr >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(grad_clip >= 0.0)) {
        throw ConfigError("train: lr, momentum or grad_clip out of range");
    }
    if (!(scale_momentum >= 0.0 && scale_momentum < 1.0)) {
        throw ConfigError("train: scale_momentum must be in [0, 1)");
    }
}

double evaluate(const Model& model, std::span<const Window> windows) {
    if (windows.empty()) throw InputError("evaluate: no windows");
    double total = 0.0;
    for (const Window& w : windows) total += task_loss(forward(model, w.tokens), w.targets);
    return total / static_cast<double>(windows.size());
}

namespace {

struct FakeQuant {
    Matrix x;  // input before rounding
    Matrix q;
    double scale = 1.0;
    int zero_point = 0;
};

struct LayerCache {
    Matrix x_in, h1;
    FakeQuant a_in, q, k, v;
    std::vector<Matrix> probs;
    std::vector<Matrix> scores;  // kept for the linear normalization backward
    Matrix ctx;
    FakeQuant c_in, o;
    Matrix x_mid, h2;
    FakeQuant m_in, g, u;
    Matrix silu_g, act;
    FakeQuant d_in, d;
};

struct SeqCache {
    std::vector<LayerCache> layers;
    Matrix x_final, hf;
    FakeQuant h_in;
    Matrix logits;
};

// Forward pass in float that mirrors forward_ann, keeping what the backward
// pass needs.
class TrainForward {
public:
    TrainForward(const Model& model, std::map<std::string, double>& observed)
        : model_(model), spec_(model.config.quant_spec()), observed_(observed) {}

    FakeQuant fq(const std::string& site, const Matrix& x) {
        const double obs = compute_scale(x, spec_);
        double& slot = observed_[site];
        slot = std::max(slot, obs);
        const auto it = model_.scales.find(site);
        FakeQuant f;
        f.scale = it != model_.scales.end() ? it->second : obs;
        f.x = x;
        f.zero_point = compute_zero_point(x, spec_, f.scale);
        f.q = quantize_with_scale(x, spec_, f.scale, f.zero_point).values;
        return f;
    }

    static Matrix linear(const Matrix& x, const Matrix& w, const Vector& b) {
        Matrix y = x * w.transpose();
        y.rowwise() += b.transpose();
        return y;
    }

    SeqCache run(std::span<const int> tokens) {
        const ModelConfig& cfg = model_.config;
        check_tokens(cfg, tokens);
        const auto n = static_cast<Eigen::Index>(tokens.size());
        const int dh = cfg.head_dim();
        const float c = 1.0f / std::sqrt(static_cast<float>(dh));
        SeqCache sc;
        Matrix x(n, cfg.d_model);
        for (Eigen::Index i = 0; i < n; ++i) x.row(i) = model_.tok_emb.row(tokens[static_cast<std::size_t>(i)]) + model_.pos_emb.row(i);
        for (int l = 0; l < cfg.n_layers; ++l) {
            const LayerWeights& w = model_.layers[static_cast<std::size_t>(l)];
            const std::string p = "layers." + std::to_string(l) + ".";
            LayerCache lc;
            lc.x_in = x;
            lc.h1 = rmsnorm_rows(x, w.attn_norm, cfg.rmsnorm_eps);
            lc.a_in = fq(p + "attn_in", lc.h1);
            lc.q = fq(p + "q_out", linear(lc.a_in.q, w.wq, w.bq));
            lc.k = fq(p + "k_out", linear(lc.a_in.q, w.wk, w.bk));
            lc.v = fq(p + "v_out", linear(lc.a_in.q, w.wv, w.bv));
            lc.ctx.resize(n, cfg.d_model);
            for (int h = 0; h < cfg.n_heads; ++h) {
                Matrix s = (lc.q.q.middleCols(h * dh, dh) * lc.k.q.middleCols(h * dh, dh).transpose()) * c;
                Matrix pr = cfg.ann_attention == AnnAttention::softmax ? causal_softmax(s) : linear_normalize(s, true);
                lc.ctx.middleCols(h * dh, dh) = pr * lc.v.q.middleCols(h * dh, dh);
                lc.probs.push_back(std::move(pr));
                if (cfg.ann_attention == AnnAttention::linear) lc.scores.push_back(std::move(s));
            }
            lc.c_in = fq(p + "ctx_in", lc.ctx);
            lc.o = fq(p + "o_out", linear(lc.c_in.q, w.wo, w.bo));
            x += lc.o.q;
            lc.x_mid = x;
            lc.h2 = rmsnorm_rows(x, w.mlp_norm, cfg.rmsnorm_eps);
            lc.m_in = fq(p + "mlp_in", lc.h2);
            lc.g = fq(p + "gate_out", linear(lc.m_in.q, w.w_gate, w.b_gate));
            lc.u = fq(p + "up_out", linear(lc.m_in.q, w.w_up, w.b_up));
            lc.silu_g = lc.g.q.unaryExpr([](float z) { return static_cast<float>(silu_exact(z)); });
            lc.act = lc.silu_g.cwiseProduct(lc.u.q);
            lc.d_in = fq(p + "down_in", lc.act);
            lc.d = fq(p + "down_out", linear(lc.d_in.q, w.w_down, w.b_down));
            x += lc.d.q;
            sc.layers.push_back(std::move(lc));
        }
        sc.x_final = x;
        sc.hf = rmsnorm_rows(x, model_.final_norm, cfg.rmsnorm_eps);
        sc.h_in = fq("head_in", sc.hf);
        sc.logits = linear(sc.h_in.q, model_.head, model_.head_bias);
        return sc;
    }

private:
    const Model& model_;
    QuantSpec spec_;
    std::map<std::string, double>& observed_;
};

// dL/dx of y = x * w / rms(x), accumulating dL/dw.
Matrix rmsnorm_backward(const Matrix& x, const Vector& w, double eps, const Matrix& dy, Vector& dw) {
    Matrix dx(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double ms = x.row(r).cast<double>().squaredNorm() / d + eps;
        const double inv = 1.0 / std::sqrt(ms);
        dw += (dy.row(r).cwiseProduct(x.row(r)) * static_cast<float>(inv)).transpose();
        const Eigen::RowVectorXd gdy = dy.row(r).cast<double>().cwiseProduct(w.transpose().cast<double>());
        const double dot = gdy.dot(x.row(r).cast<double>());
        dx.row(r) = (gdy * inv - x.row(r).cast<double>() * (dot * inv * inv * inv / d)).cast<float>();
    }
    return dx;
}

Matrix softmax_backward(const Matrix& p, const Matrix& dp) {
    Matrix ds = p.cwiseProduct(dp);
    const Vector rows = ds.rowwise().sum();
    ds -= p.cwiseProduct(rows.replicate(1, p.cols()));
    return ds;
}

// p_j = (s_j - min s) / sum_k (s_k - min s) over the visible (causal) entries.
Matrix linear_normalize_backward(const Matrix& s, const Matrix& p, const Matrix& dp) {
    Matrix ds = Matrix::Zero(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const Eigen::Index n = std::min<Eigen::Index>(i + 1, s.cols());
        Eigen::Index arg_min = 0;
        const double row_min = s.row(i).head(n).minCoeff(&arg_min);
        double total = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) total += static_cast<double>(s(i, j)) - row_min;
        if (!(total > 0.0)) continue;  // uniform fallback is locally constant
        double dot = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) dot += static_cast<double>(dp(i, j)) * p(i, j);
        double dmin = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double g = (static_cast<double>(dp(i, j)) - dot) / total;
            ds(i, j) = static_cast<float>(g);
            dmin -= g;
        }
        ds(i, arg_min) += static_cast<float>(dmin);
    }
    return ds;
}

Matrix ste(const Matrix& g, const FakeQuant& f, const QuantSpec& spec) { return ste_grad(g, f.x, spec, f.scale, f.zero_point); }

// y = xq W^T + b  ->  grads of W, b; returns d xq.
Matrix linear_backward(const Matrix& dy, const Matrix& xq, const Matrix& w, Matrix& dw, Vector& db) {
    dw.noalias() += dy.transpose() * xq;
    db += dy.colwise().sum().transpose();
    return dy * w;
}

// site_grads, when given, receives dL/d(output) of every quantizer site.
void backward(const Model& model, std::span<const int> tokens, const SeqCache& sc, const Matrix& dlogits,
              Model& grads, std::map<std::string, Matrix>* site_grads = nullptr) {
    auto keep = [&](const std::string& site, const Matrix& g) {
        if (site_grads) (*site_grads)[site] = g;
    };
    const ModelConfig& cfg = model.config;
    const QuantSpec spec = cfg.quant_spec();
    const int dh = cfg.head_dim();
    const float c = 1.0f / std::sqrt(static_cast<float>(dh));
    const auto n = static_cast<Eigen::Index>(tokens.size());

    Matrix dh_in = linear_backward(dlogits, sc.h_in.q, model.head, grads.head, grads.head_bias);
    keep("head_in", dh_in);
    Matrix dx = rmsnorm_backward(sc.x_final, model.final_norm, cfg.rmsnorm_eps, ste(dh_in, sc.h_in, spec),
                                 grads.final_norm);
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const LayerWeights& w = model.layers[static_cast<std::size_t>(l)];
        LayerWeights& gw = grads.layers[static_cast<std::size_t>(l)];
        const LayerCache& lc = sc.layers[static_cast<std::size_t>(l)];

        const std::string p = "layers." + std::to_string(l) + ".";

        // MLP residual branch.
        keep(p + "down_out", dx);
        const Matrix dd = ste(dx, lc.d, spec);
        const Matrix dact_q = linear_backward(dd, lc.d_in.q, w.w_down, gw.w_down, gw.b_down);
        keep(p + "down_in", dact_q);
        const Matrix dact = ste(dact_q, lc.d_in, spec);
        const Matrix du = dact.cwiseProduct(lc.silu_g);
        Matrix dg = dact.cwiseProduct(lc.u.q);
        for (Eigen::Index i = 0; i < dg.size(); ++i) {
            const double z = lc.g.q.data()[i];
            const double s = sigmoid(z);
            dg.data()[i] *= static_cast<float>(s * (1.0 + z * (1.0 - s)));
        }
        keep(p + "gate_out", dg);
        keep(p + "up_out", du);
        Matrix dm = linear_backward(ste(dg, lc.g, spec), lc.m_in.q, w.w_gate, gw.w_gate, gw.b_gate);
        dm += linear_backward(ste(du, lc.u, spec), lc.m_in.q, w.w_up, gw.w_up, gw.b_up);
        keep(p + "mlp_in", dm);
        dx += rmsnorm_backward(lc.x_mid, w.mlp_norm, cfg.rmsnorm_eps, ste(dm, lc.m_in, spec), gw.mlp_norm);

        // Attention residual branch.
        keep(p + "o_out", dx);
        const Matrix dctx_q = linear_backward(ste(dx, lc.o, spec), lc.c_in.q, w.wo, gw.wo, gw.bo);
        keep(p + "ctx_in", dctx_q);
        const Matrix dctx = ste(dctx_q, lc.c_in, spec);
        Matrix dq(n, cfg.d_model), dk(n, cfg.d_model), dv(n, cfg.d_model);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const Matrix& pr = lc.probs[static_cast<std::size_t>(h)];
            const auto cols = Eigen::seqN(h * dh, dh);
            const Matrix dctx_h = dctx(Eigen::all, cols);
            const Matrix dp = dctx_h * lc.v.q(Eigen::all, cols).transpose();
            dv(Eigen::all, cols) = pr.transpose() * dctx_h;
            const Matrix ds = cfg.ann_attention == AnnAttention::softmax ? softmax_backward(pr, dp)
                                                                         : linear_normalize_backward(lc.scores[static_cast<std::size_t>(h)], pr, dp);
            dq(Eigen::all, cols) = (ds * lc.k.q(Eigen::all, cols)) * c;
            dk(Eigen::all, cols) = (ds.transpose() * lc.q.q(Eigen::all, cols)) * c;
        }
        keep(p + "q_out", dq);
        keep(p + "k_out", dk);
        keep(p + "v_out", dv);
        Matrix da = linear_backward(ste(dq, lc.q, spec), lc.a_in.q, w.wq, gw.wq, gw.bq);
        da += linear_backward(ste(dk, lc.k, spec), lc.a_in.q, w.wk, gw.wk, gw.bk);
        da += linear_backward(ste(dv, lc.v, spec), lc.a_in.q, w.wv, gw.wv, gw.bv);
        keep(p + "attn_in", da);
        dx += rmsnorm_backward(lc.x_in, w.attn_norm, cfg.rmsnorm_eps, ste(da, lc.a_in, spec), gw.attn_norm);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        grads.tok_emb.row(tokens[static_cast<std::size_t>(i)]) += dx.row(i);
        grads.pos_emb.row(i) += dx.row(i);
    }
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(r).cast<double>().array() - mx).exp().matrix();
        p.row(r) = (e / e.sum()).cast<float>();
    }
    return p;
}

}  // namespace

double loss_and_grad(const Model& model, std::span<const Window* const> batch, Model& grads,
                     std::map<std::string, double>& observed) {
    if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
    std::size_t total_tokens = 0;
    for (const Window* w : batch) total_tokens += w->targets.size();
    const float inv_total = 1.0f / static_cast<float>(total_tokens);
    double loss = 0.0;
    TrainForward fw(model, observed);
    for (const Window* w : batch) {
        const SeqCache sc = fw.run(w->tokens);
        loss += task_loss(sc.logits, w->targets) * static_cast<double>(w->targets.size());
        Matrix dlogits = softmax_rows(sc.logits);
        for (std::size_t i = 0; i < w->targets.size(); ++i) {
            dlogits(static_cast<Eigen::Index>(i), w->targets[i]) -= 1.0f;
        }
        dlogits *= inv_total;
        backward(model, w->tokens, sc, dlogits, grads);
    }
    return loss / static_cast<double>(total_tokens);
}

double task_gradients(const Model& model, std::span<const int> tokens, std::span<const int> targets,
                      Model* param_grads, std::map<std::string, Matrix>* site_grads) {
    for (const std::string& site : quant_sites(model.config)) {
        if (!model.scales.count(site)) throw ContractError("task_gradients: no frozen scale for '" + site + "'");
    }
    std::map<std::string, double> observed;
    TrainForward fw(model, observed);
    const SeqCache sc = fw.run(tokens);
    const double loss = task_loss(sc.logits, targets);
    Matrix dlogits = softmax_rows(sc.logits);
    for (std::size_t i = 0; i < targets.size(); ++i) dlogits(static_cast<Eigen::Index>(i), targets[i]) -= 1.0f;
    dlogits /= static_cast<float>(targets.size());
    Model local;
    Model& grads = param_grads ? *param_grads : local;
    if (!param_grads) grads = zeros_like(model);
    backward(model, tokens, sc, dlogits, grads, site_grads);
    return loss;
}

void calibrate(Model& model, std::span<const Window> windows) {
    if (windows.empty()) throw InputError("calibrate: no windows");
    model.scales.clear();
    std::map<std::string, double> observed;
    TrainForward fw(model, observed);
    for (const Window& w : windows) fw.run(w.tokens);
    model.scales = observed;
}

namespace {

void zero_grads(Model& grads) {
    for (ParamRef& p : named_parameters(grads)) std::fill(p.data, p.data + p.size(), 0.0f);
}

bool finite_params(Model& model) {
    for (ParamRef& p : named_parameters(model)) {
        if (!Eigen::Map<Eigen::VectorXf>(p.data, p.size()).allFinite()) return false;
    }
    return true;
}

}  // namespace

TrainReport train_ann(Model& model, const Corpus& corpus, const TrainConfig& config, std::uint64_t seed,
                      TrainState* state, const StepCallback& on_step) {
    config.validate();
    if (model.config.mode != ModelMode::ann) throw PreconditionError("train_ann: model must be in ann mode");
    if (corpus.train.empty() || corpus.eval.empty()) throw InputError("train_ann: corpus has no train or eval windows");

    TrainState local;
    TrainState& st = state ? *state : local;
    std::vector<ParamRef> params = named_parameters(model);
    if (st.m.size() != params.size()) {
        st.m.clear();
        st.v.clear();
        for (const ParamRef& p : params) {
            st.m.push_back(Eigen::VectorXf::Zero(p.size()));
            st.v.push_back(Eigen::VectorXf::Zero(config.optimizer == OptimizerKind::adam ? p.size() : 0));
        }
    }
    const std::size_t n_eval = std::min<std::size_t>(corpus.eval.size(), static_cast<std::size_t>(config.eval_windows));
    const std::span<const Window> eval(corpus.eval.data(), n_eval);

    TrainReport report;
    report.initial_eval_loss = evaluate(model, eval);

    const std::size_t per_epoch = std::max<std::size_t>(1, corpus.train.size() / static_cast<std::size_t>(config.batch_size));
    std::int64_t total = static_cast<std::int64_t>(per_epoch) * config.epochs;
    if (config.max_steps > 0) total = std::min<std::int64_t>(total, config.max_steps);

    Model grads = zeros_like(model);
    std::vector<ParamRef> gparams = named_parameters(grads);
    Model last_good = model;
    int cur_epoch = -1;
    std::vector<std::size_t> order(corpus.train.size());

    for (; st.step < total; ++st.step) {
        const int epoch = static_cast<int>(st.step / static_cast<std::int64_t>(per_epoch));
        if (epoch != cur_epoch) {
            cur_epoch = epoch;
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(derive_seed(seed, "train/epoch/" + std::to_string(epoch)));
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        }
        const std::size_t offset = static_cast<std::size_t>(st.step % static_cast<std::int64_t>(per_epoch)) *
                                   static_cast<std::size_t>(config.batch_size);
        std::vector<const Window*> batch;
        for (int b = 0; b < config.batch_size && offset + static_cast<std::size_t>(b) < order.size(); ++b) {
            batch.push_back(&corpus.train[order[offset + static_cast<std::size_t>(b)]]);
        }

        zero_grads(grads);
        std::map<std::string, double> observed;
        const double loss = loss_and_grad(model, batch, grads, observed);
        if (!std::isfinite(loss)) {
            model = last_good;
            throw TrainingError("train_ann: non-finite loss at step " + std::to_string(st.step) +
                                "; model restored to the last good step");
        }
        last_good = model;

        double norm2 = 0.0;
        for (const ParamRef& g : gparams) {
            norm2 += Eigen::Map<const Eigen::VectorXf>(g.data, g.size()).cast<double>().squaredNorm();
        }
        const double norm = std::sqrt(norm2);
        const float clip = (config.grad_clip > 0.0 && norm > config.grad_clip)
                               ? static_cast<float>(config.grad_clip / norm)
                               : 1.0f;
        const auto lr = static_cast<float>(config.lr);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Eigen::Map<Eigen::VectorXf> p(params[i].data, params[i].size());
            const Eigen::Map<const Eigen::VectorXf> g(gparams[i].data, gparams[i].size());
            if (config.optimizer == OptimizerKind::sgd_momentum) {
                st.m[i] = static_cast<float>(config.momentum) * st.m[i] + clip * g;
                p -= lr * st.m[i];
            } else {
                const auto b1 = static_cast<float>(config.adam_beta1);
                const auto b2 = static_cast<float>(config.adam_beta2);
                st.m[i] = b1 * st.m[i] + (1.0f - b1) * clip * g;
                st.v[i] = b2 * st.v[i] + (1.0f - b2) * (clip * g).cwiseAbs2();
                const double t = static_cast<double>(st.step + 1);
                const auto c1 = static_cast<float>(1.0 - std::pow(config.adam_beta1, t));
                const auto c2 = static_cast<float>(1.0 - std::pow(config.adam_beta2, t));
                p.array() -= lr * (st.m[i].array() / c1) /
                             ((st.v[i].array() / c2).sqrt() + static_cast<float>(config.adam_eps));
            }
        }
        if (!finite_params(model)) {
            model = last_good;
            throw TrainingError("train_ann: non-finite weights after step " + std::to_string(st.step) +
                                "; model restored to the last good step");
        }
        for (const auto& [site, obs] : observed) {
            const auto it = model.scales.find(site);
            if (it == model.scales.end()) {
                model.scales[site] = obs;
            } else {
                it->second = config.scale_momentum * it->second + (1.0 - config.scale_momentum) * obs;
            }
        }
        TrainRecord rec{static_cast<int>(st.step), epoch, loss};
        report.curve.push_back(rec);
        if (on_step) on_step(rec);
    }
    report.steps = st.step;
    report.final_eval_loss = evaluate(model, eval);
    return report;
}

}  // namespace snnlm
