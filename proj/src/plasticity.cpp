#include "snnlm/plasticity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "snnlm/error.hpp"

namespace snnlm {

namespace {

double sigmoid_prime(double z) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

void StdpParams::validate() const {
    if (!(a_plus > 0.0 && a_minus > 0.0 && tau_plus > 0.0 && tau_minus > 0.0)) {
        throw ConfigError("stdp: a_plus, a_minus, tau_plus and tau_minus must be > 0");
    }
}

double stdp_delta(double dt, const StdpParams& p) {
    if (!std::isfinite(dt)) throw ArgumentError("stdp_delta: dt must be finite");
    if (dt > 0.0) return p.a_plus * std::exp(-dt / p.tau_plus);
    return -p.a_minus * std::exp(dt / p.tau_minus);
}

double global_modulation(double l_task, const ModulationState& m) {
    const double baseline = m.initialized() ? m.baseline : l_task;
    return sigmoid(m.beta_mod * (baseline - l_task));
}

ModulationState update_baseline(ModulationState m, double l_task) {
    if (m.window < 1) throw ConfigError("update_baseline: window must be >= 1");
    m.recent_losses.push_back(l_task);
    while (static_cast<int>(m.recent_losses.size()) > m.window) m.recent_losses.pop_front();
    m.baseline = std::accumulate(m.recent_losses.begin(), m.recent_losses.end(), 0.0) /
                 static_cast<double>(m.recent_losses.size());
    return m;
}

double weight_update(double w, double delta, double g, double eta_w) { return eta_w * g * (delta - w); }

NeuronParamDelta neuron_param_update(const NeuronPlasticityState& n, double g, const TaskGradients* grads) {
    const NeuronRates& k = n.rates;
    const double sign = n.homeostatic_sign_flip ? -1.0 : 1.0;
    NeuronParamDelta d;
    d.theta_base = sign * k.eta_theta * g * (n.s_target - n.s_bar);
    d.alpha = k.eta_alpha * g * (n.v_bar - n.v_target);
    d.r = k.eta_r * g * (n.v_bar - n.v_rest);
    if (grads) {
        d.theta_base -= k.eta_theta_task * grads->theta_base;
        d.alpha -= k.eta_alpha_task * grads->alpha;
        d.r -= k.eta_r_task * grads->r;
    }
    return d;
}

double expected_time_steps(std::span<const double> p) {
    // E[first spike] = sum_{n=0}^{L} P(first spike > n).
    double survive = 1.0;
    double t = 1.0;
    for (const double pt : p) {
        if (!(pt >= 0.0 && pt <= 1.0)) throw ArgumentError("expected_time_steps: p must lie in [0, 1]");
        survive *= 1.0 - pt;
        t += survive;
    }
    return t;
}

std::vector<double> expected_time_steps_grad(std::span<const double> p) {
    const std::size_t n = p.size();
    std::vector<double> grad(n, 0.0);
    if (n == 0) return grad;
    // dT/dp_j = -prefix_j * R_j, prefix_j = prod_{k<j}(1-p_k),
    // R_j = 1 + (1-p_{j+1}) R_{j+1}, R_last = 1.
    std::vector<double> tail(n, 1.0);
    for (std::size_t j = n - 1; j-- > 0;) tail[j] = 1.0 + (1.0 - p[j + 1]) * tail[j + 1];
    double prefix = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        grad[j] = -prefix * tail[j];
        prefix *= 1.0 - p[j];
    }
    return grad;
}

double spike_probability(double v, double theta, double lambda_scale) {
    if (!(lambda_scale > 0.0)) throw ArgumentError("spike_probability: lambda_scale must be > 0");
    return sigmoid((v - theta) / lambda_scale);
}

double synaptic_tag(double pre_activity, double post_activity, double l_task) {
    return sigmoid(pre_activity + post_activity - l_task);
}

void CompositeLossWeights::validate() const {
    const double all[] = {lambda_w, lambda_theta, lambda_alpha, lambda_r, lambda_c, lambda_t, lambda_task, lambda_reg};
    bool any = false;
    for (const double l : all) {
        if (!(l >= 0.0)) throw ConfigError("composite loss: every lambda must be >= 0");
        any = any || l > 0.0;
    }
    if (!any) throw ConfigError("composite loss: at least one lambda must be > 0");
}

CompositeBreakdown composite_loss(const CompositeLossWeights& weights, const CompositeSnapshot& snap) {
    const std::size_t ns = snap.w.size();
    if (snap.delta.size() != ns || snap.tag.size() != ns || snap.has_delta.size() != ns) {
        throw DimensionError("composite_loss: synapse vectors differ in length");
    }
    if (snap.s_bar.size() != snap.v_bar.size() || snap.weight_sums.size() != snap.c_targets.size()) {
        throw DimensionError("composite_loss: neuron vectors differ in length");
    }
    CompositeBreakdown b;
    double stdp = 0.0;
    double reg = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
        if (snap.has_delta[k]) {
            const double e = snap.w[k] - snap.delta[k];
            stdp += snap.tag[k] * e * e;
        }
        reg += snap.w[k] * snap.w[k];
    }
    double theta = 0.0;
    double alpha = 0.0;
    double r = 0.0;
    for (std::size_t i = 0; i < snap.s_bar.size(); ++i) {
        const double es = snap.s_target - snap.s_bar[i];
        const double ea = snap.v_bar[i] - snap.v_target;
        const double er = snap.v_bar[i] - snap.v_rest;
        theta += es * es;
        alpha += ea * ea;
        r += er * er;
    }
    double c = 0.0;
    for (std::size_t i = 0; i < snap.weight_sums.size(); ++i) {
        const double e = snap.weight_sums[i] - snap.c_targets[i];
        c += e * e;
    }
    const double et = snap.t_exp - snap.t_target;
    b.stdp = weights.lambda_w * stdp;
    b.theta = weights.lambda_theta * theta;
    b.alpha = weights.lambda_alpha * alpha;
    b.r = weights.lambda_r * r;
    b.c = weights.lambda_c * c;
    b.t = weights.lambda_t * et * et;
    b.task = weights.lambda_task * snap.l_task;
    b.reg = weights.lambda_reg * reg;
    b.total = b.stdp + b.theta + b.alpha + b.r + b.c + b.t + b.task + b.reg;
    return b;
}

NeuronSurrogate neuron_surrogate(const EiIfParams& params, double x, int steps, double lambda_scale) {
    if (steps < 1) throw ArgumentError("neuron_surrogate: steps must be >= 1");
    if (!(lambda_scale > 0.0)) throw ArgumentError("neuron_surrogate: lambda_scale must be > 0");
    NeuronSurrogate s;
    const double keep = 1.0 - params.attenuation_rate;
    std::vector<double> p(static_cast<std::size_t>(steps));
    std::vector<double> dp_theta(p.size());
    std::vector<double> dp_alpha(p.size());
    std::vector<double> dp_r(p.size());
    double v = 0.0;
    double dv_r = 0.0;
    double carried = 0.0;  // potential left after the previous step
    for (int t = 1; t <= steps; ++t) {
        // V_t = x + (1 - r) V_{t-1}.
        dv_r = -carried + keep * dv_r;
        v = x + keep * carried;
        const double theta = params.theta_base + t * params.alpha;
        const double a = (v - theta) / lambda_scale;
        const double b = (-v - theta) / lambda_scale;
        const double ga = sigmoid_prime(a) / lambda_scale;
        const double gb = sigmoid_prime(b) / lambda_scale;
        s.count += sigmoid(a) - sigmoid(b);
        s.d_count_theta += -ga + gb;
        s.d_count_alpha += t * (-ga + gb);
        s.d_count_r += (ga + gb) * dv_r;
        s.mean_v += v;
        s.d_mean_v_r += dv_r;
        const double z = (std::abs(v) - theta) / lambda_scale;
        const double gz = sigmoid_prime(z) / lambda_scale;
        const auto k = static_cast<std::size_t>(t - 1);
        p[k] = sigmoid(z);
        dp_theta[k] = -gz;
        dp_alpha[k] = -t * gz;
        dp_r[k] = sign_of(v) * gz * dv_r;
        carried = v;
    }
    s.mean_v /= steps;
    s.d_mean_v_r /= steps;
    s.t_exp = expected_time_steps(p);
    const std::vector<double> dt = expected_time_steps_grad(p);
    for (std::size_t k = 0; k < p.size(); ++k) {
        s.d_t_theta += dt[k] * dp_theta[k];
        s.d_t_alpha += dt[k] * dp_alpha[k];
        s.d_t_r += dt[k] * dp_r[k];
    }
    return s;
}

std::string to_string(PlasticityRule rule) { return rule == PlasticityRule::local ? "local" : "composite"; }

PlasticityRule plasticity_rule_from_string(const std::string& name) {
    if (name == "local") return PlasticityRule::local;
    if (name == "composite") return PlasticityRule::composite;
    throw ConfigError("unknown plasticity rule '" + name + "' (expected local or composite)");
}

void PlasticityConfig::validate() const {
    stdp.validate();
    lambdas.validate();
    if (window < 1) throw ConfigError("plasticity.window must be >= 1");
    if (!(ema >= 0.0 && ema < 1.0)) throw ConfigError("plasticity.ema must lie in [0, 1)");
    if (!(surrogate_scale > 0.0)) throw ConfigError("plasticity.surrogate_scale must be > 0");
    if (!(weight_clip >= 0.0)) throw ConfigError("plasticity.weight_clip must be >= 0");
    const double all[] = {eta_w,           rates.eta_theta, rates.eta_theta_task, rates.eta_alpha,
                          rates.eta_alpha_task, rates.eta_r,  rates.eta_r_task};
    for (const double e : all) {
        if (!(e >= 0.0)) throw ConfigError("plasticity: learning rates must be >= 0");
    }
}

PlasticityState make_plasticity_state(const PlasticityConfig& config) {
    PlasticityState s;
    s.modulation.beta_mod = config.beta_mod;
    s.modulation.window = config.window;
    return s;
}

namespace {

struct SiteSurrogate {
    VectorD ds_theta, ds_alpha, ds_r;  // d mean|count| / d param, batch mean
    VectorD dt_theta, dt_alpha, dt_r;  // summed d T_exp
    VectorD dv_r;                      // d mean V / d r, batch mean
    VectorD dl_theta, dl_alpha, dl_r;  // task gradients
    double t_sum = 0.0;
    std::int64_t elements = 0;
};

void check_traces(const Model& model, std::span<const WindowTrace> traces) {
    if (model.config.mode != ModelMode::snn || !model.banks) {
        throw ContractError("plasticity: model must be a converted snn model with approximator banks");
    }
    if (traces.empty()) throw ContractError("plasticity: no traces recorded");
    for (const WindowTrace& wt : traces) {
        if (!wt.window) throw ContractError("plasticity: trace without its window");
        const auto rows = static_cast<Eigen::Index>(wt.window->tokens.size());
        for (const std::string& site : quant_sites(model.config)) {
            const auto it = wt.trace.encoders.find(site);
            if (it == wt.trace.encoders.end() || it->second.counts.rows() != rows) {
                throw ContractError("plasticity: missing spike trace for site '" + site + "'");
            }
        }
    }
}

}  // namespace

StdpMetrics apply_plasticity(Model& model, std::span<const WindowTrace> traces, PlasticityState& state,
                             const PlasticityConfig& config) {
    config.validate();
    check_traces(model, traces);
    const int steps = model.config.steps;
    const auto n_win = static_cast<double>(traces.size());
    const bool composite = config.rule == PlasticityRule::composite;
    const std::vector<std::string> sites = quant_sites(model.config);
    const std::vector<LinearSite> lsites = linear_sites(model.config);

    StdpMetrics m;
    m.step = state.step;
    for (const WindowTrace& wt : traces) m.l_task += wt.loss;
    m.l_task /= n_win;
    if (!std::isfinite(m.l_task)) throw NumericError("plasticity: non-finite task loss");
    state.modulation.beta_mod = config.beta_mod;
    state.modulation.window = config.window;
    m.g = global_modulation(m.l_task, state.modulation);
    m.baseline = state.modulation.initialized() ? state.modulation.baseline : m.l_task;

    // Running averages per encoder site.
    for (const std::string& site : sites) {
        const Eigen::Index f = traces.front().trace.encoders.at(site).counts.cols();
        VectorD s = VectorD::Zero(f);
        VectorD v = VectorD::Zero(f);
        double rows = 0.0;
        for (const WindowTrace& wt : traces) {
            const EncoderTrace& e = wt.trace.encoders.at(site);
            s += e.counts.cwiseAbs().cast<double>().colwise().sum().transpose();
            v += e.mean_v.cast<double>().colwise().sum().transpose();
            rows += static_cast<double>(e.counts.rows());
        }
        s /= rows;
        v /= rows;
        auto it = state.stats.find(site);
        if (it == state.stats.end()) {
            state.stats[site] = SiteStats{s, v, s / steps};
        } else {
            SiteStats& st = it->second;
            st.s_bar = config.ema * st.s_bar + (1.0 - config.ema) * s;
            st.v_bar = config.ema * st.v_bar + (1.0 - config.ema) * v;
            st.rate = st.s_bar / steps;
        }
    }

    // Task gradients through the quantized ann proxy.
    const NeuronRates& k = config.rates;
    const bool want_site_grads =
        config.task_gradients &&
        (composite ? config.lambdas.lambda_task > 0.0
                   : (k.eta_theta_task > 0.0 || k.eta_alpha_task > 0.0 || k.eta_r_task > 0.0));
    const bool want_param_grads = composite && config.lambdas.lambda_task > 0.0 && config.eta_w > 0.0;
    std::vector<std::map<std::string, Matrix>> site_grads(traces.size());
    Model param_grads;
    if (want_param_grads) param_grads = zeros_like(model);
    if (want_site_grads || want_param_grads) {
        for (std::size_t w = 0; w < traces.size(); ++w) {
            const Window& win = *traces[w].window;
            task_gradients(model, win.tokens, win.targets, want_param_grads ? &param_grads : nullptr,
                           want_site_grads ? &site_grads[w] : nullptr);
        }
    }

    // Surrogate derivatives of every encoder neuron.
    std::map<std::string, SiteSurrogate> sur;
    std::int64_t all_elements = 0;
    double t_sum = 0.0;
    for (const std::string& site : sites) {
        const Eigen::Index nf = traces.front().trace.encoders.at(site).counts.cols();
        SiteSurrogate& ss = sur[site];
        for (VectorD* vec : {&ss.ds_theta, &ss.ds_alpha, &ss.ds_r, &ss.dt_theta, &ss.dt_alpha, &ss.dt_r, &ss.dv_r,
                             &ss.dl_theta, &ss.dl_alpha, &ss.dl_r}) {
            *vec = VectorD::Zero(nf);
        }
        const double count_scale = site_scaling(model, site) / steps;
        std::vector<EiIfParams> params;
        for (Eigen::Index f = 0; f < nf; ++f) params.push_back(encoder_params(model, site, f));
        double rows = 0.0;
        for (std::size_t w = 0; w < traces.size(); ++w) {
            const EncoderTrace& e = traces[w].trace.encoders.at(site);
            const Matrix* g = nullptr;
            if (want_site_grads) g = &site_grads[w].at(site);
            rows += static_cast<double>(e.counts.rows());
            for (Eigen::Index r = 0; r < e.counts.rows(); ++r) {
                for (Eigen::Index f = 0; f < nf; ++f) {
                    const NeuronSurrogate s = neuron_surrogate(params[static_cast<std::size_t>(f)],
                                                               e.scaled_input(r, f), steps, config.surrogate_scale);
                    const int sg = sign_of(s.count);
                    ss.ds_theta(f) += sg * s.d_count_theta;
                    ss.ds_alpha(f) += sg * s.d_count_alpha;
                    ss.ds_r(f) += sg * s.d_count_r;
                    ss.dt_theta(f) += s.d_t_theta;
                    ss.dt_alpha(f) += s.d_t_alpha;
                    ss.dt_r(f) += s.d_t_r;
                    ss.dv_r(f) += s.d_mean_v_r;
                    ss.t_sum += s.t_exp;
                    if (g) {
                        const double dl_dc = static_cast<double>((*g)(r, f)) * count_scale / n_win;
                        ss.dl_theta(f) += dl_dc * s.d_count_theta;
                        ss.dl_alpha(f) += dl_dc * s.d_count_alpha;
                        ss.dl_r(f) += dl_dc * s.d_count_r;
                    }
                }
            }
        }
        ss.ds_theta /= rows;
        ss.ds_alpha /= rows;
        ss.ds_r /= rows;
        ss.dv_r /= rows;
        ss.elements = static_cast<std::int64_t>(rows) * nf;
        all_elements += ss.elements;
        t_sum += ss.t_sum;
    }
    m.t_exp = t_sum / static_cast<double>(all_elements);
    const double s_target = config.s_target_fraction * steps;
    const double t_target = config.t_target_fraction * steps;
    const CompositeLossWeights& lw = config.lambdas;

    // Neuron parameter deltas.
    std::map<std::string, std::array<VectorD, 3>> neuron_updates;
    double sum_abs_dtheta = 0.0;
    std::int64_t neuron_count = 0;
    for (const std::string& site : sites) {
        const SiteStats& st = state.stats.at(site);
        const SiteSurrogate& ss = sur.at(site);
        const Eigen::Index nf = st.s_bar.size();
        std::array<VectorD, 3> d{VectorD::Zero(nf), VectorD::Zero(nf), VectorD::Zero(nf)};
        for (Eigen::Index f = 0; f < nf; ++f) {
            NeuronParamDelta nd;
            if (!composite) {
                NeuronPlasticityState n;
                n.s_bar = st.s_bar(f);
                n.v_bar = st.v_bar(f);
                n.s_target = s_target;
                n.v_target = config.v_target;
                n.v_rest = config.v_rest;
                n.rates = k;
                n.homeostatic_sign_flip = config.homeostatic_sign_flip;
                const TaskGradients tg{ss.dl_theta(f), ss.dl_alpha(f), ss.dl_r(f)};
                nd = neuron_param_update(n, m.g, want_site_grads ? &tg : nullptr);
            } else {
                const double es = st.s_bar(f) - s_target;
                const double et = m.t_exp - t_target;
                const double inv_n = 1.0 / static_cast<double>(all_elements);
                const double task = want_site_grads ? lw.lambda_task : 0.0;
                const double g_theta = 2.0 * lw.lambda_theta * es * ss.ds_theta(f) +
                                       2.0 * lw.lambda_t * et * ss.dt_theta(f) * inv_n + task * ss.dl_theta(f);
                const double g_alpha = 2.0 * lw.lambda_theta * es * ss.ds_alpha(f) +
                                       2.0 * lw.lambda_t * et * ss.dt_alpha(f) * inv_n + task * ss.dl_alpha(f);
                const double g_r = 2.0 * lw.lambda_theta * es * ss.ds_r(f) +
                                   2.0 * lw.lambda_alpha * (st.v_bar(f) - config.v_target) * ss.dv_r(f) +
                                   2.0 * lw.lambda_r * (st.v_bar(f) - config.v_rest) * ss.dv_r(f) +
                                   2.0 * lw.lambda_t * et * ss.dt_r(f) * inv_n + task * ss.dl_r(f);
                nd.theta_base = -k.eta_theta * g_theta;
                nd.alpha = -k.eta_alpha * g_alpha;
                nd.r = -k.eta_r * g_r;
            }
            d[0](f) = nd.theta_base;
            d[1](f) = nd.alpha;
            d[2](f) = nd.r;
            sum_abs_dtheta += std::abs(nd.theta_base);
            ++neuron_count;
        }
        neuron_updates[site] = std::move(d);
    }
    m.mean_abs_dtheta = neuron_count ? sum_abs_dtheta / static_cast<double>(neuron_count) : 0.0;

    // Synapse deltas, computed from the pre-update weights.
    CompositeSnapshot snap;
    std::map<std::string, MatrixD> weight_updates;
    double sum_abs_dw = 0.0;
    std::int64_t synapses = 0;
    std::int64_t tagged = 0;
    std::vector<double> kernel(static_cast<std::size_t>(2 * steps + 1));
    for (int dt = -steps; dt <= steps; ++dt) {
        kernel[static_cast<std::size_t>(dt + steps)] = stdp_delta(static_cast<double>(dt), config.stdp);
    }
    for (const LinearSite& ls : lsites) {
        if (ls.post.empty()) continue;
        const Matrix& w = site_weight(model, ls);
        const Eigen::Index n_out = w.rows();
        const Eigen::Index n_in = w.cols();
        MatrixD dsum = MatrixD::Zero(n_out, n_in);
        IntMatrix pairs = IntMatrix::Zero(n_out, n_in);
        std::vector<std::pair<Eigen::Index, int>> pre_fired;
        std::vector<std::pair<Eigen::Index, int>> post_fired;
        for (const WindowTrace& wt : traces) {
            const IntMatrix& tp = wt.trace.encoders.at(ls.pre).first_spike;
            const IntMatrix& tq = wt.trace.encoders.at(ls.post).first_spike;
            for (Eigen::Index r = 0; r < tp.rows(); ++r) {
                pre_fired.clear();
                post_fired.clear();
                for (Eigen::Index j = 0; j < n_in; ++j) {
                    if (tp(r, j) > 0) pre_fired.emplace_back(j, tp(r, j));
                }
                for (Eigen::Index i = 0; i < n_out; ++i) {
                    if (tq(r, i) > 0) post_fired.emplace_back(i, tq(r, i));
                }
                for (const auto& [i, ti] : post_fired) {
                    for (const auto& [j, tj] : pre_fired) {
                        dsum(i, j) += kernel[static_cast<std::size_t>(ti - tj + steps)];
                        pairs(i, j) += 1;
                    }
                }
            }
        }
        const SiteStats& pre = state.stats.at(ls.pre);
        const SiteStats& post = state.stats.at(ls.post);
        VectorD row_sums = w.cast<double>().rowwise().sum();
        auto ct = state.c_targets.find(ls.name);
        if (ct == state.c_targets.end()) ct = state.c_targets.emplace(ls.name, row_sums).first;
        const Matrix* task_w = want_param_grads ? &site_weight(param_grads, ls) : nullptr;
        MatrixD dw = MatrixD::Zero(n_out, n_in);
        for (Eigen::Index i = 0; i < n_out; ++i) {
            for (Eigen::Index j = 0; j < n_in; ++j) {
                const double wij = w(i, j);
                const bool has = pairs(i, j) > 0;
                const double delta = has ? dsum(i, j) / pairs(i, j) : 0.0;
                const double tag = synaptic_tag(pre.rate(j), post.rate(i), m.l_task);
                snap.w.push_back(wij);
                snap.delta.push_back(delta);
                snap.tag.push_back(tag);
                snap.has_delta.push_back(has);
                ++synapses;
                if (tag < config.tag_threshold) continue;
                ++tagged;
                double d = 0.0;
                if (!composite) {
                    if (has) d = weight_update(wij, delta, m.g, config.eta_w);
                } else {
                    double grad = 2.0 * lw.lambda_c * (row_sums(i) - ct->second(i)) + 2.0 * lw.lambda_reg * wij;
                    if (has) grad += 2.0 * lw.lambda_w * tag * (wij - delta);
                    if (task_w) grad += lw.lambda_task * static_cast<double>((*task_w)(i, j)) / n_win;
                    d = -config.eta_w * grad;
                }
                dw(i, j) = d;
                sum_abs_dw += std::abs(d);
            }
        }
        for (Eigen::Index i = 0; i < n_out; ++i) {
            snap.weight_sums.push_back(row_sums(i));
            snap.c_targets.push_back(ct->second(i));
        }
        weight_updates[ls.name] = std::move(dw);
    }
    m.mean_abs_dw = synapses ? sum_abs_dw / static_cast<double>(synapses) : 0.0;
    m.tagged_fraction = synapses ? static_cast<double>(tagged) / static_cast<double>(synapses) : 0.0;

    for (const std::string& site : sites) {
        const SiteStats& st = state.stats.at(site);
        snap.s_bar.insert(snap.s_bar.end(), st.s_bar.begin(), st.s_bar.end());
        snap.v_bar.insert(snap.v_bar.end(), st.v_bar.begin(), st.v_bar.end());
    }
    snap.s_target = s_target;
    snap.v_target = config.v_target;
    snap.v_rest = config.v_rest;
    snap.t_exp = m.t_exp;
    snap.t_target = t_target;
    snap.l_task = m.l_task;
    m.composite = composite_loss(lw, snap);

    // Apply; exact zeros leave the stored bits untouched.
    for (const LinearSite& ls : lsites) {
        const auto it = weight_updates.find(ls.name);
        if (it == weight_updates.end()) continue;
        Matrix& w = site_weight(model, ls);
        const MatrixD& dw = it->second;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                if (dw(i, j) == 0.0) continue;
                double v = static_cast<double>(w(i, j)) + dw(i, j);
                if (config.weight_clip > 0.0) v = std::clamp(v, -config.weight_clip, config.weight_clip);
                w(i, j) = static_cast<float>(v);
                ++m.updated_synapses;
            }
        }
    }
    for (auto& [site, d] : neuron_updates) {
        if (d[0].isZero(0.0) && d[1].isZero(0.0) && d[2].isZero(0.0)) continue;
        auto it = model.neuron_deltas.find(site);
        if (it == model.neuron_deltas.end()) {
            const Eigen::Index nf = d[0].size();
            it = model.neuron_deltas.emplace(site, NeuronDeltas{Vector::Zero(nf), Vector::Zero(nf), Vector::Zero(nf)})
                     .first;
        }
        NeuronDeltas& nd = it->second;
        nd.theta_base = (nd.theta_base.cast<double>() + d[0]).cast<float>();
        nd.alpha = (nd.alpha.cast<double>() + d[1]).cast<float>();
        nd.attenuation = (nd.attenuation.cast<double>() + d[2]).cast<float>();
    }

    state.modulation = update_baseline(state.modulation, m.l_task);
    ++state.step;
    return m;
}

StdpMetrics stdp_finetune_step(Model& model, std::span<const Window> batch, PlasticityState& state,
                               const PlasticityConfig& config) {
    if (model.config.mode != ModelMode::snn || !model.banks) {
        throw ContractError("stdp: model must be a converted snn model with approximator banks");
    }
    if (batch.empty()) throw ArgumentError("stdp: empty batch");
    std::vector<WindowTrace> traces(batch.size());
    for (std::size_t w = 0; w < batch.size(); ++w) {
        traces[w].window = &batch[w];
        const Matrix logits = forward_snn(model, batch[w].tokens, nullptr, &traces[w].trace);
        traces[w].loss = task_loss(logits, batch[w].targets);
    }
    return apply_plasticity(model, traces, state, config);
}

StdpRunReport run_stdp(Model& model, std::span<const Window> windows, const PlasticityConfig& config,
                       const StdpRunOptions& options, std::uint64_t seed, const StdpCallback& on_step) {
    if (windows.empty()) throw InputError("stdp: no windows to fine-tune on");
    if (options.steps < 0 || options.batch < 1) throw ConfigError("stdp: steps must be >= 0 and batch >= 1");
    if (!(options.gate_ema >= 0.0 && options.gate_ema < 1.0)) throw ConfigError("stdp: gate_ema must lie in [0, 1)");
    const Model frozen = options.gate ? model : Model{};
    PlasticityState state = make_plasticity_state(config);
    Rng rng(seed);
    StdpRunReport report;
    std::vector<Window> batch(static_cast<std::size_t>(options.batch));
    for (int step = 0; step < options.steps; ++step) {
        for (Window& w : batch) w = windows[rng.below(windows.size())];
        StdpRecord rec;
        rec.metrics = stdp_finetune_step(model, batch, state, config);
        const double a = options.gate_ema;
        rec.l_task_ema = step == 0 ? rec.metrics.l_task : a * report.final_ema + (1.0 - a) * rec.metrics.l_task;
        report.final_ema = rec.l_task_ema;
        if (options.gate) {
            for (const Window& w : batch) rec.reference_loss += task_loss(forward(frozen, w.tokens), w.targets);
            rec.reference_loss /= static_cast<double>(batch.size());
            rec.reference_ema =
                step == 0 ? rec.reference_loss : a * report.reference_ema + (1.0 - a) * rec.reference_loss;
            report.reference_ema = rec.reference_ema;
        }
        if (on_step) on_step(rec);
        report.records.push_back(std::move(rec));
    }
    if (options.gate && options.steps > 0) {
        report.ema_ratio = report.final_ema / report.reference_ema;
        report.gate_passed = report.final_ema <= (1.0 + options.gate_tolerance) * report.reference_ema;
    }
    return report;
}

}  // namespace snnlm
