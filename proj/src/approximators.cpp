#include "snnlm/approximators.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace snnlm {

void CustomNeuronParams::validate() const {
    if (!(decay > 0.0f && decay <= 1.0f)) {
        throw ArgumentError("CustomNeuronParams: decay must be in (0, 1]");
    }
    if (steps < 1) {
        throw ArgumentError("CustomNeuronParams: steps must be >= 1");
    }
}

SpikeTally custom_neuron_tally(const CustomNeuronParams& params, double x) {
    SpikeTally tally;
    const double decay = params.decay;
    const double theta_base = params.theta_base;
    const double alpha = params.alpha;
    double v = 0.0;
    for (int t = 1; t <= params.steps; ++t) {
        v = v * decay + x;
        const double theta = theta_base + alpha * t;
        if (v >= theta) {
            ++tally.positive;
            v -= theta;
        } else if (v <= -theta) {
            ++tally.negative;
            v += theta;
        }
    }
    return tally;
}

double custom_neuron_run(const CustomNeuronParams& params, double x) {
    const SpikeTally tally = custom_neuron_tally(params, x);
    return tally.positive * static_cast<double>(params.a_pos) + tally.negative * static_cast<double>(params.a_neg);
}

std::string to_string(ApproxKind kind) {
    switch (kind) {
        case ApproxKind::square: return "square";
        case ApproxKind::sqrt: return "sqrt";
        case ApproxKind::silu_pos: return "silu_pos";
        case ApproxKind::silu_neg: return "silu_neg";
        case ApproxKind::zero: return "zero";
    }
    return "unknown";
}

ApproxKind approx_kind_from_string(const std::string& name) {
    for (ApproxKind k : {ApproxKind::square, ApproxKind::sqrt, ApproxKind::silu_pos, ApproxKind::silu_neg,
                         ApproxKind::zero}) {
        if (to_string(k) == name) return k;
    }
    throw FormatError("unknown approximator kind '" + name + "'");
}

double approx_target(ApproxKind kind, double x) {
    switch (kind) {
        case ApproxKind::square: return x * x;
        case ApproxKind::sqrt: return std::sqrt(std::max(x, 0.0));
        case ApproxKind::silu_pos:
        case ApproxKind::silu_neg: return silu_exact(x);
        case ApproxKind::zero: return 0.0;
    }
    return 0.0;
}

std::vector<float> partition_edges(double lo, double hi, int segments, const Partition& partition) {
    if (segments < 1) {
        throw ArgumentError("partition: need at least one segment");
    }
    if (!(lo < hi)) {
        throw ArgumentError("partition: interval is degenerate");
    }
    std::vector<float> edges;
    if (partition.kind == PartitionKind::fixed) {
        if (static_cast<int>(partition.edges.size()) != segments + 1) {
            throw ArgumentError("partition: fixed edge list must have segments + 1 entries");
        }
        for (double e : partition.edges) edges.push_back(static_cast<float>(e));
    } else {
        for (int i = 0; i <= segments; ++i) {
            const double u = static_cast<double>(i) / segments;
            double e;
            if (partition.kind == PartitionKind::power) {
                if (!(partition.power > 0.0)) throw ArgumentError("partition: power must be positive");
                e = lo + (hi - lo) * std::pow(u, partition.power);
            } else {
                if (!(lo > 0.0)) throw ArgumentError("partition: logarithmic partition needs lo > 0");
                e = lo * std::pow(hi / lo, u);
            }
            edges.push_back(static_cast<float>(e));
        }
        edges.front() = static_cast<float>(lo);
        edges.back() = static_cast<float>(hi);
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) {
            throw ArgumentError("partition: edges are not strictly increasing");
        }
    }
    return edges;
}

void ApproximatorBank::validate() const {
    if (neurons.empty() || bounds.size() != neurons.size() + 1) {
        throw FormatError("ApproximatorBank: need N + 1 bounds for N segments");
    }
    for (std::size_t i = 1; i < bounds.size(); ++i) {
        if (!(bounds[i] > bounds[i - 1])) throw FormatError("ApproximatorBank: bounds must increase strictly");
    }
    for (const auto& seg : neurons) {
        if (seg.empty()) throw FormatError("ApproximatorBank: every segment needs a neuron");
        for (const auto& n : seg) n.validate();
    }
}

namespace {

struct Dynamics {
    double theta_base;
    double alpha;
    double decay;
};

struct SegmentSamples {
    std::vector<double> x;
    std::vector<double> target;  // what this neuron must produce (residual for later neurons)
    std::vector<double> weight;
};

struct Candidate {
    CustomNeuronParams params;
    double loss = std::numeric_limits<double>::infinity();
};

CustomNeuronParams make_params(const Dynamics& d, int steps) {
    CustomNeuronParams p;
    p.theta_base = static_cast<float>(d.theta_base);
    p.alpha = static_cast<float>(d.alpha);
    p.decay = static_cast<float>(std::clamp(d.decay, 1e-3, 1.0));
    p.steps = steps;
    return p;
}

double weighted_loss(const CustomNeuronParams& p, const SegmentSamples& s) {
    double loss = 0.0, wsum = 0.0;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
        const double r = custom_neuron_run(p, s.x[k]) - s.target[k];
        loss += s.weight[k] * r * r;
        wsum += s.weight[k];
    }
    return loss / wsum;
}

// Fix the dynamics, solve the two amplitudes by weighted least squares,
// clamp them, and score the float-rounded neuron.
Candidate evaluate(const Dynamics& d, const SegmentSamples& s, const FitOptions& opt) {
    Candidate c;
    if (!(d.theta_base > 0.0) || d.alpha < 0.0) return c;
    c.params = make_params(d, opt.steps);
    double spp = 0, spn = 0, snn = 0, spy = 0, sny = 0;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
        const SpikeTally t = custom_neuron_tally(c.params, s.x[k]);
        const double w = s.weight[k];
        spp += w * t.positive * t.positive;
        spn += w * t.positive * t.negative;
        snn += w * t.negative * t.negative;
        spy += w * t.positive * s.target[k];
        sny += w * t.negative * s.target[k];
    }
    double ap = 0.0, an = 0.0;
    const double det = spp * snn - spn * spn;
    if (spp > 0 && snn > 0 && std::abs(det) > 1e-12 * spp * snn) {
        ap = (spy * snn - sny * spn) / det;
        an = (sny * spp - spy * spn) / det;
    } else if (spp > 0) {
        ap = spy / spp;
    } else if (snn > 0) {
        an = sny / snn;
    }
    const double lim = opt.amplitude_limit;
    c.params.a_pos = static_cast<float>(std::clamp(ap, -lim, lim));
    c.params.a_neg = static_cast<float>(std::clamp(an, -lim, lim));
    if (snn == 0) {
        // Unused on this segment; mirror a_pos so the neuron stays odd-symmetric.
        c.params.a_neg = -c.params.a_pos;
    }
    c.loss = weighted_loss(c.params, s);
    return c;
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return v;
}

std::vector<double> geomspace(double lo, double hi, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return v;
}

Candidate fit_single(const SegmentSamples& s, double x_ref, const FitOptions& opt, Rng& rng) {
    Candidate best;
    auto consider = [&](const Dynamics& d) {
        Candidate c = evaluate(d, s, opt);
        if (c.loss < best.loss) best = c;
    };
    // Coarse grid; threshold and growth ranges follow the segment's input scale.
    for (double theta : geomspace(0.01 * x_ref, 2.0 * x_ref, 12)) {
        for (double alpha : linspace(0.0, 0.5 * x_ref, 6)) {
            for (double decay : {1.0, 0.98, 0.95, 0.9, 0.8, 0.65, 0.5}) {
                consider({theta, alpha, decay});
            }
        }
    }
    double theta_ratio = std::pow(200.0, 1.0 / 11.0);
    double alpha_step = 0.1 * x_ref;
    double decay_step = 0.05;
    for (int level = 0; level < opt.refinement_levels; ++level) {
        const Dynamics center{best.params.theta_base, best.params.alpha, best.params.decay};
        for (int i = -2; i <= 2; ++i) {
            for (int j = -2; j <= 2; ++j) {
                for (int k = -2; k <= 2; ++k) {
                    consider({center.theta_base * std::pow(theta_ratio, i / 2.0),
                              std::max(0.0, center.alpha + alpha_step * j / 2.0),
                              std::min(1.0, center.decay + decay_step * k / 2.0)});
                }
            }
        }
        theta_ratio = std::sqrt(theta_ratio);
        alpha_step /= 2.5;
        decay_step /= 2.5;
    }
    for (int trial = 0; trial < opt.random_trials; ++trial) {
        const double spread = 0.1 * std::pow(0.97, trial);
        consider({best.params.theta_base * std::exp(spread * rng.normal()),
                  std::max(0.0, best.params.alpha + spread * x_ref * rng.normal()),
                  std::min(1.0, best.params.decay + spread * 0.2 * rng.normal())});
    }
    return best;
}

std::vector<CustomNeuronParams> fit_segment(ApproxKind kind, double lo, double hi, int neuron_count,
                                            const FitOptions& opt, Rng& rng) {
    SegmentSamples s;
    s.x = linspace(lo, hi, opt.samples);
    std::vector<double> goal;
    for (double x : s.x) {
        goal.push_back(approx_target(kind, x));
        const double g = goal.back();
        s.weight.push_back(opt.relative ? 1.0 / std::max(g * g, 1e-12) : 1.0);
    }
    const double x_ref = std::max(std::abs(lo), std::abs(hi));
    std::vector<CustomNeuronParams> neurons(static_cast<std::size_t>(neuron_count));
    for (auto& n : neurons) {
        n.steps = opt.steps;
        n.a_pos = n.a_neg = 0.0f;
    }
    bool all_zero = true;
    for (double g : goal) all_zero = all_zero && g == 0.0;
    if (all_zero) return neurons;

    // Coordinate descent: each neuron fits what the others leave over.
    const int rounds = neuron_count > 1 ? 3 : 1;
    for (int round = 0; round < rounds; ++round) {
        for (int n = 0; n < neuron_count; ++n) {
            s.target = goal;
            for (int m = 0; m < neuron_count; ++m) {
                if (m == n) continue;
                for (std::size_t k = 0; k < s.x.size(); ++k) {
                    s.target[k] -= custom_neuron_run(neurons[static_cast<std::size_t>(m)], s.x[k]);
                }
            }
            const double current = weighted_loss(neurons[static_cast<std::size_t>(n)], s);
            Candidate c = fit_single(s, x_ref, opt, rng);
            if (c.loss < current) neurons[static_cast<std::size_t>(n)] = c.params;
        }
    }
    return neurons;
}

double segment_sum(const std::vector<CustomNeuronParams>& seg, double x) {
    double out = 0.0;
    for (const auto& n : seg) out += custom_neuron_run(n, x);
    return out;
}

}  // namespace

ApproximatorBank fit_bank(ApproxKind target, double lo, double hi, int segments, const Partition& partition,
                          const FitOptions& options, Rng& rng) {
    if (segments < 1) throw ArgumentError("fit_bank: need at least one segment");
    if (!(lo < hi)) throw ArgumentError("fit_bank: interval is degenerate");
    if (options.steps < 1 || options.samples < 2) throw ArgumentError("fit_bank: steps >= 1 and samples >= 2 required");
    ApproximatorBank bank;
    bank.kind = target;
    bank.partition = partition;
    bank.bounds = partition_edges(lo, hi, segments, partition);
    for (int i = 0; i < segments; ++i) {
        const int count = i == 0 ? std::max(1, options.neurons_first_segment) : 1;
        bank.neurons.push_back(fit_segment(target, bank.bounds[static_cast<std::size_t>(i)],
                                           bank.bounds[static_cast<std::size_t>(i) + 1], count, options, rng));
    }
    // Whole-bank diagnostics on a uniform grid per segment.
    double sq = 0.0, max_rel = 0.0;
    int n = 0;
    for (int i = 0; i < segments; ++i) {
        for (double x : linspace(bank.bounds[static_cast<std::size_t>(i)], bank.bounds[static_cast<std::size_t>(i) + 1],
                                 options.samples)) {
            const double y = segment_sum(bank.neurons[static_cast<std::size_t>(i)], x);
            const double g = approx_target(target, x);
            sq += (y - g) * (y - g);
            if (g != 0.0) max_rel = std::max(max_rel, std::abs(y - g) / std::abs(g));
            ++n;
        }
    }
    bank.fit_mse = sq / n;
    bank.fit_max_rel_error = max_rel;
    if (bank.fit_mse > options.mse_ceiling) {
        std::ostringstream msg;
        msg << "fit_bank(" << to_string(target) << "): MSE " << bank.fit_mse << " above ceiling "
            << options.mse_ceiling << " with " << segments << " segments";
        throw FitError(msg.str());
    }
    return bank;
}

double approx_eval(const ApproximatorBank& bank, double x) {
    const double lo = bank.bounds.front();
    const double hi = bank.bounds.back();
    if (x >= hi) {
        const double edge = segment_sum(bank.neurons.back(), hi);
        return bank.extend_upper ? edge + static_cast<double>(bank.tail_slope) * (x - hi) : edge;
    }
    if (x < lo) x = lo;
    const auto it = std::upper_bound(bank.bounds.begin(), bank.bounds.end(), x,
                                     [](double v, float b) { return v < static_cast<double>(b); });
    const auto seg = static_cast<std::size_t>(std::distance(bank.bounds.begin(), it) - 1);
    return segment_sum(bank.neurons[std::min(seg, bank.neurons.size() - 1)], x);
}

double silu_approx(const ApproximatorBank& pos_bank, const ApproximatorBank& neg_bank, double x) {
    if (x >= 0.0) return approx_eval(pos_bank, x);
    if (x < -6.0) return 0.0;
    return approx_eval(neg_bank, x);
}

Vector rmsnorm_exact(const Vector& x, const Vector& w, double eps) {
    return rmsnorm_with(
        x, w, eps, [](double v) { return v * v; }, [](double v) { return std::sqrt(v); });
}

Vector snn_rmsnorm(const Vector& x, const Vector& w, double eps, const ApproximatorBank& square_bank,
                   const ApproximatorBank& sqrt_bank) {
    return rmsnorm_with(
        x, w, eps, [&](double v) { return approx_eval(square_bank, std::abs(v)); },
        [&](double v) {
            const double r = approx_eval(sqrt_bank, v);
            if (!(r > 0.0)) {
                std::cerr << "warning: sqrt bank returned " << r << " for " << v << ", using exact sqrt\n";
            }
            return r;
        });
}

Vector snn_rmsnorm_ranged(const Vector& x, const Vector& w, double eps, const ApproximatorBank& square_bank,
                          const ApproximatorBank& sqrt_bank) {
    if (x.size() == 0) throw ArgumentError("snn_rmsnorm: empty vector");
    const double limit = std::sqrt(static_cast<double>(square_bank.bounds.back()));
    const double peak = x.cwiseAbs().maxCoeff();
    int k = 0;
    if (peak > 0.0 && std::isfinite(peak)) {
        k = static_cast<int>(std::ceil(std::log2(peak / limit)));
        while (std::ldexp(peak, -k) > limit) ++k;
    }
    const Vector xs = (x.cast<double>() * std::ldexp(1.0, -k)).cast<float>();
    return snn_rmsnorm(xs, w, eps * std::ldexp(1.0, -2 * k), square_bank, sqrt_bank);
}

ApproximatorBank fit_square_bank(const ApproximatorConfig& config, Rng& rng) {
    Partition p{PartitionKind::power, config.square_power, {}};
    return fit_bank(ApproxKind::square, 0.0, config.square_hi, config.square_segments, p, config.fit, rng);
}

ApproximatorBank fit_sqrt_bank(const ApproximatorConfig& config, Rng& rng) {
    FitOptions opt = config.fit;
    opt.relative = true;
    Partition p{PartitionKind::logarithmic, 1.0, {}};
    return fit_bank(ApproxKind::sqrt, config.sqrt_lo, config.sqrt_hi, config.sqrt_segments, p, opt, rng);
}

ApproximatorBank fit_silu_pos_bank(const ApproximatorConfig& config, Rng& rng) {
    FitOptions opt = config.fit;
    opt.neurons_first_segment = 2;
    Partition p{PartitionKind::fixed, 1.0, {0.0, 1.0, config.silu_pos_hi}};
    ApproximatorBank bank = fit_bank(ApproxKind::silu_pos, 0.0, config.silu_pos_hi, 2, p, opt, rng);
    // Least-squares slope of the bank over the last eighth of its range.
    const double hi = config.silu_pos_hi;
    const double from = hi - (hi - 1.0) / 8.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = 64;
    for (int i = 0; i < n; ++i) {
        const double x = from + (hi - from) * i / (n - 1);
        const double y = approx_eval(bank, x);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    bank.tail_slope = static_cast<float>((n * sxy - sx * sy) / (n * sxx - sx * sx));
    bank.extend_upper = true;
    return bank;
}

ApproximatorBank fit_silu_neg_bank(const ApproximatorConfig& config, Rng& rng) {
    Partition p{PartitionKind::fixed, 1.0, {-6.0, -4.0, -2.0, 0.0}};
    return fit_bank(ApproxKind::silu_neg, -6.0, 0.0, 3, p, config.fit, rng);
}

ApproximatorSet fit_approximators(const ApproximatorConfig& config, std::uint64_t seed) {
    ApproximatorSet set;
    Rng square_rng(derive_seed(seed, "approximators.square"));
    Rng sqrt_rng(derive_seed(seed, "approximators.sqrt"));
    Rng pos_rng(derive_seed(seed, "approximators.silu_pos"));
    Rng neg_rng(derive_seed(seed, "approximators.silu_neg"));
    set.square = fit_square_bank(config, square_rng);
    set.sqrt = fit_sqrt_bank(config, sqrt_rng);
    set.silu_pos = fit_silu_pos_bank(config, pos_rng);
    set.silu_neg = fit_silu_neg_bank(config, neg_rng);
    return set;
}

double square_grid_mse(const ApproximatorBank& bank, double hi, int points) {
    double sq = 0.0;
    for (double x : linspace(0.0, hi, points)) {
        const double r = approx_eval(bank, x) - x * x;
        sq += r * r;
    }
    return sq / points;
}

double sqrt_grid_max_rel_error(const ApproximatorBank& bank, double lo, double hi, int points) {
    double worst = 0.0;
    for (double x : geomspace(lo, hi, points)) {
        const double exact = std::sqrt(x);
        worst = std::max(worst, std::abs(approx_eval(bank, x) - exact) / exact);
    }
    return worst;
}

double silu_grid_mse(const ApproximatorBank& pos, const ApproximatorBank& neg, double lo, double hi, int points) {
    double sq = 0.0;
    for (double x : linspace(lo, hi, points)) {
        const double r = silu_approx(pos, neg, x) - silu_exact(x);
        sq += r * r;
    }
    return sq / points;
}

}  // namespace snnlm
