#include "snnlm/conversion.hpp"

#include <cmath>

namespace snnlm {

Model convert(const Model& ann, const ApproximatorSet& banks, const ConvertOptions& options,
              ConversionSummary* summary) {
    const ModelConfig& cfg = ann.config;
    if (cfg.mode != ModelMode::ann) {
        throw ConversionError("convert: source checkpoint is not in ann mode");
    }
    if (cfg.quant_mode == QuantMode::asymmetric) {
        throw ConversionError("convert: asymmetric quantization has no zero-point mapping onto signed spike counts");
    }
    if (cfg.quant_mode != QuantMode::symmetric_narrow) {
        throw ConversionError("convert: level -2^(b-1) of full-range symmetric quantization has no spike count; "
                              "train with quant_mode symmetric_narrow");
    }
    const int steps = options.steps.value_or(cfg.matched_steps());
    if (steps < 1) {
        throw ConversionError("convert: steps must be >= 1");
    }
    Model snn = ann;
    snn.config.mode = ModelMode::snn;
    snn.config.steps = steps;
    snn.scaling_factors.clear();
    snn.neuron_deltas.clear();
    const auto max_level = static_cast<double>(cfg.quant_spec().max_level());
    for (const std::string& site : quant_sites(cfg)) {
        const auto it = ann.scales.find(site);
        if (it == ann.scales.end()) {
            throw ConversionError("convert: no calibration scale for layer site '" + site + "'");
        }
        if (!(it->second > 0.0) || !std::isfinite(it->second)) {
            throw ConversionError("convert: calibration scale of '" + site + "' is not positive");
        }
        snn.scaling_factors[site] = it->second * max_level;
    }
    snn.banks = banks;
    if (summary) {
        summary->encoder_sites = quant_sites(cfg);
        summary->synapsis_sites.clear();
        for (const LinearSite& s : linear_sites(cfg)) summary->synapsis_sites.push_back(s.name);
        summary->steps = steps;
        summary->bits = cfg.bits;
    }
    return snn;
}

namespace {

struct GapAccumulator {
    double max_abs = 0.0;
    double sum_abs = 0.0;
    std::int64_t count = 0;

    template <class A, class B>
    void add(const A& a, const B& b) {
        const auto diff = (a.template cast<double>() - b.template cast<double>()).cwiseAbs();
        if (diff.size() == 0) return;
        max_abs = std::max(max_abs, diff.maxCoeff());
        sum_abs += diff.sum();
        count += diff.size();
    }
    double mean() const { return count ? sum_abs / static_cast<double>(count) : 0.0; }
};

void check_matching(const Model& ann, const Model& snn) {
    const ModelConfig& a = ann.config;
    const ModelConfig& s = snn.config;
    if (a.mode != ModelMode::ann || s.mode != ModelMode::snn) {
        throw AuditError("audit: expected an ann and an snn checkpoint");
    }
    if (a.vocab_size != s.vocab_size || a.d_model != s.d_model || a.n_heads != s.n_heads ||
        a.n_layers != s.n_layers || a.d_ff != s.d_ff || a.bits != s.bits || a.max_seq_len != s.max_seq_len) {
        throw AuditError("audit: ann and snn model configs differ");
    }
    if (!snn.banks) {
        throw AuditError("audit: snn checkpoint carries no approximator banks");
    }
    for (const std::string& site : quant_sites(a)) {
        if (!ann.scales.count(site)) throw AuditError("audit: ann checkpoint has no scale for '" + site + "'");
        if (!snn.scaling_factors.count(site)) {
            throw AuditError("audit: snn checkpoint has no scaling factor for '" + site + "'");
        }
    }
}

}  // namespace

EquivalenceReport audit_equivalence(const Model& ann, const Model& snn, std::span<const int> stream) {
    check_matching(ann, snn);
    if (stream.empty()) throw InputError("audit: empty eval stream");
    const ModelConfig& cfg = ann.config;
    const QuantSpec spec = cfg.quant_spec();
    EquivalenceReport rep;
    rep.steps = snn.config.steps;
    rep.bits = cfg.bits;
    rep.matched = rep.steps == cfg.matched_steps();
    rep.tokens = static_cast<std::int64_t>(stream.size());

    const auto sites = linear_sites(cfg);
    std::map<std::string, GapAccumulator> lin_gaps;
    std::map<std::string, std::int64_t> lin_spikes;
    std::map<std::string, GapAccumulator> nl_gaps;
    std::map<std::string, std::string> nl_kind;
    std::map<std::string, MatrixD> weight_t;
    for (const LinearSite& s : sites) weight_t[s.name] = site_weight(snn, s).cast<double>().transpose();
    GapAccumulator logits_gap;
    std::int64_t agree = 0;
    std::vector<int> window;

    const auto window_len = static_cast<std::size_t>(cfg.max_seq_len);
    for (std::size_t start = 0; start < stream.size(); start += window_len) {
        const std::span<const int> tokens = stream.subspan(start, std::min(window_len, stream.size() - start));
        ForwardTaps at, st;
        const Matrix la = forward_ann(ann, tokens, &at);
        const Matrix ls = forward_snn(snn, tokens, &st);
        logits_gap.add(la, ls);
        const auto aa = argmax_rows(la);
        const auto as = argmax_rows(ls);
        for (std::size_t i = 0; i < aa.size(); ++i) agree += aa[i] == as[i];
        for (const auto& [site, n] : st.spike_counts) rep.spikes_per_site[site] += n;
        for (const auto& [site, x] : st.site_outputs) rep.encoder_elements += x.size();

        // Linear sites on identical inputs.
        for (const LinearSite& s : sites) {
            const Matrix& x = at.linear_inputs.at(s.name);
            const QuantResult pre = quantize_site(ann, s.pre, x);
            const MatrixD y_ann =
                qsynapsis_preactivation(site_weight(ann, s), site_bias(ann, s), pre.levels, pre.scale);
            const IntMatrix counts = encode_site(snn, s.pre, x.cast<double>());
            const MatrixD y_snn = synapsis_from_counts(weight_t.at(s.name), site_bias(snn, s), counts,
                                                       site_scaling(snn, s.pre), snn.config.steps);
            if (s.post.empty()) {
                lin_gaps[s.name].add(y_ann, y_snn);
                continue;
            }
            const double sp = ann.scales.at(s.post);
            const Matrix z_ann = dequantize(quantize_levels(y_ann, spec, sp), sp);
            const IntMatrix post = encode_site(snn, s.post, y_snn);
            const Matrix z_snn = (post.cast<double>() * (site_scaling(snn, s.post) / snn.config.steps)).cast<float>();
            lin_gaps[s.name].add(z_ann, z_snn);
            lin_spikes[s.name] += post.cwiseAbs().cast<std::int64_t>().sum();
        }

        // Non-linear blocks on the ann path's inputs.
        const ApproximatorSet& banks = *snn.banks;
        for (int l = 0; l <= cfg.n_layers; ++l) {
            const bool final = l == cfg.n_layers;
            const std::string p = "layers." + std::to_string(l) + ".";
            std::vector<std::pair<std::string, const Vector*>> norms;
            if (final) {
                norms.emplace_back("final_norm", &ann.final_norm);
            } else {
                norms.emplace_back(p + "attn_norm", &ann.layers[static_cast<std::size_t>(l)].attn_norm);
                norms.emplace_back(p + "mlp_norm", &ann.layers[static_cast<std::size_t>(l)].mlp_norm);
            }
            for (const auto& [name, w] : norms) {
                const Matrix& x = at.nonlinear_inputs.at(name);
                Matrix approx(x.rows(), x.cols());
                for (Eigen::Index r = 0; r < x.rows(); ++r) {
                    approx.row(r) =
                        snn_rmsnorm_ranged(x.row(r).transpose(), *w, cfg.rmsnorm_eps, banks.square, banks.sqrt).transpose();
                }
                nl_gaps[name].add(at.nonlinear_outputs.at(name), approx);
                nl_kind[name] = "rmsnorm";
            }
            if (final) continue;

            const Matrix& g = at.nonlinear_inputs.at(p + "silu");
            const Matrix sg = g.unaryExpr(
                [&](float z) { return static_cast<float>(silu_approx(banks.silu_pos, banks.silu_neg, z)); });
            nl_gaps[p + "silu"].add(at.nonlinear_outputs.at(p + "silu"), sg);
            nl_kind[p + "silu"] = "silu";

            const IntMatrix cq = encode_site(snn, p + "q_out", at.site_outputs.at(p + "q_out").cast<double>());
            const IntMatrix ck = encode_site(snn, p + "k_out", at.site_outputs.at(p + "k_out").cast<double>());
            const int dh = cfg.head_dim();
            const auto n = static_cast<Eigen::Index>(tokens.size());
            Matrix probs(n, n * cfg.n_heads);
            for (int h = 0; h < cfg.n_heads; ++h) {
                const AttentionScores sc = snn_matmul_counts(
                    cq.middleCols(h * dh, dh), ck.middleCols(h * dh, dh), snn.config.steps,
                    site_scaling(snn, p + "q_out"), site_scaling(snn, p + "k_out"), snn.config.attention);
                probs.middleCols(h * n, n) = snn_softmax(sc, true);
            }
            nl_gaps[p + "attn_probs"].add(at.nonlinear_outputs.at(p + "attn_probs"), probs);
            nl_kind[p + "attn_probs"] = "softmax";
        }
    }

    for (const LinearSite& s : sites) {
        SiteGap g;
        g.site = s.name;
        const GapAccumulator& acc = lin_gaps.at(s.name);
        g.max_abs_gap = acc.max_abs;
        g.mean_abs_gap = acc.mean();
        if (s.post.empty()) {
            // No post quantizer: the two double accumulations may differ in
            // summation order only.
            g.kind = "head";
            g.bound = 1e-6;
        } else {
            g.kind = "linear";
            g.bound = ann.scales.at(s.post);
            g.spikes = lin_spikes[s.name];
        }
        g.within_bound = g.max_abs_gap <= g.bound;
        rep.linear_within_bound = rep.linear_within_bound && g.within_bound;
        rep.max_linear_gap = std::max(rep.max_linear_gap, g.max_abs_gap);
        rep.linear.push_back(g);
    }
    for (const auto& [name, acc] : nl_gaps) {
        SiteGap g;
        g.site = name;
        g.kind = nl_kind.at(name);
        g.max_abs_gap = acc.max_abs;
        g.mean_abs_gap = acc.mean();
        rep.nonlinear.push_back(g);
    }
    rep.logits_max_gap = logits_gap.max_abs;
    rep.logits_mean_gap = logits_gap.mean();
    rep.argmax_agreement = static_cast<double>(agree) / static_cast<double>(stream.size());
    for (const auto& [site, n] : rep.spikes_per_site) rep.total_spikes += n;
    return rep;
}

nlohmann::json to_json(const EquivalenceReport& r) {
    using nlohmann::json;
    auto gaps = [](const std::vector<SiteGap>& v) {
        json arr = json::array();
        for (const SiteGap& g : v) {
            json e = {{"site", g.site},
                      {"kind", g.kind},
                      {"max_abs_gap", g.max_abs_gap},
                      {"mean_abs_gap", g.mean_abs_gap},
                      {"within_bound", g.within_bound},
                      {"spikes", g.spikes}};
            e["bound"] = g.bound >= 0.0 ? json(g.bound) : json(nullptr);
            arr.push_back(std::move(e));
        }
        return arr;
    };
    json spikes = json::object();
    for (const auto& [site, n] : r.spikes_per_site) spikes[site] = n;
    return json{{"format", "snnlm.equivalence_report"},
                {"version", r.version},
                {"steps", r.steps},
                {"bits", r.bits},
                {"matched", r.matched},
                {"tokens", r.tokens},
                {"linear_sites", gaps(r.linear)},
                {"nonlinear_sites", gaps(r.nonlinear)},
                {"logits", {{"max_abs_gap", r.logits_max_gap}, {"mean_abs_gap", r.logits_mean_gap}}},
                {"argmax_agreement", r.argmax_agreement},
                {"spikes_per_site", spikes},
                {"total_spikes", r.total_spikes},
                {"encoder_elements", r.encoder_elements},
                {"max_linear_gap", r.max_linear_gap},
                {"linear_within_bound", r.linear_within_bound}};
}

const nlohmann::json& equivalence_report_schema() {
    static const nlohmann::json schema = nlohmann::json::parse(R"({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "$id": "snnlm.equivalence_report.v1",
  "type": "object",
  "required": ["format", "version", "steps", "bits", "matched", "tokens", "linear_sites", "nonlinear_sites",
               "logits", "argmax_agreement", "spikes_per_site", "total_spikes", "encoder_elements",
               "max_linear_gap", "linear_within_bound"],
  "additionalProperties": false,
  "$defs": {
    "gap": {
      "type": "object",
      "required": ["site", "kind", "max_abs_gap", "mean_abs_gap", "bound", "within_bound", "spikes"],
      "additionalProperties": false,
      "properties": {
        "site": {"type": "string"},
        "kind": {"enum": ["linear", "head", "rmsnorm", "silu", "softmax"]},
        "max_abs_gap": {"type": "number", "minimum": 0},
        "mean_abs_gap": {"type": "number", "minimum": 0},
        "bound": {"type": ["number", "null"]},
        "within_bound": {"type": "boolean"},
        "spikes": {"type": "integer", "minimum": 0}
      }
    }
  },
  "properties": {
    "format": {"const": "snnlm.equivalence_report"},
    "version": {"const": 1},
    "steps": {"type": "integer", "minimum": 1},
    "bits": {"type": "integer", "minimum": 2},
    "matched": {"type": "boolean"},
    "tokens": {"type": "integer", "minimum": 1},
    "linear_sites": {"type": "array", "items": {"$ref": "#/$defs/gap"}},
    "nonlinear_sites": {"type": "array", "items": {"$ref": "#/$defs/gap"}},
    "logits": {
      "type": "object",
      "required": ["max_abs_gap", "mean_abs_gap"],
      "additionalProperties": false,
      "properties": {
        "max_abs_gap": {"type": "number", "minimum": 0},
        "mean_abs_gap": {"type": "number", "minimum": 0}
      }
    },
    "argmax_agreement": {"type": "number", "minimum": 0, "maximum": 1},
    "spikes_per_site": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
    "total_spikes": {"type": "integer", "minimum": 0},
    "encoder_elements": {"type": "integer", "minimum": 0},
    "max_linear_gap": {"type": "number", "minimum": 0},
    "linear_within_bound": {"type": "boolean"}
  }
})");
    return schema;
}

namespace {

bool type_matches(const nlohmann::json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    return false;
}

// The subset of JSON Schema the report schema uses: type, enum, const,
// required, properties, additionalProperties, items, minimum, maximum and
// local $ref.
void validate_node(const nlohmann::json& v, const nlohmann::json& schema, const nlohmann::json& root,
                   const std::string& path, std::vector<std::string>& errors) {
    if (schema.contains("$ref")) {
        const std::string ref = schema["$ref"];
        const std::string prefix = "#/$defs/";
        if (ref.rfind(prefix, 0) != 0) {
            errors.push_back(path + ": unsupported $ref " + ref);
            return;
        }
        validate_node(v, root["$defs"][ref.substr(prefix.size())], root, path, errors);
        return;
    }
    if (schema.contains("type")) {
        const auto& t = schema["type"];
        bool ok = false;
        if (t.is_array()) {
            for (const auto& one : t) ok = ok || type_matches(v, one.get<std::string>());
        } else {
            ok = type_matches(v, t.get<std::string>());
        }
        if (!ok) {
            errors.push_back(path + ": expected type " + t.dump());
            return;
        }
    }
    if (schema.contains("const") && v != schema["const"]) errors.push_back(path + ": must equal " + schema["const"].dump());
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) found = found || e == v;
        if (!found) errors.push_back(path + ": not one of " + schema["enum"].dump());
    }
    if (v.is_number()) {
        if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>()) {
            errors.push_back(path + ": below minimum");
        }
        if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>()) {
            errors.push_back(path + ": above maximum");
        }
    }
    if (v.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema["required"]) {
                if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing '" + key.get<std::string>() + "'");
            }
        }
        const nlohmann::json props = schema.value("properties", nlohmann::json::object());
        for (const auto& [key, val] : v.items()) {
            if (props.contains(key)) {
                validate_node(val, props[key], root, path + "/" + key, errors);
            } else if (schema.contains("additionalProperties")) {
                const auto& extra = schema["additionalProperties"];
                if (extra.is_boolean() && !extra.get<bool>()) {
                    errors.push_back(path + ": unexpected key '" + key + "'");
                } else if (extra.is_object()) {
                    validate_node(val, extra, root, path + "/" + key, errors);
                }
            }
        }
    }
    if (v.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            validate_node(v[i], schema["items"], root, path + "/" + std::to_string(i), errors);
        }
    }
}

}  // namespace

std::vector<std::string> validate_report(const nlohmann::json& doc) {
    std::vector<std::string> errors;
    const auto& schema = equivalence_report_schema();
    validate_node(doc, schema, schema, "", errors);
    return errors;
}

}  // namespace snnlm
