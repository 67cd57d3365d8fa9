#include "snnlm/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "snnlm/error.hpp"

namespace snnlm {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'T', 'S', 'F'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

// A named float tensor in the payload.
struct TensorView {
    std::string name;
    std::vector<std::int64_t> shape;
    const float* data;
    std::int64_t size;
};

std::string partition_name(PartitionKind kind) {
    switch (kind) {
        case PartitionKind::power: return "power";
        case PartitionKind::logarithmic: return "logarithmic";
        case PartitionKind::fixed: return "fixed";
    }
    return "unknown";
}

PartitionKind partition_from_name(const std::string& name) {
    if (name == "power") return PartitionKind::power;
    if (name == "logarithmic") return PartitionKind::logarithmic;
    if (name == "fixed") return PartitionKind::fixed;
    throw FormatError("unknown partition kind '" + name + "'");
}

}  // namespace

json to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size},
                {"d_model", c.d_model},
                {"n_heads", c.n_heads},
                {"n_layers", c.n_layers},
                {"d_ff", c.d_ff},
                {"steps", c.steps},
                {"bits", c.bits},
                {"max_seq_len", c.max_seq_len},
                {"mode", to_string(c.mode)},
                {"quant_mode", to_string(c.quant_mode)},
                {"ann_attention", to_string(c.ann_attention)},
                {"rmsnorm_eps", c.rmsnorm_eps},
                {"spike_schedule", to_string(c.attention.schedule)},
                {"accumulation", to_string(c.attention.accumulation)}};
}

ModelConfig model_config_from_json(const json& j) {
    try {
        ModelConfig c;
        c.vocab_size = j.at("vocab_size").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.n_layers = j.at("n_layers").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.steps = j.at("steps").get<int>();
        c.bits = j.at("bits").get<int>();
        c.max_seq_len = j.at("max_seq_len").get<int>();
        c.mode = model_mode_from_string(j.at("mode").get<std::string>());
        c.quant_mode = quant_mode_from_string(j.at("quant_mode").get<std::string>());
        c.ann_attention = ann_attention_from_string(j.at("ann_attention").get<std::string>());
        c.rmsnorm_eps = j.at("rmsnorm_eps").get<double>();
        c.attention.schedule = spike_schedule_from_string(j.at("spike_schedule").get<std::string>());
        c.attention.accumulation = accumulation_from_string(j.at("accumulation").get<std::string>());
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
}

json to_json(const ApproximatorBank& bank) {
    json segments = json::array();
    for (const auto& seg : bank.neurons) {
        json neurons = json::array();
        for (const CustomNeuronParams& n : seg) {
            neurons.push_back(json{{"a_pos", n.a_pos},
                                   {"a_neg", n.a_neg},
                                   {"theta_base", n.theta_base},
                                   {"alpha", n.alpha},
                                   {"decay", n.decay},
                                   {"steps", n.steps}});
        }
        segments.push_back(std::move(neurons));
    }
    return json{{"kind", to_string(bank.kind)},
                {"partition", {{"kind", partition_name(bank.partition.kind)},
                               {"power", bank.partition.power},
                               {"edges", bank.partition.edges}}},
                {"bounds", bank.bounds},
                {"segments", std::move(segments)},
                {"extend_upper", bank.extend_upper},
                {"tail_slope", bank.tail_slope},
                {"fit_mse", bank.fit_mse},
                {"fit_max_rel_error", bank.fit_max_rel_error}};
}

ApproximatorBank bank_from_json(const json& j) {
    try {
        ApproximatorBank b;
        b.kind = approx_kind_from_string(j.at("kind").get<std::string>());
        const json& p = j.at("partition");
        b.partition.kind = partition_from_name(p.at("kind").get<std::string>());
        b.partition.power = p.at("power").get<double>();
        b.partition.edges = p.at("edges").get<std::vector<double>>();
        b.bounds = j.at("bounds").get<std::vector<float>>();
        for (const json& seg : j.at("segments")) {
            std::vector<CustomNeuronParams> neurons;
            for (const json& n : seg) {
                CustomNeuronParams c;
                c.a_pos = n.at("a_pos").get<float>();
                c.a_neg = n.at("a_neg").get<float>();
                c.theta_base = n.at("theta_base").get<float>();
                c.alpha = n.at("alpha").get<float>();
                c.decay = n.at("decay").get<float>();
                c.steps = n.at("steps").get<int>();
                neurons.push_back(c);
            }
            b.neurons.push_back(std::move(neurons));
        }
        b.extend_upper = j.at("extend_upper").get<bool>();
        b.tail_slope = j.at("tail_slope").get<float>();
        b.fit_mse = j.at("fit_mse").get<double>();
        b.fit_max_rel_error = j.at("fit_max_rel_error").get<double>();
        b.validate();
        return b;
    } catch (const json::exception& e) {
        throw FormatError(std::string("approximator bank: ") + e.what());
    }
}

json to_json(const ApproximatorSet& banks) {
    return json{{"square", to_json(banks.square)},
                {"sqrt", to_json(banks.sqrt)},
                {"silu_pos", to_json(banks.silu_pos)},
                {"silu_neg", to_json(banks.silu_neg)}};
}

ApproximatorSet approximator_set_from_json(const json& j) {
    try {
        return ApproximatorSet{bank_from_json(j.at("square")), bank_from_json(j.at("sqrt")),
                               bank_from_json(j.at("silu_pos")), bank_from_json(j.at("silu_neg"))};
    } catch (const json::exception& e) {
        throw FormatError(std::string("approximator set: ") + e.what());
    }
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    const Model& model = ckpt.model;
    std::vector<TensorView> tensors;
    Model& mutable_model = const_cast<Model&>(model);  // named_parameters only hands out pointers
    for (const ParamRef& p : named_parameters(mutable_model)) tensors.push_back({p.name, p.shape, p.data, p.size()});
    json delta_sites = json::array();
    for (const auto& [site, d] : model.neuron_deltas) {
        delta_sites.push_back(site);
        const std::int64_t n = d.theta_base.size();
        if (d.alpha.size() != n || d.attenuation.size() != n) {
            throw DimensionError("checkpoint: neuron deltas of '" + site + "' differ in length");
        }
        tensors.push_back({"neuron_deltas." + site + ".theta_base", {n}, d.theta_base.data(), n});
        tensors.push_back({"neuron_deltas." + site + ".alpha", {n}, d.alpha.data(), n});
        tensors.push_back({"neuron_deltas." + site + ".attenuation", {n}, d.attenuation.data(), n});
    }
    json train_state = nullptr;
    if (ckpt.train_state) {
        const TrainState& ts = *ckpt.train_state;
        const std::vector<ParamRef> params = named_parameters(mutable_model);
        for (const auto* moments : {&ts.m, &ts.v}) {
            if (!moments->empty() && moments->size() != params.size()) {
                throw DimensionError("checkpoint: optimizer state does not match the parameter list");
            }
        }
        for (std::size_t i = 0; i < ts.m.size(); ++i) {
            tensors.push_back({"optimizer.m." + params[i].name, {ts.m[i].size()}, ts.m[i].data(), ts.m[i].size()});
        }
        for (std::size_t i = 0; i < ts.v.size(); ++i) {
            tensors.push_back({"optimizer.v." + params[i].name, {ts.v[i].size()}, ts.v[i].data(), ts.v[i].size()});
        }
        train_state = json{{"step", ts.step}, {"has_m", !ts.m.empty()}, {"has_v", !ts.v.empty()}};
    }

    json directory = json::array();
    std::uint64_t offset = 0;
    for (const TensorView& t : tensors) {
        directory.push_back(json{{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"dtype", "f32"}});
        offset += static_cast<std::uint64_t>(t.size) * 4;
    }
    json meta{{"config", to_json(model.config)},
              {"tensors", std::move(directory)},
              {"payload_bytes", offset},
              {"scales", model.scales},
              {"scaling_factors", model.scaling_factors},
              {"neuron_delta_sites", std::move(delta_sites)},
              {"banks", model.banks ? to_json(*model.banks) : json(nullptr)},
              {"train_state", std::move(train_state)},
              {"info", ckpt.info}};
    const std::string text = meta.dump();

    std::vector<std::uint8_t> out;
    out.reserve(16 + text.size() + offset);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const TensorView& t : tensors) {
        for (std::int64_t i = 0; i < t.size; ++i) put_u32(out, std::bit_cast<std::uint32_t>(t.data[i]));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("checkpoint: missing BTSF magic");
    }
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint64_t meta_len = get_le(bytes, 8, 8);
    if (meta_len > bytes.size() - 16) throw FormatError("checkpoint: metadata length exceeds the file");
    json meta;
    try {
        meta = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
    }
    const std::size_t payload = 16 + meta_len;
    const std::uint64_t payload_bytes = bytes.size() - payload;

    try {
        Checkpoint ckpt;
        Rng rng(0);
        const ModelConfig config = model_config_from_json(meta.at("config"));
        ckpt.model = zeros_like(init_model(config, rng));
        Model& model = ckpt.model;
        if (meta.at("payload_bytes").get<std::uint64_t>() != payload_bytes) {
            throw FormatError("checkpoint: payload size does not match the directory");
        }

        // Destination of every tensor the directory may name.
        std::map<std::string, std::pair<float*, std::vector<std::int64_t>>> slots;
        for (const ParamRef& p : named_parameters(model)) slots[p.name] = {p.data, p.shape};
        for (const json& site : meta.at("neuron_delta_sites")) {
            const std::string s = site.get<std::string>();
            model.neuron_deltas[s] = NeuronDeltas{};
        }
        const json& ts_meta = meta.at("train_state");
        const std::size_t n_params = named_parameters(model).size();
        if (!ts_meta.is_null()) {
            TrainState ts;
            ts.step = ts_meta.at("step").get<std::int64_t>();
            if (ts_meta.at("has_m").get<bool>()) ts.m.resize(n_params);
            if (ts_meta.at("has_v").get<bool>()) ts.v.resize(n_params);
            ckpt.train_state = std::move(ts);
        }

        std::set<std::string> seen;
        for (const json& entry : meta.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
            if (!seen.insert(name).second) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
            std::int64_t count = 1;
            for (const std::int64_t d : shape) {
                if (d < 0) throw FormatError("checkpoint: negative dimension in '" + name + "'");
                count *= d;
            }
            const auto size = static_cast<std::uint64_t>(count) * 4;
            if (offset > payload_bytes || size > payload_bytes - offset) {
                throw FormatError("checkpoint: tensor '" + name + "' lies outside the payload");
            }
            float* dst = nullptr;
            if (auto it = slots.find(name); it != slots.end()) {
                if (it->second.second != shape) throw FormatError("checkpoint: shape mismatch for '" + name + "'");
                dst = it->second.first;
            } else if (name.rfind("neuron_deltas.", 0) == 0) {
                const std::size_t dot = name.rfind('.');
                const std::string site = name.substr(14, dot - 14);
                const std::string field = name.substr(dot + 1);
                auto nd = model.neuron_deltas.find(site);
                if (nd == model.neuron_deltas.end() || shape.size() != 1) {
                    throw FormatError("checkpoint: unexpected tensor '" + name + "'");
                }
                Vector* v = field == "theta_base"    ? &nd->second.theta_base
                            : field == "alpha"       ? &nd->second.alpha
                            : field == "attenuation" ? &nd->second.attenuation
                                                     : nullptr;
                if (!v) throw FormatError("checkpoint: unexpected tensor '" + name + "'");
                v->resize(shape[0]);
                dst = v->data();
            } else if (ckpt.train_state && (name.rfind("optimizer.m.", 0) == 0 || name.rfind("optimizer.v.", 0) == 0)) {
                auto& moments = name[10] == 'm' ? ckpt.train_state->m : ckpt.train_state->v;
                const std::string param = name.substr(12);
                const std::vector<ParamRef> params = named_parameters(model);
                std::size_t idx = params.size();
                for (std::size_t i = 0; i < params.size(); ++i) {
                    if (params[i].name == param) idx = i;
                }
                if (idx == params.size() || idx >= moments.size() || shape.size() != 1 ||
                    (shape[0] != params[idx].size() && shape[0] != 0)) {
                    throw FormatError("checkpoint: unexpected tensor '" + name + "'");
                }
                moments[idx].resize(shape[0]);
                dst = moments[idx].data();
            } else {
                throw FormatError("checkpoint: unexpected tensor '" + name + "'");
            }
            for (std::int64_t i = 0; i < count; ++i) {
                const std::size_t pos = payload + offset + static_cast<std::size_t>(i) * 4;
                dst[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, pos, 4)));
            }
        }
        for (const auto& [name, slot] : slots) {
            if (!seen.count(name)) throw FormatError("checkpoint: missing tensor '" + name + "'");
        }
        for (const auto& [site, d] : model.neuron_deltas) {
            if (d.theta_base.size() == 0 || d.alpha.size() != d.theta_base.size() ||
                d.attenuation.size() != d.theta_base.size()) {
                throw FormatError("checkpoint: incomplete neuron deltas for '" + site + "'");
            }
        }
        if (ckpt.train_state) {
            const std::size_t expected = ckpt.train_state->m.size() + ckpt.train_state->v.size();
            std::size_t found = 0;
            for (const std::string& name : seen) found += name.rfind("optimizer.", 0) == 0;
            if (found != expected) throw FormatError("checkpoint: incomplete optimizer state");
        }
        model.scales = meta.at("scales").get<std::map<std::string, double>>();
        model.scaling_factors = meta.at("scaling_factors").get<std::map<std::string, double>>();
        if (!meta.at("banks").is_null()) model.banks = approximator_set_from_json(meta.at("banks"));
        ckpt.info = meta.at("info");
        return ckpt;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + tmp + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw InputError("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, target);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file_bytes(path)); }

}  // namespace snnlm
