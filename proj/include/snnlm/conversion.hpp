#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "snnlm/model.hpp"

namespace snnlm {

struct ConvertOptions {
    // Rate-code window; defaults to 2^(bits-1)-1 where levels and counts coincide.
    std::optional<int> steps;
};

// Which encoder replaced which quantizer and which Synapsis replaced which
// QSynapsis.
struct ConversionSummary {
    std::vector<std::string> encoder_sites;
    std::vector<std::string> synapsis_sites;
    int steps = 0;
    int bits = 0;
};

// ann checkpoint -> snn checkpoint. Weights are copied verbatim, every
// quantizer site becomes a rate encoder with scaling factor s (2^(b-1)-1),
// and the approximator banks are attached.
Model convert(const Model& ann, const ApproximatorSet& banks, const ConvertOptions& options = {},
              ConversionSummary* summary = nullptr);

struct SiteGap {
    std::string site;
    std::string kind;  // linear, head, rmsnorm, silu, softmax
    double max_abs_gap = 0.0;
    double mean_abs_gap = 0.0;
    double bound = -1.0;  // < 0: reported without a bound
    bool within_bound = true;
    std::int64_t spikes = 0;  // post-site encoder spikes (linear sites)
};

struct EquivalenceReport {
    int version = 1;
    int steps = 0;
    int bits = 0;
    bool matched = false;  // steps == 2^(bits-1)-1
    std::int64_t tokens = 0;
    std::vector<SiteGap> linear;
    std::vector<SiteGap> nonlinear;
    double logits_max_gap = 0.0;
    double logits_mean_gap = 0.0;
    double argmax_agreement = 0.0;
    std::map<std::string, std::int64_t> spikes_per_site;
    std::int64_t total_spikes = 0;
    std::int64_t encoder_elements = 0;
    bool linear_within_bound = true;
    double max_linear_gap = 0.0;
};

// Runs both models on the same windows of the stream (window length
// max_seq_len). Linear sites are compared on identical inputs: the ann
// path's input to the site goes through Q_pre/W/Q_post and through
// encoder/Synapsis/encoder. Non-linear blocks and the end-to-end logits are
// reported separately.
EquivalenceReport audit_equivalence(const Model& ann, const Model& snn, std::span<const int> stream);

nlohmann::json to_json(const EquivalenceReport& report);
// The versioned JSON schema of the report document.
const nlohmann::json& equivalence_report_schema();
// Structural validation of a report document against the schema; returns
// the list of violations (empty when valid).
std::vector<std::string> validate_report(const nlohmann::json& doc);

}  // namespace snnlm
