#include "doctest.h"
#include "helpers.hpp"
#include "snnlm/conversion.hpp"

using namespace snnlm;

namespace {

std::vector<int> stream(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> s;
    for (int i = 0; i < n; ++i) s.push_back(static_cast<int>(rng.below(256)));
    return s;
}

}  // namespace

TEST_CASE("conversion rejects unsupported sources") {
    const Model ann = test::calibrated_model(31);
    const ApproximatorSet& banks = test::default_banks();

    Model asym = ann;
    asym.config.quant_mode = QuantMode::asymmetric;
    CHECK_THROWS_AS(convert(asym, banks), ConversionError);

    Model full = ann;
    full.config.quant_mode = QuantMode::symmetric;
    CHECK_THROWS_AS(convert(full, banks), ConversionError);

    Model missing = ann;
    missing.scales.erase(missing.scales.begin());
    CHECK_THROWS_AS(convert(missing, banks), ConversionError);

    const Model snn = convert(ann, banks);
    CHECK_THROWS_AS(convert(snn, banks), ConversionError);
}

TEST_CASE("converted model keeps weights and records every site") {
    const Model ann = test::calibrated_model(32);
    ConversionSummary summary;
    const Model snn = convert(ann, test::default_banks(), {}, &summary);
    CHECK(snn.config.mode == ModelMode::snn);
    CHECK(summary.steps == ann.config.matched_steps());
    CHECK(summary.synapsis_sites.size() == linear_sites(ann.config).size());
    CHECK(summary.encoder_sites.size() == quant_sites(ann.config).size());
    CHECK(snn.tok_emb == ann.tok_emb);
    CHECK(snn.banks.has_value());
}

TEST_CASE("matched window gives zero linear-site gaps") {
    const Model ann = test::calibrated_model(33);
    const Model snn = convert(ann, test::default_banks());
    const EquivalenceReport r = audit_equivalence(ann, snn, stream(40, 1));
    CHECK(r.matched);
    CHECK(r.linear_within_bound);
    CHECK(r.max_linear_gap == 0.0);
    for (const SiteGap& g : r.linear) CHECK(g.max_abs_gap == 0.0);
    CHECK(r.total_spikes > 0);
    CHECK(r.argmax_agreement >= 0.0);
    CHECK(r.argmax_agreement <= 1.0);
}

TEST_CASE("mismatched window is flagged") {
    const Model ann = test::calibrated_model(34);
    ConvertOptions o;
    o.steps = 3;
    const Model snn = convert(ann, test::default_banks(), o);
    const EquivalenceReport r = audit_equivalence(ann, snn, stream(20, 2));
    CHECK_FALSE(r.matched);
    CHECK(r.max_linear_gap > 0.0);
}

TEST_CASE("audit report validates against its schema") {
    const Model ann = test::calibrated_model(35);
    const Model snn = convert(ann, test::default_banks());
    nlohmann::json doc = to_json(audit_equivalence(ann, snn, stream(20, 3)));
    CHECK(validate_report(doc).empty());
    nlohmann::json broken = doc;
    broken.erase("argmax_agreement");
    CHECK_FALSE(validate_report(broken).empty());
    broken = doc;
    broken["steps"] = "seven";
    CHECK_FALSE(validate_report(broken).empty());
    CHECK(equivalence_report_schema().is_object());
}

TEST_CASE("audit rejects incompatible pairs") {
    const Model ann = test::calibrated_model(36);
    CHECK_THROWS_AS(audit_equivalence(ann, ann, stream(10, 4)), AuditError);
    const Model snn = convert(ann, test::default_banks());
    CHECK_THROWS_AS(audit_equivalence(ann, snn, {}), InputError);
}
