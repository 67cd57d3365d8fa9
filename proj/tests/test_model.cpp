#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "snnlm/conversion.hpp"

using namespace snnlm;

namespace {

std::vector<int> tokens_of(std::initializer_list<int> t) { return std::vector<int>(t); }

void check_causal(const Model& m) {
    std::vector<int> a = {kBosToken, 72, 101, 108, 108, 111, 32, 119};
    std::vector<int> b = a;
    b.back() = 33;
    const Matrix la = forward(m, a);
    const Matrix lb = forward(m, b);
    const auto n = static_cast<Eigen::Index>(a.size());
    CHECK(la.topRows(n - 1) == lb.topRows(n - 1));
    CHECK(la.row(n - 1) != lb.row(n - 1));
}

}  // namespace

TEST_CASE("task loss equals a naive softmax negative log-likelihood") {
    Rng rng(2);
    const Matrix logits = rand_uniform(rng, 4, 6, -3.0f, 3.0f);
    const std::vector<int> targets = {0, 5, 2, 2};
    double nll = 0.0;
    for (int i = 0; i < 4; ++i) {
        double z = 0.0;
        for (int j = 0; j < 6; ++j) z += std::exp(static_cast<double>(logits(i, j)));
        nll += std::log(z) - logits(i, targets[static_cast<std::size_t>(i)]);
    }
    CHECK(task_loss(logits, targets) == doctest::Approx(nll / 4).epsilon(1e-6));
}

TEST_CASE("causal softmax rows sum to one with zeros above the diagonal") {
    Rng rng(6);
    const Matrix p = causal_softmax(rand_uniform(rng, 5, 5, -2.0f, 2.0f));
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
        for (Eigen::Index j = i + 1; j < 5; ++j) CHECK(p(i, j) == 0.0f);
    }
}

TEST_CASE("ann and snn forwards are causal and deterministic") {
    const Model ann = test::calibrated_model(21);
    check_causal(ann);
    const Model snn = convert(ann, test::default_banks());
    check_causal(snn);
    const std::vector<int> t = tokens_of({kBosToken, 1, 2, 3});
    CHECK(forward(snn, t) == forward(snn, t));
    CHECK(forward(ann, t) == forward(ann, t));
}

TEST_CASE("token and sequence checks") {
    const Model m = test::calibrated_model(22);
    CHECK_THROWS_AS(forward(m, tokens_of({300})), InputError);
    CHECK_THROWS_AS(forward(m, std::vector<int>(17, 1)), InputError);
    CHECK_THROWS_AS(forward(m, std::vector<int>{}), InputError);
}

TEST_CASE("frozen-scale task gradients match finite differences") {
    Model m = test::calibrated_model(23, 16);
    std::vector<int> tokens = {kBosToken, 10, 20, 30, 40, 50};
    std::vector<int> targets = {10, 20, 30, 40, 50, 60};
    Model grads = zeros_like(m);
    const double loss = task_gradients(m, tokens, targets, &grads, nullptr);
    CHECK(loss == doctest::Approx(task_loss(forward_ann(m, tokens), targets)).epsilon(1e-5));

    std::vector<ParamRef> params = named_parameters(m);
    std::vector<ParamRef> gparams = named_parameters(grads);
    int checked = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        // The largest gradient entry of every tensor.
        std::int64_t best = 0;
        for (std::int64_t i = 0; i < gparams[p].size(); ++i) {
            if (std::abs(gparams[p].data[i]) > std::abs(gparams[p].data[best])) best = i;
        }
        const double g = gparams[p].data[best];
        // Key biases shift every score of a row equally and carry no gradient.
        if (std::abs(g) < 1e-2) continue;
        const float saved = params[p].data[best];
        const float eps = 1e-2f;
        params[p].data[best] = saved + eps;
        const double up = task_loss(forward_ann(m, tokens), targets);
        params[p].data[best] = saved - eps;
        const double down = task_loss(forward_ann(m, tokens), targets);
        params[p].data[best] = saved;
        const double fd = (up - down) / (2.0 * eps);
        INFO(params[p].name, " analytic ", g, " numeric ", fd);
        CHECK(std::abs(fd - g) <= 0.06 * std::abs(g) + 2e-3);
        ++checked;
    }
    CHECK(checked >= 10);
}

TEST_CASE("site lists are consistent") {
    const ModelConfig c = test::tiny_config();
    const auto sites = quant_sites(c);
    for (const LinearSite& s : linear_sites(c)) {
        CHECK(std::find(sites.begin(), sites.end(), s.pre) != sites.end());
        if (!s.post.empty()) CHECK(std::find(sites.begin(), sites.end(), s.post) != sites.end());
    }
}
