#include "doctest.h"
#include "snnlm/attention.hpp"

using namespace snnlm;

namespace {

IntMatrix one(int v) {
    IntMatrix m(1, 1);
    m << v;
    return m;
}

}  // namespace

TEST_CASE("cumulative outer accumulation equals the integer count product") {
    Rng rng(3);
    const int steps = 8;
    for (SpikeSchedule schedule : {SpikeSchedule::front_loaded, SpikeSchedule::strided}) {
        IntMatrix q(3, 5), k(4, 5);
        for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = static_cast<int>(rng.below(17)) - 8;
        for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = static_cast<int>(rng.below(17)) - 8;
        const AttentionScores s =
            snn_matmul_counts(q, k, steps, 1.0, 1.0, AttentionOptions{schedule, Accumulation::cumulative_outer});
        const IntMatrix dense = q * k.transpose();
        CHECK(s.accumulated == dense);
    }
}

TEST_CASE("single element at full rate accumulates T squared") {
    const AttentionScores s = snn_matmul_counts(one(8), one(8), 8, 1.0, 1.0);
    CHECK(s.accumulated(0, 0) == 64);
    CHECK(decode_scores(s)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("coincident front-loaded accumulation follows the min law") {
    for (int a = -8; a <= 8; ++a) {
        for (int b = -8; b <= 8; ++b) {
            const int expected = (a == 0 || b == 0) ? 0 : ((a > 0) == (b > 0) ? 1 : -1) * std::min(std::abs(a), std::abs(b));
            CHECK(coincidence_count(a, b, 8, SpikeSchedule::front_loaded) == expected);
            const AttentionScores s = snn_matmul_counts(
                one(a), one(b), 8, 1.0, 1.0, AttentionOptions{SpikeSchedule::front_loaded, Accumulation::coincident});
            CHECK(s.accumulated(0, 0) == expected);
        }
    }
}

TEST_CASE("spike schedules place every spike inside the window") {
    for (int k = 0; k <= 7; ++k) {
        for (SpikeSchedule schedule : {SpikeSchedule::front_loaded, SpikeSchedule::strided}) {
            int last = 0;
            for (int i = 1; i <= k; ++i) {
                const int t = spike_step(i, k, 7, schedule);
                CHECK(t > last);
                CHECK(t <= 7);
                last = t;
            }
        }
    }
    const std::vector<SpikeMatrix> steps = spike_steps(one(-3), 7, SpikeSchedule::front_loaded);
    REQUIRE(steps.size() == 7);
    int total = 0;
    for (const SpikeMatrix& s : steps) total += s(0, 0);
    CHECK(total == -3);
}

TEST_CASE("spike softmax rows sum to one and respect the causal mask") {
    Rng rng(4);
    IntMatrix q(5, 3), k(5, 3);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = static_cast<int>(rng.below(15)) - 7;
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = static_cast<int>(rng.below(15)) - 7;
    const AttentionScores s = snn_matmul_counts(q, k, 7, 0.1, 0.1);
    const Matrix p = snn_softmax(s, true);
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
        for (Eigen::Index j = 0; j < 5; ++j) {
            CHECK(p(i, j) >= 0.0f);
            if (j > i) CHECK(p(i, j) == 0.0f);
        }
    }
    const Matrix u = linear_normalize(Matrix::Constant(2, 3, 0.4f));
    CHECK(u(1, 2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("snn_matmul rate-codes real inputs") {
    Matrix q(1, 2), k(1, 2);
    q << 0.5f, -0.25f;
    k << 1.0f, 1.0f;
    const AttentionScores s = snn_matmul(q, k, 4, 1.0, 1.0);
    // counts q = [2, -1], k = [4, 4]
    CHECK(s.accumulated(0, 0) == 4);
    CHECK(decode_scores(s)(0, 0) == doctest::Approx(0.25));
    CHECK_THROWS(snn_matmul_counts(one(9), one(1), 8, 1.0, 1.0));
}

TEST_CASE("enum names round trip") {
    for (SpikeSchedule s : {SpikeSchedule::front_loaded, SpikeSchedule::strided}) {
        CHECK(spike_schedule_from_string(to_string(s)) == s);
    }
    for (Accumulation a : {Accumulation::cumulative_outer, Accumulation::coincident}) {
        CHECK(accumulation_from_string(to_string(a)) == a);
    }
}
