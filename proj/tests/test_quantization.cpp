#include "doctest.h"
#include "snnlm/quantization.hpp"
#include "snnlm/synapsis.hpp"

using namespace snnlm;

TEST_CASE("narrow quantizer levels and scale") {
    Matrix x(1, 4);
    x << -2.0f, -0.5f, 0.3f, 2.0f;
    const QuantResult q = quantize(x, QuantSpec::narrow(4));
    CHECK(q.scale == doctest::Approx(2.0 / 7.0));
    CHECK(q.levels(0, 0) == -7);
    CHECK(q.levels(0, 3) == 7);
    CHECK(q.levels(0, 1) == -2);  // -0.5 / (2/7) = -1.75
    CHECK(q.levels(0, 2) == 1);
    CHECK(compute_scale(Matrix::Zero(2, 2), QuantSpec::narrow(4)) == 1.0);
}

TEST_CASE("full-range symmetric reaches -2^(b-1) only by clipping") {
    const QuantSpec spec = QuantSpec::symmetric(4);
    Matrix x(1, 1);
    x << -10.0f;
    CHECK(quantize_with_scale(x, spec, 1.0).levels(0, 0) == -8);
}

TEST_CASE("asymmetric quantizer uses a zero point") {
    Matrix x(1, 3);
    x << -1.0f, 0.0f, 3.0f;
    const QuantResult q = quantize(x, QuantSpec::asymmetric(4));
    CHECK(q.scale == doctest::Approx(4.0 / 15.0));
    CHECK(q.levels(0, 0) == 0);
    CHECK(q.levels(0, 2) == 15);
    CHECK(q.values(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("straight-through gradient is clipped outside the range") {
    const QuantSpec spec = QuantSpec::narrow(4);
    Matrix x(1, 3);
    x << 0.5f, 1.2f, -3.0f;
    const Matrix g = Matrix::Ones(1, 3);
    const Matrix s = ste_grad(g, x, spec, 1.0 / 7.0);
    CHECK(s(0, 0) == 1.0f);
    CHECK(s(0, 1) == 0.0f);
    CHECK(s(0, 2) == 0.0f);
}

TEST_CASE("quantizer rejects invalid scales") {
    CHECK_THROWS_AS(quantize_with_scale(Matrix::Ones(1, 1), QuantSpec::narrow(4), 0.0), ArgumentError);
}

TEST_CASE("qsynapsis pre-activation matches the dense rounded product") {
    Rng rng(9);
    const Matrix w = rand_uniform(rng, 4, 6, -1.0f, 1.0f);
    const Vector b = rand_uniform(rng, 4, -0.1f, 0.1f);
    const Matrix x = rand_uniform(rng, 3, 6, -1.0f, 1.0f);
    const QuantSpec spec = QuantSpec::narrow(4);
    const QSynapsisResult r = qsynapsis_forward(w, b, spec, spec, x, 1.0 / 7.0, 0.25);
    const MatrixD pre = qsynapsis_preactivation(w, b, r.pre_levels, 1.0 / 7.0);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index o = 0; o < 4; ++o) {
            double acc = b(o);
            for (Eigen::Index j = 0; j < 6; ++j) acc += static_cast<double>(w(o, j)) * r.pre_levels(i, j) / 7.0;
            CHECK(pre(i, o) == doctest::Approx(acc).epsilon(1e-12));
            const double level = std::clamp(std::round(acc / 0.25), -7.0, 7.0);
            CHECK(r.z(i, o) == static_cast<float>(level * 0.25));
        }
    }
}
