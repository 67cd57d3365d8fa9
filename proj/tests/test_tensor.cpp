#include <set>

#include "doctest.h"
#include "snnlm/tensor.hpp"

using namespace snnlm;

TEST_CASE("matmul equals a naive triple loop") {
    Rng rng(1);
    const Matrix a = rand_uniform(rng, 5, 7, -1.0f, 1.0f);
    const Matrix b = rand_uniform(rng, 7, 3, -1.0f, 1.0f);
    const Matrix c = matmul(a, b);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 7; ++k) acc += static_cast<double>(a(i, k)) * b(k, j);
            CHECK(c(i, j) == static_cast<float>(acc));
        }
    }
}

TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("rng streams are reproducible and derived seeds differ") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    std::set<std::uint64_t> seeds;
    for (const char* name : {"train", "stdp", "audit.stream", "generate", "model.init"}) {
        seeds.insert(derive_seed(7, name));
    }
    CHECK(seeds.size() == 5);
    CHECK(derive_seed(7, "train") == derive_seed(7, "train"));
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.below(5) < 5u);
    }
}
