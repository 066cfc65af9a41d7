#include <catch_amalgamated.hpp>

#include "pcx/tensor.hpp"

#include <random>

using pcx::DimensionError;
using pcx::Tensor;

TEST_CASE("shape product must match data length") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), DimensionError);
    CHECK_NOTHROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    CHECK(Tensor::zeros({4, 5}).numel() == 20);
}

TEST_CASE("2-D element access is row-major") {
    Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(0, 2) == 3.0);
    CHECK(t.at(1, 0) == 4.0);
    CHECK(t[5] == 6.0);
}

TEST_CASE("non-2-D tensors reject row/col access") {
    Tensor v = Tensor::zeros({4});
    CHECK_THROWS_AS(v.rows(), DimensionError);
    CHECK_THROWS_AS(v.at(0, 0), DimensionError);
}

TEST_CASE("ragged literals are rejected") {
    CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("uniform fill is seeded and in range") {
    std::mt19937_64 a(7), b(7);
    Tensor x = Tensor::uniform({3, 3}, -1, 1, a);
    Tensor y = Tensor::uniform({3, 3}, -1, 1, b);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        CHECK(x[i] == y[i]);
        CHECK(x[i] >= -1.0);
        CHECK(x[i] <= 1.0);
    }
}
