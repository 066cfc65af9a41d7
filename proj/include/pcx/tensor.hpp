#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "pcx/errors.hpp"

namespace pcx {

// Dense row-major tensor of doubles. The shape is fixed at construction;
// element values may be overwritten in place.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel_of(shape_) != data_.size())
            throw DimensionError("tensor data length does not match shape product");
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::vector<double> data(numel_of(shape), 0.0);
        return Tensor(std::move(shape), std::move(data));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    // Row-major 2-D literal, e.g. Tensor::from_rows({{1,2},{3,4}}).
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c)
                throw DimensionError("ragged rows in tensor literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi,
                          std::mt19937_64& rng) {
        std::uniform_real_distribution<double> dist(lo, hi);
        std::vector<double> data(numel_of(shape));
        for (double& v : data) v = dist(rng);
        return Tensor(std::move(shape), std::move(data));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool is_scalar() const { return numel() == 1; }

    std::size_t rows() const {
        require_2d();
        return shape_[0];
    }
    std::size_t cols() const {
        require_2d();
        return shape_[1];
    }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    double at(std::size_t i, std::size_t j) const {
        require_2d();
        return data_[i * shape_[1] + j];
    }
    double& at(std::size_t i, std::size_t j) {
        require_2d();
        return data_[i * shape_[1] + j];
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    // Marks leaves whose gradient should be produced by Graph::backward.
    bool requires_grad = false;

private:
    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }
    void require_2d() const {
        if (shape_.size() != 2)
            throw DimensionError("operation requires a 2-D tensor");
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace pcx
