#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcx/network.hpp"
#include "pcx/shapes.hpp"
#include "pcx/tensor.hpp"

namespace testutil {

// Central finite differences of a scalar-valued function at x.
inline pcx::Tensor finite_diff_grad(
    const std::function<double(const pcx::Tensor&)>& fn, const pcx::Tensor& x,
    double h = 1e-5) {
    pcx::Tensor grad = pcx::Tensor::zeros(x.shape());
    pcx::Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double orig = probe[i];
        probe[i] = orig + h;
        double up = fn(probe);
        probe[i] = orig - h;
        double down = fn(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Relative error with an absolute floor of 1, so near-zero entries compare
// absolutely.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const pcx::Tensor& a, const pcx::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

// Element-wise triple loop, independent of the Graph implementation.
inline pcx::Tensor matmul_oracle(const pcx::Tensor& a, const pcx::Tensor& b) {
    pcx::Tensor c = pcx::Tensor::zeros({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k)
                acc += a.at(i, k) * b.at(k, j);
            c.at(i, j) = acc;
        }
    return c;
}

// Small model for fast unit tests: 3 -> 8 -> 8 features, 6 classes.
inline pcx::ModelConfig tiny_config(pcx::Pooling pooling = pcx::Pooling::max) {
    pcx::ModelConfig c;
    c.featurizer_widths = {8, 8};
    c.head_widths = {8, 6};
    c.pooling = pooling;
    return c;
}

inline pcx::Dataset tiny_dataset(std::size_t per_class, std::size_t points,
                                 std::uint64_t seed, bool test_split = false) {
    return pcx::generate_dataset(per_class, points, seed, test_split);
}

// Minimal ASCII PLY parser, independent of pcx::write_ply, used as the
// round-trip oracle. Throws std::runtime_error on malformed input.
struct PlyContents {
    std::vector<pcx::Vec3> points;
    std::vector<std::array<int, 3>> colors;
};

inline PlyContents parse_ply_ascii(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::size_t n = 0;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.rfind("element vertex", 0) == 0) n = std::stoul(line.substr(15));
        if (line == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) throw std::runtime_error("no end_header in " + path);
    PlyContents out;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw std::runtime_error("truncated vertex list in " + path);
        std::istringstream ss(line);
        pcx::Vec3 p;
        std::array<int, 3> c;
        if (!(ss >> p[0] >> p[1] >> p[2] >> c[0] >> c[1] >> c[2]))
            throw std::runtime_error("malformed vertex line in " + path);
        out.points.push_back(p);
        out.colors.push_back(c);
    }
    return out;
}

}  // namespace testutil
