#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "pcx/errors.hpp"
#include "pcx/tensor.hpp"

namespace pcx {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 sub(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline double distance(const Vec3& a, const Vec3& b) { return norm(sub(a, b)); }

// A 3-D point set with an optional class label and an optional mask marking
// injected outlier points. Treated as an immutable value: transforms return
// new clouds. At least 4 points are required.
struct PointCloud {
    std::vector<Vec3> points;
    std::optional<int> label;
    std::optional<std::vector<bool>> outlier_mask;

    std::size_t size() const { return points.size(); }

    void validate() const {
        if (points.size() < 4)
            throw ContractError("point cloud must contain at least 4 points");
        if (outlier_mask && outlier_mask->size() != points.size())
            throw ContractError("outlier mask length does not match point count");
    }

    Vec3 centroid() const {
        Vec3 c{0, 0, 0};
        for (const Vec3& p : points)
            for (int d = 0; d < 3; ++d) c[d] += p[d];
        for (int d = 0; d < 3; ++d) c[d] /= double(points.size());
        return c;
    }

    // N x 3 tensor view of the coordinates.
    Tensor to_tensor() const {
        Tensor t = Tensor::zeros({points.size(), 3});
        for (std::size_t i = 0; i < points.size(); ++i)
            for (int d = 0; d < 3; ++d) t.at(i, std::size_t(d)) = points[i][d];
        return t;
    }

    static PointCloud from_tensor(const Tensor& t) {
        if (t.ndim() != 2 || t.cols() != 3)
            throw DimensionError("point cloud tensor must be N x 3");
        PointCloud pc;
        pc.points.resize(t.rows());
        for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t d = 0; d < 3; ++d) pc.points[i][d] = t.at(i, d);
        pc.validate();
        return pc;
    }
};

// Centers the cloud on its centroid and scales the farthest point to unit
// norm. Idempotent up to floating-point noise.
inline PointCloud normalize(const PointCloud& pc) {
    pc.validate();
    PointCloud out = pc;
    Vec3 c = pc.centroid();
    double max_norm = 0.0;
    for (Vec3& p : out.points) {
        for (int d = 0; d < 3; ++d) p[d] -= c[d];
        max_norm = std::max(max_norm, norm(p));
    }
    if (max_norm > 0.0)
        for (Vec3& p : out.points)
            for (int d = 0; d < 3; ++d) p[d] /= max_norm;
    return out;
}

// Rigid rotation about a unit axis by Rodrigues' formula. Label and outlier
// mask are carried through unchanged.
inline PointCloud rotate(const PointCloud& pc, const Vec3& axis, double angle) {
    pc.validate();
    const double len = norm(axis);
    if (std::abs(len - 1.0) > 1e-9)
        throw ContractError("rotate: axis must be a unit vector");
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double x = axis[0], y = axis[1], z = axis[2];
    const double r[3][3] = {
        {c + t * x * x, t * x * y - s * z, t * x * z + s * y},
        {t * x * y + s * z, c + t * y * y, t * y * z - s * x},
        {t * x * z - s * y, t * y * z + s * x, c + t * z * z}};
    PointCloud out = pc;
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        const Vec3& p = pc.points[i];
        for (int d = 0; d < 3; ++d)
            out.points[i][d] = r[d][0] * p[0] + r[d][1] * p[1] + r[d][2] * p[2];
    }
    return out;
}

// Appends 10 * severity points drawn uniformly from [-1,1]^3 and flags them
// in the outlier mask. The result is intentionally not re-normalized, so the
// added points may fall outside the unit sphere.
inline PointCloud add_global_outliers(const PointCloud& pc, int severity,
                                      std::uint64_t seed) {
    pc.validate();
    if (severity < 1 || severity > 5)
        throw ContractError("add_global_outliers: severity must be in 1..5");
    PointCloud out = pc;
    if (!out.outlier_mask)
        out.outlier_mask = std::vector<bool>(pc.points.size(), false);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int count = 10 * severity;
    for (int i = 0; i < count; ++i) {
        Vec3 p;
        for (int d = 0; d < 3; ++d) p[d] = dist(rng);
        out.points.push_back(p);
        out.outlier_mask->push_back(true);
    }
    return out;
}

}  // namespace pcx
