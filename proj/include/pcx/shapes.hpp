#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcx/errors.hpp"
#include "pcx/pointcloud.hpp"

namespace pcx {

enum class ShapeClass : int {
    sphere = 0,
    cube = 1,
    cone = 2,
    cylinder = 3,
    torus = 4,
    pyramid = 5,
};

inline constexpr int kNumClasses = 6;

inline const char* shape_name(ShapeClass c) {
    switch (c) {
        case ShapeClass::sphere: return "sphere";
        case ShapeClass::cube: return "cube";
        case ShapeClass::cone: return "cone";
        case ShapeClass::cylinder: return "cylinder";
        case ShapeClass::torus: return "torus";
        case ShapeClass::pyramid: return "pyramid";
    }
    throw ContractError("unknown shape class id");
}

inline std::optional<ShapeClass> parse_shape_class(const std::string& name) {
    for (int c = 0; c < kNumClasses; ++c)
        if (name == shape_name(ShapeClass(c))) return ShapeClass(c);
    return std::nullopt;
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

constexpr double kPi = std::numbers::pi;

// Canonical primitives, sized to roughly unit extent:
//   sphere    radius 1
//   cube      [-1,1]^3 surface
//   cone      apex (0,0,1), base disk radius 1 at z=-1
//   cylinder  radius 1, z in [-1,1], with caps
//   torus     major radius 1, tube radius 0.35
//   pyramid   square base [-1,1]^2 at z=-1, apex (0,0,1)
// Each sampler is uniform in surface area.
inline Vec3 sample_sphere(std::mt19937_64& rng) {
    double z = uniform(rng, -1.0, 1.0);
    double theta = uniform(rng, 0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(theta), r * std::sin(theta), z};
}

inline Vec3 sample_cube(std::mt19937_64& rng) {
    int face = int(uniform(rng, 0.0, 6.0));
    if (face > 5) face = 5;
    double u = uniform(rng, -1.0, 1.0);
    double v = uniform(rng, -1.0, 1.0);
    switch (face) {
        case 0: return {1.0, u, v};
        case 1: return {-1.0, u, v};
        case 2: return {u, 1.0, v};
        case 3: return {u, -1.0, v};
        case 4: return {u, v, 1.0};
        default: return {u, v, -1.0};
    }
}

inline Vec3 sample_cone(std::mt19937_64& rng) {
    const double slant = std::sqrt(1.0 + 4.0);  // base radius 1, height 2
    const double lateral_area = kPi * slant;
    const double base_area = kPi;
    if (uniform(rng, 0.0, lateral_area + base_area) < lateral_area) {
        // area element grows linearly with distance from the apex
        double u = std::sqrt(uniform(rng, 0.0, 1.0));
        double theta = uniform(rng, 0.0, 2.0 * kPi);
        return {u * std::cos(theta), u * std::sin(theta), 1.0 - 2.0 * u};
    }
    double r = std::sqrt(uniform(rng, 0.0, 1.0));
    double theta = uniform(rng, 0.0, 2.0 * kPi);
    return {r * std::cos(theta), r * std::sin(theta), -1.0};
}

inline Vec3 sample_cylinder(std::mt19937_64& rng) {
    const double lateral_area = 2.0 * kPi * 2.0;
    const double cap_area = kPi;
    double pickv = uniform(rng, 0.0, lateral_area + 2.0 * cap_area);
    double theta = uniform(rng, 0.0, 2.0 * kPi);
    if (pickv < lateral_area)
        return {std::cos(theta), std::sin(theta), uniform(rng, -1.0, 1.0)};
    double r = std::sqrt(uniform(rng, 0.0, 1.0));
    double z = pickv < lateral_area + cap_area ? 1.0 : -1.0;
    return {r * std::cos(theta), r * std::sin(theta), z};
}

inline Vec3 sample_torus(std::mt19937_64& rng) {
    const double major = 1.0, minor = 0.35;
    double theta = uniform(rng, 0.0, 2.0 * kPi);
    // rejection-sample the tube angle; density is (major + minor cos phi)
    double phi;
    for (;;) {
        phi = uniform(rng, 0.0, 2.0 * kPi);
        double accept = (major + minor * std::cos(phi)) / (major + minor);
        if (uniform(rng, 0.0, 1.0) < accept) break;
    }
    double ring = major + minor * std::cos(phi);
    return {ring * std::cos(theta), ring * std::sin(theta),
            minor * std::sin(phi)};
}

inline Vec3 sample_triangle(const Vec3& a, const Vec3& b, const Vec3& c,
                            std::mt19937_64& rng) {
    double u = uniform(rng, 0.0, 1.0);
    double v = uniform(rng, 0.0, 1.0);
    double su = std::sqrt(u);
    double w0 = 1.0 - su, w1 = su * (1.0 - v), w2 = su * v;
    return {w0 * a[0] + w1 * b[0] + w2 * c[0],
            w0 * a[1] + w1 * b[1] + w2 * c[1],
            w0 * a[2] + w1 * b[2] + w2 * c[2]};
}

inline Vec3 sample_pyramid(std::mt19937_64& rng) {
    const Vec3 apex{0.0, 0.0, 1.0};
    const Vec3 corners[4] = {
        {-1.0, -1.0, -1.0}, {1.0, -1.0, -1.0}, {1.0, 1.0, -1.0}, {-1.0, 1.0, -1.0}};
    const double base_area = 4.0;
    const double face_area = std::sqrt(20.0) / 2.0;  // per triangular side
    double pickv = uniform(rng, 0.0, base_area + 4.0 * face_area);
    if (pickv < base_area)
        return {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), -1.0};
    int face = int((pickv - base_area) / face_area);
    if (face > 3) face = 3;
    return sample_triangle(corners[face], corners[(face + 1) % 4], apex, rng);
}

}  // namespace detail

// One point drawn uniformly from the surface of the canonical primitive.
inline Vec3 sample_primitive(ShapeClass c, std::mt19937_64& rng) {
    switch (c) {
        case ShapeClass::sphere: return detail::sample_sphere(rng);
        case ShapeClass::cube: return detail::sample_cube(rng);
        case ShapeClass::cone: return detail::sample_cone(rng);
        case ShapeClass::cylinder: return detail::sample_cylinder(rng);
        case ShapeClass::torus: return detail::sample_torus(rng);
        case ShapeClass::pyramid: return detail::sample_pyramid(rng);
    }
    throw ContractError("unknown shape class id");
}

// Labeled cloud sampled from a primitive surface: random scale in [0.7,1.0],
// random rotation about z, Gaussian jitter (sigma 0.01), then unit-sphere
// normalization. Fully determined by (class, n_points, seed).
inline PointCloud generate_shape(ShapeClass c, std::size_t n_points,
                                 std::uint64_t seed) {
    if (n_points < 64)
        throw ContractError("generate_shape: need at least 64 points");
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                      std::uint32_t(int(c)), std::uint32_t(n_points)};
    std::mt19937_64 rng(seq);
    const double scale = detail::uniform(rng, 0.7, 1.0);
    const double zrot = detail::uniform(rng, 0.0, 2.0 * detail::kPi);
    const double cz = std::cos(zrot), sz = std::sin(zrot);
    std::normal_distribution<double> jitter(0.0, 0.01);
    PointCloud pc;
    pc.points.reserve(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        Vec3 p = sample_primitive(c, rng);
        for (int d = 0; d < 3; ++d) p[d] *= scale;
        Vec3 q{cz * p[0] - sz * p[1], sz * p[0] + cz * p[1], p[2]};
        for (int d = 0; d < 3; ++d) q[d] += jitter(rng);
        pc.points.push_back(q);
    }
    pc.label = int(c);
    pc = normalize(pc);
    return pc;
}

using Dataset = std::vector<PointCloud>;

// Seed scheme keeping train and test pools disjoint for any base seed and
// per-class count below 100000.
inline std::uint64_t cloud_seed(std::uint64_t base_seed, bool test_split,
                                int class_index, std::size_t index) {
    std::uint64_t split_offset = test_split ? 50'000'000ull : 0ull;
    return base_seed + split_offset + std::uint64_t(class_index) * 100'000ull +
           index;
}

// Class-balanced split: per_class clouds for each of the 6 primitives.
inline Dataset generate_dataset(std::size_t per_class, std::size_t n_points,
                                std::uint64_t base_seed, bool test_split) {
    Dataset out;
    out.reserve(per_class * kNumClasses);
    for (int c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < per_class; ++i)
            out.push_back(generate_shape(
                ShapeClass(c), n_points,
                cloud_seed(base_seed, test_split, c, i)));
    return out;
}

}  // namespace pcx
