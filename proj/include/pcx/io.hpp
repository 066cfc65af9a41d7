#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pcx/errors.hpp"
#include "pcx/pointcloud.hpp"
#include "pcx/shapes.hpp"

namespace pcx {

// ---- PLY export ----------------------------------------------------------

// ASCII PLY with one scalar rendered as a blue-to-red vertex color ramp.
// The scalar is min-max normalized; a constant scalar maps to t=1 (red).
// Coordinates are written with 6 fixed decimals, colors rounded half-up.
inline void write_ply(const PointCloud& pc, const std::vector<double>& scalar,
                      const std::string& path) {
    pc.validate();
    if (scalar.size() != pc.size())
        throw ContractError("write_ply: scalar length does not match point count");

    double lo = scalar[0], hi = scalar[0];
    for (double v : scalar) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::ofstream out(path);
    if (!out) throw IoError("write_ply: cannot open " + path);
    out << "ply\nformat ascii 1.0\nelement vertex " << pc.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\n"
           "end_header\n";
    char line[160];
    for (std::size_t i = 0; i < pc.size(); ++i) {
        double t = hi > lo ? (scalar[i] - lo) / (hi - lo) : 1.0;
        int red = int(std::floor(255.0 * t + 0.5));
        int blue = int(std::floor(255.0 * (1.0 - t) + 0.5));
        std::snprintf(line, sizeof line, "%.6f %.6f %.6f %d 0 %d\n",
                      pc.points[i][0], pc.points[i][1], pc.points[i][2], red,
                      blue);
        out << line;
    }
    if (!out) throw IoError("write_ply: write failed on " + path);
}

// ---- XYZ text format ------------------------------------------------------

// One "x y z" triple per line, 9 significant digits.
inline void write_xyz(const PointCloud& pc, const std::string& path) {
    pc.validate();
    std::ofstream out(path);
    if (!out) throw IoError("write_xyz: cannot open " + path);
    char line[128];
    for (const Vec3& p : pc.points) {
        std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
        out << line;
    }
    if (!out) throw IoError("write_xyz: write failed on " + path);
}

inline PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_xyz: cannot open " + path);
    PointCloud pc;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        Vec3 p;
        std::string extra;
        if (!(ss >> p[0] >> p[1] >> p[2]) || (ss >> extra))
            throw ParseError("read_xyz: malformed line " + std::to_string(line_no) +
                             " in " + path);
        pc.points.push_back(p);
    }
    if (line_no == 0)
        throw ParseError("read_xyz: empty file " + path);
    pc.validate();
    return pc;
}

// ---- dataset directory layout ---------------------------------------------
// <root>/<split>/<class>/<seed>.xyz with the label implied by the class dir.

inline void write_dataset_dir(const std::string& root, std::size_t per_class,
                              std::size_t test_per_class, std::size_t n_points,
                              std::uint64_t base_seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    for (int split = 0; split < 2; ++split) {
        bool test = split == 1;
        std::size_t count = test ? test_per_class : per_class;
        for (int c = 0; c < kNumClasses; ++c) {
            fs::path dir = fs::path(root) / (test ? "test" : "train") /
                           shape_name(ShapeClass(c));
            fs::create_directories(dir, ec);
            if (ec) throw IoError("cannot create directory " + dir.string());
            for (std::size_t i = 0; i < count; ++i) {
                std::uint64_t seed = cloud_seed(base_seed, test, c, i);
                PointCloud pc = generate_shape(ShapeClass(c), n_points, seed);
                write_xyz(pc, (dir / (std::to_string(seed) + ".xyz")).string());
            }
        }
    }
}

inline Dataset load_dataset_dir(const std::string& root,
                                const std::string& split) {
    namespace fs = std::filesystem;
    fs::path base = fs::path(root) / split;
    if (!fs::is_directory(base))
        throw IoError("dataset split directory not found: " + base.string());
    Dataset out;
    for (int c = 0; c < kNumClasses; ++c) {
        fs::path dir = base / shape_name(ShapeClass(c));
        if (!fs::is_directory(dir))
            throw IoError("missing class directory: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.path().extension() == ".xyz")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
            PointCloud pc = read_xyz(f.string());
            pc.label = c;
            out.push_back(std::move(pc));
        }
    }
    if (out.empty()) throw IoError("dataset is empty under " + base.string());
    return out;
}

// ---- CSV outputs -----------------------------------------------------------

inline void write_csv(const std::string& path, const std::string& header,
                      const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    out << header << "\n";
    char buf[64];
    for (const auto& [key, value] : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", value);
        out << key << "," << buf << "\n";
    }
    if (!out) throw IoError("write failed on " + path);
}

}  // namespace pcx
