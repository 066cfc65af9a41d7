#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "pcx/errors.hpp"
#include "pcx/pointcloud.hpp"

namespace pcx {

// Exact k-nearest-neighbor graph (brute force O(N^2)). `h` is the largest
// distance over all reported neighbor pairs, the sampling-resolution scale.
struct KnnGraph {
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> neighbors;      // per point, size k
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected, i<j
    double h = 0.0;
    bool connected = false;
};

namespace detail {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace detail

inline KnnGraph build_knn_graph(const PointCloud& pc, std::size_t k) {
    pc.validate();
    const std::size_t n = pc.size();
    if (k < 1 || k >= n)
        throw ContractError("build_knn_graph: require 1 <= k < N");

    KnnGraph g;
    g.k = k;
    g.neighbors.resize(n);

    std::vector<std::pair<double, std::size_t>> cand(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            cand[m++] = {distance(pc.points[i], pc.points[j]), j};
        }
        // distance ties resolved by lower index for determinism
        std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(k),
                          cand.end());
        g.neighbors[i].resize(k);
        for (std::size_t t = 0; t < k; ++t) {
            g.neighbors[i][t] = cand[t].second;
            g.h = std::max(g.h, cand[t].first);
        }
    }

    detail::UnionFind uf(n);
    std::vector<std::vector<bool>> seen(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : g.neighbors[i]) {
            std::size_t a = std::min(i, j), b = std::max(i, j);
            if (!seen[a][b]) {
                seen[a][b] = true;
                g.edges.emplace_back(a, b);
                uf.unite(a, b);
            }
        }

    std::size_t root = uf.find(0);
    g.connected = true;
    for (std::size_t i = 1; i < n; ++i)
        if (uf.find(i) != root) {
            g.connected = false;
            break;
        }
    return g;
}

}  // namespace pcx
