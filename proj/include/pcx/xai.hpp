#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcx/autodiff.hpp"
#include "pcx/errors.hpp"
#include "pcx/network.hpp"
#include "pcx/pointcloud.hpp"
#include "pcx/tensor.hpp"

namespace pcx {

// N x F pre-bottleneck feature matrix.
using FeatureMatrix = Tensor;

enum class Method { fbi, fbi_p, critical, gradient, intgrad, random };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::fbi: return "fbi";
        case Method::fbi_p: return "fbi_p";
        case Method::critical: return "critical";
        case Method::gradient: return "gradient";
        case Method::intgrad: return "intgrad";
        case Method::random: return "random";
    }
    throw ContractError("unknown method");
}

inline std::optional<Method> parse_method(const std::string& name) {
    for (Method m : {Method::fbi, Method::fbi_p, Method::critical,
                     Method::gradient, Method::intgrad, Method::random})
        if (name == method_name(m)) return m;
    return std::nullopt;
}

// Per-point scalar importance. Higher means more influential; rankings break
// ties by the lower point index.
struct InfluenceMap {
    Method method = Method::fbi;
    std::vector<double> scores;
};

// Indices sorted by descending score, ties by ascending index.
inline std::vector<std::size_t> ranking(const InfluenceMap& map) {
    std::vector<std::size_t> idx(map.scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (map.scores[a] != map.scores[b]) return map.scores[a] > map.scores[b];
        return a < b;
    });
    return idx;
}

// ---- feature-space estimators (no backward pass) ---------------------------

// L1 norm of each point's pre-bottleneck feature row.
inline InfluenceMap fbi(const FeatureMatrix& f) {
    const std::size_t n = f.rows(), cols = f.cols();
    InfluenceMap map{Method::fbi, std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = &f.data()[i * cols];
        for (std::size_t k = 0; k < cols; ++k) s += std::abs(row[k]);
        map.scores[i] = s;
    }
    return map;
}

// L^p generalization over the ablation grid p in [0.25, 8]. p == 1 is
// computed as a plain sum so it matches fbi exactly.
inline InfluenceMap fbi_p(const FeatureMatrix& f, double p) {
    if (p < 0.25 || p > 8.0)
        throw ContractError("fbi_p: order must lie in [0.25, 8]");
    if (p == 1.0) {
        InfluenceMap map = fbi(f);
        map.method = Method::fbi_p;
        return map;
    }
    const std::size_t n = f.rows(), cols = f.cols();
    InfluenceMap map{Method::fbi_p, std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = &f.data()[i * cols];
        for (std::size_t k = 0; k < cols; ++k) s += std::pow(std::abs(row[k]), p);
        map.scores[i] = std::pow(s, 1.0 / p);
    }
    return map;
}

// Binary map of the points that strictly win the column-wise max for at
// least one feature (the points left active after max-pooling). An exact tie
// leaves that feature with no winner.
inline InfluenceMap critical_points(const FeatureMatrix& f) {
    const std::size_t n = f.rows(), cols = f.cols();
    InfluenceMap map{Method::critical, std::vector<double>(n, 0.0)};
    for (std::size_t k = 0; k < cols; ++k) {
        double best = f.at(0, k);
        std::size_t bi = 0, hits = 1;
        for (std::size_t i = 1; i < n; ++i) {
            double v = f.at(i, k);
            if (v > best) {
                best = v;
                bi = i;
                hits = 1;
            } else if (v == best) {
                ++hits;
            }
        }
        if (hits == 1) map.scores[bi] = 1.0;
    }
    return map;
}

// The Critical Set: indices with CP(i) = 1.
inline std::vector<std::size_t> critical_set(const InfluenceMap& cp) {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < cp.scores.size(); ++i)
        if (cp.scores[i] == 1.0) s.push_back(i);
    return s;
}

// ---- gradient-based estimators ----------------------------------------------

// L2 norm over coordinates of the predicted-class logit gradient per point.
// One forward plus one backward pass.
inline InfluenceMap gradient_saliency(const ModelBundle& m, const PointCloud& pc) {
    Graph g;
    ForwardVars fv = forward_rec(g, m, pc.to_tensor(), true);
    const Tensor& logits = g.value(fv.logits);
    std::size_t c = 0;
    for (std::size_t j = 1; j < logits.numel(); ++j)
        if (logits[j] > logits[c]) c = j;
    g.backward(g.pick(fv.logits, c));

    const std::size_t n = pc.size();
    InfluenceMap map{Method::gradient, std::vector<double>(n, 0.0)};
    if (g.has_grad(fv.input)) {
        const Tensor& gx = g.grad(fv.input);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t d = 0; d < 3; ++d) s += gx.at(i, d) * gx.at(i, d);
            map.scores[i] = std::sqrt(s);
        }
    }
    return map;
}

struct IntgradResult {
    InfluenceMap map;                      // absolute attributions
    std::vector<double> signed_attribution;  // per point, summed over coords
    double prediction_delta = 0.0;  // logit(input) - logit(baseline), class fixed
};

// Path attribution from the cloud collapsed onto its centroid (the
// non-influential region) to the actual cloud, midpoint Riemann rule, with
// the explained class frozen to the prediction on the full input.
inline IntgradResult integrated_gradients_full(const ModelBundle& m,
                                               const PointCloud& pc, int steps) {
    if (steps < 2)
        throw ContractError("integrated_gradients: need at least 2 steps");
    const std::size_t n = pc.size();
    const Vec3 base = pc.centroid();
    Tensor x = pc.to_tensor();

    std::size_t c = 0;
    {
        Tensor logits = forward(m, pc).logits;
        for (std::size_t j = 1; j < logits.numel(); ++j)
            if (logits[j] > logits[c]) c = j;
    }

    std::vector<double> accum(n * 3, 0.0);
    for (int s = 0; s < steps; ++s) {
        double t = (double(s) + 0.5) / double(steps);
        Tensor xt = Tensor::zeros({n, 3});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < 3; ++d)
                xt.at(i, d) = base[d] + t * (x.at(i, d) - base[d]);
        Graph g;
        ForwardVars fv = forward_rec(g, m, std::move(xt), true);
        g.backward(g.pick(fv.logits, c));
        if (!g.has_grad(fv.input)) continue;
        const Tensor& gx = g.grad(fv.input);
        for (std::size_t i = 0; i < n * 3; ++i) accum[i] += gx[i];
    }

    IntgradResult res;
    res.map.method = Method::intgrad;
    res.map.scores.resize(n);
    res.signed_attribution.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double signed_sum = 0.0;
        for (std::size_t d = 0; d < 3; ++d)
            signed_sum += (accum[i * 3 + d] / double(steps)) *
                          (x.at(i, d) - base[d]);
        res.signed_attribution[i] = signed_sum;
        res.map.scores[i] = std::abs(signed_sum);
    }

    {
        PointCloud collapsed = pc;
        for (Vec3& p : collapsed.points) p = base;
        double at_input = forward(m, pc).logits[c];
        double at_base = forward(m, collapsed).logits[c];
        res.prediction_delta = at_input - at_base;
    }
    return res;
}

inline InfluenceMap integrated_gradients(const ModelBundle& m,
                                         const PointCloud& pc, int steps) {
    return integrated_gradients_full(m, pc, steps).map;
}

// Seeded random permutation of 1..n as scores.
inline InfluenceMap random_ranking(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ContractError("random_ranking: need n >= 1");
    InfluenceMap map{Method::random, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) map.scores[i] = double(i + 1);
    std::mt19937_64 rng(seed);
    std::shuffle(map.scores.begin(), map.scores.end(), rng);
    return map;
}

// ---- uniform dispatch ---------------------------------------------------------

struct EstimatorSpec {
    Method method = Method::fbi;
    double p = 2.0;       // fbi_p order
    int steps = 200;      // intgrad path resolution
    std::uint64_t seed = 0;  // random baseline
};

inline InfluenceMap compute_influence(const ModelBundle& m, const PointCloud& pc,
                                      const EstimatorSpec& spec) {
    switch (spec.method) {
        case Method::fbi: return fbi(forward(m, pc).features);
        case Method::fbi_p: return fbi_p(forward(m, pc).features, spec.p);
        case Method::critical: return critical_points(forward(m, pc).features);
        case Method::gradient: return gradient_saliency(m, pc);
        case Method::intgrad: return integrated_gradients(m, pc, spec.steps);
        case Method::random: return random_ranking(pc.size(), spec.seed);
    }
    throw ContractError("unknown method");
}

}  // namespace pcx
