#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pcx/errors.hpp"
#include "pcx/knn.hpp"
#include "pcx/network.hpp"
#include "pcx/pointcloud.hpp"
#include "pcx/shapes.hpp"
#include "pcx/xai.hpp"

namespace pcx {

// Dataset loops are embarrassingly parallel over clouds; results land in
// per-index slots so the aggregation order stays deterministic.
inline void parallel_for(std::size_t n, std::size_t jobs,
                         const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(jobs, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (std::thread& t : pool) t.join();
}

// ---- perturbation test -------------------------------------------------------

// Accuracy after removing the top-ranked ceil(ratio*N) points, per drop
// ratio, averaged over the dataset. AUC is the trapezoidal area in percent;
// lower means the estimator found the influential points.
struct PerturbationCurve {
    std::vector<double> drop_ratios;
    std::vector<double> accuracies;
    double auc = 0.0;
};

inline std::vector<double> default_drop_ratios() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

inline double curve_auc(const std::vector<double>& ratios,
                        const std::vector<double>& accuracies) {
    if (ratios.size() != accuracies.size() || ratios.empty())
        throw ContractError("curve_auc: ratio/accuracy length mismatch");
    if (ratios.size() == 1) return 100.0 * accuracies[0];
    double area = 0.0, width = 0.0;
    for (std::size_t i = 0; i + 1 < ratios.size(); ++i) {
        double d = ratios[i + 1] - ratios[i];
        area += 0.5 * (accuracies[i] + accuracies[i + 1]) * d;
        width += d;
    }
    return 100.0 * area / width;
}

// The remainder after deleting the top-`drop` ranked points, original order
// preserved.
inline PointCloud remove_top_ranked(const PointCloud& pc,
                                    const std::vector<std::size_t>& rank,
                                    std::size_t drop) {
    const std::size_t n = pc.size();
    if (drop + 4 > n)
        throw ContractError("perturbation: fewer than 4 points would remain");
    std::vector<bool> dropped(n, false);
    for (std::size_t r = 0; r < drop; ++r) dropped[rank[r]] = true;
    PointCloud out;
    out.label = pc.label;
    out.points.reserve(n - drop);
    for (std::size_t i = 0; i < n; ++i)
        if (!dropped[i]) out.points.push_back(pc.points[i]);
    return out;
}

inline PerturbationCurve perturbation_test(
    const ModelBundle& m, const Dataset& dataset, const EstimatorSpec& spec,
    std::vector<double> ratios = default_drop_ratios(), std::size_t jobs = 1) {
    if (dataset.empty()) throw ContractError("perturbation_test: empty dataset");
    for (double r : ratios)
        if (r >= 1.0 || r <= 0.0)
            throw ContractError("perturbation_test: ratios must lie in (0,1)");
    if (!std::is_sorted(ratios.begin(), ratios.end()))
        throw ContractError("perturbation_test: ratios must be ascending");
    const double max_ratio = ratios.back();
    for (const PointCloud& pc : dataset)
        if (double(pc.size()) <
            std::ceil(max_ratio * double(pc.size())) + 4.0)
            throw ContractError("perturbation_test: cloud too small for max ratio");

    std::vector<std::vector<char>> correct(
        dataset.size(), std::vector<char>(ratios.size(), 0));
    parallel_for(dataset.size(), jobs, [&](std::size_t ci) {
        const PointCloud& pc = dataset[ci];
        EstimatorSpec local = spec;
        if (spec.method == Method::random) local.seed = spec.seed + ci;
        InfluenceMap map = compute_influence(m, pc, local);
        std::vector<std::size_t> rank = ranking(map);
        for (std::size_t ri = 0; ri < ratios.size(); ++ri) {
            std::size_t drop =
                std::size_t(std::ceil(ratios[ri] * double(pc.size())));
            PointCloud rest = remove_top_ranked(pc, rank, drop);
            correct[ci][ri] =
                pc.label && predict_class(m, rest) == *pc.label ? 1 : 0;
        }
    });

    PerturbationCurve curve;
    curve.drop_ratios = std::move(ratios);
    curve.accuracies.resize(curve.drop_ratios.size(), 0.0);
    for (std::size_t ri = 0; ri < curve.drop_ratios.size(); ++ri) {
        double hits = 0.0;
        for (std::size_t ci = 0; ci < dataset.size(); ++ci)
            hits += correct[ci][ri];
        curve.accuracies[ri] = hits / double(dataset.size());
    }
    curve.auc = curve_auc(curve.drop_ratios, curve.accuracies);
    return curve;
}

// ---- timing benchmark ----------------------------------------------------------

struct TimingEntry {
    Method method = Method::fbi;
    double median_ms = 0.0;
};

// Feature-space estimators (fbi, fbi_p, critical) are timed on a cached
// feature matrix, excluding the shared forward pass; gradient-based ones are
// timed end to end. Must run in a single execution context.
inline std::vector<TimingEntry> timing_bench(const ModelBundle& m,
                                             const PointCloud& pc,
                                             const std::vector<EstimatorSpec>& specs,
                                             std::size_t repeats = 51) {
    if (repeats < 20)
        throw ContractError("timing_bench: need at least 20 repeats");
    using clock = std::chrono::steady_clock;
    FeatureMatrix cached = forward(m, pc).features;

    std::vector<TimingEntry> out;
    for (const EstimatorSpec& spec : specs) {
        const bool feature_space = spec.method == Method::fbi ||
                                   spec.method == Method::fbi_p ||
                                   spec.method == Method::critical;
        // inner batching keeps sub-10us measurements above timer noise
        const std::size_t inner = feature_space ? 128 : 1;
        volatile double sink = 0.0;
        auto run_once = [&] {
            if (spec.method == Method::fbi)
                sink = sink + fbi(cached).scores[0];
            else if (spec.method == Method::fbi_p)
                sink = sink + fbi_p(cached, spec.p).scores[0];
            else if (spec.method == Method::critical)
                sink = sink + critical_points(cached).scores[0];
            else
                sink = sink + compute_influence(m, pc, spec).scores[0];
        };
        for (int w = 0; w < 3; ++w) run_once();  // warm-up, excluded
        std::vector<double> samples(repeats);
        for (std::size_t r = 0; r < repeats; ++r) {
            auto t0 = clock::now();
            for (std::size_t i = 0; i < inner; ++i) run_once();
            auto t1 = clock::now();
            samples[r] =
                std::chrono::duration<double, std::milli>(t1 - t0).count() /
                double(inner);
        }
        std::sort(samples.begin(), samples.end());
        out.push_back({spec.method, samples[repeats / 2]});
    }
    return out;
}

// ---- rotation deviation --------------------------------------------------------

struct RotationOptions {
    std::vector<double> angles_deg = {30, 60, 90, 120, 150, 180};
    std::vector<Vec3> axes = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
};

struct RotationReport {
    double delta_percent = 0.0;
    std::size_t excluded_points = 0;  // FBI_clean below the 1e-9 guard
    std::size_t total_points = 0;
    bool warning = false;  // more than 1% of points excluded
};

// Mean relative per-point FBI change across all rotations, shapes, and
// points, as a percentage of the clean FBI.
inline RotationReport rotation_deviation(const ModelBundle& m,
                                         const Dataset& dataset,
                                         const RotationOptions& opt = {},
                                         std::size_t jobs = 1) {
    if (dataset.empty()) throw ContractError("rotation_deviation: empty dataset");
    if (opt.angles_deg.empty() || opt.axes.empty())
        throw ContractError("rotation_deviation: no severities given");

    struct CloudAccum {
        double sum = 0.0;
        std::size_t terms = 0;
        std::size_t excluded = 0;
    };
    std::vector<CloudAccum> acc(dataset.size());
    parallel_for(dataset.size(), jobs, [&](std::size_t ci) {
        const PointCloud& pc = dataset[ci];
        std::vector<double> clean = fbi(forward(m, pc).features).scores;
        std::vector<bool> keep(pc.size());
        for (std::size_t i = 0; i < pc.size(); ++i) {
            keep[i] = clean[i] >= 1e-9;
            if (!keep[i]) ++acc[ci].excluded;
        }
        for (const Vec3& axis : opt.axes)
            for (double deg : opt.angles_deg) {
                PointCloud rot = rotate(pc, axis, deg * detail::kPi / 180.0);
                std::vector<double> scores = fbi(forward(m, rot).features).scores;
                for (std::size_t i = 0; i < pc.size(); ++i)
                    if (keep[i]) {
                        acc[ci].sum += std::abs(scores[i] - clean[i]) / clean[i];
                        ++acc[ci].terms;
                    }
            }
    });

    RotationReport rep;
    double sum = 0.0;
    std::size_t terms = 0;
    for (std::size_t ci = 0; ci < dataset.size(); ++ci) {
        sum += acc[ci].sum;
        terms += acc[ci].terms;
        rep.excluded_points += acc[ci].excluded;
        rep.total_points += dataset[ci].size();
    }
    rep.delta_percent = terms == 0 ? 0.0 : 100.0 * sum / double(terms);
    rep.warning =
        rep.excluded_points * 100 > rep.total_points;  // > 1% excluded
    return rep;
}

// ---- outlier influence fraction -------------------------------------------------

// Share of total score mass carried by masked points, in [0,1].
inline double masked_score_fraction(const std::vector<double>& scores,
                                    const std::vector<bool>& mask) {
    if (scores.size() != mask.size())
        throw ContractError("masked_score_fraction: mask length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        den += scores[i];
        if (mask[i]) num += scores[i];
    }
    return den == 0.0 ? 0.0 : num / den;
}

// Mean R over a corrupted dataset, as percent. Every cloud must carry an
// outlier mask.
inline double outlier_fraction(const ModelBundle& m, const Dataset& corrupted,
                               std::size_t jobs = 1) {
    if (corrupted.empty()) throw ContractError("outlier_fraction: empty dataset");
    for (const PointCloud& pc : corrupted)
        if (!pc.outlier_mask)
            throw ContractError("outlier_fraction: cloud lacks an outlier mask");
    std::vector<double> r(corrupted.size(), 0.0);
    parallel_for(corrupted.size(), jobs, [&](std::size_t ci) {
        const PointCloud& pc = corrupted[ci];
        std::vector<double> scores = fbi(forward(m, pc).features).scores;
        r[ci] = masked_score_fraction(scores, *pc.outlier_mask);
    });
    double sum = 0.0;
    for (double v : r) sum += v;
    return 100.0 * sum / double(corrupted.size());
}

struct OutlierStudy {
    double r_percent = 0.0;                  // averaged over all severities
    std::vector<double> per_severity;        // severities 1..5
};

// Add-Global corruption at severities 1..5 applied to a clean dataset.
inline OutlierStudy outlier_study(const ModelBundle& m, const Dataset& clean,
                                  std::uint64_t seed, std::size_t jobs = 1) {
    OutlierStudy study;
    double total = 0.0;
    for (int severity = 1; severity <= 5; ++severity) {
        Dataset corrupted;
        corrupted.reserve(clean.size());
        for (std::size_t i = 0; i < clean.size(); ++i)
            corrupted.push_back(add_global_outliers(
                clean[i], severity,
                seed + std::uint64_t(severity) * 1000003ull + i));
        double r = outlier_fraction(m, corrupted, jobs);
        study.per_severity.push_back(r);
        total += r;
    }
    study.r_percent = total / 5.0;
    return study;
}

// ---- zero-gradient diagnostics ---------------------------------------------------

// Points whose predicted-logit input gradient vanishes; meaningful only for
// the pure max-pooling bottleneck.
inline std::size_t zero_gradient_count(const ModelBundle& m, const PointCloud& pc,
                                       double threshold = 1e-12) {
    if (m.config.pooling != Pooling::max)
        throw ContractError(
            "zero_gradient_count: requires a pure max-pooling model");
    InfluenceMap map = gradient_saliency(m, pc);
    std::size_t count = 0;
    for (double s : map.scores)
        if (s < threshold) ++count;
    return count;
}

// ---- smoothness diagnostic --------------------------------------------------------

struct Smoothness {
    double mean_tv = 0.0;   // mean |score_i - score_j| over graph edges
    double max_jump = 0.0;  // largest single edge difference
};

// Total-variation-style roughness of a min-max normalized influence map over
// the KNN graph edges.
inline Smoothness smoothness_tv(const InfluenceMap& map, const KnnGraph& g) {
    if (map.scores.size() != g.neighbors.size())
        throw ContractError("smoothness_tv: map and graph sizes differ");
    double lo = map.scores[0], hi = map.scores[0];
    for (double v : map.scores) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    Smoothness s;
    if (g.edges.empty() || span == 0.0) return s;
    double sum = 0.0;
    for (const auto& [i, j] : g.edges) {
        double d = std::abs(map.scores[i] - map.scores[j]) / span;
        sum += d;
        s.max_jump = std::max(s.max_jump, d);
    }
    s.mean_tv = sum / double(g.edges.size());
    return s;
}

// Aggregate metrics across the analysis suites.
struct AnalysisReport {
    double delta_percent = 0.0;        // rotation deviation, >= 0
    double r_fraction_percent = 0.0;   // outlier influence share in [0,100]
    std::size_t zero_grad_count = 0;   // mean over clouds, rounded down
    double smoothness_tv = 0.0;        // mean FBI total variation over k=8 graphs
};

// Runs the four default analyses over one dataset. Requires a pure
// max-pooling model (for the zero-gradient count).
inline AnalysisReport analysis_report(const ModelBundle& m, const Dataset& data,
                                      std::uint64_t seed, std::size_t jobs = 1) {
    if (data.empty()) throw ContractError("analysis_report: empty dataset");
    AnalysisReport rep;
    rep.delta_percent = rotation_deviation(m, data, {}, jobs).delta_percent;
    rep.r_fraction_percent = outlier_study(m, data, seed, jobs).r_percent;

    std::vector<std::size_t> zeros(data.size(), 0);
    std::vector<double> tv(data.size(), 0.0);
    parallel_for(data.size(), jobs, [&](std::size_t ci) {
        zeros[ci] = zero_gradient_count(m, data[ci]);
        KnnGraph g = build_knn_graph(data[ci], 8);
        tv[ci] = smoothness_tv(fbi(forward(m, data[ci]).features), g).mean_tv;
    });
    std::size_t zsum = 0;
    double tsum = 0.0;
    for (std::size_t ci = 0; ci < data.size(); ++ci) {
        zsum += zeros[ci];
        tsum += tv[ci];
    }
    rep.zero_grad_count = zsum / data.size();
    rep.smoothness_tv = tsum / double(data.size());
    return rep;
}

}  // namespace pcx
