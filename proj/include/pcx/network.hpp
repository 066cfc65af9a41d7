#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pcx/autodiff.hpp"
#include "pcx/errors.hpp"
#include "pcx/pointcloud.hpp"
#include "pcx/shapes.hpp"
#include "pcx/tensor.hpp"

namespace pcx {

enum class Pooling : std::uint8_t { max = 0, max_mean_concat = 1 };

// Shared per-point MLP (the featurizer), a permutation-invariant pooling
// bottleneck, and an MLP head over the global vector.
struct ModelConfig {
    std::size_t input_dim = 3;
    std::vector<std::size_t> featurizer_widths = {64, 64, 64};
    std::vector<std::size_t> head_widths = {32, 6};
    Pooling pooling = Pooling::max;

    std::size_t feature_dim() const { return featurizer_widths.back(); }
    std::size_t num_classes() const { return head_widths.back(); }
    std::size_t head_input_dim() const {
        return pooling == Pooling::max_mean_concat ? 2 * feature_dim()
                                                   : feature_dim();
    }

    void validate() const {
        if (input_dim == 0 || featurizer_widths.empty() || head_widths.empty())
            throw ContractError("model config: empty layer stack");
        for (std::size_t w : featurizer_widths)
            if (w == 0) throw ContractError("model config: zero-width layer");
        for (std::size_t w : head_widths)
            if (w == 0) throw ContractError("model config: zero-width layer");
    }
};

struct TrainInfo {
    std::uint32_t epochs = 0;
    std::uint64_t seed = 0;
    double test_accuracy = 0.0;
    std::vector<double> epoch_loss;  // in-memory only, not serialized
};

// Trained classifier: config plus (matrix, bias) pairs, featurizer layers
// first, then head layers.
struct ModelBundle {
    ModelConfig config;
    std::vector<Tensor> weights;  // W0, b0, W1, b1, ...
    TrainInfo info;

    std::size_t layer_count() const {
        return config.featurizer_widths.size() + config.head_widths.size();
    }

    void validate() const {
        config.validate();
        if (weights.size() != 2 * layer_count())
            throw ContractError("model bundle: weight count does not match config");
        std::size_t in = config.input_dim;
        std::size_t li = 0;
        auto check_layer = [&](std::size_t out_w) {
            const Tensor& w = weights[2 * li];
            const Tensor& b = weights[2 * li + 1];
            if (w.ndim() != 2 || w.rows() != in || w.cols() != out_w ||
                b.ndim() != 1 || b.shape()[0] != out_w)
                throw ContractError("model bundle: weight shapes do not chain");
            in = out_w;
            ++li;
        };
        for (std::size_t w : config.featurizer_widths) check_layer(w);
        in = config.head_input_dim();
        for (std::size_t w : config.head_widths) check_layer(w);
    }
};

// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at 0.
inline ModelBundle init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelBundle m;
    m.config = config;
    m.info.seed = seed;
    std::mt19937_64 rng(seed);
    std::size_t in = config.input_dim;
    auto push_layer = [&](std::size_t out_w) {
        double bound = std::sqrt(6.0 / double(in + out_w));
        m.weights.push_back(Tensor::uniform({in, out_w}, -bound, bound, rng));
        m.weights.push_back(Tensor::zeros({out_w}));
        in = out_w;
    };
    for (std::size_t w : config.featurizer_widths) push_layer(w);
    in = config.head_input_dim();
    for (std::size_t w : config.head_widths) push_layer(w);
    return m;
}

// ---- forward pass -----------------------------------------------------------

struct ForwardVars {
    Var input;     // N x D leaf
    Var features;  // N x F pre-bottleneck matrix
    Var global;    // pooled vector (F or 2F)
    Var logits;    // 1 x C
    std::vector<Var> weight_leaves;  // same order as ModelBundle::weights
};

// Records the full forward pass on the given graph. Every featurizer layer is
// Linear+ReLU applied row-wise (so feature rows depend only on their own
// point); the head is Linear+ReLU stacks with raw logits at the end.
inline ForwardVars forward_rec(Graph& g, const ModelBundle& m,
                               Tensor points, bool input_requires_grad) {
    m.validate();
    if (points.ndim() != 2 || points.cols() != m.config.input_dim)
        throw ContractError("forward: input is not N x input_dim");
    points.requires_grad = input_requires_grad;
    ForwardVars fv;
    fv.input = g.leaf(std::move(points));

    auto record_layer = [&](std::size_t li, Var& w, Var& b) {
        w = g.leaf(m.weights[2 * li]);
        b = g.leaf(m.weights[2 * li + 1]);
        fv.weight_leaves.push_back(w);
        fv.weight_leaves.push_back(b);
    };

    Var h = fv.input;
    std::size_t li = 0;
    for (std::size_t w = 0; w < m.config.featurizer_widths.size(); ++w, ++li) {
        Var wt, bt;
        record_layer(li, wt, bt);
        h = g.relu(g.add_rowwise(g.matmul(h, wt), bt));
    }
    fv.features = h;

    Var pooled;
    if (m.config.pooling == Pooling::max) {
        pooled = g.max_pool_points(fv.features).values;
    } else {
        Var mx = g.max_pool_points(fv.features).values;
        Var mn = g.mean_pool_points(fv.features);
        pooled = g.concat(mx, mn);
    }
    fv.global = pooled;

    Var head = g.reshape(pooled, {1, m.config.head_input_dim()});
    const std::size_t n_head = m.config.head_widths.size();
    for (std::size_t w = 0; w < n_head; ++w, ++li) {
        Var wt, bt;
        record_layer(li, wt, bt);
        head = g.add_rowwise(g.matmul(head, wt), bt);
        if (w + 1 < n_head) head = g.relu(head);
    }
    fv.logits = head;
    return fv;
}

struct ForwardResult {
    Tensor features;  // N x F
    Tensor global;    // F or 2F
    Tensor logits;    // C
};

inline ForwardResult forward(const ModelBundle& m, const PointCloud& pc) {
    Graph g;
    ForwardVars fv = forward_rec(g, m, pc.to_tensor(), false);
    Tensor logits({m.config.num_classes()}, g.value(fv.logits).data());
    return {g.value(fv.features), g.value(fv.global), std::move(logits)};
}

inline int predict_class(const ModelBundle& m, const PointCloud& pc) {
    Tensor logits = forward(m, pc).logits;
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.numel(); ++j)
        if (logits[j] > logits[best]) best = j;
    return int(best);
}

inline double evaluate_accuracy(const ModelBundle& m, const Dataset& data) {
    if (data.empty()) throw ContractError("evaluate_accuracy: empty dataset");
    std::size_t hits = 0;
    for (const PointCloud& pc : data)
        if (pc.label && predict_class(m, pc) == *pc.label) ++hits;
    return double(hits) / double(data.size());
}

// ---- training ----------------------------------------------------------------

struct TrainOptions {
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    // With probability 1/2 per step, rotate the cloud about a random
    // coordinate axis by an angle from the rotation-study grid (30..180 deg).
    // The clean half keeps the canonical frame anchored, the rotated half
    // covers the probe orbits.
    bool augment_rotations = false;
};

namespace detail {

inline void check_class_balance(const Dataset& data, std::size_t num_classes) {
    if (data.empty()) throw ContractError("train: empty dataset");
    std::vector<std::size_t> counts(num_classes, 0);
    for (const PointCloud& pc : data) {
        if (!pc.label || *pc.label < 0 || std::size_t(*pc.label) >= num_classes)
            throw ContractError("train: cloud with missing or out-of-range label");
        ++counts[std::size_t(*pc.label)];
    }
    for (std::size_t c : counts)
        if (c != counts[0])
            throw ContractError("train: dataset is not class-balanced");
}

// Coordinate-axis rotation drawn from the same severity grid the rotation
// study probes.
inline std::pair<Vec3, double> random_grid_rotation(std::mt19937_64& rng) {
    static constexpr Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    static constexpr double degrees[6] = {30, 60, 90, 120, 150, 180};
    Vec3 axis = axes[std::uniform_int_distribution<int>(0, 2)(rng)];
    double angle = degrees[std::uniform_int_distribution<int>(0, 5)(rng)] *
                   kPi / 180.0;
    return {axis, angle};
}

}  // namespace detail

// Adam over per-cloud softmax cross-entropy steps. Fully deterministic for a
// given (config, options, dataset).
inline ModelBundle train(const ModelConfig& config, const Dataset& train_set,
                         const Dataset& test_set, const TrainOptions& opt) {
    config.validate();
    if (opt.epochs < 1) throw ContractError("train: epochs must be >= 1");
    detail::check_class_balance(train_set, config.num_classes());

    ModelBundle m = init_model(config, opt.seed);
    m.info.epochs = std::uint32_t(opt.epochs);

    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<std::vector<double>> adam_m(m.weights.size()),
        adam_v(m.weights.size());
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        adam_m[i].assign(m.weights[i].numel(), 0.0);
        adam_v[i].assign(m.weights[i].numel(), 0.0);
    }

    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const PointCloud* pc = &train_set[idx];
            PointCloud rotated;
            if (opt.augment_rotations &&
                std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5) {
                auto [axis, angle] = detail::random_grid_rotation(rng);
                rotated = rotate(*pc, axis, angle);
                pc = &rotated;
            }

            Graph g;
            for (Tensor& w : m.weights) w.requires_grad = true;
            ForwardVars fv = forward_rec(g, m, pc->to_tensor(), false);
            for (Tensor& w : m.weights) w.requires_grad = false;
            Var loss = g.softmax_cross_entropy(fv.logits, {*pc->label});
            g.backward(loss);
            epoch_loss += g.value(loss)[0];

            ++step;
            const double bc1 = 1.0 - std::pow(beta1, double(step));
            const double bc2 = 1.0 - std::pow(beta2, double(step));
            for (std::size_t wi = 0; wi < m.weights.size(); ++wi) {
                Var v = fv.weight_leaves[wi];
                if (!g.has_grad(v)) continue;  // layer unreachable (not expected)
                const std::vector<double>& gd = g.grad(v).data();
                std::vector<double>& wd = m.weights[wi].data();
                for (std::size_t t = 0; t < wd.size(); ++t) {
                    adam_m[wi][t] = beta1 * adam_m[wi][t] + (1.0 - beta1) * gd[t];
                    adam_v[wi][t] =
                        beta2 * adam_v[wi][t] + (1.0 - beta2) * gd[t] * gd[t];
                    double mhat = adam_m[wi][t] / bc1;
                    double vhat = adam_v[wi][t] / bc2;
                    wd[t] -= opt.lr * mhat / (std::sqrt(vhat) + eps);
                }
            }
        }
        m.info.epoch_loss.push_back(epoch_loss / double(train_set.size()));
    }

    m.info.test_accuracy = test_set.empty() ? 0.0 : evaluate_accuracy(m, test_set);
    return m;
}

// ---- PCXW weight persistence ---------------------------------------------
// magic "PCXW", u32 version=1, config block, training metadata, then
// little-endian f64 weight blobs in layer order (W then b per layer).

namespace detail {

struct ByteWriter {
    std::string buf;
    void u8(std::uint8_t v) { buf.push_back(char(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size())
            throw FormatError(std::string("truncated ") + what + " at offset " +
                              std::to_string(pos));
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return std::uint8_t(buf[pos++]);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(std::uint8_t(buf[pos + std::size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= std::uint64_t(std::uint8_t(buf[pos + std::size_t(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

}  // namespace detail

inline std::string encode_model(const ModelBundle& m) {
    m.validate();
    detail::ByteWriter w;
    w.buf += "PCXW";
    w.u32(1);
    w.u32(std::uint32_t(m.config.input_dim));
    w.u32(std::uint32_t(m.config.featurizer_widths.size()));
    for (std::size_t x : m.config.featurizer_widths) w.u32(std::uint32_t(x));
    w.u32(std::uint32_t(m.config.head_widths.size()));
    for (std::size_t x : m.config.head_widths) w.u32(std::uint32_t(x));
    w.u8(std::uint8_t(m.config.pooling));
    w.u32(m.info.epochs);
    w.u64(m.info.seed);
    w.f64(m.info.test_accuracy);
    for (const Tensor& t : m.weights)
        for (double v : t.data()) w.f64(v);
    return std::move(w.buf);
}

inline ModelBundle decode_model(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "PCXW") != 0)
        throw FormatError("bad magic at offset 0");
    detail::ByteReader r{bytes, 4};
    std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError("unsupported version " + std::to_string(version) +
                          " at offset 4");
    ModelBundle m;
    m.config.input_dim = r.u32("input_dim");
    std::uint32_t nf = r.u32("featurizer layer count");
    m.config.featurizer_widths.clear();
    for (std::uint32_t i = 0; i < nf; ++i)
        m.config.featurizer_widths.push_back(r.u32("featurizer width"));
    std::uint32_t nh = r.u32("head layer count");
    m.config.head_widths.clear();
    for (std::uint32_t i = 0; i < nh; ++i)
        m.config.head_widths.push_back(r.u32("head width"));
    std::uint8_t pool = r.u8("pooling mode");
    if (pool > 1)
        throw FormatError("unknown pooling mode at offset " +
                          std::to_string(r.pos - 1));
    m.config.pooling = Pooling(pool);
    m.info.epochs = r.u32("epochs");
    m.info.seed = r.u64("seed");
    m.info.test_accuracy = r.f64("test accuracy");
    m.config.validate();

    std::size_t in = m.config.input_dim;
    auto read_layer = [&](std::size_t out_w) {
        Tensor w = Tensor::zeros({in, out_w});
        for (double& v : w.data()) v = r.f64("weight blob");
        Tensor b = Tensor::zeros({out_w});
        for (double& v : b.data()) v = r.f64("bias blob");
        m.weights.push_back(std::move(w));
        m.weights.push_back(std::move(b));
        in = out_w;
    };
    for (std::size_t w : m.config.featurizer_widths) read_layer(w);
    in = m.config.head_input_dim();
    for (std::size_t w : m.config.head_widths) read_layer(w);
    if (r.pos != bytes.size())
        throw FormatError("trailing bytes at offset " + std::to_string(r.pos));
    m.validate();
    return m;
}

inline void save_model(const ModelBundle& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_model: cannot open " + path);
    std::string bytes = encode_model(m);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("save_model: write failed on " + path);
}

inline ModelBundle load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_model: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

}  // namespace pcx
