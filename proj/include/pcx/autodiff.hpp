#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pcx/errors.hpp"
#include "pcx/tensor.hpp"

namespace pcx {

// Handle into a Graph's tape.
struct Var {
    int id = -1;
};

// Single-use recording tape for reverse-mode differentiation. Nodes are
// appended in evaluation order, which is already topological, so backward
// is a reverse sweep over the tape. A Graph is confined to one call site;
// distinct Graphs are independent.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Var leaf(Tensor t) {
        bool needs = t.requires_grad;
        return push(std::move(t), needs, nullptr);
    }

    const Tensor& value(Var v) const { return node(v).value; }

    bool has_grad(Var v) const { return !node(v).grad.shape().empty(); }

    const Tensor& grad(Var v) const {
        if (!has_grad(v))
            throw ContractError("no gradient recorded for this node");
        return node(v).grad;
    }

    // ---- recorded operations -------------------------------------------

    Var matmul(Var av, Var bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
            throw DimensionError("matmul: inner dimensions disagree");
        const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
        Tensor out = Tensor::zeros({m, p});
        matmul_accumulate(a.data(), b.data(), out.data(), m, k, p);
        bool needs = needs_grad(av) || needs_grad(bv);
        return push(std::move(out), needs, [av, bv, m, k, p](Graph& g, int self) {
            const std::vector<double>& go = g.nodes_[self].grad.data();
            if (g.needs_grad(av)) {
                // dA[m,k] += sum_p go[m,p] * B[k,p]
                std::vector<double>& da = g.grad_buf(av).data();
                const std::vector<double>& bd = g.value(bv).data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        double acc = 0.0;
                        const double* gr = &go[i * p];
                        const double* br = &bd[j * p];
                        for (std::size_t t = 0; t < p; ++t) acc += gr[t] * br[t];
                        da[i * k + j] += acc;
                    }
            }
            if (g.needs_grad(bv)) {
                // dB[k,p] += sum_m A[m,k] * go[m,p]
                std::vector<double>& db = g.grad_buf(bv).data();
                const std::vector<double>& ad = g.value(av).data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double aij = ad[i * k + j];
                        if (aij == 0.0) continue;
                        double* dbr = &db[j * p];
                        const double* gr = &go[i * p];
                        for (std::size_t t = 0; t < p; ++t) dbr[t] += aij * gr[t];
                    }
            }
        });
    }

    // N x F matrix plus length-F bias broadcast over rows.
    Var add_rowwise(Var av, Var bias) {
        const Tensor& a = value(av);
        const Tensor& b = value(bias);
        if (a.ndim() != 2 || b.ndim() != 1 || b.shape()[0] != a.cols())
            throw DimensionError("add_rowwise: bias length does not match columns");
        const std::size_t n = a.rows(), f = a.cols();
        Tensor out = Tensor::zeros({n, f});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j)
                out.data()[i * f + j] = a.data()[i * f + j] + b.data()[j];
        bool needs = needs_grad(av) || needs_grad(bias);
        return push(std::move(out), needs, [av, bias, n, f](Graph& g, int self) {
            const std::vector<double>& go = g.nodes_[self].grad.data();
            if (g.needs_grad(av)) {
                std::vector<double>& da = g.grad_buf(av).data();
                for (std::size_t i = 0; i < n * f; ++i) da[i] += go[i];
            }
            if (g.needs_grad(bias)) {
                std::vector<double>& db = g.grad_buf(bias).data();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < f; ++j) db[j] += go[i * f + j];
            }
        });
    }

    // Element-wise max(0, x); sub-gradient at exactly 0 is 0.
    Var relu(Var av) {
        const Tensor& a = value(av);
        Tensor out = Tensor::zeros(a.shape());
        for (std::size_t i = 0; i < a.numel(); ++i)
            out[i] = a[i] > 0.0 ? a[i] : 0.0;
        bool needs = needs_grad(av);
        return push(std::move(out), needs, [av](Graph& g, int self) {
            const std::vector<double>& go = g.nodes_[self].grad.data();
            const std::vector<double>& x = g.value(av).data();
            std::vector<double>& da = g.grad_buf(av).data();
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] > 0.0) da[i] += go[i];
        });
    }

    struct Pooled {
        Var values;                       // length-F vector
        std::vector<std::size_t> argmax;  // winning point index per feature
    };

    // Column-wise max over the point dimension. Ties go to the lowest row
    // index; backward routes each output gradient entirely to that row.
    Pooled max_pool_points(Var fv) {
        const Tensor& f = value(fv);
        if (f.ndim() != 2 || f.rows() == 0)
            throw DimensionError("max_pool_points: need a non-empty N x F matrix");
        const std::size_t n = f.rows(), cols = f.cols();
        Tensor out = Tensor::zeros({cols});
        std::vector<std::size_t> argmax(cols, 0);
        for (std::size_t k = 0; k < cols; ++k) {
            double best = f.at(0, k);
            std::size_t bi = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (f.at(i, k) > best) {
                    best = f.at(i, k);
                    bi = i;
                }
            out[k] = best;
            argmax[k] = bi;
        }
        bool needs = needs_grad(fv);
        std::vector<std::size_t> arg_copy = argmax;
        Var v = push(std::move(out), needs,
                     [fv, cols, arg_copy](Graph& g, int self) {
                         const std::vector<double>& go = g.nodes_[self].grad.data();
                         Tensor& df = g.grad_buf(fv);
                         const std::size_t w = df.cols();
                         for (std::size_t k = 0; k < cols; ++k)
                             df.data()[arg_copy[k] * w + k] += go[k];
                     });
        return {v, std::move(argmax)};
    }

    // Column-wise mean; backward spreads 1/N to every row.
    Var mean_pool_points(Var fv) {
        const Tensor& f = value(fv);
        if (f.ndim() != 2 || f.rows() == 0)
            throw DimensionError("mean_pool_points: need a non-empty N x F matrix");
        const std::size_t n = f.rows(), cols = f.cols();
        Tensor out = Tensor::zeros({cols});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < cols; ++k) out[k] += f.at(i, k);
        for (std::size_t k = 0; k < cols; ++k) out[k] /= double(n);
        bool needs = needs_grad(fv);
        return push(std::move(out), needs, [fv, n, cols](Graph& g, int self) {
            const std::vector<double>& go = g.nodes_[self].grad.data();
            std::vector<double>& df = g.grad_buf(fv).data();
            const double inv = 1.0 / double(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < cols; ++k)
                    df[i * cols + k] += go[k] * inv;
        });
    }

    // Concatenation of two 1-D vectors.
    Var concat(Var av, Var bv) {
        const Tensor& a = value(av);
        const Tensor& b = value(bv);
        if (a.ndim() != 1 || b.ndim() != 1)
            throw DimensionError("concat: expects 1-D tensors");
        const std::size_t na = a.numel(), nb = b.numel();
        std::vector<double> data;
        data.reserve(na + nb);
        data.insert(data.end(), a.data().begin(), a.data().end());
        data.insert(data.end(), b.data().begin(), b.data().end());
        Tensor out({na + nb}, std::move(data));
        bool needs = needs_grad(av) || needs_grad(bv);
        return push(std::move(out), needs, [av, bv, na, nb](Graph& g, int self) {
            const std::vector<double>& go = g.nodes_[self].grad.data();
            if (g.needs_grad(av)) {
                std::vector<double>& da = g.grad_buf(av).data();
                for (std::size_t i = 0; i < na; ++i) da[i] += go[i];
            }
            if (g.needs_grad(bv)) {
                std::vector<double>& db = g.grad_buf(bv).data();
                for (std::size_t i = 0; i < nb; ++i) db[i] += go[na + i];
            }
        });
    }

    // Same flat data, new shape. Backward is a pass-through.
    Var reshape(Var av, std::vector<std::size_t> shape) {
        const Tensor& a = value(av);
        Tensor out(shape, a.data());
        bool needs = needs_grad(av);
        return push(std::move(out), needs, [av](Graph& g, int self) {
            const std::vector<double>& go = g.nodes_[self].grad.data();
            std::vector<double>& da = g.grad_buf(av).data();
            for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i];
        });
    }

    // Mean negative log-softmax of the true class over a B x C batch,
    // stabilized by row-max subtraction.
    Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
        const Tensor& l = value(logits);
        if (l.ndim() != 2)
            throw DimensionError("softmax_cross_entropy: logits must be B x C");
        const std::size_t b = l.rows(), c = l.cols();
        if (labels.size() != b)
            throw DimensionError("softmax_cross_entropy: one label per row required");
        for (int y : labels)
            if (y < 0 || std::size_t(y) >= c)
                throw IndexError("softmax_cross_entropy: label out of range");
        // Keep per-row probabilities for the backward pass.
        std::vector<double> probs(b * c);
        double loss = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            double mx = l.at(i, 0);
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, l.at(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                probs[i * c + j] = std::exp(l.at(i, j) - mx);
                z += probs[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
            loss -= std::log(probs[i * c + std::size_t(labels[i])]);
        }
        loss /= double(b);
        bool needs = needs_grad(logits);
        std::vector<int> lab = labels;
        return push(Tensor::scalar(loss), needs,
                    [logits, b, c, probs = std::move(probs),
                     lab = std::move(lab)](Graph& g, int self) {
                        const double g0 = g.nodes_[self].grad.data()[0] / double(b);
                        std::vector<double>& dl = g.grad_buf(logits).data();
                        for (std::size_t i = 0; i < b; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                                double p = probs[i * c + j];
                                double ind = (std::size_t(lab[i]) == j) ? 1.0 : 0.0;
                                dl[i * c + j] += g0 * (p - ind);
                            }
                    });
    }

    // Sum of all elements, as a scalar.
    Var sum(Var av) {
        const Tensor& a = value(av);
        double s = 0.0;
        for (double v : a.data()) s += v;
        bool needs = needs_grad(av);
        return push(Tensor::scalar(s), needs, [av](Graph& g, int self) {
            const double g0 = g.nodes_[self].grad.data()[0];
            std::vector<double>& da = g.grad_buf(av).data();
            for (double& v : da) v += g0;
        });
    }

    // Single element (by flat index) as a scalar.
    Var pick(Var av, std::size_t flat_index) {
        const Tensor& a = value(av);
        if (flat_index >= a.numel())
            throw IndexError("pick: flat index out of range");
        bool needs = needs_grad(av);
        return push(Tensor::scalar(a[flat_index]), needs,
                    [av, flat_index](Graph& g, int self) {
                        const double g0 = g.nodes_[self].grad.data()[0];
                        g.grad_buf(av).data()[flat_index] += g0;
                    });
    }

    // ---- reverse sweep --------------------------------------------------

    // Seeds d(root)/d(root) = 1 and accumulates gradients into every node
    // that leads to a requires_grad leaf. The tape is single-use.
    void backward(Var root) {
        if (root.id < 0 || std::size_t(root.id) >= nodes_.size())
            throw ContractError("backward: root is not a node of this graph");
        if (!value(root).is_scalar())
            throw ContractError("backward: root must be a scalar");
        if (backward_done_)
            throw ContractError("backward: graph already consumed");
        backward_done_ = true;
        grad_buf(root).data()[0] = 1.0;
        for (int i = root.id; i >= 0; --i) {
            Node& nd = nodes_[std::size_t(i)];
            if (nd.backprop && !nd.grad.shape().empty()) nd.backprop(*this, i);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty shape until first accumulation
        bool needs_grad = false;
        std::function<void(Graph&, int)> backprop;
    };

    bool needs_grad(Var v) const { return node(v).needs_grad; }

    Tensor& grad_buf(Var v) {
        Node& nd = nodes_[std::size_t(v.id)];
        if (nd.grad.shape().empty())
            nd.grad = Tensor::zeros(nd.value.shape());
        return nd.grad;
    }

    const Node& node(Var v) const {
        if (v.id < 0 || std::size_t(v.id) >= nodes_.size())
            throw ContractError("dangling Var handle");
        return nodes_[std::size_t(v.id)];
    }

    Var push(Tensor value, bool needs, std::function<void(Graph&, int)> backprop) {
        Node nd;
        nd.value = std::move(value);
        nd.needs_grad = needs;
        if (needs) nd.backprop = std::move(backprop);
        nodes_.push_back(std::move(nd));
        return Var{int(nodes_.size()) - 1};
    }

    // C[m,p] += A[m,k] * B[k,p], ikj order so the inner loop is contiguous.
    static void matmul_accumulate(const std::vector<double>& a,
                                  const std::vector<double>& b,
                                  std::vector<double>& c, std::size_t m,
                                  std::size_t k, std::size_t p) {
        for (std::size_t i = 0; i < m; ++i) {
            double* cr = &c[i * p];
            for (std::size_t t = 0; t < k; ++t) {
                const double av = a[i * k + t];
                if (av == 0.0) continue;
                const double* br = &b[t * p];
                for (std::size_t j = 0; j < p; ++j) cr[j] += av * br[j];
            }
        }
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace pcx
