#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

// Reverse-mode autodiff over a static graph of dense tensors.
//
// The graph is built once and never mutated afterwards; re-binding the input
// leaves is the only dynamism. Nodes are stored in construction order, which
// is topological by construction, and backward walks them in exact reverse.
// One forward/backward sequence at a time per instance; distinct instances
// are independent.

enum class OpKind {
    Input,
    Param,
    Affine,       // (x[n], W[n,m], b[m]) -> [m]
    Conv2d,       // (x[C,H,W], K[F,C,kh,kw], b[F]) -> [F,H,W], stride 1, zero pad
    Relu,
    MaxPool2,     // [C,H,W] -> [C,H/2,W/2]
    SoftmaxXent,  // (logits[K], onehot[K]) -> scalar
    Add,
    Mul,
    Sum,          // any -> scalar
    Scale,        // constant multiple
    Flatten,
};

using NodeId = int;

class Graph {
public:
    NodeId input(std::string name, Shape shape) { return leaf(OpKind::Input, std::move(name), std::move(shape)); }
    NodeId param(std::string name, Shape shape) { return leaf(OpKind::Param, std::move(name), std::move(shape)); }

    NodeId affine(NodeId x, NodeId w, NodeId b) {
        const Shape& xs = shape(x);
        const Shape& ws = shape(w);
        const Shape& bs = shape(b);
        if (xs.size() != 1 || ws.size() != 2 || bs.size() != 1 || ws[0] != xs[0] || ws[1] != bs[0])
            throw std::invalid_argument("affine: incompatible shapes");
        return add_node(OpKind::Affine, {x, w, b}, {ws[1]});
    }

    NodeId conv2d(NodeId x, NodeId k, NodeId b) {
        const Shape& xs = shape(x);
        const Shape& ks = shape(k);
        const Shape& bs = shape(b);
        if (xs.size() != 3 || ks.size() != 4 || bs.size() != 1 || ks[1] != xs[0] || ks[0] != bs[0])
            throw std::invalid_argument("conv2d: incompatible shapes");
        if (ks[2] % 2 == 0 || ks[3] % 2 == 0)
            throw std::invalid_argument("conv2d: kernel dims must be odd");
        return add_node(OpKind::Conv2d, {x, k, b}, {ks[0], xs[1], xs[2]});
    }

    NodeId relu(NodeId x) { return add_node(OpKind::Relu, {x}, shape(x)); }

    NodeId maxpool2(NodeId x) {
        const Shape& xs = shape(x);
        if (xs.size() != 3 || xs[1] % 2 != 0 || xs[2] % 2 != 0)
            throw std::invalid_argument("maxpool2: needs [C,H,W] with even H, W");
        return add_node(OpKind::MaxPool2, {x}, {xs[0], xs[1] / 2, xs[2] / 2});
    }

    NodeId softmax_xent(NodeId logits, NodeId onehot) {
        if (shape(logits) != shape(onehot) || shape(logits).size() != 1)
            throw std::invalid_argument("softmax_xent: logits/onehot must be matching vectors");
        return add_node(OpKind::SoftmaxXent, {logits, onehot}, {1});
    }

    NodeId add(NodeId a, NodeId b) {
        if (shape(a) != shape(b)) throw std::invalid_argument("add: shape mismatch");
        return add_node(OpKind::Add, {a, b}, shape(a));
    }

    NodeId mul(NodeId a, NodeId b) {
        if (shape(a) != shape(b)) throw std::invalid_argument("mul: shape mismatch");
        return add_node(OpKind::Mul, {a, b}, shape(a));
    }

    NodeId sum(NodeId x) { return add_node(OpKind::Sum, {x}, {1}); }

    NodeId scale(NodeId x, double c) {
        NodeId id = add_node(OpKind::Scale, {x}, shape(x));
        nodes_[id].cval = c;
        return id;
    }

    NodeId flatten(NodeId x) {
        return add_node(OpKind::Flatten, {x}, {static_cast<int>(shape_numel(shape(x)))});
    }

    void set_root(NodeId id) { root_ = id; }
    NodeId root() const { return root_; }

    const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
    const Tensor& value(NodeId id) const {
        if (!forward_done_) throw std::logic_error("value: forward not run");
        return nodes_.at(id).value;
    }

    std::vector<std::string> leaf_names(OpKind kind) const {
        std::vector<std::string> out;
        for (const auto& n : nodes_)
            if (n.op == kind) out.push_back(n.name);
        return out;
    }

    // Evaluates the graph with the given leaf bindings (inputs and params
    // alike) and returns the root value. All intermediates stay cached for
    // backward.
    const Tensor& forward(const std::map<std::string, Tensor>& bindings) {
        if (root_ < 0) throw std::logic_error("forward: no root set");
        for (auto& n : nodes_) {
            if (n.op == OpKind::Input || n.op == OpKind::Param) {
                auto it = bindings.find(n.name);
                if (it == bindings.end())
                    throw std::invalid_argument("forward: unbound leaf '" + n.name + "'");
                if (it->second.shape != n.shape)
                    throw std::invalid_argument("forward: leaf '" + n.name + "' expects " +
                                                shape_str(n.shape) + " got " + shape_str(it->second.shape));
                n.value = it->second;
            } else {
                eval(n);
            }
        }
        forward_done_ = true;
        backward_done_ = false;
        return nodes_[root_].value;
    }

    // Backpropagates from the (scalar) root; gradients for all leaves are
    // accumulated and retrievable by name via grad().
    void backward() {
        if (!forward_done_) throw std::logic_error("backward: forward not run");
        if (shape_numel(nodes_[root_].shape) != 1) throw std::logic_error("backward: root is not scalar");
        for (auto& n : nodes_) {
            n.grad = Tensor(n.shape);
        }
        nodes_[root_].grad.data[0] = 1.0;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            propagate(nodes_[i]);
        }
        backward_done_ = true;
    }

    const Tensor& grad(const std::string& leaf_name) const {
        if (!backward_done_) throw std::logic_error("grad: backward not run");
        for (const auto& n : nodes_)
            if ((n.op == OpKind::Input || n.op == OpKind::Param) && n.name == leaf_name) return n.grad;
        throw std::invalid_argument("grad: no leaf named '" + leaf_name + "'");
    }

    std::map<std::string, Tensor> grads(const std::vector<std::string>& names) const {
        std::map<std::string, Tensor> out;
        for (const auto& name : names) out.emplace(name, grad(name));
        return out;
    }

private:
    struct Node {
        OpKind op;
        std::vector<NodeId> in;
        Shape shape;
        std::string name;    // leaves only
        double cval = 0.0;   // Scale only
        Tensor value;
        Tensor grad;
        std::vector<int> sel;  // MaxPool2 argmax cache
    };

    NodeId leaf(OpKind kind, std::string name, Shape shape) {
        for (const auto& n : nodes_)
            if ((n.op == OpKind::Input || n.op == OpKind::Param) && n.name == name)
                throw std::invalid_argument("duplicate leaf name '" + name + "'");
        Node n;
        n.op = kind;
        n.shape = std::move(shape);
        n.name = std::move(name);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    NodeId add_node(OpKind op, std::vector<NodeId> in, Shape shape) {
        for (NodeId i : in)
            if (i < 0 || i >= static_cast<NodeId>(nodes_.size()))
                throw std::invalid_argument("add_node: bad input id");
        Node n;
        n.op = op;
        n.in = std::move(in);
        n.shape = std::move(shape);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    void eval(Node& n) {
        switch (n.op) {
            case OpKind::Affine: {
                const Tensor& x = nodes_[n.in[0]].value;
                const Tensor& w = nodes_[n.in[1]].value;
                const Tensor& b = nodes_[n.in[2]].value;
                const int ni = w.shape[0], m = w.shape[1];
                n.value = Tensor(n.shape);
                for (int j = 0; j < m; ++j) {
                    double acc = b[j];
                    for (int i = 0; i < ni; ++i) acc += x[i] * w[static_cast<std::size_t>(i) * m + j];
                    n.value[j] = acc;
                }
                break;
            }
            case OpKind::Conv2d: {
                const Tensor& x = nodes_[n.in[0]].value;
                const Tensor& k = nodes_[n.in[1]].value;
                const Tensor& b = nodes_[n.in[2]].value;
                const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
                const int F = k.shape[0], KH = k.shape[2], KW = k.shape[3];
                const int ph = KH / 2, pw = KW / 2;
                n.value = Tensor(n.shape);
                for (int f = 0; f < F; ++f)
                    for (int r = 0; r < H; ++r)
                        for (int c = 0; c < W; ++c) {
                            double acc = b[f];
                            for (int ch = 0; ch < C; ++ch)
                                for (int dr = 0; dr < KH; ++dr) {
                                    const int rr = r + dr - ph;
                                    if (rr < 0 || rr >= H) continue;
                                    for (int dc = 0; dc < KW; ++dc) {
                                        const int cc = c + dc - pw;
                                        if (cc < 0 || cc >= W) continue;
                                        acc += x[(static_cast<std::size_t>(ch) * H + rr) * W + cc] *
                                               k[((static_cast<std::size_t>(f) * C + ch) * KH + dr) * KW + dc];
                                    }
                                }
                            n.value[(static_cast<std::size_t>(f) * H + r) * W + c] = acc;
                        }
                break;
            }
            case OpKind::Relu: {
                const Tensor& x = nodes_[n.in[0]].value;
                n.value = Tensor(n.shape);
                for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
                break;
            }
            case OpKind::MaxPool2: {
                const Tensor& x = nodes_[n.in[0]].value;
                const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
                const int OH = H / 2, OW = W / 2;
                n.value = Tensor(n.shape);
                n.sel.assign(n.value.numel(), 0);
                for (int ch = 0; ch < C; ++ch)
                    for (int r = 0; r < OH; ++r)
                        for (int c = 0; c < OW; ++c) {
                            int best = ((ch * H + 2 * r) * W + 2 * c);
                            double bv = x[best];
                            const int cand[3] = {(ch * H + 2 * r) * W + 2 * c + 1,
                                                 (ch * H + 2 * r + 1) * W + 2 * c,
                                                 (ch * H + 2 * r + 1) * W + 2 * c + 1};
                            for (int idx : cand)
                                if (x[idx] > bv) {
                                    bv = x[idx];
                                    best = idx;
                                }
                            const std::size_t o = (static_cast<std::size_t>(ch) * OH + r) * OW + c;
                            n.value[o] = bv;
                            n.sel[o] = best;
                        }
                break;
            }
            case OpKind::SoftmaxXent: {
                const Tensor& z = nodes_[n.in[0]].value;
                const Tensor& y = nodes_[n.in[1]].value;
                double zmax = z[0];
                for (double v : z.data) zmax = std::max(zmax, v);
                double lse = 0.0;
                for (double v : z.data) lse += std::exp(v - zmax);
                lse = zmax + std::log(lse);
                double loss = 0.0;
                for (std::size_t i = 0; i < z.numel(); ++i) loss += y[i] * (lse - z[i]);
                n.value = Tensor::scalar(loss);
                break;
            }
            case OpKind::Add: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                n.value = Tensor(n.shape);
                for (std::size_t i = 0; i < a.numel(); ++i) n.value[i] = a[i] + b[i];
                break;
            }
            case OpKind::Mul: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                n.value = Tensor(n.shape);
                for (std::size_t i = 0; i < a.numel(); ++i) n.value[i] = a[i] * b[i];
                break;
            }
            case OpKind::Sum: {
                const Tensor& x = nodes_[n.in[0]].value;
                double s = 0.0;
                for (double v : x.data) s += v;
                n.value = Tensor::scalar(s);
                break;
            }
            case OpKind::Scale: {
                const Tensor& x = nodes_[n.in[0]].value;
                n.value = Tensor(n.shape);
                for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = n.cval * x[i];
                break;
            }
            case OpKind::Flatten: {
                n.value = Tensor(n.shape, nodes_[n.in[0]].value.data);
                break;
            }
            default:
                throw std::logic_error("eval: leaf reached");
        }
    }

    void propagate(Node& n) {
        switch (n.op) {
            case OpKind::Input:
            case OpKind::Param:
                break;
            case OpKind::Affine: {
                const Tensor& x = nodes_[n.in[0]].value;
                const Tensor& w = nodes_[n.in[1]].value;
                Tensor& gx = nodes_[n.in[0]].grad;
                Tensor& gw = nodes_[n.in[1]].grad;
                Tensor& gb = nodes_[n.in[2]].grad;
                const int ni = w.shape[0], m = w.shape[1];
                for (int j = 0; j < m; ++j) {
                    const double g = n.grad[j];
                    gb[j] += g;
                    for (int i = 0; i < ni; ++i) {
                        gx[i] += g * w[static_cast<std::size_t>(i) * m + j];
                        gw[static_cast<std::size_t>(i) * m + j] += g * x[i];
                    }
                }
                break;
            }
            case OpKind::Conv2d: {
                const Tensor& x = nodes_[n.in[0]].value;
                const Tensor& k = nodes_[n.in[1]].value;
                Tensor& gx = nodes_[n.in[0]].grad;
                Tensor& gk = nodes_[n.in[1]].grad;
                Tensor& gb = nodes_[n.in[2]].grad;
                const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
                const int F = k.shape[0], KH = k.shape[2], KW = k.shape[3];
                const int ph = KH / 2, pw = KW / 2;
                for (int f = 0; f < F; ++f)
                    for (int r = 0; r < H; ++r)
                        for (int c = 0; c < W; ++c) {
                            const double g = n.grad[(static_cast<std::size_t>(f) * H + r) * W + c];
                            if (g == 0.0) continue;
                            gb[f] += g;
                            for (int ch = 0; ch < C; ++ch)
                                for (int dr = 0; dr < KH; ++dr) {
                                    const int rr = r + dr - ph;
                                    if (rr < 0 || rr >= H) continue;
                                    for (int dc = 0; dc < KW; ++dc) {
                                        const int cc = c + dc - pw;
                                        if (cc < 0 || cc >= W) continue;
                                        const std::size_t xi = (static_cast<std::size_t>(ch) * H + rr) * W + cc;
                                        const std::size_t ki =
                                            ((static_cast<std::size_t>(f) * C + ch) * KH + dr) * KW + dc;
                                        gx[xi] += g * k[ki];
                                        gk[ki] += g * x[xi];
                                    }
                                }
                        }
                break;
            }
            case OpKind::Relu: {
                const Tensor& x = nodes_[n.in[0]].value;
                Tensor& gx = nodes_[n.in[0]].grad;
                // subgradient at 0 is 0
                for (std::size_t i = 0; i < x.numel(); ++i)
                    if (x[i] > 0.0) gx[i] += n.grad[i];
                break;
            }
            case OpKind::MaxPool2: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (std::size_t o = 0; o < n.value.numel(); ++o) gx[n.sel[o]] += n.grad[o];
                break;
            }
            case OpKind::SoftmaxXent: {
                const Tensor& z = nodes_[n.in[0]].value;
                const Tensor& y = nodes_[n.in[1]].value;
                Tensor& gz = nodes_[n.in[0]].grad;
                Tensor& gy = nodes_[n.in[1]].grad;
                const double g = n.grad[0];
                double zmax = z[0];
                for (double v : z.data) zmax = std::max(zmax, v);
                double denom = 0.0;
                for (double v : z.data) denom += std::exp(v - zmax);
                const double lse = zmax + std::log(denom);
                double ysum = 0.0;
                for (double v : y.data) ysum += v;
                for (std::size_t i = 0; i < z.numel(); ++i) {
                    gz[i] += g * (ysum * std::exp(z[i] - zmax) / denom - y[i]);
                    gy[i] += g * (lse - z[i]);
                }
                break;
            }
            case OpKind::Add: {
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    nodes_[n.in[0]].grad[i] += n.grad[i];
                    nodes_[n.in[1]].grad[i] += n.grad[i];
                }
                break;
            }
            case OpKind::Mul: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    nodes_[n.in[0]].grad[i] += n.grad[i] * b[i];
                    nodes_[n.in[1]].grad[i] += n.grad[i] * a[i];
                }
                break;
            }
            case OpKind::Sum: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[0];
                break;
            }
            case OpKind::Scale: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += n.cval * n.grad[i];
                break;
            }
            case OpKind::Flatten: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[i];
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    NodeId root_ = -1;
    bool forward_done_ = false;
    bool backward_done_ = false;
};

// Central-difference check of backward against the graph itself; the oracle
// side touches only forward evaluations.
inline double finite_diff_check(Graph& g, const std::map<std::string, Tensor>& bindings, double step) {
    if (step <= 0) throw std::invalid_argument("finite_diff_check: step must be positive");
    g.forward(bindings);
    g.backward();
    std::map<std::string, Tensor> ad;
    for (OpKind k : {OpKind::Input, OpKind::Param})
        for (const auto& name : g.leaf_names(k)) ad.emplace(name, g.grad(name));

    double max_rel = 0.0;
    for (auto& [name, grad] : ad) {
        std::map<std::string, Tensor> b = bindings;
        for (std::size_t i = 0; i < grad.numel(); ++i) {
            const double orig = b[name][i];
            b[name][i] = orig + step;
            const double fp = g.forward(b)[0];
            b[name][i] = orig - step;
            const double fm = g.forward(b)[0];
            b[name][i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
            max_rel = std::max(max_rel, std::abs(fd - grad[i]) / denom);
        }
    }
    // restore cached state for the original bindings
    g.forward(bindings);
    g.backward();
    return max_rel;
}

}  // namespace advlab
