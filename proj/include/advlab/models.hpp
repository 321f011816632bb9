#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/autodiff.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

enum class ModelKind { Mlp, SmallCnn };

// Architecture description. For Mlp, widths runs [d_in, hidden..., K].
// SmallCnn is the fixed stack conv(1->8,3x3)/relu/pool/conv(8->16,3x3)/relu/
// pool/affine->K over a [1,H,W] input with H, W divisible by 4.
struct ModelSpec {
    ModelKind kind = ModelKind::Mlp;
    std::vector<int> widths;  // Mlp only
    Shape input_shape;
    int num_classes = 2;

    static ModelSpec mlp(std::vector<int> widths) {
        if (widths.size() < 2) throw std::invalid_argument("mlp spec needs at least [in, K]");
        ModelSpec s;
        s.kind = ModelKind::Mlp;
        s.input_shape = {widths.front()};
        s.num_classes = widths.back();
        s.widths = std::move(widths);
        s.validate();
        return s;
    }

    static ModelSpec small_cnn(int h, int w, int num_classes) {
        ModelSpec s;
        s.kind = ModelKind::SmallCnn;
        s.input_shape = {1, h, w};
        s.num_classes = num_classes;
        s.validate();
        return s;
    }

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("model spec: need at least 2 classes");
        if (kind == ModelKind::Mlp) {
            if (widths.size() < 2 || widths.back() != num_classes)
                throw std::invalid_argument("mlp spec: final width must equal class count");
            for (int v : widths)
                if (v <= 0) throw std::invalid_argument("mlp spec: widths must be positive");
        } else {
            if (input_shape.size() != 3 || input_shape[0] != 1)
                throw std::invalid_argument("small-cnn spec: input must be [1,H,W]");
            if (input_shape[1] % 4 != 0 || input_shape[2] % 4 != 0)
                throw std::invalid_argument("small-cnn spec: H and W must be divisible by 4");
        }
    }

    std::size_t input_dim() const { return shape_numel(input_shape); }

    bool operator==(const ModelSpec&) const = default;
};

struct Params {
    ModelSpec spec;
    std::map<std::string, Tensor> tensors;

    bool operator==(const Params&) const = default;
};

namespace detail {

inline void add_mlp_layers(Graph& g, const ModelSpec& spec, NodeId x, NodeId& logits) {
    NodeId cur = x;
    const auto& w = spec.widths;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        NodeId W = g.param("W" + std::to_string(l), {w[l], w[l + 1]});
        NodeId b = g.param("b" + std::to_string(l), {w[l + 1]});
        cur = g.affine(cur, W, b);
        if (l + 2 < w.size()) cur = g.relu(cur);
    }
    logits = cur;
}

inline void add_cnn_layers(Graph& g, const ModelSpec& spec, NodeId x, NodeId& logits) {
    const int h = spec.input_shape[1], w = spec.input_shape[2];
    NodeId k0 = g.param("convW0", {8, 1, 3, 3});
    NodeId c0b = g.param("convB0", {8});
    NodeId cur = g.maxpool2(g.relu(g.conv2d(x, k0, c0b)));
    NodeId k1 = g.param("convW1", {16, 8, 3, 3});
    NodeId c1b = g.param("convB1", {16});
    cur = g.maxpool2(g.relu(g.conv2d(cur, k1, c1b)));
    cur = g.flatten(cur);
    const int flat = 16 * (h / 4) * (w / 4);
    NodeId W = g.param("fcW", {flat, spec.num_classes});
    NodeId b = g.param("fcB", {spec.num_classes});
    logits = g.affine(cur, W, b);
}

}  // namespace detail

// A model instance owns one loss graph: input leaf "x", one-hot target leaf
// "y", params as named leaves, root = softmax cross-entropy.
class Model {
public:
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        NodeId x = graph_.input("x", spec_.input_shape);
        if (spec_.kind == ModelKind::Mlp)
            detail::add_mlp_layers(graph_, spec_, x, logits_);
        else
            detail::add_cnn_layers(graph_, spec_, x, logits_);
        NodeId y = graph_.input("y", {spec_.num_classes});
        graph_.set_root(graph_.softmax_xent(logits_, y));
        param_names_ = graph_.leaf_names(OpKind::Param);
    }

    const ModelSpec& spec() const { return spec_; }
    const std::vector<std::string>& param_names() const { return param_names_; }
    Graph& graph() { return graph_; }

    Tensor onehot(int label) const {
        if (label < 0 || label >= spec_.num_classes)
            throw std::invalid_argument("label " + std::to_string(label) + " out of range");
        Tensor t({spec_.num_classes});
        t[static_cast<std::size_t>(label)] = 1.0;
        return t;
    }

    double loss(const Params& p, const Tensor& x, int label) {
        return forward_loss(p, x, label)[0];
    }

    // Loss together with gradients; leaves to differentiate are selected by
    // name ("x" and/or param names).
    double loss_grad(const Params& p, const Tensor& x, int label,
                     const std::vector<std::string>& wrt, std::map<std::string, Tensor>& grads_out) {
        const double l = forward_loss(p, x, label)[0];
        graph_.backward();
        grads_out = graph_.grads(wrt);
        return l;
    }

    Tensor logits(const Params& p, const Tensor& x) {
        forward_loss(p, x, 0);
        return graph_.value(logits_);
    }

    // argmax with ties broken toward the smallest class index
    int predict(const Params& p, const Tensor& x) {
        logits(p, x);
        return last_predict();
    }

    // prediction from the most recent forward pass, without re-evaluating
    int last_predict() const {
        const Tensor& z = graph_.value(logits_);
        int best = 0;
        for (int i = 1; i < spec_.num_classes; ++i)
            if (z[i] > z[best]) best = i;
        return best;
    }

private:
    const Tensor& forward_loss(const Params& p, const Tensor& x, int label) {
        if (p.spec != spec_) throw std::invalid_argument("params built for a different spec");
        std::map<std::string, Tensor> bindings = p.tensors;
        bindings.emplace("x", x);
        bindings.emplace("y", onehot(label));
        return graph_.forward(bindings);
    }

    ModelSpec spec_;
    Graph graph_;
    NodeId logits_ = -1;
    std::vector<std::string> param_names_;
};

// Deterministic scaled-uniform fan-in init: weights ~ U(-1/sqrt(fan_in),
// 1/sqrt(fan_in)), biases zero. Same (spec, seed) gives bit-identical Params.
inline Params init(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, "model-init"));
    Params p;
    p.spec = spec;
    // Names and shapes mirror the graph built by Model; layer order fixes the
    // draw order, so results are reproducible.
    auto fill = [&](const std::string& name, Shape shape, int fan_in, bool is_bias) {
        Tensor t(std::move(shape));
        if (!is_bias) {
            const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : t.data) v = rng.uniform(-a, a);
        }
        p.tensors.emplace(name, std::move(t));
    };
    if (spec.kind == ModelKind::Mlp) {
        const auto& w = spec.widths;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) {
            fill("W" + std::to_string(l), {w[l], w[l + 1]}, w[l], false);
            fill("b" + std::to_string(l), {w[l + 1]}, w[l], true);
        }
    } else {
        const int h = spec.input_shape[1], w = spec.input_shape[2];
        fill("convW0", {8, 1, 3, 3}, 9, false);
        fill("convB0", {8}, 9, true);
        fill("convW1", {16, 8, 3, 3}, 8 * 9, false);
        fill("convB1", {16}, 8 * 9, true);
        const int flat = 16 * (h / 4) * (w / 4);
        fill("fcW", {flat, spec.num_classes}, flat, false);
        fill("fcB", {spec.num_classes}, flat, true);
    }
    return p;
}

}  // namespace advlab
