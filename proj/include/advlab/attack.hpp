#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "advlab/models.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

enum class AttackInit { AtCenter, UniformRandom };

// k-step l-inf PGD operator description.
struct AttackConfig {
    double epsilon = 0.0;
    double lambda = 0.0;
    int k = 0;
    AttackInit init = AttackInit::AtCenter;

    void validate() const {
        if (epsilon < 0) throw std::invalid_argument("attack: epsilon must be >= 0");
        if (k < 0) throw std::invalid_argument("attack: k must be >= 0");
        if (k > 0 && lambda <= 0) throw std::invalid_argument("attack: lambda must be > 0 when k > 0");
    }
};

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Coordinatewise projection onto B(x, eps) composed with the [0,1] data box.
// Idempotent.
inline Tensor project_linf(const Tensor& v, const Tensor& x, double epsilon) {
    require_same_shape(v, x, "project_linf");
    Tensor out = v;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double lo = std::max(0.0, x[i] - epsilon);
        const double hi = std::min(1.0, x[i] + epsilon);
        out[i] = std::min(std::max(out[i], lo), hi);
    }
    return out;
}

// One-step PGD mapping: project(x_cur + lambda * sign(grad_x loss)).
inline Tensor pgd_step(Model& model, const Params& params, const Tensor& x_cur, const Tensor& x,
                       int y, const AttackConfig& cfg) {
    cfg.validate();
    std::map<std::string, Tensor> grads;
    model.loss_grad(params, x_cur, y, {"x"}, grads);
    const Tensor& g = grads.at("x");
    if (!g.all_finite()) throw std::runtime_error("pgd_step: non-finite input gradient");
    Tensor stepped = x_cur;
    for (std::size_t i = 0; i < stepped.numel(); ++i) stepped[i] += cfg.lambda * sgn(g[i]);
    return project_linf(stepped, x, cfg.epsilon);
}

// k-fold composition of pgd_step starting from an explicit point.
inline Tensor pgd_k_from(Model& model, const Params& params, const Tensor& x0, const Tensor& x,
                         int y, const AttackConfig& cfg) {
    cfg.validate();
    Tensor cur = project_linf(x0, x, cfg.epsilon);
    for (int i = 0; i < cfg.k; ++i) cur = pgd_step(model, params, cur, x, y, cfg);
    return cur;
}

// k-step PGD with the configured start: at-center consumes no randomness;
// uniform-random requires a caller-supplied stream.
inline Tensor pgd_k(Model& model, const Params& params, const Tensor& x, int y,
                    const AttackConfig& cfg, Rng* rng = nullptr) {
    cfg.validate();
    if (cfg.init == AttackInit::AtCenter) return pgd_k_from(model, params, x, x, y, cfg);
    if (!rng) throw std::invalid_argument("pgd_k: uniform-random init needs an rng");
    Tensor x0 = x;
    for (auto& v : x0.data) v += rng->uniform(-cfg.epsilon, cfg.epsilon);
    return pgd_k_from(model, params, x0, x, y, cfg);
}

// Exhaustive grid search over B(x, eps) ∩ [0,1]^d for the inner maximization.
// Test oracle only; capped at 1e7 grid points.
inline std::pair<Tensor, double> brute_force_inner_max(Model& model, const Params& params,
                                                       const Tensor& x, int y, double epsilon,
                                                       int grid_n) {
    if (grid_n < 2) throw std::invalid_argument("brute_force_inner_max: grid_n must be >= 2");
    const std::size_t d = x.numel();
    double total = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
        total *= grid_n;
        if (total > 1e7) throw std::invalid_argument("brute_force_inner_max: grid cap exceeded");
    }
    std::vector<std::vector<double>> axes(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double lo = std::max(0.0, x[i] - epsilon);
        const double hi = std::min(1.0, x[i] + epsilon);
        axes[i].resize(grid_n);
        for (int j = 0; j < grid_n; ++j)
            axes[i][j] = lo + (hi - lo) * static_cast<double>(j) / (grid_n - 1);
    }
    Tensor v = x;
    Tensor best = x;
    double best_loss = -1.0;
    std::vector<int> idx(d, 0);
    while (true) {
        for (std::size_t i = 0; i < d; ++i) v[i] = axes[i][idx[i]];
        const double l = model.loss(params, v, y);
        if (l > best_loss) {
            best_loss = l;
            best = v;
        }
        std::size_t pos = 0;
        while (pos < d && ++idx[pos] == grid_n) idx[pos++] = 0;
        if (pos == d) break;
    }
    return {best, best_loss};
}

// Perturbation operator abstraction for the metric estimators: maps a start
// point to the operator output. Stubs slot in for calibration tests.
using PerturbOp = std::function<Tensor(const Tensor&)>;

inline PerturbOp make_pgd_operator(Model& model, const Params& params, const Tensor& x, int y,
                                   const AttackConfig& cfg) {
    return [&model, params, x, y, cfg](const Tensor& start) {
        return pgd_k_from(model, params, start, x, y, cfg);
    };
}

}  // namespace advlab
