#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "advlab/attack.hpp"
#include "advlab/data.hpp"
#include "advlab/metrics.hpp"
#include "advlab/models.hpp"

namespace advlab {

struct BoundInputs {
    double beta = 0.0;    // Lipschitz constant of the loss in its input
    double B = 0.0;       // loss sup-bound
    double d = 0.0;       // input dimension
    double epsilon = 0.0;
    double m = 0.0;       // sample size
    double eld = 0.0;     // expected local dispersion estimate
    double tau = 0.05;    // confidence level

    void validate() const {
        if (beta < 0 || B < 0 || d < 0 || epsilon < 0 || eld < 0)
            throw std::invalid_argument("bound: negative input");
        if (m < 1) throw std::invalid_argument("bound: m must be >= 1");
        if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("bound: tau must be in (0,1)");
    }
};

// Generalization-gap bound:
//   (2 beta / sqrt(m)) sqrt(eld) + 2 beta sqrt(d) eps / sqrt(m)
//     + (2 B / sqrt(m)) (sqrt(ln(1/tau) / 2) + 1)
inline double theorem_bound(const BoundInputs& in) {
    in.validate();
    const double rm = std::sqrt(in.m);
    return 2.0 * in.beta / rm * std::sqrt(in.eld) + 2.0 * in.beta * std::sqrt(in.d) * in.epsilon / rm +
           2.0 * in.B / rm * (std::sqrt(std::log(1.0 / in.tau) / 2.0) + 1.0);
}

// |mean loss on induced train - mean loss on induced test| under the given
// (IDE-retrained) model.
inline double empirical_gg(const Params& phi_params, const LabeledDataset& induced_train,
                           const LabeledDataset& induced_test) {
    if (induced_train.size() == 0 || induced_test.size() == 0)
        throw std::invalid_argument("empirical_gg: empty dataset");
    Model model(phi_params.spec);
    auto mean_loss = [&](const LabeledDataset& ds) {
        double s = 0.0;
        for (std::size_t i = 0; i < ds.size(); ++i) s += model.loss(phi_params, ds.inputs[i], ds.labels[i]);
        return s / static_cast<double>(ds.size());
    };
    return std::abs(mean_loss(induced_train) - mean_loss(induced_test));
}

// Empirical stand-ins for the bound's constants. B_hat is the max loss seen
// over clean and attacked points. beta_hat is the max observed loss-difference
// ratio over sampled pairs inside each epsilon-ball; it approaches the true
// Lipschitz constant from below, so downstream output labels it as a lower
// bound.
inline std::pair<double, double> estimate_beta_B(const Params& params, const LabeledDataset& ds,
                                                 const AttackConfig& atk, int pairs_per_example = 32,
                                                 std::uint64_t seed = 0) {
    if (ds.size() == 0) throw std::invalid_argument("estimate_beta_B: empty dataset");
    Model model(params.spec);
    double beta_hat = 0.0, b_hat = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Tensor& x = ds.inputs[i];
        const int y = ds.labels[i];
        b_hat = std::max(b_hat, model.loss(params, x, y));
        Rng adv_rng(derive_seed(seed, "beta-adv", i));
        const Tensor adv = pgd_k(model, params, x, y, atk,
                                 atk.init == AttackInit::UniformRandom ? &adv_rng : nullptr);
        b_hat = std::max(b_hat, model.loss(params, adv, y));
        Rng rng(derive_seed(seed, "beta-pairs", i));
        for (int p = 0; p < pairs_per_example; ++p) {
            const Tensor v = sample_in_ball(x, atk.epsilon, rng);
            const Tensor w = sample_in_ball(x, atk.epsilon, rng);
            const double dist = l2_dist(v, w);
            if (dist < 1e-12) continue;
            const double lv = model.loss(params, v, y);
            const double lw = model.loss(params, w, y);
            b_hat = std::max({b_hat, lv, lw});
            beta_hat = std::max(beta_hat, std::abs(lv - lw) / dist);
        }
    }
    return {beta_hat, b_hat};
}

}  // namespace advlab
