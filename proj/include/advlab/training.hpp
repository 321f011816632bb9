#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/data.hpp"
#include "advlab/models.hpp"
#include "advlab/rng.hpp"

namespace advlab {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.1;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> schedule;          // 1-based epoch indices; empty = every epoch
    double target_train_error = -1.0;   // stop early once reached, if >= 0

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw std::invalid_argument("train: epochs/batch must be positive");
        if (learning_rate < 0) throw std::invalid_argument("train: negative learning rate");
        for (std::size_t i = 1; i < schedule.size(); ++i)
            if (schedule[i] <= schedule[i - 1])
                throw std::invalid_argument("train: schedule must be strictly increasing");
    }
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;  // loss at the training points fed to the update
    double error = 0.0;      // misclassification at those same points
};

struct Checkpoint {
    int t = 0;
    Params params;
    EpochStats stats;
};

struct TrainResult {
    Params params;
    std::vector<EpochStats> history;
    std::vector<Checkpoint> trajectory;
};

struct ErrorReport {
    double standard_error = 0.0;
    double robust_error = 0.0;
    double mean_loss = 0.0;
    double mean_robust_loss = 0.0;
};

namespace detail {

// Shared minibatch SGD loop. With an attack, every example is replaced by its
// k-step PGD image under the current params before the gradient is taken;
// without one, this is plain standard training. The two paths consume the
// same random stream, so an epsilon=0 attack reproduces standard training
// bit for bit.
inline TrainResult train_loop(const ModelSpec& spec, const LabeledDataset& ds, const TrainConfig& cfg,
                              const AttackConfig* atk) {
    cfg.validate();
    if (atk) atk->validate();
    if (ds.size() == 0) throw std::invalid_argument("train: empty dataset");

    Model model(spec);
    Params params = init(spec, derive_seed(cfg.seed, "train-init"));
    const auto& pnames = model.param_names();

    TrainResult res;
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);

    const bool random_init = atk && atk->init == AttackInit::UniformRandom;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        // attack starting points draw from their own substream so the update
        // sequence stays bit-identical to standard training when epsilon is 0
        Rng atk_rng(derive_seed(cfg.seed, "pgd-at-init", static_cast<std::uint64_t>(epoch)));

        double loss_sum = 0.0;
        std::size_t wrong = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::map<std::string, Tensor> acc;
            for (const auto& name : pnames) acc.emplace(name, Tensor(params.tensors.at(name).shape));
            for (std::size_t j = start; j < end; ++j) {
                const Tensor& x = ds.inputs[order[j]];
                const int y = ds.labels[order[j]];
                Tensor v = atk ? pgd_k(model, params, x, y, *atk, random_init ? &atk_rng : nullptr) : x;
                std::map<std::string, Tensor> grads;
                const double l = model.loss_grad(params, v, y, pnames, grads);
                if (!std::isfinite(l))
                    throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
                loss_sum += l;
                if (model.last_predict() != y) ++wrong;
                for (const auto& name : pnames) {
                    Tensor& a = acc[name];
                    const Tensor& g = grads.at(name);
                    for (std::size_t t = 0; t < a.numel(); ++t) a[t] += g[t];
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (const auto& name : pnames) {
                Tensor& p = params.tensors[name];
                const Tensor& a = acc[name];
                for (std::size_t t = 0; t < p.numel(); ++t)
                    p[t] -= cfg.learning_rate * (a[t] * inv + cfg.weight_decay * p[t]);
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.mean_loss = loss_sum / static_cast<double>(ds.size());
        st.error = static_cast<double>(wrong) / static_cast<double>(ds.size());
        res.history.push_back(st);

        const bool scheduled = cfg.schedule.empty() ||
                               std::find(cfg.schedule.begin(), cfg.schedule.end(), epoch) != cfg.schedule.end();
        if (scheduled) res.trajectory.push_back({epoch, params, st});

        if (cfg.target_train_error >= 0.0 && st.error <= cfg.target_train_error) break;
    }
    res.params = params;
    return res;
}

}  // namespace detail

inline TrainResult standard_train(const ModelSpec& spec, const LabeledDataset& ds, const TrainConfig& cfg) {
    return detail::train_loop(spec, ds, cfg, nullptr);
}

inline TrainResult pgd_at_train(const ModelSpec& spec, const LabeledDataset& ds, const TrainConfig& cfg,
                                const AttackConfig& atk) {
    return detail::train_loop(spec, ds, cfg, &atk);
}

// Clean and attacked error/loss on a dataset. With no attack the robust
// columns coincide with the standard ones. `seed` feeds per-example attack
// starting points when the attack uses a random initialization.
inline ErrorReport eval_errors(const Params& params, const LabeledDataset& ds,
                               const AttackConfig* atk = nullptr, std::uint64_t seed = 0) {
    if (ds.size() == 0) throw std::invalid_argument("eval_errors: empty dataset");
    Model model(params.spec);
    const bool random_init = atk && atk->init == AttackInit::UniformRandom;
    ErrorReport rep;
    std::size_t wrong = 0, rob_wrong = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Tensor& x = ds.inputs[i];
        const int y = ds.labels[i];
        rep.mean_loss += model.loss(params, x, y);
        if (model.last_predict() != y) ++wrong;
        if (atk) {
            Rng atk_rng(derive_seed(seed, "eval-init", i));
            Tensor v = pgd_k(model, params, x, y, *atk, random_init ? &atk_rng : nullptr);
            rep.mean_robust_loss += model.loss(params, v, y);
            if (model.last_predict() != y) ++rob_wrong;
        }
    }
    const double n = static_cast<double>(ds.size());
    rep.mean_loss /= n;
    rep.standard_error = static_cast<double>(wrong) / n;
    if (atk) {
        rep.mean_robust_loss /= n;
        rep.robust_error = static_cast<double>(rob_wrong) / n;
    } else {
        rep.mean_robust_loss = rep.mean_loss;
        rep.robust_error = rep.standard_error;
    }
    return rep;
}

// |robust test error - robust train error| per checkpoint; the test set
// stands in for the population.
inline std::vector<double> robust_gap(const std::vector<Checkpoint>& trajectory,
                                      const LabeledDataset& ds_train, const LabeledDataset& ds_test,
                                      const AttackConfig& atk, std::uint64_t seed = 0) {
    if (trajectory.empty()) throw std::invalid_argument("robust_gap: empty trajectory");
    std::vector<double> gaps;
    gaps.reserve(trajectory.size());
    for (const auto& ck : trajectory) {
        const ErrorReport tr = eval_errors(ck.params, ds_train, &atk, derive_seed(seed, "gap-train", ck.t));
        const ErrorReport te = eval_errors(ck.params, ds_test, &atk, derive_seed(seed, "gap-test", ck.t));
        gaps.push_back(std::abs(te.robust_error - tr.robust_error));
    }
    return gaps;
}

}  // namespace advlab
