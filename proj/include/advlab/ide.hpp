#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/data.hpp"
#include "advlab/training.hpp"

namespace advlab {

struct IDEResult {
    int t = 0;
    double ide_train_error = 0.0;
    double ide_test_error = 0.0;
    std::uint64_t retrain_seed = 0;
    int epochs_run = 0;
    double final_train_loss = 0.0;
    bool interpolated = false;  // reached the configured train-error target
    bool ok = true;
    std::string error;
};

// Interpolation target: the retrain must reach (near-)zero training error or
// the run is flagged rather than silently reported.
inline constexpr double kIdeInterpolationTarget = 0.005;

// One induced-distribution experiment at a checkpoint: perturb train and test
// sets with the checkpoint's PGD operator, retrain from a fresh random init
// with standard loss on the induced training set, and evaluate *standard*
// (unattacked) error on the induced test set. The checkpoint parameters are
// never consumed except through the induced datasets.
inline IDEResult run_ide(const Checkpoint& ckpt, const LabeledDataset& ds_train,
                         const LabeledDataset& ds_test, const AttackConfig& atk,
                         const TrainConfig& ide_cfg, const ModelSpec& retrain_spec) {
    IDEResult res;
    res.t = ckpt.t;
    res.retrain_seed = ide_cfg.seed;

    const std::uint64_t mat_seed = derive_seed(ide_cfg.seed, "ide-materialize", static_cast<std::uint64_t>(ckpt.t));
    const LabeledDataset induced_train = materialize_induced(ds_train, ckpt.params, atk, mat_seed);
    const LabeledDataset induced_test = materialize_induced(ds_test, ckpt.params, atk, mat_seed + 1);

    TrainConfig cfg = ide_cfg;
    if (cfg.target_train_error < 0.0) cfg.target_train_error = kIdeInterpolationTarget;
    cfg.schedule = {cfg.epochs};  // no intermediate checkpoints needed

    const TrainResult tr = standard_train(retrain_spec, induced_train, cfg);
    res.epochs_run = static_cast<int>(tr.history.size());
    res.final_train_loss = tr.history.back().mean_loss;

    const ErrorReport on_train = eval_errors(tr.params, induced_train);
    const ErrorReport on_test = eval_errors(tr.params, induced_test);
    res.ide_train_error = on_train.standard_error;
    res.ide_test_error = on_test.standard_error;
    res.interpolated = res.ide_train_error <= cfg.target_train_error;
    return res;
}

inline IDEResult run_ide(const Checkpoint& ckpt, const LabeledDataset& ds_train,
                         const LabeledDataset& ds_test, const AttackConfig& atk,
                         const TrainConfig& ide_cfg) {
    return run_ide(ckpt, ds_train, ds_test, atk, ide_cfg, ckpt.params.spec);
}

// One IDE per checkpoint, each with an independent fresh initialization.
// Per-checkpoint failures are recorded in the result and the sweep continues.
inline std::vector<IDEResult> ide_sweep(const std::vector<Checkpoint>& trajectory,
                                        const LabeledDataset& ds_train, const LabeledDataset& ds_test,
                                        const AttackConfig& atk, const TrainConfig& ide_cfg) {
    if (trajectory.empty()) throw std::invalid_argument("ide_sweep: empty trajectory");
    std::vector<IDEResult> out;
    out.reserve(trajectory.size());
    for (const auto& ck : trajectory) {
        TrainConfig cfg = ide_cfg;
        cfg.seed = derive_seed(ide_cfg.seed, "ide-retrain", static_cast<std::uint64_t>(ck.t));
        try {
            out.push_back(run_ide(ck, ds_train, ds_test, atk, cfg));
        } catch (const std::exception& e) {
            IDEResult bad;
            bad.t = ck.t;
            bad.ok = false;
            bad.error = e.what();
            out.push_back(bad);
        }
    }
    return out;
}

}  // namespace advlab
