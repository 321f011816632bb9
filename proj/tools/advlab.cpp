#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advlab/bound.hpp"
#include "advlab/checkpoint_io.hpp"
#include "advlab/config.hpp"
#include "advlab/experiment.hpp"
#include "advlab/ide.hpp"
#include "advlab/metrics.hpp"
#include "advlab/report.hpp"
#include "advlab/training.hpp"

namespace fs = std::filesystem;
using namespace advlab;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset_name;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "experiment config JSON file");
    cmd->add_option("--preset", o.preset_name, "named preset (blobs-overfit, blobs-easy, mnist-small, mnist-paper-attack)");
    cmd->add_option("--seed", o.seeds, "seed list override");
    cmd->add_option("--out", o.out_dir, "output directory override");
}

ExperimentConfig resolve_config(const CommonOpts& o) {
    if (o.config_path.empty() == o.preset_name.empty())
        throw CLI::ValidationError("exactly one of --config / --preset is required");
    ExperimentConfig cfg = o.config_path.empty() ? preset(o.preset_name) : load_config(o.config_path);
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (const char* root = std::getenv("ADVLAB_OUT_ROOT"))
        cfg.out_dir = (fs::path(root) / cfg.out_dir).string();
    return cfg;
}

int cmd_run(const CommonOpts& o) {
    const ExperimentConfig cfg = resolve_config(o);
    const ExperimentOutput out = run_experiment(cfg);
    std::cout << "report: " << (fs::path(cfg.out_dir) / "report.csv").string() << '\n';
    return out.ok ? 0 : 1;
}

int cmd_train_at(const CommonOpts& o) {
    const ExperimentConfig cfg = resolve_config(o);
    fs::create_directories(cfg.out_dir);
    for (std::uint64_t seed : cfg.seeds) {
        const LabeledDataset ds_train = build_dataset(cfg.dataset, seed, true, cfg.attack.epsilon);
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(seed, "pgd-at");
        const TrainResult res = pgd_at_train(cfg.model, ds_train, tc, cfg.attack);
        const fs::path dir = fs::path(cfg.out_dir) / ("checkpoints-seed" + std::to_string(seed));
        fs::create_directories(dir);
        for (const auto& ck : res.trajectory) {
            const std::string path = (dir / ("ckpt_t" + std::to_string(ck.t) + ".bin")).string();
            save_checkpoint(path, ck);
            std::cout << "saved " << path << " (train loss " << ck.stats.mean_loss << ", err "
                      << ck.stats.error << ")\n";
        }
    }
    return 0;
}

int cmd_ide(const CommonOpts& o, const std::string& ckpt_dir) {
    const ExperimentConfig cfg = resolve_config(o);
    const std::uint64_t seed = cfg.seeds.front();
    const LabeledDataset ds_train = build_dataset(cfg.dataset, seed, true, cfg.attack.epsilon);
    const LabeledDataset ds_test = build_dataset(cfg.dataset, seed, false, cfg.attack.epsilon);
    std::vector<Checkpoint> traj;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ckpt_dir))
        if (e.path().extension() == ".bin") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) traj.push_back(load_checkpoint(f.string()));
    std::sort(traj.begin(), traj.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    if (traj.empty()) {
        std::cerr << "no checkpoints found in " << ckpt_dir << '\n';
        return 1;
    }
    TrainConfig ide_cfg = cfg.ide;
    ide_cfg.seed = derive_seed(seed, "ide");
    std::cout << "t,ide_train_err,ide_test_err,interpolated\n";
    for (const auto& r : ide_sweep(traj, ds_train, ds_test, cfg.attack, ide_cfg)) {
        if (!r.ok) {
            std::cout << r.t << ",error: " << r.error << '\n';
            continue;
        }
        std::cout << r.t << ',' << r.ide_train_error << ',' << r.ide_test_error << ','
                  << (r.interpolated ? 1 : 0) << '\n';
    }
    return 0;
}

int cmd_metrics(const CommonOpts& o, const std::string& ckpt_path) {
    const ExperimentConfig cfg = resolve_config(o);
    const std::uint64_t seed = cfg.seeds.front();
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const LabeledDataset ds_test = build_dataset(cfg.dataset, seed, false, cfg.attack.epsilon);
    const std::size_t n = std::min<std::size_t>(ds_test.size(), cfg.metrics_examples);
    MCConfig mc = cfg.mc;
    mc.seed = derive_seed(seed, "metrics", ck.t);
    double eld = 0, mean_d = 0, mean_phi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        MCConfig sub = mc;
        sub.seed = derive_seed(mc.seed, "example", i);
        eld += local_dispersion(ds_test.inputs[i], ds_test.labels[i], ck.params, cfg.attack, sub).value;
        mean_d += mean_distance_to_clean(ds_test.inputs[i], ds_test.labels[i], ck.params, cfg.attack, sub);
        mean_phi += angular_spread(ds_test.inputs[i], ds_test.labels[i], ck.params, cfg.attack, sub);
    }
    const double dn = static_cast<double>(n);
    std::cout << "t=" << ck.t << " examples=" << n << " n_pairs=" << mc.n_pairs << '\n'
              << "eld=" << eld / dn << '\n'
              << "mean_d=" << mean_d / dn << '\n'
              << "mean_phi=" << mean_phi / dn << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-training laboratory: PGD-AT, induced-distribution experiments, "
                 "perturbation-operator metrics, and generalization-bound evaluation"};
    app.require_subcommand(1);

    CommonOpts run_o, train_o, ide_o, metrics_o, gen_o;
    std::string ckpt_dir, ckpt_path;

    auto* run = app.add_subcommand("run", "full pipeline: PGD-AT -> IDE -> metrics -> bound -> CSV");
    add_common(run, run_o);

    auto* train = app.add_subcommand("train-at", "PGD adversarial training; saves checkpoints");
    add_common(train, train_o);

    auto* ide = app.add_subcommand("ide", "induced distribution experiment over saved checkpoints");
    add_common(ide, ide_o);
    ide->add_option("--checkpoints", ckpt_dir, "directory of checkpoint files")->required();

    auto* metrics = app.add_subcommand("metrics", "dispersion / distance / angle metrics for one checkpoint");
    add_common(metrics, metrics_o);
    metrics->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();

    BoundInputs bi;
    auto* bound = app.add_subcommand("bound", "evaluate the generalization bound");
    bound->add_option("--beta", bi.beta, "Lipschitz constant")->required();
    bound->add_option("--B", bi.B, "loss sup-bound")->required();
    bound->add_option("--d", bi.d, "input dimension")->required();
    bound->add_option("--epsilon", bi.epsilon, "perturbation radius")->required();
    bound->add_option("--m", bi.m, "sample size")->required();
    bound->add_option("--eld", bi.eld, "expected local dispersion")->required();
    bound->add_option("--tau", bi.tau, "confidence level in (0,1)");

    std::string report_csv = "out/report.csv", hist_csv = "out/histograms.csv", plot_out = "out/plots";
    auto* plot = app.add_subcommand("plot", "render SVG curves and histograms from report CSVs");
    plot->add_option("--report", report_csv, "report.csv path");
    plot->add_option("--histograms", hist_csv, "histograms.csv path");
    plot->add_option("--out", plot_out, "plot output directory");

    auto* data = app.add_subcommand("data", "dataset utilities");
    data->require_subcommand(1);
    auto* gen = data->add_subcommand("gen", "generate the configured dataset as CSV");
    add_common(gen, gen_o);
    std::string gen_out = "dataset.csv";
    gen->add_option("--file", gen_out, "output CSV file");
    std::string mnist_dir = "data";
    auto* fetch = data->add_subcommand("fetch-mnist", "validate local MNIST IDX files (no network)");
    fetch->add_option("--dir", mnist_dir, "directory holding the four IDX files");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_o);
        if (*train) return cmd_train_at(train_o);
        if (*ide) return cmd_ide(ide_o, ckpt_dir);
        if (*metrics) return cmd_metrics(metrics_o, ckpt_path);
        if (*bound) {
            std::cout << theorem_bound(bi) << '\n';
            return 0;
        }
        if (*plot) {
            emit_plots(report_csv, hist_csv, plot_out);
            std::cout << "plots written to " << plot_out << '\n';
            return 0;
        }
        if (*gen) {
            const ExperimentConfig cfg = resolve_config(gen_o);
            const LabeledDataset ds = build_dataset(cfg.dataset, cfg.seeds.front(), true, cfg.attack.epsilon);
            std::ofstream out(gen_out, std::ios::trunc);
            if (!out) throw std::runtime_error("cannot open " + gen_out);
            export_csv(ds, out);
            std::cout << ds.size() << " examples written to " << gen_out << '\n';
            return 0;
        }
        if (*fetch) {
            const LabeledDataset tr = load_idx(mnist_dir + "/train-images-idx3-ubyte",
                                               mnist_dir + "/train-labels-idx1-ubyte");
            const LabeledDataset te = load_idx(mnist_dir + "/t10k-images-idx3-ubyte",
                                               mnist_dir + "/t10k-labels-idx1-ubyte");
            std::cout << "train: " << tr.size() << " examples, test: " << te.size() << " examples\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
