#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/bound.hpp"
#include "advlab/checkpoint_io.hpp"
#include "advlab/config.hpp"
#include "advlab/ide.hpp"
#include "advlab/metrics.hpp"
#include "advlab/report.hpp"
#include "advlab/training.hpp"

namespace advlab {

struct ExperimentOutput {
    std::vector<ReportRow> rows;
    std::vector<HistogramRecord> histograms;
    double corr_ide_gap = 0.0;   // pearson(ide_test_err, gap) over all rows
    double corr_eld_ide = 0.0;   // pearson(eld, ide_test_err) over all rows
    bool ok = true;
    std::string error;
};

namespace detail {

inline std::vector<double> linspace_edges(double lo, double hi, int bins) {
    std::vector<double> e(bins + 1);
    for (int i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * i / bins;
    return e;
}

}  // namespace detail

// Full pipeline for one seed: PGD-AT -> per-checkpoint robust errors and gap
// -> IDE sweep -> metric sweep on a test-set subset -> bound evaluation.
inline void run_experiment_for_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                    ExperimentOutput& out, std::ostream& log) {
    const LabeledDataset ds_train = build_dataset(cfg.dataset, seed, true, cfg.attack.epsilon);
    const LabeledDataset ds_test = build_dataset(cfg.dataset, seed, false, cfg.attack.epsilon);

    TrainConfig at_cfg = cfg.train;
    at_cfg.seed = derive_seed(seed, "pgd-at");
    log << "[seed " << seed << "] PGD-AT: " << ds_train.size() << " train / " << ds_test.size()
        << " test examples\n";
    const TrainResult at = pgd_at_train(cfg.model, ds_train, at_cfg, cfg.attack);

    TrainConfig ide_cfg = cfg.ide;
    ide_cfg.seed = derive_seed(seed, "ide");
    log << "[seed " << seed << "] IDE sweep over " << at.trajectory.size() << " checkpoints\n";
    const std::vector<IDEResult> ides = ide_sweep(at.trajectory, ds_train, ds_test, cfg.attack, ide_cfg);

    // metric sweep operates on a fixed test-set prefix
    LabeledDataset metric_set;
    metric_set.num_classes = ds_test.num_classes;
    metric_set.name = ds_test.name + "-metrics";
    const std::size_t n_metric = std::min<std::size_t>(ds_test.size(), cfg.metrics_examples);
    for (std::size_t i = 0; i < n_metric; ++i) {
        metric_set.inputs.push_back(ds_test.inputs[i]);
        metric_set.labels.push_back(ds_test.labels[i]);
    }

    const double d_in = static_cast<double>(shape_numel(cfg.model.input_shape));
    const double eps = cfg.attack.epsilon;
    const auto gamma_edges = detail::linspace_edges(0.0, std::max(1e-12, 4.0 * d_in * eps * eps), 20);
    const auto dist_edges = detail::linspace_edges(0.0, std::max(1e-12, 2.0 * eps * std::sqrt(d_in)), 20);
    const auto phi_edges = detail::linspace_edges(0.0, 3.14159265358979323846, 20);

    for (std::size_t ci = 0; ci < at.trajectory.size(); ++ci) {
        const Checkpoint& ck = at.trajectory[ci];
        ReportRow row;
        row.seed = seed;
        row.t = ck.t;

        const ErrorReport tr =
            eval_errors(ck.params, ds_train, &cfg.attack, derive_seed(seed, "eval-train", ck.t));
        const ErrorReport te =
            eval_errors(ck.params, ds_test, &cfg.attack, derive_seed(seed, "eval-test", ck.t));
        row.std_train_err = tr.standard_error;
        row.std_test_err = te.standard_error;
        row.rob_train_err = tr.robust_error;
        row.rob_test_err = te.robust_error;
        row.gap = std::abs(te.robust_error - tr.robust_error);

        const IDEResult& ide = ides[ci];
        if (!ide.ok) log << "[seed " << seed << "] IDE failed at t=" << ide.t << ": " << ide.error << '\n';
        row.ide_train_err = ide.ide_train_error;
        row.ide_test_err = ide.ide_test_error;

        // local dispersion, collected per example so both the mean and its
        // spread across the dataset are available
        MCConfig mc = cfg.mc;
        mc.seed = derive_seed(seed, "metrics", static_cast<std::uint64_t>(ck.t));
        std::vector<double> gammas;
        gammas.reserve(metric_set.size());
        for (std::size_t i = 0; i < metric_set.size(); ++i) {
            MCConfig sub = mc;
            sub.seed = derive_seed(mc.seed, "example", i);
            gammas.push_back(
                local_dispersion(metric_set.inputs[i], metric_set.labels[i], ck.params, cfg.attack, sub)
                    .value);
        }
        double gsum = 0.0;
        for (double g : gammas) gsum += g;
        row.eld = gsum / static_cast<double>(gammas.size());
        if (gammas.size() > 1) {
            double var = 0.0;
            for (double g : gammas) var += (g - row.eld) * (g - row.eld);
            row.eld_se = std::sqrt(var / (static_cast<double>(gammas.size()) - 1.0) /
                                   static_cast<double>(gammas.size()));
        }

        MCConfig mc_d = mc;
        mc_d.seed = derive_seed(mc.seed, "dist");
        const DatasetMetric dm = dataset_expectation(
            metric_set,
            [&](const Tensor& x, int y, const MCConfig& sub) {
                return mean_distance_to_clean(x, y, ck.params, cfg.attack, sub);
            },
            mc_d, dist_edges);
        row.mean_d = dm.mean;

        MCConfig mc_phi = mc;
        mc_phi.seed = derive_seed(mc.seed, "phi");
        const DatasetMetric pm = dataset_expectation(
            metric_set,
            [&](const Tensor& x, int y, const MCConfig& sub) {
                return angular_spread(x, y, ck.params, cfg.attack, sub);
            },
            mc_phi, phi_edges);
        row.mean_phi = pm.mean;

        BoundInputs bi;
        if (cfg.bound.mode == "fixed") {
            bi.beta = cfg.bound.beta;
            bi.B = cfg.bound.B;
        } else {
            auto [beta_hat, b_hat] = estimate_beta_B(ck.params, metric_set, cfg.attack, 16,
                                                     derive_seed(seed, "beta-B", ck.t));
            bi.beta = beta_hat;  // empirical lower bound on the true constant
            bi.B = b_hat;
        }
        bi.d = d_in;
        bi.epsilon = eps;
        bi.m = static_cast<double>(ds_train.size());
        bi.eld = row.eld;
        bi.tau = cfg.bound.tau;
        row.bound_value = theorem_bound(bi);

        out.rows.push_back(row);
        out.histograms.push_back({seed, ck.t, "gamma", make_histogram(gammas, gamma_edges)});
        out.histograms.push_back({seed, ck.t, "d", dm.histogram});
        out.histograms.push_back({seed, ck.t, "phi", pm.histogram});
        log << "[seed " << seed << "] t=" << ck.t << " rob_train=" << row.rob_train_err
            << " rob_test=" << row.rob_test_err << " gap=" << row.gap << " ide_test=" << row.ide_test_err
            << " eld=" << row.eld << " bound=" << row.bound_value << '\n';
    }
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    ExperimentOutput out;
    try {
        for (std::uint64_t seed : cfg.seeds) run_experiment_for_seed(cfg, seed, out, log);
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        log << "experiment failed: " << e.what() << " (partial results flushed)\n";
    }

    write_report_csv((fs::path(cfg.out_dir) / "report.csv").string(), out.rows);
    write_histograms_csv((fs::path(cfg.out_dir) / "histograms.csv").string(), out.histograms);

    // per-checkpoint means over seeds
    std::map<int, std::vector<const ReportRow*>> by_t;
    for (const auto& r : out.rows) by_t[r.t].push_back(&r);
    {
        std::ofstream s((fs::path(cfg.out_dir) / "summary.csv").string(), std::ios::trunc);
        s.precision(12);
        s << kCsvSchemaTag << '\n'
          << "t,n_seeds,mean_rob_train_err,mean_rob_test_err,mean_gap,mean_ide_test_err,mean_eld,"
             "mean_d,mean_phi,mean_bound\n";
        for (const auto& [t, rs] : by_t) {
            double g = 0, ide = 0, eld = 0, rtr = 0, rte = 0, md = 0, mp = 0, bd = 0;
            for (const auto* r : rs) {
                g += r->gap;
                ide += r->ide_test_err;
                eld += r->eld;
                rtr += r->rob_train_err;
                rte += r->rob_test_err;
                md += r->mean_d;
                mp += r->mean_phi;
                bd += r->bound_value;
            }
            const double n = static_cast<double>(rs.size());
            s << t << ',' << rs.size() << ',' << rtr / n << ',' << rte / n << ',' << g / n << ','
              << ide / n << ',' << eld / n << ',' << md / n << ',' << mp / n << ',' << bd / n << '\n';
        }
    }

    if (out.rows.size() >= 2) {
        std::vector<double> ide, gap, eld;
        for (const auto& r : out.rows) {
            ide.push_back(r.ide_test_err);
            gap.push_back(r.gap);
            eld.push_back(r.eld);
        }
        out.corr_ide_gap = pearson(ide, gap);
        out.corr_eld_ide = pearson(eld, ide);
        std::ofstream c((fs::path(cfg.out_dir) / "correlations.csv").string(), std::ios::trunc);
        c.precision(12);
        c << "metric,value\n"
          << "pearson_ide_test_err_vs_gap," << out.corr_ide_gap << '\n'
          << "pearson_eld_vs_ide_test_err," << out.corr_eld_ide << '\n';
        log << "pearson(ide_test_err, gap) = " << out.corr_ide_gap
            << "  pearson(eld, ide_test_err) = " << out.corr_eld_ide << '\n';
    }
    return out;
}

// Renders curve plots and histogram overlays from the CSV artifacts.
inline void emit_plots(const std::string& report_csv, const std::string& histograms_csv,
                       const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::vector<ReportRow> rows = read_report_csv(report_csv);

    // mean over seeds per checkpoint, per column
    std::map<int, std::vector<const ReportRow*>> by_t;
    for (const auto& r : rows) by_t[r.t].push_back(&r);
    auto series_of = [&](auto getter) {
        svg::Series s;
        for (const auto& [t, rs] : by_t) {
            double m = 0;
            for (const auto* r : rs) m += getter(*r);
            s.xs.push_back(t);
            s.ys.push_back(m / static_cast<double>(rs.size()));
        }
        return s;
    };

    {
        auto rob_tr = series_of([](const ReportRow& r) { return r.rob_train_err; });
        rob_tr.label = "robust train err";
        rob_tr.color = "#2ca02c";
        auto rob_te = series_of([](const ReportRow& r) { return r.rob_test_err; });
        rob_te.label = "robust test err";
        rob_te.color = "#1f77b4";
        auto gap = series_of([](const ReportRow& r) { return r.gap; });
        gap.label = "robust gap";
        gap.color = "#bcbd22";
        auto ide = series_of([](const ReportRow& r) { return r.ide_test_err; });
        ide.label = "IDE test err";
        ide.color = "#d62728";
        svg::write_curves((fs::path(out_dir) / "errors.svg").string(), "errors vs checkpoint",
                          {rob_tr, rob_te, gap, ide});
    }
    {
        auto eld = series_of([](const ReportRow& r) { return r.eld; });
        eld.label = "ELD";
        eld.color = "#d62728";
        auto d = series_of([](const ReportRow& r) { return r.mean_d; });
        d.label = "mean d";
        d.color = "#2ca02c";
        auto phi = series_of([](const ReportRow& r) { return r.mean_phi; });
        phi.label = "mean phi";
        phi.color = "#ff7f0e";
        auto bound = series_of([](const ReportRow& r) { return r.bound_value; });
        bound.label = "bound";
        bound.color = "#9467bd";
        svg::write_curves((fs::path(out_dir) / "metrics.svg").string(), "metrics vs checkpoint",
                          {eld, d, phi, bound});
    }

    // histograms: first seed, up to three checkpoints per metric
    std::ifstream in(histograms_csv);
    if (!in) throw std::runtime_error("plot: cannot open " + histograms_csv);
    std::string line;
    std::getline(in, line);  // schema tag
    std::getline(in, line);  // header
    std::map<std::string, std::map<std::pair<std::uint64_t, int>, HistogramRecord>> recs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string seed_s, t_s, metric, lo_s, hi_s, cnt_s;
        std::getline(ss, seed_s, ',');
        std::getline(ss, t_s, ',');
        std::getline(ss, metric, ',');
        std::getline(ss, lo_s, ',');
        std::getline(ss, hi_s, ',');
        std::getline(ss, cnt_s, ',');
        const auto key = std::make_pair(static_cast<std::uint64_t>(std::stoull(seed_s)), std::stoi(t_s));
        auto& rec = recs[metric][key];
        rec.seed = key.first;
        rec.t = key.second;
        rec.metric = metric;
        if (rec.hist.edges.empty()) rec.hist.edges.push_back(std::stod(lo_s));
        rec.hist.edges.push_back(std::stod(hi_s));
        rec.hist.counts.push_back(std::stol(cnt_s));
    }
    for (auto& [metric, by_key] : recs) {
        std::vector<HistogramRecord> chosen;
        std::uint64_t first_seed = by_key.begin()->first.first;
        std::vector<const HistogramRecord*> of_seed;
        for (const auto& [key, rec] : by_key)
            if (key.first == first_seed) of_seed.push_back(&rec);
        // first / middle / last checkpoint
        if (!of_seed.empty()) {
            chosen.push_back(*of_seed.front());
            if (of_seed.size() > 2) chosen.push_back(*of_seed[of_seed.size() / 2]);
            if (of_seed.size() > 1) chosen.push_back(*of_seed.back());
        }
        svg::write_histogram((fs::path(out_dir) / ("hist_" + metric + ".svg")).string(),
                             metric + " histograms", chosen);
    }
}

}  // namespace advlab
