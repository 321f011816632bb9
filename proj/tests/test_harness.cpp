#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advlab/experiment.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint(std::uint64_t seed) {
    Checkpoint ck;
    ck.t = 17;
    ck.stats = {17, 0.12345678901234, 0.25};
    ck.params = init(ModelSpec::mlp({3, 5, 2}), seed);
    return ck;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::string tmp_file(const char* name) { return (fs::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    const std::string path = tmp_file("advlab_ckpt_rt.bin");
    const Checkpoint ck = sample_checkpoint(42);
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.t == ck.t);
    CHECK(back.stats.epoch == ck.stats.epoch);
    CHECK(back.stats.mean_loss == ck.stats.mean_loss);
    CHECK(back.stats.error == ck.stats.error);
    CHECK(back.params == ck.params);
    // saving the loaded copy reproduces the same bytes
    const std::string path2 = tmp_file("advlab_ckpt_rt2.bin");
    save_checkpoint(path2, back);
    CHECK(slurp(path) == slurp(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint: any single byte flip is detected") {
    const std::string path = tmp_file("advlab_ckpt_flip.bin");
    save_checkpoint(path, sample_checkpoint(7));
    const auto orig = slurp(path);
    REQUIRE(orig.size() > 20);
    Rng rng(3);
    int detected = 0;
    const int trials = 25;
    for (int i = 0; i < trials; ++i) {
        auto buf = orig;
        const std::size_t pos = rng.next_below(buf.size());
        buf[pos] ^= static_cast<std::uint8_t>(1u << rng.next_below(8));
        spit(path, buf);
        try {
            (void)load_checkpoint(path);
        } catch (const std::exception&) {
            ++detected;
        }
    }
    CHECK(detected == trials);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: truncation and garbage are rejected") {
    const std::string path = tmp_file("advlab_ckpt_bad.bin");
    save_checkpoint(path, sample_checkpoint(9));
    auto buf = slurp(path);
    buf.resize(buf.size() / 2);
    spit(path, buf);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    spit(path, {1, 2, 3});
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint(tmp_file("advlab_does_not_exist.bin")), std::runtime_error);
    std::remove(path.c_str());
}

namespace {

// rewrite the version field and fix up the trailing checksum
void set_version(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    std::memcpy(buf.data() + 8, &v, 4);
    const std::uint32_t crc = advlab::detail::crc32(buf.data(), buf.size() - 4);
    std::memcpy(buf.data() + buf.size() - 4, &crc, 4);
}

}  // namespace

TEST_CASE("checkpoint: older version loads with an upgrade note, newer is refused") {
    const std::string path = tmp_file("advlab_ckpt_ver.bin");
    save_checkpoint(path, sample_checkpoint(11));
    auto buf = slurp(path);

    set_version(buf, kCheckpointVersion - 1);  // oldest supported
    spit(path, buf);
    std::string note;
    const Checkpoint old = load_checkpoint(path, &note);
    CHECK(old.t == 17);
    CHECK(!note.empty());

    set_version(buf, kCheckpointVersion + 1);
    spit(path, buf);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: non-finite parameters are refused on load") {
    const std::string path = tmp_file("advlab_ckpt_nan.bin");
    Checkpoint ck = sample_checkpoint(13);
    ck.params.tensors.at("W0")[0] = std::numeric_limits<double>::quiet_NaN();
    save_checkpoint(path, ck);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("report CSV round trip preserves every field") {
    const std::string path = tmp_file("advlab_report.csv");
    std::vector<ReportRow> rows(3);
    Rng rng(5);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].seed = i + 1;
        rows[i].t = static_cast<int>(10 * (i + 1));
        rows[i].std_train_err = rng.next_unit();
        rows[i].std_test_err = rng.next_unit();
        rows[i].rob_train_err = rng.next_unit();
        rows[i].rob_test_err = rng.next_unit();
        rows[i].gap = rng.next_unit();
        rows[i].ide_train_err = rng.next_unit();
        rows[i].ide_test_err = rng.next_unit();
        rows[i].eld = rng.next_unit();
        rows[i].eld_se = rng.next_unit();
        rows[i].mean_d = rng.next_unit();
        rows[i].mean_phi = rng.next_unit();
        rows[i].bound_value = rng.next_unit();
    }
    write_report_csv(path, rows);
    const auto back = read_report_csv(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].seed == rows[i].seed);
        CHECK(back[i].t == rows[i].t);
        CHECK(back[i].gap == doctest::Approx(rows[i].gap).epsilon(1e-11));
        CHECK(back[i].eld == doctest::Approx(rows[i].eld).epsilon(1e-11));
        CHECK(back[i].bound_value == doctest::Approx(rows[i].bound_value).epsilon(1e-11));
    }
    std::remove(path.c_str());
}

TEST_CASE("report CSV: wrong schema tag or header fails closed") {
    const std::string path = tmp_file("advlab_report_bad.csv");
    {
        std::ofstream out(path, std::ios::trunc);
        out << "#schema=other/9\n" << kCsvHeader << "\n";
    }
    CHECK_THROWS_AS(read_report_csv(path), std::runtime_error);
    {
        std::ofstream out(path, std::ios::trunc);
        out << kCsvSchemaTag << "\nseed,t\n";
    }
    CHECK_THROWS_AS(read_report_csv(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("pearson: hand-checked values") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {5, 5, 5}) == 0.0);  // degenerate series
    // r for {1,2,3} vs {1,3,2} = 0.5
    CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(pearson({1}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("config: full JSON round trip of every section") {
    const auto j = nlohmann::json::parse(R"({
        "name": "custom",
        "dataset": {"type": "blobs", "d": 6, "classes": 3, "n_train_per_class": 7,
                     "n_test_per_class": 9, "separation": 0.33, "spread": 0.11},
        "model": {"kind": "mlp", "widths": [6, 12, 3]},
        "attack": {"epsilon": 0.07, "lambda": 0.02, "k": 4, "init": "uniform-random"},
        "train": {"epochs": 5, "batch_size": 8, "learning_rate": 0.25,
                   "weight_decay": 0.001, "schedule": [2, 5]},
        "ide": {"epochs": 11, "learning_rate": 0.5},
        "mc": {"n_pairs": 33, "seed": 77},
        "bound": {"mode": "fixed", "beta": 2.5, "B": 3.5, "tau": 0.01},
        "metrics_examples": 12,
        "seeds": [4, 5],
        "out_dir": "elsewhere"
    })");
    const ExperimentConfig c = config_from_json(j);
    CHECK(c.name == "custom");
    CHECK(c.dataset.d == 6);
    CHECK(c.dataset.classes == 3);
    CHECK(c.model.widths == std::vector<int>{6, 12, 3});
    CHECK(c.attack.epsilon == 0.07);
    CHECK(c.attack.init == AttackInit::UniformRandom);
    CHECK(c.train.epochs == 5);
    CHECK(c.train.schedule == std::vector<int>{2, 5});
    CHECK(c.train.weight_decay == 0.001);
    CHECK(c.ide.epochs == 11);
    CHECK(c.mc.n_pairs == 33);
    CHECK(c.mc.seed == 77);
    CHECK(c.bound.mode == "fixed");
    CHECK(c.bound.beta == 2.5);
    CHECK(c.bound.tau == 0.01);
    CHECK(c.metrics_examples == 12);
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(c.out_dir == "elsewhere");
}

TEST_CASE("config: bad values are rejected") {
    auto base = nlohmann::json::parse(R"({
        "model": {"kind": "mlp", "widths": [2, 2]},
        "attack": {"epsilon": 0.1, "lambda": 0.01, "k": 1},
        "train": {"epochs": 1, "learning_rate": 0.1},
        "ide": {"epochs": 1, "learning_rate": 0.1}
    })");
    CHECK_NOTHROW(config_from_json(base));
    auto bad = base;
    bad["model"]["kind"] = "transformer";
    CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
    bad = base;
    bad["attack"]["init"] = "gaussian";
    CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
    bad = base;
    bad["attack"]["epsilon"] = -0.1;
    CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
    bad = base;
    bad["seeds"] = nlohmann::json::array();
    CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
}

TEST_CASE("presets: reference attack constants and validation") {
    const ExperimentConfig paper = preset("mnist-paper-attack");
    CHECK(paper.attack.epsilon == 0.3);
    CHECK(paper.attack.lambda == 0.01);
    CHECK(paper.attack.k == 40);
    CHECK(paper.model.kind == ModelKind::SmallCnn);

    const ExperimentConfig over = preset("blobs-overfit");
    CHECK(over.dataset.d == 3);
    CHECK(over.dataset.label_noise > 0.0);
    CHECK(over.seeds.size() == 5);
    CHECK(over.train.schedule.size() >= 8);

    CHECK_NOTHROW(preset("blobs-easy"));
    CHECK_NOTHROW(preset("mnist-small"));
    CHECK_THROWS_AS(preset("no-such-preset"), std::invalid_argument);
}

TEST_CASE("build_dataset: train/test sides differ, per-seed deterministic") {
    DatasetConfig d;
    d.d = 3;
    d.classes = 2;
    d.n_train_per_class = 5;
    d.n_test_per_class = 7;
    const LabeledDataset tr = build_dataset(d, 1, true);
    const LabeledDataset te = build_dataset(d, 1, false);
    CHECK(tr.size() == 10);
    CHECK(te.size() == 14);
    CHECK(tr.inputs[0].data != te.inputs[0].data);
    const LabeledDataset tr2 = build_dataset(d, 1, true);
    CHECK(tr.inputs[0] == tr2.inputs[0]);
    DatasetConfig bad;
    bad.type = "parquet";
    CHECK_THROWS_AS(build_dataset(bad, 1, true), std::invalid_argument);
}

namespace {

ExperimentConfig tiny_experiment(const std::string& out_dir) {
    ExperimentConfig c;
    c.name = "tiny";
    c.dataset.d = 2;
    c.dataset.classes = 2;
    c.dataset.n_train_per_class = 10;
    c.dataset.n_test_per_class = 10;
    c.dataset.separation = 0.4;
    c.dataset.spread = 0.12;
    c.model = ModelSpec::mlp({2, 8, 2});
    c.attack = {0.05, 0.02, 3, AttackInit::AtCenter};
    c.train.epochs = 4;
    c.train.batch_size = 10;
    c.train.learning_rate = 0.5;
    c.train.schedule = {2, 4};
    c.ide.epochs = 10;
    c.ide.batch_size = 10;
    c.ide.learning_rate = 0.5;
    c.mc.n_pairs = 10;
    c.metrics_examples = 8;
    c.seeds = {1, 2};
    c.out_dir = out_dir;
    return c;
}

}  // namespace

TEST_CASE("run_experiment: artifacts, row shape, determinism, plots") {
    const std::string out_a = (fs::temp_directory_path() / "advlab_exp_a").string();
    const std::string out_b = (fs::temp_directory_path() / "advlab_exp_b").string();
    std::ostringstream log;
    const ExperimentOutput a = run_experiment(tiny_experiment(out_a), log);
    REQUIRE(a.ok);
    CHECK(a.rows.size() == 4);  // 2 seeds x 2 checkpoints
    for (const auto& r : a.rows) {
        CHECK((r.t == 2 || r.t == 4));
        CHECK(r.eld >= 0.0);
        CHECK(r.mean_d >= 0.0);
        CHECK(r.mean_phi >= 0.0);
        CHECK(r.bound_value > 0.0);
        CHECK(std::isfinite(r.bound_value));
    }
    CHECK(a.histograms.size() == 12);  // 3 metrics per row
    for (const char* f : {"report.csv", "histograms.csv", "summary.csv", "correlations.csv"})
        CHECK(fs::exists(fs::path(out_a) / f));

    // rows survive the CSV round trip
    const auto back = read_report_csv((fs::path(out_a) / "report.csv").string());
    REQUIRE(back.size() == a.rows.size());
    CHECK(back[0].seed == a.rows[0].seed);
    CHECK(back.back().gap == doctest::Approx(a.rows.back().gap).epsilon(1e-11));

    // same config, different directory: byte-identical report
    (void)run_experiment(tiny_experiment(out_b), log);
    CHECK(slurp((fs::path(out_a) / "report.csv").string()) ==
          slurp((fs::path(out_b) / "report.csv").string()));

    emit_plots((fs::path(out_a) / "report.csv").string(), (fs::path(out_a) / "histograms.csv").string(),
               out_a);
    for (const char* f : {"errors.svg", "metrics.svg", "hist_gamma.svg", "hist_d.svg", "hist_phi.svg"})
        CHECK(fs::exists(fs::path(out_a) / f));

    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

TEST_CASE("derived seed streams are pairwise distinct") {
    const std::uint64_t root = 123;
    std::vector<std::uint64_t> seeds;
    for (const char* label : {"model-init", "epoch-shuffle", "pgd-at", "ide", "ide-retrain",
                              "ide-materialize", "metrics", "example", "dist", "phi", "beta-B"})
        for (std::uint64_t i = 0; i < 4; ++i) seeds.push_back(derive_seed(root, label, i));
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
}
