#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attack.hpp"
#include "advlab/data.hpp"
#include "advlab/metrics.hpp"
#include "advlab/models.hpp"
#include "advlab/training.hpp"

namespace advlab {

struct DatasetConfig {
    std::string type = "blobs";  // "blobs" | "idx"
    // blobs
    int d = 2;
    int classes = 2;
    int n_train_per_class = 100;
    int n_test_per_class = 100;
    double separation = 0.4;
    double spread = 0.1;
    double label_noise = 0.0;  // fraction of training labels reassigned at random
    bool smooth = false;       // optional epsilon-smoothing post-step
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    std::size_t subsample_train = 0;  // 0 = all
    std::size_t subsample_test = 0;
};

struct BoundConfig {
    std::string mode = "estimate";  // "estimate" | "fixed"
    double beta = 1.0;
    double B = 1.0;
    double tau = 0.05;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetConfig dataset;
    ModelSpec model;
    AttackConfig attack;
    TrainConfig train;
    TrainConfig ide;
    MCConfig mc;
    BoundConfig bound;
    int metrics_examples = 50;  // test-set prefix used for the metric sweep
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "out";

    void validate() const {
        model.validate();
        attack.validate();
        train.validate();
        ide.validate();
        mc.validate();
        if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
        if (metrics_examples < 1) throw std::invalid_argument("config: metrics_examples must be >= 1");
    }
};

namespace detail {

inline ModelSpec model_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "mlp") return ModelSpec::mlp(j.at("widths").get<std::vector<int>>());
    if (kind == "small-cnn")
        return ModelSpec::small_cnn(j.at("height").get<int>(), j.at("width").get<int>(),
                                    j.at("classes").get<int>());
    throw std::invalid_argument("config: unknown model kind '" + kind + "'");
}

inline AttackConfig attack_from_json(const nlohmann::json& j) {
    AttackConfig a;
    a.epsilon = j.at("epsilon").get<double>();
    a.lambda = j.value("lambda", 0.0);
    a.k = j.value("k", 0);
    const std::string init = j.value("init", "at-center");
    if (init == "at-center")
        a.init = AttackInit::AtCenter;
    else if (init == "uniform-random")
        a.init = AttackInit::UniformRandom;
    else
        throw std::invalid_argument("config: unknown attack init '" + init + "'");
    a.validate();
    return a;
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig t;
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.value("batch_size", 32);
    t.learning_rate = j.at("learning_rate").get<double>();
    t.weight_decay = j.value("weight_decay", 0.0);
    t.schedule = j.value("schedule", std::vector<int>{});
    t.target_train_error = j.value("target_train_error", -1.0);
    t.validate();
    return t;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.name = j.value("name", "experiment");
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.dataset.type = d.value("type", "blobs");
        c.dataset.d = d.value("d", 2);
        c.dataset.classes = d.value("classes", 2);
        c.dataset.n_train_per_class = d.value("n_train_per_class", 100);
        c.dataset.n_test_per_class = d.value("n_test_per_class", 100);
        c.dataset.separation = d.value("separation", 0.4);
        c.dataset.spread = d.value("spread", 0.1);
        c.dataset.label_noise = d.value("label_noise", 0.0);
        c.dataset.smooth = d.value("smooth", false);
        c.dataset.train_images = d.value("train_images", "");
        c.dataset.train_labels = d.value("train_labels", "");
        c.dataset.test_images = d.value("test_images", "");
        c.dataset.test_labels = d.value("test_labels", "");
        c.dataset.subsample_train = d.value("subsample_train", 0u);
        c.dataset.subsample_test = d.value("subsample_test", 0u);
    }
    c.model = detail::model_from_json(j.at("model"));
    c.attack = detail::attack_from_json(j.at("attack"));
    c.train = detail::train_from_json(j.at("train"));
    c.ide = detail::train_from_json(j.at("ide"));
    if (j.contains("mc")) {
        c.mc.n_pairs = j.at("mc").value("n_pairs", 250);
        c.mc.seed = j.at("mc").value("seed", 0u);
    }
    if (j.contains("bound")) {
        const auto& b = j.at("bound");
        c.bound.mode = b.value("mode", "estimate");
        c.bound.beta = b.value("beta", 1.0);
        c.bound.B = b.value("B", 1.0);
        c.bound.tau = b.value("tau", 0.05);
    }
    c.metrics_examples = j.value("metrics_examples", 50);
    c.seeds = j.value("seeds", std::vector<std::uint64_t>{1});
    c.out_dir = j.value("out_dir", "out");
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

// Named presets; one per acceptance scenario.
inline ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    if (name == "blobs-overfit") {
        // small noisy training set + over-parameterized MLP to force a gap;
        // the flipped labels give late checkpoints something to memorize, so
        // the gap, the local dispersion, and the induced test error all climb
        // together over the back half of training
        c.dataset = {};
        c.dataset.d = 3;
        c.dataset.classes = 2;
        c.dataset.n_train_per_class = 50;
        c.dataset.n_test_per_class = 250;
        c.dataset.separation = 0.6;
        c.dataset.spread = 0.12;
        c.dataset.label_noise = 0.15;
        c.model = ModelSpec::mlp({3, 64, 64, 2});
        c.attack = {0.1, 0.05, 5, AttackInit::UniformRandom};
        c.train = {};
        c.train.epochs = 240;
        c.train.batch_size = 10;
        c.train.learning_rate = 0.2;
        c.train.schedule = {30, 60, 90, 120, 150, 180, 210, 240};
        c.ide = {};
        c.ide.epochs = 150;
        c.ide.batch_size = 10;
        c.ide.learning_rate = 0.2;
        c.mc.n_pairs = 100;
        c.metrics_examples = 50;
        c.seeds = {1, 2, 3, 4, 5};
    } else if (name == "blobs-easy") {
        c.dataset = {};
        c.dataset.d = 4;
        c.dataset.classes = 2;
        c.dataset.n_train_per_class = 200;
        c.dataset.n_test_per_class = 200;
        c.dataset.separation = 0.6;
        c.dataset.spread = 0.05;
        c.model = ModelSpec::mlp({4, 16, 2});
        c.attack = {0.03, 0.01, 5, AttackInit::AtCenter};
        c.train = {};
        c.train.epochs = 30;
        c.train.batch_size = 32;
        c.train.learning_rate = 0.5;
        c.train.schedule = {5, 10, 15, 20, 25, 30};
        c.ide = {};
        c.ide.epochs = 60;
        c.ide.batch_size = 32;
        c.ide.learning_rate = 0.5;
        c.mc.n_pairs = 100;
        c.metrics_examples = 40;
        c.seeds = {1, 2, 3};
    } else if (name == "mnist-small") {
        // subsampled MNIST with a lighter attack so the pipeline stays desk-scale
        c.dataset.type = "idx";
        c.dataset.train_images = "data/train-images-idx3-ubyte";
        c.dataset.train_labels = "data/train-labels-idx1-ubyte";
        c.dataset.test_images = "data/t10k-images-idx3-ubyte";
        c.dataset.test_labels = "data/t10k-labels-idx1-ubyte";
        c.dataset.subsample_train = 512;
        c.dataset.subsample_test = 256;
        c.model = ModelSpec::small_cnn(28, 28, 10);
        c.attack = {0.3, 0.05, 10, AttackInit::AtCenter};
        c.train = {};
        c.train.epochs = 8;
        c.train.batch_size = 32;
        c.train.learning_rate = 0.1;
        c.train.schedule = {2, 4, 6, 8};
        c.ide = {};
        c.ide.epochs = 20;
        c.ide.batch_size = 32;
        c.ide.learning_rate = 0.1;
        c.mc.n_pairs = 50;
        c.metrics_examples = 16;
        c.seeds = {1};
    } else if (name == "mnist-paper-attack") {
        // the reference MNIST attack constants: epsilon 0.3, lambda 0.01, 40 steps
        c = preset("mnist-small");
        c.name = name;
        c.attack = {0.3, 0.01, 40, AttackInit::AtCenter};
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    c.validate();
    return c;
}

inline LabeledDataset build_dataset(const DatasetConfig& d, std::uint64_t seed, bool train_side,
                                    double smooth_epsilon = 0.0) {
    if (d.type == "blobs") {
        const int n = train_side ? d.n_train_per_class : d.n_test_per_class;
        LabeledDataset ds = gen_blobs(d.d, d.classes, n, d.separation, d.spread,
                                      derive_seed(seed, train_side ? "blobs-train" : "blobs-test"));
        if (d.smooth && smooth_epsilon > 0.0)
            ds = smooth_dataset(ds, smooth_epsilon, derive_seed(seed, "blobs-smooth", train_side ? 0 : 1));
        if (train_side && d.label_noise > 0.0)
            ds = flip_labels(ds, d.label_noise, derive_seed(seed, "train-noise"));
        return ds;
    }
    if (d.type == "idx") {
        LabeledDataset ds = train_side ? load_idx(d.train_images, d.train_labels)
                                       : load_idx(d.test_images, d.test_labels);
        const std::size_t cap = train_side ? d.subsample_train : d.subsample_test;
        if (cap > 0 && cap < ds.size()) {
            ds.inputs.resize(cap);
            ds.labels.resize(cap);
        }
        return ds;
    }
    throw std::invalid_argument("config: unknown dataset type '" + d.type + "'");
}

}  // namespace advlab
