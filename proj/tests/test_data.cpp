#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "advlab/data.hpp"
#include "advlab/models.hpp"

using namespace advlab;

TEST_CASE("gen_blobs: counts and balance") {
    const LabeledDataset ds = gen_blobs(3, 2, 10, 0.5, 0.05, 1);
    CHECK(ds.size() == 20);
    int c0 = 0;
    for (int y : ds.labels)
        if (y == 0) ++c0;
    CHECK(c0 == 10);
    ds.validate();
}

TEST_CASE("gen_blobs: deterministic per seed") {
    const LabeledDataset a = gen_blobs(4, 3, 5, 0.5, 0.1, 42);
    const LabeledDataset b = gen_blobs(4, 3, 5, 0.5, 0.1, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.inputs[i] == b.inputs[i]);
    const LabeledDataset c = gen_blobs(4, 3, 5, 0.5, 0.1, 43);
    CHECK(a.inputs[0].data != c.inputs[0].data);
}

TEST_CASE("gen_blobs: degenerate dimensions rejected") {
    CHECK_THROWS_AS(gen_blobs(0, 2, 5, 0.5, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_blobs(2, 1, 5, 0.5, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_blobs(2, 2, 5, -0.1, 0.1, 1), std::invalid_argument);
}

TEST_CASE("gen_blobs: well-separated classes are nearly linearly separable") {
    // linear probe oracle: logistic training on the blobs reaches <= 1% error
    const LabeledDataset ds = gen_blobs(4, 2, 100, 0.6, 0.04, 7);
    const ModelSpec spec = ModelSpec::mlp({4, 2});
    Model m(spec);
    Params p = init(spec, 3);
    for (int epoch = 0; epoch < 200; ++epoch) {
        std::map<std::string, Tensor> acc;
        for (const auto& name : m.param_names()) acc.emplace(name, Tensor(p.tensors.at(name).shape));
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::map<std::string, Tensor> grads;
            m.loss_grad(p, ds.inputs[i], ds.labels[i], m.param_names(), grads);
            for (const auto& name : m.param_names())
                for (std::size_t j = 0; j < acc[name].numel(); ++j) acc[name][j] += grads[name][j];
        }
        for (const auto& name : m.param_names())
            for (std::size_t j = 0; j < acc[name].numel(); ++j)
                p.tensors[name][j] -= 0.5 / ds.size() * acc[name][j];
    }
    int wrong = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (m.predict(p, ds.inputs[i]) != ds.labels[i]) ++wrong;
    CHECK(static_cast<double>(wrong) / ds.size() <= 0.01);
}

namespace {

void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

// 2 images of 2x2 pixels plus labels, in IDX format
void write_tiny_idx(const std::string& img_path, const std::string& lab_path, bool truncate_payload = false,
                    std::uint32_t img_magic = 2051, std::uint32_t lab_magic = 2049, int n_labels = 2) {
    std::ofstream img(img_path, std::ios::binary | std::ios::trunc);
    write_be32(img, img_magic);
    write_be32(img, 2);
    write_be32(img, 2);
    write_be32(img, 2);
    const unsigned char pix[8] = {0, 64, 128, 255, 10, 20, 30, 40};
    img.write(reinterpret_cast<const char*>(pix), truncate_payload ? 5 : 8);
    img.close();
    std::ofstream lab(lab_path, std::ios::binary | std::ios::trunc);
    write_be32(lab, lab_magic);
    write_be32(lab, n_labels);
    const unsigned char ys[2] = {3, 7};
    lab.write(reinterpret_cast<const char*>(ys), n_labels);
}

}  // namespace

TEST_CASE("load_idx: accepts the standard magics and scales bytes to [0,1]") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string img = (dir / "adv_t_img").string(), lab = (dir / "adv_t_lab").string();
    write_tiny_idx(img, lab);
    const LabeledDataset ds = load_idx(img, lab);
    CHECK(ds.size() == 2);
    CHECK(ds.inputs[0].shape == Shape{1, 2, 2});
    CHECK(ds.inputs[0][3] == 1.0);  // byte 255 -> exactly 1.0
    CHECK(ds.inputs[0][0] == 0.0);
    CHECK(ds.labels[0] == 3);
    CHECK(ds.labels[1] == 7);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("load_idx: bad magic, truncation, and count mismatch fail closed") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string img = (dir / "adv_t_img2").string(), lab = (dir / "adv_t_lab2").string();
    write_tiny_idx(img, lab, false, 1234);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);
    write_tiny_idx(img, lab, false, 2051, 1111);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);
    write_tiny_idx(img, lab, true);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);
    write_tiny_idx(img, lab, false, 2051, 2049, 1);  // count mismatch
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("materialize_induced: epsilon 0 is the identity") {
    const LabeledDataset ds = gen_blobs(3, 2, 5, 0.5, 0.1, 1);
    const Params p = init(ModelSpec::mlp({3, 4, 2}), 1);
    const AttackConfig atk{0.0, 0.0, 0};
    const LabeledDataset out = materialize_induced(ds, p, atk, 0);
    REQUIRE(out.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(out.inputs[i] == ds.inputs[i]);
        CHECK(out.labels[i] == ds.labels[i]);
    }
}

TEST_CASE("materialize_induced: displacement bounded by epsilon, labels preserved") {
    const LabeledDataset ds = gen_blobs(4, 2, 10, 0.4, 0.1, 3);
    const Params p = init(ModelSpec::mlp({4, 8, 2}), 4);
    const AttackConfig atk{0.1, 0.03, 5};
    const LabeledDataset out = materialize_induced(ds, p, atk, 0);
    REQUIRE(out.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(out.labels[i] == ds.labels[i]);
        CHECK(linf_dist(out.inputs[i], ds.inputs[i]) <= atk.epsilon + 1e-12);
        for (double v : out.inputs[i].data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("materialize_induced: saturating one-step PGD lands on ball corners") {
    // linear binary model in d=2 with lambda >= 2 eps: output is
    // x + eps*sgn(grad), clipped to the data box
    const ModelSpec spec = ModelSpec::mlp({2, 2});
    Params p = init(spec, 0);
    p.tensors.at("W0") = Tensor({2, 2}, {1.0, -1.0, 0.5, -0.5});
    p.tensors.at("b0") = Tensor::vec({0.0, 0.0});
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.inputs = {Tensor::vec({0.5, 0.5}), Tensor::vec({0.3, 0.6})};
    ds.labels = {0, 1};
    const AttackConfig atk{0.05, 0.2, 1};
    const LabeledDataset out = materialize_induced(ds, p, atk, 0);
    Model m(spec);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        // brute-force corner search over the 4 corners of the ball
        double best = -1;
        Tensor best_v = ds.inputs[i];
        for (int s0 : {-1, 1})
            for (int s1 : {-1, 1}) {
                Tensor v = ds.inputs[i];
                v[0] += s0 * atk.epsilon;
                v[1] += s1 * atk.epsilon;
                const double l = m.loss(p, v, ds.labels[i]);
                if (l > best) {
                    best = l;
                    best_v = v;
                }
            }
        CHECK(l2_dist(out.inputs[i], best_v) < 1e-12);
    }
}

TEST_CASE("split: sizes, partition, determinism") {
    const LabeledDataset ds = gen_blobs(2, 2, 50, 0.5, 0.1, 9);
    auto [a, b] = split(ds, 0.8, 5);
    CHECK(a.size() == 80);
    CHECK(b.size() == 20);
    // partition: every original input appears exactly once across both sides
    std::multiset<std::vector<double>> orig, got;
    for (const auto& x : ds.inputs) orig.insert(x.data);
    for (const auto& x : a.inputs) got.insert(x.data);
    for (const auto& x : b.inputs) got.insert(x.data);
    CHECK(orig == got);
    auto [a2, b2] = split(ds, 0.8, 5);
    CHECK(a.inputs[0] == a2.inputs[0]);
    CHECK_THROWS_AS(split(ds, 0.0001, 5), std::invalid_argument);
}

TEST_CASE("smooth_dataset stays within the box and moves at most epsilon") {
    const LabeledDataset ds = gen_blobs(3, 2, 10, 0.5, 0.1, 2);
    const LabeledDataset sm = smooth_dataset(ds, 0.05, 11);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(linf_dist(sm.inputs[i], ds.inputs[i]) <= 0.05 + 1e-12);
        for (double v : sm.inputs[i].data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("flip_labels: exact count, changed labels only, inputs untouched") {
    const LabeledDataset ds = gen_blobs(2, 3, 40, 0.5, 0.1, 7);
    const LabeledDataset noisy = flip_labels(ds, 0.25, 3);
    CHECK(noisy.inputs == ds.inputs);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (noisy.labels[i] != ds.labels[i]) ++changed;
        CHECK(noisy.labels[i] >= 0);
        CHECK(noisy.labels[i] < ds.num_classes);
    }
    CHECK(changed == 30);  // 0.25 * 120, every selected label moves to a different class

    const LabeledDataset same = flip_labels(ds, 0.25, 3);
    CHECK(same.labels == noisy.labels);
    const LabeledDataset none = flip_labels(ds, 0.0, 3);
    CHECK(none.labels == ds.labels);
    CHECK_THROWS_AS(flip_labels(ds, 1.5, 3), std::invalid_argument);
}

TEST_CASE("export_csv emits one row per example") {
    const LabeledDataset ds = gen_blobs(2, 2, 3, 0.5, 0.1, 1);
    std::ostringstream out;
    export_csv(ds, out);
    int lines = 0;
    for (char c : out.str())
        if (c == '\n') ++lines;
    CHECK(lines == 6);
}
