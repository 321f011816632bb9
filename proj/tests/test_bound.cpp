#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advlab/bound.hpp"

using namespace advlab;

namespace {

BoundInputs reference_inputs() {
    BoundInputs in;
    in.beta = 1.0;
    in.B = 1.0;
    in.d = 4.0;
    in.epsilon = 0.1;
    in.m = 100.0;
    in.eld = 0.01;
    in.tau = 0.05;
    return in;
}

}  // namespace

TEST_CASE("reference evaluation: hand-computed value") {
    // 2*1/10*0.1 + 2*1*2*0.1/10 + 2*1/10*(sqrt(ln(20)/2)+1)
    //   = 0.02 + 0.04 + 0.2*(1.22387...) = 0.504774...
    const double v = theorem_bound(reference_inputs());
    CHECK(v == doctest::Approx(0.50478).epsilon(1e-4));
    const double exact =
        0.02 + 0.04 + 0.2 * (std::sqrt(std::log(20.0) / 2.0) + 1.0);
    CHECK(v == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("the whole bound scales as 1/sqrt(m)") {
    BoundInputs in = reference_inputs();
    const double v1 = theorem_bound(in);
    in.m *= 4.0;
    CHECK(theorem_bound(in) == doctest::Approx(v1 / 2.0).epsilon(1e-12));
}

TEST_CASE("zero dispersion removes exactly the first term") {
    BoundInputs in = reference_inputs();
    const double full = theorem_bound(in);
    in.eld = 0.0;
    const double wo = theorem_bound(in);
    CHECK(full - wo == doctest::Approx(2.0 * in.beta / std::sqrt(in.m) * std::sqrt(0.01)).epsilon(1e-12));
}

TEST_CASE("monotonicity in each input") {
    const BoundInputs base = reference_inputs();
    const double v0 = theorem_bound(base);
    auto bumped = [&](auto set) {
        BoundInputs in = base;
        set(in);
        return theorem_bound(in);
    };
    CHECK(bumped([](BoundInputs& in) { in.eld *= 2; }) > v0);
    CHECK(bumped([](BoundInputs& in) { in.epsilon *= 2; }) > v0);
    CHECK(bumped([](BoundInputs& in) { in.d *= 2; }) > v0);
    CHECK(bumped([](BoundInputs& in) { in.beta *= 2; }) > v0);
    CHECK(bumped([](BoundInputs& in) { in.B *= 2; }) > v0);
    CHECK(bumped([](BoundInputs& in) { in.tau /= 2; }) > v0);  // more confidence costs more
    CHECK(bumped([](BoundInputs& in) { in.m *= 2; }) < v0);
}

TEST_CASE("input validation") {
    BoundInputs in = reference_inputs();
    in.m = 0.5;
    CHECK_THROWS_AS(theorem_bound(in), std::invalid_argument);
    in = reference_inputs();
    in.tau = 0.0;
    CHECK_THROWS_AS(theorem_bound(in), std::invalid_argument);
    in = reference_inputs();
    in.tau = 1.0;
    CHECK_THROWS_AS(theorem_bound(in), std::invalid_argument);
    in = reference_inputs();
    in.eld = -1e-9;
    CHECK_THROWS_AS(theorem_bound(in), std::invalid_argument);
}

TEST_CASE("empirical_gg: identical sets give zero, and the gap is symmetric") {
    const ModelSpec spec = ModelSpec::mlp({3, 6, 2});
    const Params p = init(spec, 4);
    const LabeledDataset a = gen_blobs(3, 2, 20, 0.5, 0.1, 1);
    const LabeledDataset b = gen_blobs(3, 2, 20, 0.2, 0.25, 2);
    CHECK(empirical_gg(p, a, a) == 0.0);
    CHECK(empirical_gg(p, a, b) == doctest::Approx(empirical_gg(p, b, a)).epsilon(1e-15));
    CHECK(empirical_gg(p, a, b) >= 0.0);
    LabeledDataset empty;
    empty.num_classes = 2;
    CHECK_THROWS_AS(empirical_gg(p, empty, a), std::invalid_argument);
}

TEST_CASE("empirical_gg: hand-computed on single-example sets") {
    const ModelSpec spec = ModelSpec::mlp({2, 2});
    const Params p = init(spec, 7);
    Model m(spec);
    LabeledDataset tr, te;
    tr.num_classes = te.num_classes = 2;
    tr.inputs = {Tensor::vec({0.2, 0.8})};
    tr.labels = {0};
    te.inputs = {Tensor::vec({0.9, 0.1})};
    te.labels = {1};
    const double expect = std::abs(m.loss(p, tr.inputs[0], 0) - m.loss(p, te.inputs[0], 1));
    CHECK(empirical_gg(p, tr, te) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("estimate_beta_B: constant-loss model has beta 0 and B = ln K") {
    const ModelSpec spec = ModelSpec::mlp({2, 2});
    Params p = init(spec, 0);
    for (auto& [name, t] : p.tensors)
        for (auto& v : t.data) v = 0.0;
    const LabeledDataset ds = gen_blobs(2, 2, 5, 0.5, 0.1, 3);
    auto [beta, B] = estimate_beta_B(p, ds, AttackConfig{0.1, 0.02, 3}, 16, 1);
    CHECK(beta == 0.0);
    CHECK(B == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("estimate_beta_B: lower-bounds the analytic slope of a linear model") {
    // binary linear model: loss(x) = softplus(-margin(x)); the loss gradient
    // norm is bounded by ||w_diff||, approached where the softplus slope -> 1
    const ModelSpec spec = ModelSpec::mlp({2, 2});
    Params p = init(spec, 9);
    Model m(spec);
    const LabeledDataset ds = gen_blobs(2, 2, 10, 0.4, 0.1, 5);
    auto [beta, B] = estimate_beta_B(p, ds, AttackConfig{0.1, 0.02, 3}, 64, 2);
    // analytic Lipschitz constant of the loss over the whole domain
    const Tensor& W = p.tensors.at("W0");
    double norm2 = 0.0;
    for (int j = 0; j < 2; ++j) {
        const double diff = W[j * 2 + 0] - W[j * 2 + 1];
        norm2 += diff * diff;
    }
    const double lipschitz = std::sqrt(norm2);
    CHECK(beta > 0.0);
    CHECK(beta <= lipschitz + 1e-9);
    CHECK(B >= 0.0);
}

TEST_CASE("estimate_beta_B: B dominates every observed loss") {
    const ModelSpec spec = ModelSpec::mlp({3, 8, 2});
    const Params p = init(spec, 11);
    Model m(spec);
    const LabeledDataset ds = gen_blobs(3, 2, 10, 0.4, 0.12, 6);
    const AttackConfig atk{0.08, 0.02, 4};
    auto [beta, B] = estimate_beta_B(p, ds, atk, 16, 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(B >= m.loss(p, ds.inputs[i], ds.labels[i]) - 1e-12);
        CHECK(B >= m.loss(p, pgd_k(m, p, ds.inputs[i], ds.labels[i], atk), ds.labels[i]) - 1e-12);
    }
    // deterministic given the same seed
    auto [beta2, B2] = estimate_beta_B(p, ds, atk, 16, 3);
    CHECK(beta == beta2);
    CHECK(B == B2);
}
