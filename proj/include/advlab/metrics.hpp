#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

struct MCConfig {
    int n_pairs = 250;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_pairs < 1) throw std::invalid_argument("mc: n_pairs must be >= 1");
    }
};

struct DispersionEstimate {
    double value = 0.0;
    double std_error = 0.0;
    int n_pairs = 0;
};

struct Histogram {
    std::vector<double> edges;   // ascending bin edges, size counts+1
    std::vector<long> counts;
    long below = 0, above = 0;   // out-of-range tallies
};

struct DatasetMetric {
    double mean = 0.0;
    Histogram histogram;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
};

struct TriangleCheck {
    double lhs = 0.0;       // E||Q(x+rho) - Q(x+rho')||_2
    double rhs = 0.0;       // 2 * d_t estimate from the same draws
    double combined_se = 0.0;
    bool holds = false;     // lhs <= rhs + 3 * combined_se
};

// rho ~ uniform on [-eps, eps]^d; the perturbed point clips to the data box
// before the operator is applied.
inline Tensor sample_in_ball(const Tensor& x, double epsilon, Rng& rng) {
    Tensor v = x;
    for (auto& c : v.data) c = std::min(1.0, std::max(0.0, c + rng.uniform(-epsilon, epsilon)));
    return v;
}

namespace detail {

inline std::pair<double, double> mean_and_se(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= n;
    if (xs.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

}  // namespace detail

// Local dispersion: mean over independent (rho, rho') pairs of
// ||Q(x+rho) - Q(x+rho')||_2^2.
inline DispersionEstimate local_dispersion(const PerturbOp& op, const Tensor& x, double epsilon,
                                           const MCConfig& mc) {
    mc.validate();
    Rng rng(derive_seed(mc.seed, "dispersion"));
    std::vector<double> vals;
    vals.reserve(mc.n_pairs);
    for (int i = 0; i < mc.n_pairs; ++i) {
        const Tensor a = op(sample_in_ball(x, epsilon, rng));
        const Tensor b = op(sample_in_ball(x, epsilon, rng));
        vals.push_back(sq_l2_dist(a, b));
    }
    auto [mean, se] = detail::mean_and_se(vals);
    return {mean, se, mc.n_pairs};
}

inline DispersionEstimate local_dispersion(const Tensor& x, int y, const Params& params,
                                           const AttackConfig& atk, const MCConfig& mc) {
    Model model(params.spec);
    return local_dispersion(make_pgd_operator(model, params, x, y, atk), x, atk.epsilon, mc);
}

// The pairwise dispersion estimate and 2*trace of the unbiased sample
// covariance computed from one shared sample set. The two are algebraically
// equal; this op exists to check the identity numerically.
inline std::pair<double, double> trace_cov_identity_check(const std::vector<Tensor>& samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("trace_cov_identity_check: need at least 2 samples");
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pair_sum += sq_l2_dist(samples[i], samples[j]);
    const double gamma_pairs = pair_sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));

    const std::size_t d = samples[0].numel();
    double trace = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[c];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& s : samples) var += (s[c] - mean) * (s[c] - mean);
        trace += var / static_cast<double>(n - 1);
    }
    return {gamma_pairs, 2.0 * trace};
}

// d_t: mean over single rho draws of ||Q(x+rho) - x||_2.
inline double mean_distance_to_clean(const PerturbOp& op, const Tensor& x, double epsilon,
                                     const MCConfig& mc) {
    mc.validate();
    Rng rng(derive_seed(mc.seed, "dist-to-clean"));
    double sum = 0.0;
    for (int i = 0; i < mc.n_pairs; ++i) sum += l2_dist(op(sample_in_ball(x, epsilon, rng)), x);
    return sum / static_cast<double>(mc.n_pairs);
}

inline double mean_distance_to_clean(const Tensor& x, int y, const Params& params,
                                     const AttackConfig& atk, const MCConfig& mc) {
    Model model(params.spec);
    return mean_distance_to_clean(make_pgd_operator(model, params, x, y, atk), x, atk.epsilon, mc);
}

// Phi_t: mean angle between two independent operator outputs. Pairs where
// either output has near-zero norm are skipped and counted; the arccos
// argument is clamped to [-1, 1].
inline double angular_spread(const PerturbOp& op, const Tensor& x, double epsilon, const MCConfig& mc,
                             int* skipped_out = nullptr) {
    mc.validate();
    Rng rng(derive_seed(mc.seed, "angular-spread"));
    double sum = 0.0;
    int used = 0, skipped = 0;
    for (int i = 0; i < mc.n_pairs; ++i) {
        const Tensor a = op(sample_in_ball(x, epsilon, rng));
        const Tensor b = op(sample_in_ball(x, epsilon, rng));
        const double na = l2_norm(a), nb = l2_norm(b);
        if (na < 1e-12 || nb < 1e-12) {
            ++skipped;
            continue;
        }
        const double c = std::min(1.0, std::max(-1.0, dot(a, b) / (na * nb)));
        sum += std::acos(c);
        ++used;
    }
    if (skipped_out) *skipped_out = skipped;
    if (used == 0) throw std::runtime_error("angular_spread: all pairs skipped (zero-norm outputs)");
    return sum / static_cast<double>(used);
}

inline double angular_spread(const Tensor& x, int y, const Params& params, const AttackConfig& atk,
                             const MCConfig& mc, int* skipped_out = nullptr) {
    Model model(params.spec);
    return angular_spread(make_pgd_operator(model, params, x, y, atk), x, atk.epsilon, mc, skipped_out);
}

inline Histogram make_histogram(const std::vector<double>& values, std::vector<double> edges) {
    if (edges.size() < 2) throw std::invalid_argument("histogram: need at least 2 edges");
    Histogram h;
    h.edges = std::move(edges);
    h.counts.assign(h.edges.size() - 1, 0);
    for (double v : values) {
        if (v < h.edges.front()) {
            ++h.below;
        } else if (v >= h.edges.back()) {
            ++h.above;
        } else {
            const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
            ++h.counts[static_cast<std::size_t>(it - h.edges.begin()) - 1];
        }
    }
    return h;
}

// Dataset mean of a per-example Monte-Carlo metric, with a fixed-bin
// histogram. Each example gets its own derived substream, so parallel
// schedules cannot change results. Per-example failures are excluded and
// counted.
template <class Metric>  // Metric: (const Tensor& x, int y, const MCConfig&) -> double
DatasetMetric dataset_expectation(const LabeledDataset& ds, Metric&& metric, const MCConfig& mc,
                                  const std::vector<double>& bin_edges) {
    mc.validate();
    if (ds.size() == 0) throw std::invalid_argument("dataset_expectation: empty dataset");
    DatasetMetric out;
    std::vector<double> vals;
    vals.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        MCConfig sub = mc;
        sub.seed = derive_seed(mc.seed, "example", i);
        try {
            vals.push_back(metric(ds.inputs[i], ds.labels[i], sub));
            ++out.n_ok;
        } catch (const std::exception&) {
            ++out.n_failed;
        }
    }
    if (vals.empty()) throw std::runtime_error("dataset_expectation: every example failed");
    double sum = 0.0;
    for (double v : vals) sum += v;
    out.mean = sum / static_cast<double>(vals.size());
    out.histogram = make_histogram(vals, bin_edges);
    return out;
}

// Both sides of the triangle inequality E||Q(x+rho)-Q(x+rho')|| <= 2 d_t,
// estimated from one shared stream of (rho, rho') pairs: the lhs uses the
// pairs, the d_t estimate uses all 2n individual draws.
inline TriangleCheck triangle_check(const PerturbOp& op, const Tensor& x, double epsilon,
                                    const MCConfig& mc) {
    mc.validate();
    Rng rng(derive_seed(mc.seed, "triangle"));
    std::vector<double> pair_dists, clean_dists;
    pair_dists.reserve(mc.n_pairs);
    clean_dists.reserve(2 * mc.n_pairs);
    for (int i = 0; i < mc.n_pairs; ++i) {
        const Tensor a = op(sample_in_ball(x, epsilon, rng));
        const Tensor b = op(sample_in_ball(x, epsilon, rng));
        pair_dists.push_back(l2_dist(a, b));
        clean_dists.push_back(l2_dist(a, x));
        clean_dists.push_back(l2_dist(b, x));
    }
    auto [lhs, lhs_se] = detail::mean_and_se(pair_dists);
    auto [d_mean, d_se] = detail::mean_and_se(clean_dists);
    TriangleCheck tc;
    tc.lhs = lhs;
    tc.rhs = 2.0 * d_mean;
    tc.combined_se = lhs_se + 2.0 * d_se;
    tc.holds = tc.lhs <= tc.rhs + 3.0 * tc.combined_se;
    return tc;
}

inline TriangleCheck triangle_check(const Tensor& x, int y, const Params& params,
                                    const AttackConfig& atk, const MCConfig& mc) {
    Model model(params.spec);
    return triangle_check(make_pgd_operator(model, params, x, y, atk), x, atk.epsilon, mc);
}

}  // namespace advlab
