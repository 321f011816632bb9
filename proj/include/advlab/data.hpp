#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

struct LabeledDataset {
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;

    std::size_t size() const { return inputs.size(); }

    void validate() const {
        if (inputs.size() != labels.size()) throw std::invalid_argument("dataset: input/label count mismatch");
        for (int y : labels)
            if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
        for (const auto& x : inputs) {
            if (!inputs.empty() && x.shape != inputs.front().shape)
                throw std::invalid_argument("dataset: non-uniform input shape");
            for (double v : x.data)
                if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("dataset: input outside [0,1]");
        }
    }
};

// Gaussian blob classes on the unit cube. Class means sit on the main
// diagonal: mean_k = 0.5 + (separation/sqrt(d)) * (k - (K-1)/2) in every
// coordinate, so adjacent class means are exactly `separation` apart in l2.
// Per-coordinate noise is N(0, spread^2); everything clips to [0,1].
inline LabeledDataset gen_blobs(int d, int num_classes, int n_per_class, double separation,
                                double spread, std::uint64_t seed) {
    if (d < 1 || num_classes < 2 || n_per_class < 1) throw std::invalid_argument("gen_blobs: degenerate dims");
    if (separation <= 0) throw std::invalid_argument("gen_blobs: separation must be positive");
    Rng rng(derive_seed(seed, "gen-blobs"));
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.name = "blobs-d" + std::to_string(d) + "-K" + std::to_string(num_classes);
    const double step = separation / std::sqrt(static_cast<double>(d));
    for (int k = 0; k < num_classes; ++k) {
        const double mean = 0.5 + step * (k - 0.5 * (num_classes - 1));
        for (int i = 0; i < n_per_class; ++i) {
            Tensor x({d});
            for (int j = 0; j < d; ++j) {
                // Box-Muller
                const double u1 = std::max(rng.next_unit(), 1e-300);
                const double u2 = rng.next_unit();
                const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
                x[j] = std::min(1.0, std::max(0.0, mean + spread * z));
            }
            ds.inputs.push_back(std::move(x));
            ds.labels.push_back(k);
        }
    }
    return ds;
}

// Optional post-step realizing an epsilon-smoothed version of a generated
// dataset: each input moves by a uniform draw from [-eps, eps]^d, clipped.
inline LabeledDataset smooth_dataset(const LabeledDataset& ds, double epsilon, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "smooth-dataset"));
    LabeledDataset out = ds;
    for (auto& x : out.inputs)
        for (auto& v : x.data)
            v = std::min(1.0, std::max(0.0, v + rng.uniform(-epsilon, epsilon)));
    return out;
}

// Reassigns a random subset of labels to a uniformly drawn different class.
// The selection is a Fisher-Yates prefix, so the flipped fraction is exact.
inline LabeledDataset flip_labels(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("flip_labels: fraction must be in [0,1]");
    LabeledDataset out = ds;
    const std::size_t n_flip = static_cast<std::size_t>(fraction * static_cast<double>(ds.size()));
    if (n_flip == 0) return out;
    Rng rng(derive_seed(seed, "label-noise"));
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);
    for (std::size_t i = 0; i < n_flip; ++i) {
        int& y = out.labels[order[i]];
        const int shift = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(ds.num_classes - 1)));
        y = (y + shift) % ds.num_classes;
    }
    return out;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error(std::string("idx: truncated ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace detail

// IDX-format loader (MNIST style): images magic 2051, labels magic 2049,
// big-endian headers, one byte per pixel scaled to [0,1].
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);

    if (detail::read_be32(imgs, "image magic") != 2051)
        throw std::runtime_error("idx: bad image magic in " + images_path);
    const std::uint32_t n_imgs = detail::read_be32(imgs, "image count");
    const std::uint32_t rows = detail::read_be32(imgs, "rows");
    const std::uint32_t cols = detail::read_be32(imgs, "cols");

    if (detail::read_be32(labs, "label magic") != 2049)
        throw std::runtime_error("idx: bad label magic in " + labels_path);
    const std::uint32_t n_labs = detail::read_be32(labs, "label count");
    if (n_imgs != n_labs) throw std::runtime_error("idx: image/label count mismatch");

    LabeledDataset ds;
    ds.num_classes = 10;
    ds.name = "idx";
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < n_imgs; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!imgs) throw std::runtime_error("idx: truncated image payload");
        Tensor x({1, static_cast<int>(rows), static_cast<int>(cols)});
        for (std::size_t j = 0; j < buf.size(); ++j) x[j] = buf[j] / 255.0;
        char yb;
        labs.read(&yb, 1);
        if (!labs) throw std::runtime_error("idx: truncated label payload");
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(static_cast<unsigned char>(yb));
    }
    return ds;
}

// Perturbs every example with the k-step PGD operator of the given params,
// preserving labels: the materialized induced dataset.
inline LabeledDataset materialize_induced(const LabeledDataset& ds, const Params& params,
                                          const AttackConfig& atk, std::uint64_t seed) {
    atk.validate();
    Model model(params.spec);
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.name = ds.name + "-induced";
    out.labels = ds.labels;
    out.inputs.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (atk.init == AttackInit::UniformRandom) {
            Rng rng(derive_seed(seed, "induced-init", i));
            out.inputs.push_back(pgd_k(model, params, ds.inputs[i], ds.labels[i], atk, &rng));
        } else {
            out.inputs.push_back(pgd_k(model, params, ds.inputs[i], ds.labels[i], atk));
        }
    }
    return out;
}

// Deterministic disjoint split: shuffled by seed, first `fraction` on the left.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double fraction,
                                                       std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split: fraction must be in (0,1)");
    const std::size_t n = ds.size();
    const std::size_t n_left = static_cast<std::size_t>(fraction * static_cast<double>(n));
    if (n_left == 0 || n_left == n) throw std::invalid_argument("split: empty side");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, "split"));
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.next_below(i)]);
    LabeledDataset a, b;
    a.num_classes = b.num_classes = ds.num_classes;
    a.name = ds.name + "-a";
    b.name = ds.name + "-b";
    for (std::size_t i = 0; i < n; ++i) {
        auto& side = i < n_left ? a : b;
        side.inputs.push_back(ds.inputs[idx[i]]);
        side.labels.push_back(ds.labels[idx[i]]);
    }
    return {std::move(a), std::move(b)};
}

// Debug export: one row per example, flattened input then label.
inline void export_csv(const LabeledDataset& ds, std::ostream& out) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.inputs[i].data) out << v << ',';
        out << ds.labels[i] << '\n';
    }
}

}  // namespace advlab
