#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace advlab {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor of binary64 reals.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> d) {
        Shape s{static_cast<int>(d.size())};
        return Tensor(std::move(s), std::move(d));
    }

    std::size_t numel() const { return data.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
}

inline double linf_dist(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "linf_dist");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double l2_dist(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l2_dist");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double sq_l2_dist(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sq_l2_dist");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace advlab
