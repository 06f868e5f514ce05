#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace salgrid {

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::invalid_argument(msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

/// Dense row-major tensor of doubles. Values are treated as immutable once an
/// op has produced them; parameter tensors owned by a network are the only
/// state mutated in place (by sgd_step).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        require(static_cast<size_t>(count(shape)) == data.size(),
                "tensor data length does not match shape");
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int e : s) {
            require(e > 0, "tensor extents must be positive, got " + std::to_string(e));
            n *= e;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double value) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    size_t size() const { return data.size(); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // Rank-specific accessors; row-major, no bounds checks in release hot loops.
    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * dim(1) + j]; }

    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    double& at(int i, int j, int k, int l) {
        return data[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    double at(int i, int j, int k, int l) const {
        return data[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double min() const {
        double m = data[0];
        for (double v : data) m = std::min(m, v);
        return m;
    }
    double max() const {
        double m = data[0];
        for (double v : data) m = std::max(m, v);
        return m;
    }
    double sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline void require_shape(const Tensor& t, const std::vector<int>& s, const std::string& who) {
    require(t.shape == s, who + ": expected shape " + shape_str(s) + ", got " + shape_str(t.shape));
}

}  // namespace salgrid
