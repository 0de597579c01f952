#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "paseg/errors.hpp"

namespace paseg {

// Dense row-major value field. 64-bit throughout: every verification oracle
// in the project runs at double precision and training stays fast enough on
// desk-scale inputs.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel(shape)), fill);
    }
    static Tensor from(std::vector<int> s, std::vector<double> d) {
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        if (t.data.size() != static_cast<size_t>(numel(t.shape)))
            throw ShapeError("tensor data size does not match shape");
        return t;
    }

    static int64_t numel(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // (b, c, y, x) accessor for 4-d tensors.
    double& at4(int b, int c, int y, int x) {
        return data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    double at4(int b, int c, int y, int x) const {
        return data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
};

inline void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NonFiniteError(std::string("non-finite values in ") + what);
}

}  // namespace paseg
