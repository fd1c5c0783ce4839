#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gramnet/error.hpp"

namespace gramnet::nn {

// Dense NHWC tensor. Row-major: index = ((b*H + y)*W + x)*C + c.
template <class T>
struct TensorT {
    int b = 0, h = 0, w = 0, c = 0;
    std::vector<T> v;

    TensorT() = default;
    TensorT(int b_, int h_, int w_, int c_)
        : b(b_), h(h_), w(w_), c(c_),
          v(static_cast<std::size_t>(b_) * h_ * w_ * c_, T(0)) {}

    std::size_t size() const { return v.size(); }

    std::size_t pos(int bi, int y, int x) const {
        return ((static_cast<std::size_t>(bi) * h + y) * w + x) * c;
    }
    T* row(int bi, int y, int x) { return v.data() + pos(bi, y, x); }
    const T* row(int bi, int y, int x) const { return v.data() + pos(bi, y, x); }

    T& at(int bi, int y, int x, int ci) { return v[pos(bi, y, x) + ci]; }
    T at(int bi, int y, int x, int ci) const { return v[pos(bi, y, x) + ci]; }

    bool same_shape(const TensorT& o) const {
        return b == o.b && h == o.h && w == o.w && c == o.c;
    }

    void fill(T value) { std::fill(v.begin(), v.end(), value); }

    // Copies batch item bi into a (1, h, w, c) tensor.
    TensorT slice(int bi) const {
        TensorT out(1, h, w, c);
        const std::size_t stride = static_cast<std::size_t>(h) * w * c;
        std::copy(v.begin() + bi * stride, v.begin() + (bi + 1) * stride, out.v.begin());
        return out;
    }
};

// Shaped parameter (or gradient) array: kernels, biases, dense weights.
template <class T>
struct Array {
    std::vector<int> dims;
    std::vector<T> v;

    Array() = default;
    explicit Array(std::vector<int> d) : dims(std::move(d)) {
        std::size_t n = 1;
        for (int x : dims) n *= static_cast<std::size_t>(x);
        v.assign(n, T(0));
    }

    std::size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
    bool same_dims(const Array& o) const { return dims == o.dims; }
};

template <class T>
void ensure_finite(const TensorT<T>& t, const char* where) {
    for (const T& x : t.v) {
        if (!std::isfinite(static_cast<double>(x))) throw NonFiniteError(where);
    }
}

} // namespace gramnet::nn
