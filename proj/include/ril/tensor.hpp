#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ril/common.hpp"

namespace ril {

/// Dense NCHW tensor. Scalars/vectors use degenerate dimensions.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    static Tensor like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }

    std::size_t numel() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    T& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    const T& at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(T(0)); }

    void add_scaled(const Tensor& o, T s) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * o.v[i];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(n, c, h, w);
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <typename T>
T mean_squared_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ValidationError("mean_squared_diff: shape mismatch");
    T acc = T(0);
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        T d = a.v[i] - b.v[i];
        acc += d * d;
    }
    return acc / static_cast<T>(a.numel());
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (T x : t.v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace ril
