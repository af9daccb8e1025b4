#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "ril/tensor.hpp"

namespace ril {

/// Deterministic parameter initializer (Box-Muller over explicit 53-bit draws).
struct ParamRng {
    std::mt19937_64 gen;
    explicit ParamRng(std::uint64_t seed) : gen(seed) {}
    double u01() { return (gen() >> 11) * 0x1.0p-53; }
    double gaussian() {
        double u1 = 0.0;
        do { u1 = u01(); } while (u1 <= 1e-300);
        double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
    }
};

template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&, Tensor<T>*)>;

template <typename T>
struct Conv2d {
    int in_c = 0, out_c = 0, ksize = 3, stride = 1, pad = 1;
    Tensor<T> weight, bias, wgrad, bgrad;

    void configure(int in_channels, int out_channels, int k, int stride_, int pad_, ParamRng& rng,
                   double init_scale = 1.0) {
        in_c = in_channels;
        out_c = out_channels;
        ksize = k;
        stride = stride_;
        pad = pad_;
        weight = Tensor<T>(out_c, in_c, k, k);
        bias = Tensor<T>(1, out_c, 1, 1);
        wgrad = Tensor<T>::like(weight);
        bgrad = Tensor<T>::like(bias);
        double std_dev = init_scale * std::sqrt(2.0 / (in_c * k * k));
        for (auto& v : weight.v) v = static_cast<T>(std_dev * rng.gaussian());
    }

    int out_dim(int in) const { return (in + 2 * pad - ksize) / stride + 1; }

    Tensor<T> forward(const Tensor<T>& x) const {
        const int oh = out_dim(x.h), ow = out_dim(x.w);
        Tensor<T> out(x.n, out_c, oh, ow);
        for (int in = 0; in < x.n; ++in)
            for (int oc = 0; oc < out_c; ++oc) {
                T b = bias.v[oc];
                T* obase = &out.at(in, oc, 0, 0);
                for (int i = 0; i < oh * ow; ++i) obase[i] = b;
                for (int ic = 0; ic < in_c; ++ic)
                    for (int ky = 0; ky < ksize; ++ky)
                        for (int kx = 0; kx < ksize; ++kx) {
                            T wv = weight.at(oc, ic, ky, kx);
                            // Valid output-x range so that the input column stays in bounds.
                            int lo = 0, hi = ow;
                            while (lo < ow && lo * stride + kx - pad < 0) ++lo;
                            while (hi > lo && (hi - 1) * stride + kx - pad >= x.w) --hi;
                            for (int oy = 0; oy < oh; ++oy) {
                                int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= x.h) continue;
                                const T* xrow = &x.at(in, ic, iy, 0);
                                T* orow = &out.at(in, oc, oy, 0);
                                for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * xrow[ox * stride + kx - pad];
                            }
                        }
            }
        return out;
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gout, bool accumulate_params = true) {
        const int oh = gout.h, ow = gout.w;
        Tensor<T> gin(x.n, x.c, x.h, x.w);
        for (int in = 0; in < x.n; ++in)
            for (int oc = 0; oc < out_c; ++oc) {
                if (accumulate_params) {
                    T bsum = T(0);
                    const T* gbase = &gout.at(in, oc, 0, 0);
                    for (int i = 0; i < oh * ow; ++i) bsum += gbase[i];
                    bgrad.v[oc] += bsum;
                }
                for (int ic = 0; ic < in_c; ++ic)
                    for (int ky = 0; ky < ksize; ++ky)
                        for (int kx = 0; kx < ksize; ++kx) {
                            T wv = weight.at(oc, ic, ky, kx);
                            T wacc = T(0);
                            int lo = 0, hi = ow;
                            while (lo < ow && lo * stride + kx - pad < 0) ++lo;
                            while (hi > lo && (hi - 1) * stride + kx - pad >= x.w) --hi;
                            for (int oy = 0; oy < oh; ++oy) {
                                int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= x.h) continue;
                                const T* xrow = &x.at(in, ic, iy, 0);
                                const T* grow = &gout.at(in, oc, oy, 0);
                                T* girow = &gin.at(in, ic, iy, 0);
                                for (int ox = lo; ox < hi; ++ox) {
                                    int ix = ox * stride + kx - pad;
                                    wacc += grow[ox] * xrow[ix];
                                    girow[ix] += wv * grow[ox];
                                }
                            }
                            if (accumulate_params) wgrad.at(oc, ic, ky, kx) += wacc;
                        }
            }
        return gin;
    }

    void zero_grad() {
        wgrad.zero();
        bgrad.zero();
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& cb) {
        cb(prefix + ".weight", weight, &wgrad);
        cb(prefix + ".bias", bias, &bgrad);
    }
};

template <typename T>
struct BatchNorm2d {
    int channels = 0;
    T momentum = T(0.1), eps = T(1e-5);
    Tensor<T> gamma, beta, ggrad, bgrad;
    Tensor<T> running_mean, running_var;

    struct Cache {
        std::vector<T> mean, invstd;
    };

    void configure(int c) {
        channels = c;
        gamma = Tensor<T>(1, c, 1, 1);
        beta = Tensor<T>(1, c, 1, 1);
        gamma.fill(T(1));
        ggrad = Tensor<T>::like(gamma);
        bgrad = Tensor<T>::like(beta);
        running_mean = Tensor<T>(1, c, 1, 1);
        running_var = Tensor<T>(1, c, 1, 1);
        running_var.fill(T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool training, Cache* cache) {
        Tensor<T> out = Tensor<T>::like(x);
        const int m = x.n * x.h * x.w;
        const int plane = x.h * x.w;
        if (cache) {
            cache->mean.assign(channels, T(0));
            cache->invstd.assign(channels, T(0));
        }
        for (int c = 0; c < channels; ++c) {
            T mean, invstd;
            if (training) {
                T sum = T(0);
                for (int in = 0; in < x.n; ++in) {
                    const T* p = &x.at(in, c, 0, 0);
                    for (int i = 0; i < plane; ++i) sum += p[i];
                }
                mean = sum / m;
                T var_sum = T(0);
                for (int in = 0; in < x.n; ++in) {
                    const T* p = &x.at(in, c, 0, 0);
                    for (int i = 0; i < plane; ++i) {
                        T d = p[i] - mean;
                        var_sum += d * d;
                    }
                }
                T var = var_sum / m;
                invstd = T(1) / std::sqrt(var + eps);
                running_mean.v[c] = (T(1) - momentum) * running_mean.v[c] + momentum * mean;
                running_var.v[c] = (T(1) - momentum) * running_var.v[c] + momentum * var;
            } else {
                mean = running_mean.v[c];
                invstd = T(1) / std::sqrt(running_var.v[c] + eps);
            }
            if (cache) {
                cache->mean[c] = mean;
                cache->invstd[c] = invstd;
            }
            T g = gamma.v[c], b = beta.v[c];
            for (int in = 0; in < x.n; ++in) {
                const T* p = &x.at(in, c, 0, 0);
                T* o = &out.at(in, c, 0, 0);
                for (int i = 0; i < plane; ++i) o[i] = g * (p[i] - mean) * invstd + b;
            }
        }
        return out;
    }

    /// Training-mode backward (batch statistics participate in the gradient).
    Tensor<T> backward(const Tensor<T>& x, const Cache& cache, const Tensor<T>& gout,
                       bool accumulate_params = true) {
        Tensor<T> gin = Tensor<T>::like(x);
        const int m = x.n * x.h * x.w;
        const int plane = x.h * x.w;
        for (int c = 0; c < channels; ++c) {
            T mean = cache.mean[c], invstd = cache.invstd[c], g = gamma.v[c];
            T sum_g = T(0), sum_gx = T(0);
            for (int in = 0; in < x.n; ++in) {
                const T* xp = &x.at(in, c, 0, 0);
                const T* gp = &gout.at(in, c, 0, 0);
                for (int i = 0; i < plane; ++i) {
                    T xhat = (xp[i] - mean) * invstd;
                    sum_g += gp[i];
                    sum_gx += gp[i] * xhat;
                }
            }
            if (accumulate_params) {
                ggrad.v[c] += sum_gx;
                bgrad.v[c] += sum_g;
            }
            T scale = g * invstd / m;
            for (int in = 0; in < x.n; ++in) {
                const T* xp = &x.at(in, c, 0, 0);
                const T* gp = &gout.at(in, c, 0, 0);
                T* gi = &gin.at(in, c, 0, 0);
                for (int i = 0; i < plane; ++i) {
                    T xhat = (xp[i] - mean) * invstd;
                    gi[i] = scale * (m * gp[i] - sum_g - xhat * sum_gx);
                }
            }
        }
        return gin;
    }

    void zero_grad() {
        ggrad.zero();
        bgrad.zero();
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& cb) {
        cb(prefix + ".gamma", gamma, &ggrad);
        cb(prefix + ".beta", beta, &bgrad);
    }

    void visit_state(const std::string& prefix, const ParamVisitor<T>& cb) {
        visit(prefix, cb);
        cb(prefix + ".running_mean", running_mean, nullptr);
        cb(prefix + ".running_var", running_var, nullptr);
    }
};

template <typename T>
struct Linear {
    int in_c = 0, out_c = 0;
    Tensor<T> weight, bias, wgrad, bgrad;

    void configure(int in_channels, int out_channels, ParamRng* rng) {
        in_c = in_channels;
        out_c = out_channels;
        weight = Tensor<T>(out_c, in_c, 1, 1);
        bias = Tensor<T>(1, out_c, 1, 1);
        wgrad = Tensor<T>::like(weight);
        bgrad = Tensor<T>::like(bias);
        if (rng) {
            double std_dev = std::sqrt(2.0 / in_c);
            for (auto& v : weight.v) v = static_cast<T>(std_dev * rng->gaussian());
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {  // x: n x in_c x 1 x 1
        Tensor<T> out(x.n, out_c, 1, 1);
        for (int in = 0; in < x.n; ++in)
            for (int oc = 0; oc < out_c; ++oc) {
                T acc = bias.v[oc];
                for (int ic = 0; ic < in_c; ++ic) acc += weight.at(oc, ic, 0, 0) * x.at(in, ic, 0, 0);
                out.at(in, oc, 0, 0) = acc;
            }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gout, bool accumulate_params = true) {
        Tensor<T> gin = Tensor<T>::like(x);
        for (int in = 0; in < x.n; ++in)
            for (int oc = 0; oc < out_c; ++oc) {
                T g = gout.at(in, oc, 0, 0);
                if (accumulate_params) bgrad.v[oc] += g;
                for (int ic = 0; ic < in_c; ++ic) {
                    if (accumulate_params) wgrad.at(oc, ic, 0, 0) += g * x.at(in, ic, 0, 0);
                    gin.at(in, ic, 0, 0) += weight.at(oc, ic, 0, 0) * g;
                }
            }
        return gin;
    }

    void zero_grad() {
        wgrad.zero();
        bgrad.zero();
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& cb) {
        cb(prefix + ".weight", weight, &wgrad);
        cb(prefix + ".bias", bias, &bgrad);
    }
};

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.v) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gout) {
    Tensor<T> gin = gout;
    for (std::size_t i = 0; i < x.v.size(); ++i)
        if (x.v[i] <= T(0)) gin.v[i] = T(0);
    return gin;
}

template <typename T>
Tensor<T> leaky_relu_forward(const Tensor<T>& x, T slope) {
    Tensor<T> out = x;
    for (auto& v : out.v) v = v > T(0) ? v : slope * v;
    return out;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& gout, T slope) {
    Tensor<T> gin = gout;
    for (std::size_t i = 0; i < x.v.size(); ++i)
        if (x.v[i] <= T(0)) gin.v[i] *= slope;
    return gin;
}

template <typename T>
Tensor<T> avgpool2_forward(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, x.h / 2, x.w / 2);
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(in, c, y, xx) = (x.at(in, c, 2 * y, 2 * xx) + x.at(in, c, 2 * y, 2 * xx + 1) +
                                            x.at(in, c, 2 * y + 1, 2 * xx) + x.at(in, c, 2 * y + 1, 2 * xx + 1)) /
                                           T(4);
    return out;
}

template <typename T>
Tensor<T> avgpool2_backward(const Tensor<T>& gout, int in_h, int in_w) {
    Tensor<T> gin(gout.n, gout.c, in_h, in_w);
    for (int in = 0; in < gout.n; ++in)
        for (int c = 0; c < gout.c; ++c)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) {
                    T g = gout.at(in, c, y, xx) / T(4);
                    gin.at(in, c, 2 * y, 2 * xx) = g;
                    gin.at(in, c, 2 * y, 2 * xx + 1) = g;
                    gin.at(in, c, 2 * y + 1, 2 * xx) = g;
                    gin.at(in, c, 2 * y + 1, 2 * xx + 1) = g;
                }
    return gin;
}

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, x.h * 2, x.w * 2);
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < out.h; ++y) {
                const T* src = &x.at(in, c, y / 2, 0);
                T* dst = &out.at(in, c, y, 0);
                for (int xx = 0; xx < out.w; ++xx) dst[xx] = src[xx / 2];
            }
    return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& gout) {
    Tensor<T> gin(gout.n, gout.c, gout.h / 2, gout.w / 2);
    for (int in = 0; in < gout.n; ++in)
        for (int c = 0; c < gout.c; ++c)
            for (int y = 0; y < gout.h; ++y) {
                const T* src = &gout.at(in, c, y, 0);
                T* dst = &gin.at(in, c, y / 2, 0);
                for (int xx = 0; xx < gout.w; ++xx) dst[xx / 2] += src[xx];
            }
    return gin;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int c = 0; c < a.c; ++c)
            std::copy_n(&a.at(in, c, 0, 0), a.h * a.w, &out.at(in, c, 0, 0));
        for (int c = 0; c < b.c; ++c)
            std::copy_n(&b.at(in, c, 0, 0), b.h * b.w, &out.at(in, a.c + c, 0, 0));
    }
    return out;
}

template <typename T>
void split_channels(const Tensor<T>& g, int c_a, Tensor<T>& ga, Tensor<T>& gb) {
    ga = Tensor<T>(g.n, c_a, g.h, g.w);
    gb = Tensor<T>(g.n, g.c - c_a, g.h, g.w);
    for (int in = 0; in < g.n; ++in) {
        for (int c = 0; c < c_a; ++c)
            std::copy_n(&g.at(in, c, 0, 0), g.h * g.w, &ga.at(in, c, 0, 0));
        for (int c = 0; c < g.c - c_a; ++c)
            std::copy_n(&g.at(in, c_a + c, 0, 0), g.h * g.w, &gb.at(in, c, 0, 0));
    }
}

template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, 1, 1);
    const int plane = x.h * x.w;
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c) {
            T acc = T(0);
            const T* p = &x.at(in, c, 0, 0);
            for (int i = 0; i < plane; ++i) acc += p[i];
            out.at(in, c, 0, 0) = acc / plane;
        }
    return out;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Tensor<T>& gout, int in_h, int in_w) {
    Tensor<T> gin(gout.n, gout.c, in_h, in_w);
    const int plane = in_h * in_w;
    for (int in = 0; in < gout.n; ++in)
        for (int c = 0; c < gout.c; ++c) {
            T g = gout.at(in, c, 0, 0) / plane;
            T* p = &gin.at(in, c, 0, 0);
            for (int i = 0; i < plane; ++i) p[i] = g;
        }
    return gin;
}

}  // namespace ril
