#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ril/common.hpp"
#include "ril/geometry.hpp"
#include "ril/layers.hpp"
#include "ril/tensor.hpp"

namespace ril {

/// Shared shape contract for teacher and student segmentation networks.
struct BackboneSpec {
    int stages = 4;
    int base_channels = 16;
    int input_h = 48;
    int input_w = 96;
    int k_max = 4;  // lane classes 1..k_max; channel 0 is background

    bool operator==(const BackboneSpec&) const = default;

    int stage_channels(int stage) const { return base_channels << (stage - 1); }  // stage in 1..stages

    void validate() const {
        if (stages < 2 || stages > 6) throw ValidationError(format("stages must be in [2,6], got %d", stages));
        if (base_channels < 1) throw ValidationError("base_channels must be positive");
        if (k_max < 1) throw ValidationError("k_max must be positive");
        int div = 1 << stages;
        if (input_h <= 0 || input_w <= 0 || input_h % div != 0 || input_w % div != 0)
            throw ValidationError(
                format("input %dx%d must be positive and divisible by 2^stages=%d", input_h, input_w, div));
    }
};

enum class NetRole { teacher, student };
enum class DataKind { virtual_data, real_data };

inline const char* to_string(NetRole r) { return r == NetRole::teacher ? "teacher" : "student"; }
inline const char* to_string(DataKind d) { return d == DataKind::virtual_data ? "virtual" : "real"; }

/// Multi-scale feature stack tagged with which network produced it and on
/// which data domain, so downstream consumers can assert their wiring.
template <typename T>
struct FeaturePyramid {
    NetRole net = NetRole::teacher;
    DataKind data = DataKind::virtual_data;
    std::vector<Tensor<T>> stages;  // stages[j-1] holds stage-j output at H/2^j x W/2^j
};

/// Encoder-decoder segmentation network. Each encoder stage halves spatial
/// resolution and doubles width; the decoder mirrors it with nearest-neighbor
/// upsampling and skip concatenation, ending in per-pixel lane-class logits.
template <typename T>
struct SegNet {
    BackboneSpec spec;
    std::vector<Conv2d<T>> enc_conv;
    std::vector<BatchNorm2d<T>> enc_bn;
    std::vector<Conv2d<T>> dec_conv;
    std::vector<BatchNorm2d<T>> dec_bn;
    Conv2d<T> head;

    struct Cache {
        Tensor<T> input;
        std::vector<Tensor<T>> enc_conv_out, enc_bn_out, enc_stage_out;
        std::vector<typename BatchNorm2d<T>::Cache> enc_bn_cache;
        bool decoded = false;
        std::vector<Tensor<T>> dec_cat, dec_conv_out, dec_bn_out;
        std::vector<typename BatchNorm2d<T>::Cache> dec_bn_cache;
        std::vector<int> dec_up_channels;  // channel count of the upsampled half of each concat
        Tensor<T> head_in;
    };

    void init(const BackboneSpec& s, std::uint64_t seed) {
        s.validate();
        spec = s;
        ParamRng rng(seed);
        enc_conv.assign(spec.stages, {});
        enc_bn.assign(spec.stages, {});
        int in_c = 3;
        for (int j = 0; j < spec.stages; ++j) {
            int out_c = spec.stage_channels(j + 1);
            enc_conv[j].configure(in_c, out_c, 3, 1, 1, rng);
            enc_bn[j].configure(out_c);
            in_c = out_c;
        }
        dec_conv.assign(spec.stages - 1, {});
        dec_bn.assign(spec.stages - 1, {});
        int carry_c = spec.stage_channels(spec.stages);
        for (int b = 0; b < spec.stages - 1; ++b) {
            int skip_c = spec.stage_channels(spec.stages - 1 - b);
            dec_conv[b].configure(carry_c + skip_c, skip_c, 3, 1, 1, rng);
            dec_bn[b].configure(skip_c);
            carry_c = skip_c;
        }
        head.configure(spec.base_channels, spec.k_max + 1, 3, 1, 1, rng);
    }

    FeaturePyramid<T> backbone_forward(const Tensor<T>& x, bool training, NetRole role, DataKind kind,
                                       Cache& cache) {
        if (x.c != 3) throw ValidationError(format("backbone expects 3 input channels, got %d", x.c));
        if (x.h != spec.input_h || x.w != spec.input_w)
            throw ValidationError(
                format("input %dx%d does not match the backbone's %dx%d", x.h, x.w, spec.input_h, spec.input_w));
        cache = Cache{};
        cache.input = x;
        cache.enc_conv_out.resize(spec.stages);
        cache.enc_bn_out.resize(spec.stages);
        cache.enc_stage_out.resize(spec.stages);
        cache.enc_bn_cache.resize(spec.stages);
        FeaturePyramid<T> pyr;
        pyr.net = role;
        pyr.data = kind;
        const Tensor<T>* cur = &cache.input;
        for (int j = 0; j < spec.stages; ++j) {
            cache.enc_conv_out[j] = enc_conv[j].forward(*cur);
            cache.enc_bn_out[j] = enc_bn[j].forward(cache.enc_conv_out[j], training, &cache.enc_bn_cache[j]);
            Tensor<T> act = relu_forward(cache.enc_bn_out[j]);
            cache.enc_stage_out[j] = avgpool2_forward(act);
            cur = &cache.enc_stage_out[j];
        }
        pyr.stages = cache.enc_stage_out;
        return pyr;
    }

    Tensor<T> decoder_forward(Cache& cache, bool training) {
        if (cache.enc_stage_out.empty()) throw ValidationError("decoder_forward requires a backbone pass first");
        int blocks = spec.stages - 1;
        cache.dec_cat.resize(blocks);
        cache.dec_conv_out.resize(blocks);
        cache.dec_bn_out.resize(blocks);
        cache.dec_bn_cache.resize(blocks);
        cache.dec_up_channels.resize(blocks);
        Tensor<T> carry = cache.enc_stage_out[spec.stages - 1];
        for (int b = 0; b < blocks; ++b) {
            Tensor<T> up = upsample2_forward(carry);
            cache.dec_up_channels[b] = up.c;
            cache.dec_cat[b] = concat_channels(up, cache.enc_stage_out[spec.stages - 2 - b]);
            cache.dec_conv_out[b] = dec_conv[b].forward(cache.dec_cat[b]);
            cache.dec_bn_out[b] = dec_bn[b].forward(cache.dec_conv_out[b], training, &cache.dec_bn_cache[b]);
            carry = relu_forward(cache.dec_bn_out[b]);
        }
        cache.head_in = upsample2_forward(carry);
        cache.decoded = true;
        return head.forward(cache.head_in);
    }

    Tensor<T> forward_logits(const Tensor<T>& x, bool training, Cache& cache, NetRole role = NetRole::teacher,
                             DataKind kind = DataKind::virtual_data) {
        backbone_forward(x, training, role, kind, cache);
        return decoder_forward(cache, training);
    }

    Tensor<T> forward_logits(const Tensor<T>& x, bool training) {
        Cache cache;
        return forward_logits(x, training, cache);
    }

    /// Accumulates parameter gradients for one cached forward pass.
    /// `glogits` (optional) backpropagates through decoder and head;
    /// `gstages` (optional, one entry per stage, empty tensors skipped) injects
    /// external gradients on the stage outputs, e.g. from distillation or an
    /// adversarial critic. Both sources accumulate where paths merge.
    void backward(Cache& cache, const Tensor<T>* glogits, const std::vector<Tensor<T>>* gstages) {
        std::vector<Tensor<T>> gstage(spec.stages);
        if (gstages) {
            if (static_cast<int>(gstages->size()) != spec.stages)
                throw ValidationError(format("expected %d stage gradients, got %d", spec.stages,
                                             static_cast<int>(gstages->size())));
            for (int j = 0; j < spec.stages; ++j)
                if ((*gstages)[j].numel() > 0) {
                    if (!(*gstages)[j].same_shape(cache.enc_stage_out[j]))
                        throw ValidationError(format("stage %d gradient shape mismatch", j + 1));
                    gstage[j] = (*gstages)[j];
                }
        }
        if (glogits) {
            if (!cache.decoded) throw ValidationError("logits gradient supplied without a decoder pass");
            Tensor<T> g = head.backward(cache.head_in, *glogits);
            g = upsample2_backward(g);
            for (int b = spec.stages - 2; b >= 0; --b) {
                g = relu_backward(cache.dec_bn_out[b], g);
                g = dec_bn[b].backward(cache.dec_conv_out[b], cache.dec_bn_cache[b], g);
                g = dec_conv[b].backward(cache.dec_cat[b], g);
                Tensor<T> gup, gskip;
                split_channels(g, cache.dec_up_channels[b], gup, gskip);
                int skip_idx = spec.stages - 2 - b;
                if (gstage[skip_idx].numel() > 0)
                    gstage[skip_idx].add_scaled(gskip, T(1));
                else
                    gstage[skip_idx] = gskip;
                g = upsample2_backward(gup);
            }
            if (gstage[spec.stages - 1].numel() > 0)
                gstage[spec.stages - 1].add_scaled(g, T(1));
            else
                gstage[spec.stages - 1] = g;
        }
        Tensor<T> g;
        bool live = false;
        for (int j = spec.stages - 1; j >= 0; --j) {
            if (gstage[j].numel() > 0) {
                if (live)
                    g.add_scaled(gstage[j], T(1));
                else
                    g = gstage[j];
                live = true;
            }
            if (!live) continue;
            g = avgpool2_backward(g, cache.enc_bn_out[j].h, cache.enc_bn_out[j].w);
            g = relu_backward(cache.enc_bn_out[j], g);
            g = enc_bn[j].backward(cache.enc_conv_out[j], cache.enc_bn_cache[j], g);
            const Tensor<T>& x_in = j == 0 ? cache.input : cache.enc_stage_out[j - 1];
            g = enc_conv[j].backward(x_in, g);
        }
    }

    void zero_grad() {
        for (auto& l : enc_conv) l.zero_grad();
        for (auto& l : enc_bn) l.zero_grad();
        for (auto& l : dec_conv) l.zero_grad();
        for (auto& l : dec_bn) l.zero_grad();
        head.zero_grad();
    }

    void visit_params(const ParamVisitor<T>& cb) {
        for (int j = 0; j < static_cast<int>(enc_conv.size()); ++j) {
            enc_conv[j].visit(format("enc%d.conv", j + 1), cb);
            enc_bn[j].visit(format("enc%d.bn", j + 1), cb);
        }
        for (int b = 0; b < static_cast<int>(dec_conv.size()); ++b) {
            dec_conv[b].visit(format("dec%d.conv", b + 1), cb);
            dec_bn[b].visit(format("dec%d.bn", b + 1), cb);
        }
        head.visit("head", cb);
    }

    /// Parameters plus batch-norm running statistics: everything a checkpoint
    /// must capture for inference to reproduce bit-exactly.
    void visit_state(const ParamVisitor<T>& cb) {
        for (int j = 0; j < static_cast<int>(enc_conv.size()); ++j) {
            enc_conv[j].visit(format("enc%d.conv", j + 1), cb);
            enc_bn[j].visit_state(format("enc%d.bn", j + 1), cb);
        }
        for (int b = 0; b < static_cast<int>(dec_conv.size()); ++b) {
            dec_conv[b].visit(format("dec%d.conv", b + 1), cb);
            dec_bn[b].visit_state(format("dec%d.bn", b + 1), cb);
        }
        head.visit("head", cb);
    }

    std::size_t param_count() {
        std::size_t n = 0;
        visit_params([&](const std::string&, Tensor<T>& t, Tensor<T>*) { n += t.v.size(); });
        return n;
    }

    std::uint64_t state_checksum() {
        std::uint64_t h = 0xcbf29ce484222325ull;
        visit_state([&](const std::string& name, Tensor<T>& t, Tensor<T>*) {
            h = fnv1a64(name.data(), name.size(), h);
            h = fnv1a64(t.v.data(), t.v.size() * sizeof(T), h);
        });
        return h;
    }
};

struct DiscriminatorSpec {
    int in_channels = 0;
    int width = 32;
    int layers = 3;

    bool operator==(const DiscriminatorSpec&) const = default;

    void validate() const {
        if (in_channels < 1) throw ValidationError("discriminator in_channels must be positive");
        if (width < 1) throw ValidationError("discriminator width must be positive");
        if (layers < 1 || layers > 6)
            throw ValidationError(format("discriminator layers must be in [1,6], got %d", layers));
    }
};

/// Small convolutional critic over a feature map: strided convs with leaky
/// activations, global average pooling, and a zero-initialized affine head so
/// every input scores probability 0.5 before any update.
template <typename T>
struct Discriminator {
    static constexpr T kProbEps = T(1e-7);
    DiscriminatorSpec spec;
    std::vector<Conv2d<T>> conv;
    Linear<T> fc;

    struct Cache {
        std::vector<Tensor<T>> conv_in;   // input to conv[i]
        std::vector<Tensor<T>> conv_out;  // pre-activation output of conv[i]
        Tensor<T> pool_in;                // final activation map
        Tensor<T> fc_in;                  // pooled vector
        Tensor<T> prob;                   // clamped sigmoid output, n x 1 x 1 x 1
    };

    void init(const DiscriminatorSpec& s, std::uint64_t seed) {
        s.validate();
        spec = s;
        ParamRng rng(seed);
        conv.assign(spec.layers, {});
        int in_c = spec.in_channels;
        for (int i = 0; i < spec.layers; ++i) {
            conv[i].configure(in_c, spec.width, 3, 2, 1, rng);
            in_c = spec.width;
        }
        fc.configure(spec.width, 1, nullptr);  // zero weights and bias
    }

    Tensor<T> forward(const Tensor<T>& feat, Cache& cache) {
        if (feat.c != spec.in_channels)
            throw ValidationError(
                format("discriminator expects %d input channels, got %d", spec.in_channels, feat.c));
        cache = Cache{};
        cache.conv_in.resize(spec.layers);
        cache.conv_out.resize(spec.layers);
        Tensor<T> cur = feat;
        for (int i = 0; i < spec.layers; ++i) {
            cache.conv_in[i] = cur;
            cache.conv_out[i] = conv[i].forward(cur);
            cur = leaky_relu_forward(cache.conv_out[i], T(0.2));
        }
        cache.pool_in = cur;
        cache.fc_in = global_avgpool_forward(cur);
        Tensor<T> logit = fc.forward(cache.fc_in);
        cache.prob = Tensor<T>(feat.n, 1, 1, 1);
        for (int in = 0; in < feat.n; ++in) {
            T p = T(1) / (T(1) + std::exp(-logit.at(in, 0, 0, 0)));
            cache.prob.at(in, 0, 0, 0) = std::min(std::max(p, kProbEps), T(1) - kProbEps);
        }
        return cache.prob;
    }

    /// Backpropagates dL/dprob through the cached pass and returns dL/dfeat.
    /// With accumulate_params=false the critic's own gradients are untouched,
    /// which is how generator-phase updates leave the critic frozen.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& dprob, bool accumulate_params = true) {
        Tensor<T> dlogit(dprob.n, 1, 1, 1);
        for (int in = 0; in < dprob.n; ++in) {
            T p = cache.prob.at(in, 0, 0, 0);
            dlogit.at(in, 0, 0, 0) = dprob.at(in, 0, 0, 0) * p * (T(1) - p);
        }
        Tensor<T> g = fc.backward(cache.fc_in, dlogit, accumulate_params);
        g = global_avgpool_backward(g, cache.pool_in.h, cache.pool_in.w);
        for (int i = spec.layers - 1; i >= 0; --i) {
            g = leaky_relu_backward(cache.conv_out[i], g, T(0.2));
            g = conv[i].backward(cache.conv_in[i], g, accumulate_params);
        }
        return g;
    }

    void zero_grad() {
        for (auto& l : conv) l.zero_grad();
        fc.zero_grad();
    }

    void visit_params(const ParamVisitor<T>& cb) {
        for (int i = 0; i < static_cast<int>(conv.size()); ++i) conv[i].visit(format("d%d.conv", i + 1), cb);
        fc.visit("d.fc", cb);
    }
};

/// Softmax over the channel axis at every spatial location.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
    Tensor<T> out = Tensor<T>::like(logits);
    for (int in = 0; in < logits.n; ++in)
        for (int y = 0; y < logits.h; ++y)
            for (int x = 0; x < logits.w; ++x) {
                T mx = logits.at(in, 0, y, x);
                for (int c = 1; c < logits.c; ++c) mx = std::max(mx, logits.at(in, c, y, x));
                T sum = T(0);
                for (int c = 0; c < logits.c; ++c) {
                    T e = std::exp(logits.at(in, c, y, x) - mx);
                    out.at(in, c, y, x) = e;
                    sum += e;
                }
                for (int c = 0; c < logits.c; ++c) out.at(in, c, y, x) /= sum;
            }
    return out;
}

/// Row-wise decoding: for each lane class, take the most probable column per
/// row and keep rows whose probability clears the existence threshold. Lanes
/// with fewer than two surviving points are dropped.
template <typename T>
std::vector<Polyline> decode_lanes(const Tensor<T>& probs, int sample, double exist_threshold) {
    std::vector<Polyline> lanes;
    for (int k = 1; k < probs.c; ++k) {
        Polyline pts;
        for (int y = 0; y < probs.h; ++y) {
            int best_x = 0;
            T best_p = probs.at(sample, k, y, 0);
            for (int x = 1; x < probs.w; ++x)
                if (probs.at(sample, k, y, x) > best_p) {
                    best_p = probs.at(sample, k, y, x);
                    best_x = x;
                }
            if (static_cast<double>(best_p) > exist_threshold)
                pts.push_back({static_cast<double>(best_x), static_cast<double>(y)});
        }
        if (pts.size() >= 2) lanes.push_back(std::move(pts));
    }
    return lanes;
}

}  // namespace ril
