#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ril/common.hpp"
#include "ril/model.hpp"
#include "ril/tensor.hpp"

namespace ril {

enum class DistillMode { off, same_only, scale_fusing };

inline const char* to_string(DistillMode m) {
    switch (m) {
        case DistillMode::off: return "off";
        case DistillMode::same_only: return "same_only";
        case DistillMode::scale_fusing: return "scale_fusing";
    }
    return "?";
}

inline DistillMode distill_mode_from_string(const std::string& s) {
    if (s == "off") return DistillMode::off;
    if (s == "same_only") return DistillMode::same_only;
    if (s == "scale_fusing") return DistillMode::scale_fusing;
    throw ValidationError(format("mode '%s' is not one of off|same_only|scale_fusing", s.c_str()));
}

/// Which stages are compared at equal scale, and which (finer -> coarser)
/// stage pairs are compared after down-sample alignment.
struct DistillConfig {
    DistillMode mode = DistillMode::scale_fusing;
    std::vector<int> same_stages = {3, 4};
    std::vector<std::pair<int, int>> cross_pairs = {{2, 3}, {3, 4}};

    void validate(int stages) const {
        for (int s : same_stages)
            if (s < 1 || s > stages)
                throw ValidationError(format("same_stages entry %d outside [1,%d]", s, stages));
        for (auto [a, b] : cross_pairs) {
            if (b < 2 || b > stages)
                throw ValidationError(format("cross_pairs target stage %d outside [2,%d]", b, stages));
            if (a != b - 1)
                throw ValidationError(format("cross_pairs entry (%d,%d) must pair adjacent stages", a, b));
        }
        if (mode != DistillMode::off && same_stages.empty())
            throw ValidationError("same_stages must be nonempty when distillation is enabled");
        if (mode == DistillMode::scale_fusing && cross_pairs.empty())
            throw ValidationError("cross_pairs must be nonempty in scale_fusing mode");
    }
};

namespace detail {

template <typename T>
void check_provenance(const FeaturePyramid<T>& tv, const FeaturePyramid<T>& sv, const FeaturePyramid<T>& sr) {
    if (tv.net != NetRole::teacher || tv.data != DataKind::virtual_data)
        throw ValidationError("first pyramid must be teacher/virtual");
    if (sv.net != NetRole::student || sv.data != DataKind::virtual_data)
        throw ValidationError("second pyramid must be student/virtual");
    if (sr.net != NetRole::student || sr.data != DataKind::real_data)
        throw ValidationError("third pyramid must be student/real");
    if (tv.stages.size() != sv.stages.size() || tv.stages.size() != sr.stages.size())
        throw ValidationError("pyramids must have the same stage count");
}

/// Ensures grads[idx] exists with the given shape and returns it.
template <typename T>
Tensor<T>& grad_slot(std::vector<Tensor<T>>& grads, std::size_t idx, const Tensor<T>& shape_ref) {
    if (grads.size() <= idx) grads.resize(idx + 1);
    if (grads[idx].numel() == 0) grads[idx] = Tensor<T>::like(shape_ref);
    if (!grads[idx].same_shape(shape_ref)) throw ValidationError("gradient accumulator shape mismatch");
    return grads[idx];
}

/// Mean squared difference d(a, b); optionally accumulates scale * dd/db.
template <typename T>
double msd_with_grad(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* gb, double scale) {
    if (!a.same_shape(b))
        throw ValidationError(format("feature dims mismatch: %dx%dx%dx%d vs %dx%dx%dx%d", a.n, a.c, a.h, a.w, b.n,
                                     b.c, b.h, b.w));
    double sum = 0.0;
    const double inv = 1.0 / static_cast<double>(a.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        double d = static_cast<double>(b.v[i]) - static_cast<double>(a.v[i]);
        sum += d * d;
        if (gb) gb->v[i] += static_cast<T>(scale * 2.0 * inv * d);
    }
    return sum * inv;
}

}  // namespace detail

/// Down-sample alignment: 2x2 average pooling plus a fixed, non-learned
/// channel projection to the target channel count. Contraction averages
/// channel groups; expansion replicates source channels. Both preserve
/// constant maps.
template <typename T>
Tensor<T> align_down(const Tensor<T>& src, int target_c, int target_h, int target_w) {
    if (src.h != 2 * target_h || src.w != 2 * target_w)
        throw ValidationError(format("align_down needs a 2x spatial ratio: source %dx%d, target %dx%d", src.h,
                                     src.w, target_h, target_w));
    Tensor<T> pooled = avgpool2_forward(src);
    if (src.c == target_c) return pooled;
    Tensor<T> out(src.n, target_c, target_h, target_w);
    const int plane = target_h * target_w;
    if (src.c > target_c) {
        if (src.c % target_c != 0)
            throw ValidationError(format("channel contraction %d->%d must be integral", src.c, target_c));
        int group = src.c / target_c;
        for (int in = 0; in < src.n; ++in)
            for (int oc = 0; oc < target_c; ++oc) {
                T* o = &out.at(in, oc, 0, 0);
                for (int g = 0; g < group; ++g) {
                    const T* p = &pooled.at(in, oc * group + g, 0, 0);
                    for (int i = 0; i < plane; ++i) o[i] += p[i];
                }
                for (int i = 0; i < plane; ++i) o[i] /= T(group);
            }
    } else {
        for (int in = 0; in < src.n; ++in)
            for (int oc = 0; oc < target_c; ++oc) {
                const T* p = &pooled.at(in, oc * src.c / target_c, 0, 0);
                std::copy_n(p, plane, &out.at(in, oc, 0, 0));
            }
    }
    return out;
}

/// Same-scale distillation: the teacher's virtual features anchor both the
/// student's virtual and real features at each configured stage, averaged over
/// the stage count. Optional accumulation of gradients w.r.t. student features
/// (the teacher side is a constant).
template <typename T>
double loss_same(const FeaturePyramid<T>& tv, const FeaturePyramid<T>& sv, const FeaturePyramid<T>& sr,
                 const DistillConfig& cfg, std::vector<Tensor<T>>* g_sv = nullptr,
                 std::vector<Tensor<T>>* g_sr = nullptr, double scale = 1.0) {
    detail::check_provenance(tv, sv, sr);
    if (cfg.same_stages.empty()) throw ValidationError("same_stages is empty");
    const double inv_n = 1.0 / static_cast<double>(cfg.same_stages.size());
    double total = 0.0;
    for (int s : cfg.same_stages) {
        std::size_t j = static_cast<std::size_t>(s - 1);
        if (j >= tv.stages.size()) throw ValidationError(format("stage %d outside pyramid", s));
        Tensor<T>* slot_v = g_sv ? &detail::grad_slot(*g_sv, j, sv.stages[j]) : nullptr;
        Tensor<T>* slot_r = g_sr ? &detail::grad_slot(*g_sr, j, sr.stages[j]) : nullptr;
        total += detail::msd_with_grad(tv.stages[j], sv.stages[j], slot_v, scale * inv_n);
        total += detail::msd_with_grad(tv.stages[j], sr.stages[j], slot_r, scale * inv_n);
    }
    return total * inv_n;
}

/// Cross-scale distillation: the teacher's finer stage, aligned down one
/// scale, anchors the student's coarser stage on both data domains.
template <typename T>
double loss_cross(const FeaturePyramid<T>& tv, const FeaturePyramid<T>& sv, const FeaturePyramid<T>& sr,
                  const DistillConfig& cfg, std::vector<Tensor<T>>* g_sv = nullptr,
                  std::vector<Tensor<T>>* g_sr = nullptr, double scale = 1.0) {
    detail::check_provenance(tv, sv, sr);
    if (cfg.cross_pairs.empty()) throw ValidationError("cross_pairs is empty");
    const double inv_n = 1.0 / static_cast<double>(cfg.cross_pairs.size());
    double total = 0.0;
    for (auto [a, b] : cfg.cross_pairs) {
        std::size_t src = static_cast<std::size_t>(a - 1), dst = static_cast<std::size_t>(b - 1);
        if (dst >= tv.stages.size() || src >= tv.stages.size())
            throw ValidationError(format("cross pair (%d,%d) outside pyramid", a, b));
        const Tensor<T>& target_shape = sv.stages[dst];
        Tensor<T> anchor = align_down(tv.stages[src], target_shape.c, target_shape.h, target_shape.w);
        Tensor<T>* slot_v = g_sv ? &detail::grad_slot(*g_sv, dst, sv.stages[dst]) : nullptr;
        Tensor<T>* slot_r = g_sr ? &detail::grad_slot(*g_sr, dst, sr.stages[dst]) : nullptr;
        total += detail::msd_with_grad(anchor, sv.stages[dst], slot_v, scale * inv_n);
        total += detail::msd_with_grad(anchor, sr.stages[dst], slot_r, scale * inv_n);
    }
    return total * inv_n;
}

struct DistillResult {
    double same = 0.0;
    double cross = 0.0;
    double total() const { return same + cross; }
};

/// Combined distillation objective with mode dispatch; gradients (if
/// requested) accumulate into per-stage slots for the student's two passes.
template <typename T>
DistillResult loss_distill(const FeaturePyramid<T>& tv, const FeaturePyramid<T>& sv,
                           const FeaturePyramid<T>& sr, const DistillConfig& cfg,
                           std::vector<Tensor<T>>* g_sv = nullptr, std::vector<Tensor<T>>* g_sr = nullptr,
                           double scale = 1.0) {
    DistillResult r;
    if (cfg.mode == DistillMode::off) return r;
    r.same = loss_same(tv, sv, sr, cfg, g_sv, g_sr, scale);
    if (cfg.mode == DistillMode::scale_fusing) r.cross = loss_cross(tv, sv, sr, cfg, g_sv, g_sr, scale);
    return r;
}

}  // namespace ril
