#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "ril/adversarial.hpp"
#include "ril/common.hpp"
#include "ril/dataset.hpp"
#include "ril/distill.hpp"
#include "ril/model.hpp"
#include "ril/repaint.hpp"

namespace ril {

struct OptimizerConfig {
    std::string kind = "sgd";  // sgd | adaptive
    double momentum = 0.9;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void validate() const {
        if (kind != "sgd" && kind != "adaptive")
            throw ValidationError(format("optimizer.kind '%s' is not one of sgd|adaptive", kind.c_str()));
        if (momentum < 0 || momentum >= 1) throw ValidationError("optimizer.momentum must be in [0,1)");
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw ValidationError("optimizer betas must be in (0,1)");
        if (!(eps > 0)) throw ValidationError("optimizer.eps must be positive");
    }
};

struct LrSchedule {
    std::string kind = "step";  // constant | step
    double gamma = 0.1;
    int every = 0;  // 0 = one decay at 75% of the epoch budget

    void validate() const {
        if (kind != "constant" && kind != "step")
            throw ValidationError(format("lr_schedule.kind '%s' is not one of constant|step", kind.c_str()));
        if (!(gamma > 0) || gamma > 1) throw ValidationError("lr_schedule.gamma must be in (0,1]");
        if (every < 0) throw ValidationError("lr_schedule.every must be >= 0");
    }
};

/// Everything one training run needs; serialized as the run's config file.
struct RunConfig {
    std::uint64_t seed = 1;
    int epochs_teacher = 25;
    int epochs_student = 15;
    int batch_size = 8;
    double learning_rate = 0.01;
    LrSchedule lr_schedule;
    OptimizerConfig optimizer;
    std::vector<double> lane_loss_weights;  // per class incl. background; empty = uniform
    double virtual_lane_weight = 1.0;       // lane-loss weight on the student's virtual pass
    double distill_weight = 1.0;
    DistillConfig distill;
    AdvConfig adv;
    RepaintConfig repaint;
    BackboneSpec backbone;
    int eval_interval = 5;
    double exist_threshold = 0.3;
    double eval_width = 8.0;  // rasterization width for F1 during/after training
    double iou_threshold = 0.5;
    double mask_width = 6.0;  // ground-truth mask rasterization width

    void validate() const;
};

/// Per-batch loss ledger. `total` is always the sum of the student-facing
/// terms (lane + distillation + generator surrogates); the critic losses
/// d_net/d_data are tracked separately and are not part of the student's
/// objective.
struct RilLosses {
    double lane = 0.0;
    double distill_same = 0.0;
    double distill_cross = 0.0;
    double adv_net = 0.0;
    double adv_data = 0.0;
    double total = 0.0;
    double d_net = 0.0;
    double d_data = 0.0;
};

/// Total objective: plain sum of the three loss families.
inline double total_loss(double lane, double distill, double adv) {
    if (!std::isfinite(lane) || !std::isfinite(distill) || !std::isfinite(adv))
        throw ValidationError(format("non-finite loss term: lane=%g distill=%g adv=%g", lane, distill, adv));
    return lane + distill + adv;
}

/// Class-weighted softmax cross-entropy averaged over all pixels of the
/// batch. `masks[i]` labels sample i; labels must lie in [0, C-1]. When
/// `glogits` is given, scale * dLoss/dlogits is accumulated into it.
template <typename T>
double lane_loss(const Tensor<T>& logits, const std::vector<const LaneMask*>& masks,
                 const std::vector<double>& class_weights, Tensor<T>* glogits = nullptr, double scale = 1.0) {
    if (static_cast<int>(masks.size()) != logits.n)
        throw ValidationError(format("expected %d masks, got %zu", logits.n, masks.size()));
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != logits.c)
        throw ValidationError(
            format("lane_loss_weights has %zu entries, expected %d", class_weights.size(), logits.c));
    if (glogits && !glogits->same_shape(logits)) throw ValidationError("glogits shape mismatch");
    const long pixels = static_cast<long>(logits.n) * logits.h * logits.w;
    double loss = 0.0;
    std::vector<double> p(logits.c);
    for (int in = 0; in < logits.n; ++in) {
        const LaneMask& mask = *masks[in];
        if (mask.h != logits.h || mask.w != logits.w)
            throw ValidationError(format("mask %dx%d does not match logits %dx%d", mask.h, mask.w, logits.h,
                                         logits.w));
        for (int y = 0; y < logits.h; ++y)
            for (int x = 0; x < logits.w; ++x) {
                int label = mask.at(y, x);
                if (label >= logits.c)
                    throw ValidationError(format("label %d out of range [0,%d]", label, logits.c - 1));
                double mx = logits.at(in, 0, y, x);
                for (int c = 1; c < logits.c; ++c) mx = std::max(mx, static_cast<double>(logits.at(in, c, y, x)));
                double sum = 0.0;
                for (int c = 0; c < logits.c; ++c) {
                    p[c] = std::exp(static_cast<double>(logits.at(in, c, y, x)) - mx);
                    sum += p[c];
                }
                double w = class_weights.empty() ? 1.0 : class_weights[label];
                loss += w * -(std::log(p[label] / sum));
                if (glogits) {
                    double gs = scale * w / pixels;
                    for (int c = 0; c < logits.c; ++c)
                        glogits->at(in, c, y, x) +=
                            static_cast<T>(gs * (p[c] / sum - (c == label ? 1.0 : 0.0)));
                }
            }
    }
    return loss / pixels;
}

/// Momentum SGD and Adam behind one interface, keyed by parameter name so
/// state survives across steps regardless of visitation details.
template <typename T>
struct Optimizer {
    OptimizerConfig cfg;
    long t = 0;
    std::unordered_map<std::string, std::vector<T>> m1, m2;

    template <typename Net>
    void step(Net& net, double lr) {
        ++t;
        net.visit_params([&](const std::string& name, Tensor<T>& param, Tensor<T>* grad) {
            if (!grad) return;
            if (cfg.kind == "sgd") {
                auto& vel = m1[name];
                vel.resize(param.v.size(), T(0));
                const T mom = static_cast<T>(cfg.momentum);
                for (std::size_t i = 0; i < param.v.size(); ++i) {
                    vel[i] = mom * vel[i] + grad->v[i];
                    param.v[i] -= static_cast<T>(lr) * vel[i];
                }
            } else {
                auto& m = m1[name];
                auto& v = m2[name];
                m.resize(param.v.size(), T(0));
                v.resize(param.v.size(), T(0));
                const double b1 = cfg.beta1, b2 = cfg.beta2;
                const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
                const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
                for (std::size_t i = 0; i < param.v.size(); ++i) {
                    double g = grad->v[i];
                    m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g);
                    v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g * g);
                    double mhat = m[i] / corr1, vhat = v[i] / corr2;
                    param.v[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
                }
            }
        });
    }
};

/// Learning rate for a given epoch under the configured schedule.
double lr_at(const RunConfig& cfg, int epoch, int total_epochs);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    RilLosses losses;
    double f1 = -1.0;  // -1 when not evaluated this epoch
    double seconds = 0.0;
};

struct TrainResult {
    std::uint64_t checksum = 0;
    std::uint64_t teacher_checksum = 0;  // student runs only
    bool diverged = false;
    std::vector<EpochStats> epochs;
    double final_total = 0.0;
    double final_f1 = -1.0;
};

/// Supervised training of the teacher on the virtual dataset. Writes
/// `teacher.ckpt` and `teacher_metrics.jsonl` into out_dir.
TrainResult train_teacher(const std::vector<LaneScene>& virt, const RunConfig& cfg, const std::string& out_dir,
                          const std::vector<LaneScene>* eval_scenes);

/// The imitation phase: the frozen teacher guides the student over paired
/// (real, virtual) scenes with the combined objective. Writes `student.ckpt`
/// and `student_metrics.jsonl` into out_dir.
TrainResult train_student(const std::vector<LaneScene>& real, const std::vector<LaneScene>& virt,
                          const std::string& teacher_ckpt, const RunConfig& cfg, const std::string& out_dir,
                          const std::vector<LaneScene>* eval_scenes);

}  // namespace ril
