#include "ril/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ril/checkpoint.hpp"
#include "ril/eval.hpp"

namespace ril {

void RunConfig::validate() const {
    if (epochs_teacher < 1) throw ValidationError("epochs_teacher must be >= 1");
    if (epochs_student < 1) throw ValidationError("epochs_student must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
        throw ValidationError("learning_rate must be positive and finite");
    for (double w : lane_loss_weights)
        if (!(w >= 0) || !std::isfinite(w))
            throw ValidationError("lane_loss_weights entries must be finite and >= 0");
    if (!lane_loss_weights.empty() && static_cast<int>(lane_loss_weights.size()) != backbone.k_max + 1)
        throw ValidationError(format("lane_loss_weights needs %d entries (background + lanes), got %zu",
                                     backbone.k_max + 1, lane_loss_weights.size()));
    if (!(virtual_lane_weight >= 0) || !std::isfinite(virtual_lane_weight))
        throw ValidationError("virtual_lane_weight must be finite and >= 0");
    if (!(distill_weight >= 0) || !std::isfinite(distill_weight))
        throw ValidationError("distill_weight must be finite and >= 0");
    if (eval_interval < 1) throw ValidationError("eval_interval must be >= 1");
    if (!(exist_threshold > 0) || !(exist_threshold < 1))
        throw ValidationError("exist_threshold must be in (0,1)");
    if (!(iou_threshold > 0) || !(iou_threshold < 1)) throw ValidationError("iou_threshold must be in (0,1)");
    if (!(eval_width > 0)) throw ValidationError("eval_width must be positive");
    if (!(mask_width > 0)) throw ValidationError("mask_width must be positive");
    auto scoped = [](const char* scope, auto&& fn) {
        try {
            fn();
        } catch (const ValidationError& e) {
            throw ValidationError(format("%s.%s", scope, e.what()));
        }
    };
    scoped("lr_schedule", [&] { lr_schedule.validate(); });
    scoped("optimizer", [&] { optimizer.validate(); });
    scoped("backbone", [&] { backbone.validate(); });
    scoped("distill", [&] { distill.validate(backbone.stages); });
    scoped("adv", [&] { adv.validate(backbone.stages); });
    scoped("repaint", [&] { repaint.validate(); });
}

double lr_at(const RunConfig& cfg, int epoch, int total_epochs) {
    if (cfg.lr_schedule.kind == "constant") return cfg.learning_rate;
    int every = cfg.lr_schedule.every > 0 ? cfg.lr_schedule.every : std::max(1, (3 * total_epochs) / 4);
    return cfg.learning_rate * std::pow(cfg.lr_schedule.gamma, epoch / every);
}

namespace {

void check_scene_dims(const std::vector<LaneScene>& scenes, const BackboneSpec& spec, const char* which) {
    for (const LaneScene& s : scenes) {
        if (s.image.h != spec.input_h || s.image.w != spec.input_w)
            throw ValidationError(format("%s scene %s is %dx%d; training requires the configured %dx%d", which,
                                         s.id.c_str(), s.image.h, s.image.w, spec.input_h, spec.input_w));
        if (s.mask.h != s.image.h || s.mask.w != s.image.w)
            throw ValidationError(format("%s scene %s has a mask/image size mismatch", which, s.id.c_str()));
        for (int y = 0; y < s.mask.h; ++y)
            for (int x = 0; x < s.mask.w; ++x)
                if (s.mask.at(y, x) > spec.k_max)
                    throw ValidationError(format("%s scene %s labels lane %d > k_max %d", which, s.id.c_str(),
                                                 s.mask.at(y, x), spec.k_max));
    }
}

Tensor<float> batch_tensor(const std::vector<LaneScene>& scenes, const std::vector<int>& order, int lo, int hi) {
    const Image& first = scenes[order[lo]].image;
    Tensor<float> t(hi - lo, 3, first.h, first.w);
    for (int b = lo; b < hi; ++b) {
        const Image& img = scenes[order[b]].image;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                for (int c = 0; c < 3; ++c) t.at(b - lo, c, y, x) = img.at(y, x, c) / 255.0f;
    }
    return t;
}

std::vector<const LaneMask*> batch_masks(const std::vector<LaneScene>& scenes, const std::vector<int>& order,
                                         int lo, int hi) {
    std::vector<const LaneMask*> masks;
    masks.reserve(hi - lo);
    for (int b = lo; b < hi; ++b) masks.push_back(&scenes[order[b]].mask);
    return masks;
}

void write_metrics_line(std::ofstream& out, const EpochStats& es) {
    out << format(
        "{\"epoch\":%d,\"lr\":%.9g,\"lane\":%.9g,\"distill_same\":%.9g,\"distill_cross\":%.9g,"
        "\"adv_net\":%.9g,\"adv_data\":%.9g,\"total\":%.9g,\"d_net\":%.9g,\"d_data\":%.9g,\"seconds\":%.3f",
        es.epoch, es.lr, es.losses.lane, es.losses.distill_same, es.losses.distill_cross, es.losses.adv_net,
        es.losses.adv_data, es.losses.total, es.losses.d_net, es.losses.d_data, es.seconds);
    if (es.f1 >= 0) out << format(",\"f1\":%.6f", es.f1);
    out << "}\n";
    out.flush();
}

}  // namespace

TrainResult train_teacher(const std::vector<LaneScene>& virt, const RunConfig& cfg, const std::string& out_dir,
                          const std::vector<LaneScene>* eval_scenes) {
    cfg.validate();
    if (virt.empty()) throw ValidationError("virtual training set is empty");
    check_scene_dims(virt, cfg.backbone, "virtual");
    SegNet<float> net;
    net.init(cfg.backbone, mix_seed(cfg.seed, 0x746561));
    Optimizer<float> opt;
    opt.cfg = cfg.optimizer;
    std::ofstream metrics(out_dir + "/teacher_metrics.jsonl", std::ios::trunc);
    if (!metrics) throw ValidationError(format("cannot write metrics in %s", out_dir.c_str()));
    const std::string ckpt_path = out_dir + "/teacher.ckpt";
    EvalOptions eval_opts;
    eval_opts.iou_threshold = cfg.iou_threshold;
    eval_opts.width = cfg.eval_width;
    eval_opts.exist_threshold = cfg.exist_threshold;

    TrainResult result;
    const int n = static_cast<int>(virt.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs_teacher; ++epoch) {
        Timer timer;
        std::mt19937_64 rng(mix_seed(cfg.seed, 0xe000 + static_cast<std::uint64_t>(epoch)));
        deterministic_shuffle(order, rng);
        double lr = lr_at(cfg, epoch, cfg.epochs_teacher);
        double loss_sum = 0.0;
        int batches = 0;
        for (int lo = 0; lo < n; lo += cfg.batch_size) {
            int hi = std::min(n, lo + cfg.batch_size);
            Tensor<float> x = batch_tensor(virt, order, lo, hi);
            std::vector<const LaneMask*> masks = batch_masks(virt, order, lo, hi);
            SegNet<float>::Cache cache;
            Tensor<float> logits =
                net.forward_logits(x, true, cache, NetRole::teacher, DataKind::virtual_data);
            Tensor<float> glogits = Tensor<float>::like(logits);
            double loss = lane_loss(logits, masks, cfg.lane_loss_weights, &glogits, 1.0);
            if (!std::isfinite(loss)) {
                save_segnet(ckpt_path, net);
                throw std::runtime_error(format(
                    "teacher training diverged at epoch %d batch %d (loss=%g); last finite state saved to %s",
                    epoch, batches, loss, ckpt_path.c_str()));
            }
            net.zero_grad();
            net.backward(cache, &glogits, nullptr);
            opt.step(net, lr);
            loss_sum += loss;
            ++batches;
        }
        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        es.losses.lane = loss_sum / batches;
        es.losses.total = es.losses.lane;
        if (eval_scenes && !eval_scenes->empty() &&
            (epoch % cfg.eval_interval == cfg.eval_interval - 1 || epoch == cfg.epochs_teacher - 1))
            es.f1 = evaluate_culane(net, *eval_scenes, eval_opts).f1;
        es.seconds = timer.seconds();
        write_metrics_line(metrics, es);
        result.epochs.push_back(es);
    }
    save_segnet(ckpt_path, net);
    result.checksum = net.state_checksum();
    result.final_total = result.epochs.back().losses.total;
    result.final_f1 = result.epochs.back().f1;
    return result;
}

TrainResult train_student(const std::vector<LaneScene>& real, const std::vector<LaneScene>& virt,
                          const std::string& teacher_ckpt, const RunConfig& cfg, const std::string& out_dir,
                          const std::vector<LaneScene>* eval_scenes) {
    cfg.validate();
    if (real.empty()) throw ValidationError("real training set is empty");
    if (real.size() != virt.size())
        throw ValidationError(
            format("real/virtual pair count mismatch: %zu vs %zu", real.size(), virt.size()));
    for (std::size_t i = 0; i < real.size(); ++i)
        if (virt[i].id != real[i].id && virt[i].id != real[i].id + "@v")
            throw ValidationError(format("pair %zu: virtual id '%s' does not pair with real id '%s'", i,
                                         virt[i].id.c_str(), real[i].id.c_str()));
    check_scene_dims(real, cfg.backbone, "real");
    check_scene_dims(virt, cfg.backbone, "virtual");

    SegNet<float> teacher = load_segnet(teacher_ckpt);
    if (!(teacher.spec == cfg.backbone)) {
        auto diff = [&](const char* name, int a, int b) {
            if (a != b)
                throw ValidationError(format("teacher checkpoint %s: backbone.%s is %d, config says %d",
                                             teacher_ckpt.c_str(), name, a, b));
        };
        diff("stages", teacher.spec.stages, cfg.backbone.stages);
        diff("base_channels", teacher.spec.base_channels, cfg.backbone.base_channels);
        diff("input_h", teacher.spec.input_h, cfg.backbone.input_h);
        diff("input_w", teacher.spec.input_w, cfg.backbone.input_w);
        diff("k_max", teacher.spec.k_max, cfg.backbone.k_max);
    }
    const std::uint64_t teacher_sum = teacher.state_checksum();

    SegNet<float> student;
    student.init(cfg.backbone, mix_seed(cfg.seed, 0x737475));
    Optimizer<float> opt;
    opt.cfg = cfg.optimizer;

    const int stages = cfg.backbone.stages;
    const int adv_stage = cfg.adv.resolved_stage(stages) - 1;
    AdversarialModule<float> adv;
    if (cfg.adv.mode != AdvMode::off && cfg.adv.resolved_stage(stages) < 1)
        throw ValidationError("adv.observed_stage must name a real stage");
    adv.init(cfg.adv, cfg.backbone.stage_channels(adv_stage + 1), mix_seed(cfg.seed, 0x616476));

    const bool use_distill = cfg.distill.mode != DistillMode::off && cfg.distill_weight > 0;
    const bool use_adv = cfg.adv.mode != AdvMode::off;
    const bool need_teacher = use_distill || use_adv;
    const bool need_sv_logits = cfg.virtual_lane_weight > 0;
    const bool need_sv = use_distill || cfg.adv.mode == AdvMode::coupled || need_sv_logits;

    std::ofstream metrics(out_dir + "/student_metrics.jsonl", std::ios::trunc);
    if (!metrics) throw ValidationError(format("cannot write metrics in %s", out_dir.c_str()));
    const std::string ckpt_path = out_dir + "/student.ckpt";
    EvalOptions eval_opts;
    eval_opts.iou_threshold = cfg.iou_threshold;
    eval_opts.width = cfg.eval_width;
    eval_opts.exist_threshold = cfg.exist_threshold;

    TrainResult result;
    result.teacher_checksum = teacher_sum;
    const int n = static_cast<int>(real.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs_student; ++epoch) {
        Timer timer;
        std::mt19937_64 rng(mix_seed(cfg.seed, 0xf000 + static_cast<std::uint64_t>(epoch)));
        deterministic_shuffle(order, rng);
        double lr = lr_at(cfg, epoch, cfg.epochs_student);
        RilLosses sum;
        int batches = 0;
        for (int lo = 0; lo < n; lo += cfg.batch_size) {
            int hi = std::min(n, lo + cfg.batch_size);
            Tensor<float> xr = batch_tensor(real, order, lo, hi);
            Tensor<float> xv = batch_tensor(virt, order, lo, hi);
            std::vector<const LaneMask*> masks_r = batch_masks(real, order, lo, hi);
            std::vector<const LaneMask*> masks_v = batch_masks(virt, order, lo, hi);

            FeaturePyramid<float> pyr_tv;
            if (need_teacher) {
                SegNet<float>::Cache tcache;
                pyr_tv = teacher.backbone_forward(xv, false, NetRole::teacher, DataKind::virtual_data, tcache);
            }
            SegNet<float>::Cache cv, cr;
            FeaturePyramid<float> pyr_sv;
            Tensor<float> logits_v, glog_v;
            if (need_sv) {
                pyr_sv = student.backbone_forward(xv, true, NetRole::student, DataKind::virtual_data, cv);
                if (need_sv_logits) {
                    logits_v = student.decoder_forward(cv, true);
                    glog_v = Tensor<float>::like(logits_v);
                }
            }
            FeaturePyramid<float> pyr_sr =
                student.backbone_forward(xr, true, NetRole::student, DataKind::real_data, cr);
            Tensor<float> logits_r = student.decoder_forward(cr, true);
            Tensor<float> glog_r = Tensor<float>::like(logits_r);

            RilLosses L;
            double lane_r = lane_loss(logits_r, masks_r, cfg.lane_loss_weights, &glog_r, 1.0);
            double lane_v = 0.0;
            if (need_sv_logits)
                lane_v = lane_loss(logits_v, masks_v, cfg.lane_loss_weights, &glog_v, cfg.virtual_lane_weight);
            L.lane = lane_r + cfg.virtual_lane_weight * lane_v;

            std::vector<Tensor<float>> g_sv(stages), g_sr(stages);
            if (use_distill) {
                DistillResult dr = loss_distill(pyr_tv, pyr_sv, pyr_sr, cfg.distill, &g_sv, &g_sr,
                                                cfg.distill_weight);
                L.distill_same = cfg.distill_weight * dr.same;
                L.distill_cross = cfg.distill_weight * dr.cross;
            }
            if (use_adv) {
                Tensor<float>* gsv_slot = nullptr;
                const Tensor<float>* sv_feat = nullptr;
                if (cfg.adv.mode == AdvMode::coupled) {
                    gsv_slot = &detail::grad_slot(g_sv, adv_stage, pyr_sv.stages[adv_stage]);
                    sv_feat = &pyr_sv.stages[adv_stage];
                }
                Tensor<float>* gsr_slot = &detail::grad_slot(g_sr, adv_stage, pyr_sr.stages[adv_stage]);
                AdvStepResult ar = adv.step(&pyr_tv.stages[adv_stage], sv_feat, &pyr_sr.stages[adv_stage],
                                            gsv_slot, gsr_slot);
                L.d_net = ar.d_net;
                L.d_data = ar.d_data;
                L.adv_net = ar.g_net;
                L.adv_data = ar.g_data;
            }
            double combined = L.lane + L.distill_same + L.distill_cross + L.adv_net + L.adv_data;
            if (!std::isfinite(combined)) {
                save_segnet(ckpt_path, student);
                throw std::runtime_error(format(
                    "student training diverged at epoch %d batch %d (total=%g); last finite state saved to %s",
                    epoch, batches, combined, ckpt_path.c_str()));
            }
            L.total = total_loss(L.lane, L.distill_same + L.distill_cross, L.adv_net + L.adv_data);

            student.zero_grad();
            if (need_sv) student.backward(cv, need_sv_logits ? &glog_v : nullptr, &g_sv);
            student.backward(cr, &glog_r, &g_sr);
            opt.step(student, lr);

            sum.lane += L.lane;
            sum.distill_same += L.distill_same;
            sum.distill_cross += L.distill_cross;
            sum.adv_net += L.adv_net;
            sum.adv_data += L.adv_data;
            sum.d_net += L.d_net;
            sum.d_data += L.d_data;
            sum.total += L.total;
            ++batches;
        }
        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        es.losses.lane = sum.lane / batches;
        es.losses.distill_same = sum.distill_same / batches;
        es.losses.distill_cross = sum.distill_cross / batches;
        es.losses.adv_net = sum.adv_net / batches;
        es.losses.adv_data = sum.adv_data / batches;
        es.losses.d_net = sum.d_net / batches;
        es.losses.d_data = sum.d_data / batches;
        es.losses.total = sum.total / batches;
        if (eval_scenes && !eval_scenes->empty() &&
            (epoch % cfg.eval_interval == cfg.eval_interval - 1 || epoch == cfg.epochs_student - 1))
            es.f1 = evaluate_culane(student, *eval_scenes, eval_opts).f1;
        es.seconds = timer.seconds();
        write_metrics_line(metrics, es);
        result.epochs.push_back(es);
    }
    if (teacher.state_checksum() != teacher_sum)
        throw std::logic_error("teacher parameters changed during the imitation phase");
    save_segnet(ckpt_path, student);
    result.checksum = student.state_checksum();
    result.final_total = result.epochs.back().losses.total;
    result.final_f1 = result.epochs.back().f1;
    return result;
}

}  // namespace ril
