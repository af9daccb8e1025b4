#include "ril/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

namespace ril {

namespace {

using nlohmann::json;

void expect_keys(const json& j, const std::string& scope, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key()))
            throw ValidationError(format("unknown key: %s%s%s", scope.c_str(), scope.empty() ? "" : ".",
                                         it.key().c_str()));
}

template <typename T>
void read_field(const json& j, const std::string& scope, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(format("%s%s%s has the wrong type", scope.c_str(), scope.empty() ? "" : ".", key));
    }
}

void read_mode(const json& j, const std::string& scope, const char* key, DistillMode& out) {
    if (!j.contains(key)) return;
    std::string s;
    read_field(j, scope, key, s);
    try {
        out = distill_mode_from_string(s);
    } catch (const ValidationError& e) {
        throw ValidationError(format("%s.%s: %s", scope.c_str(), key, e.what()));
    }
}

void read_mode(const json& j, const std::string& scope, const char* key, AdvMode& out) {
    if (!j.contains(key)) return;
    std::string s;
    read_field(j, scope, key, s);
    try {
        out = adv_mode_from_string(s);
    } catch (const ValidationError& e) {
        throw ValidationError(format("%s.%s: %s", scope.c_str(), key, e.what()));
    }
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& cfg) {
    json cross = json::array();
    for (auto [a, b] : cfg.distill.cross_pairs) cross.push_back(json::array({a, b}));
    return json{
        {"seed", cfg.seed},
        {"epochs_teacher", cfg.epochs_teacher},
        {"epochs_student", cfg.epochs_student},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"lr_schedule", {{"kind", cfg.lr_schedule.kind}, {"gamma", cfg.lr_schedule.gamma}, {"every", cfg.lr_schedule.every}}},
        {"optimizer",
         {{"kind", cfg.optimizer.kind},
          {"momentum", cfg.optimizer.momentum},
          {"beta1", cfg.optimizer.beta1},
          {"beta2", cfg.optimizer.beta2},
          {"eps", cfg.optimizer.eps}}},
        {"lane_loss_weights", cfg.lane_loss_weights},
        {"virtual_lane_weight", cfg.virtual_lane_weight},
        {"distill_weight", cfg.distill_weight},
        {"distill",
         {{"mode", to_string(cfg.distill.mode)}, {"same_stages", cfg.distill.same_stages}, {"cross_pairs", cross}}},
        {"adv",
         {{"mode", to_string(cfg.adv.mode)},
          {"observed_stage", cfg.adv.observed_stage},
          {"d_learning_rate", cfg.adv.d_learning_rate},
          {"d_momentum", cfg.adv.d_momentum},
          {"g_weight", cfg.adv.g_weight},
          {"literal_student", cfg.adv.literal_student}}},
        {"repaint",
         {{"gain", cfg.repaint.gain},
          {"lift", cfg.repaint.lift},
          {"region_width", cfg.repaint.region_width},
          {"solver_tol", cfg.repaint.solver_tol},
          {"solver_max_iter", cfg.repaint.solver_max_iter}}},
        {"backbone",
         {{"stages", cfg.backbone.stages},
          {"base_channels", cfg.backbone.base_channels},
          {"input_h", cfg.backbone.input_h},
          {"input_w", cfg.backbone.input_w},
          {"k_max", cfg.backbone.k_max}}},
        {"eval_interval", cfg.eval_interval},
        {"exist_threshold", cfg.exist_threshold},
        {"eval_width", cfg.eval_width},
        {"iou_threshold", cfg.iou_threshold},
        {"mask_width", cfg.mask_width},
    };
}

RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config root must be a JSON object");
    expect_keys(j, "",
                {"seed", "epochs_teacher", "epochs_student", "batch_size", "learning_rate", "lr_schedule",
                 "optimizer", "lane_loss_weights", "virtual_lane_weight", "distill_weight", "distill", "adv",
                 "repaint", "backbone", "eval_interval", "exist_threshold", "eval_width", "iou_threshold",
                 "mask_width"});
    RunConfig cfg;
    read_field(j, "", "seed", cfg.seed);
    read_field(j, "", "epochs_teacher", cfg.epochs_teacher);
    read_field(j, "", "epochs_student", cfg.epochs_student);
    read_field(j, "", "batch_size", cfg.batch_size);
    read_field(j, "", "learning_rate", cfg.learning_rate);
    read_field(j, "", "lane_loss_weights", cfg.lane_loss_weights);
    read_field(j, "", "virtual_lane_weight", cfg.virtual_lane_weight);
    read_field(j, "", "distill_weight", cfg.distill_weight);
    read_field(j, "", "eval_interval", cfg.eval_interval);
    read_field(j, "", "exist_threshold", cfg.exist_threshold);
    read_field(j, "", "eval_width", cfg.eval_width);
    read_field(j, "", "iou_threshold", cfg.iou_threshold);
    read_field(j, "", "mask_width", cfg.mask_width);
    if (j.contains("lr_schedule")) {
        const json& s = j.at("lr_schedule");
        expect_keys(s, "lr_schedule", {"kind", "gamma", "every"});
        read_field(s, "lr_schedule", "kind", cfg.lr_schedule.kind);
        read_field(s, "lr_schedule", "gamma", cfg.lr_schedule.gamma);
        read_field(s, "lr_schedule", "every", cfg.lr_schedule.every);
    }
    if (j.contains("optimizer")) {
        const json& s = j.at("optimizer");
        expect_keys(s, "optimizer", {"kind", "momentum", "beta1", "beta2", "eps"});
        read_field(s, "optimizer", "kind", cfg.optimizer.kind);
        read_field(s, "optimizer", "momentum", cfg.optimizer.momentum);
        read_field(s, "optimizer", "beta1", cfg.optimizer.beta1);
        read_field(s, "optimizer", "beta2", cfg.optimizer.beta2);
        read_field(s, "optimizer", "eps", cfg.optimizer.eps);
    }
    if (j.contains("distill")) {
        const json& s = j.at("distill");
        expect_keys(s, "distill", {"mode", "same_stages", "cross_pairs"});
        read_mode(s, "distill", "mode", cfg.distill.mode);
        read_field(s, "distill", "same_stages", cfg.distill.same_stages);
        if (s.contains("cross_pairs")) {
            cfg.distill.cross_pairs.clear();
            for (const json& p : s.at("cross_pairs")) {
                if (!p.is_array() || p.size() != 2)
                    throw ValidationError("distill.cross_pairs entries must be [teacher_stage, student_stage]");
                cfg.distill.cross_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
            }
        }
    }
    if (j.contains("adv")) {
        const json& s = j.at("adv");
        expect_keys(s, "adv", {"mode", "observed_stage", "d_learning_rate", "d_momentum", "g_weight",
                               "literal_student"});
        read_mode(s, "adv", "mode", cfg.adv.mode);
        read_field(s, "adv", "observed_stage", cfg.adv.observed_stage);
        read_field(s, "adv", "d_learning_rate", cfg.adv.d_learning_rate);
        read_field(s, "adv", "d_momentum", cfg.adv.d_momentum);
        read_field(s, "adv", "g_weight", cfg.adv.g_weight);
        read_field(s, "adv", "literal_student", cfg.adv.literal_student);
    }
    if (j.contains("repaint")) {
        const json& s = j.at("repaint");
        expect_keys(s, "repaint", {"gain", "lift", "region_width", "solver_tol", "solver_max_iter"});
        read_field(s, "repaint", "gain", cfg.repaint.gain);
        read_field(s, "repaint", "lift", cfg.repaint.lift);
        read_field(s, "repaint", "region_width", cfg.repaint.region_width);
        read_field(s, "repaint", "solver_tol", cfg.repaint.solver_tol);
        read_field(s, "repaint", "solver_max_iter", cfg.repaint.solver_max_iter);
    }
    if (j.contains("backbone")) {
        const json& s = j.at("backbone");
        expect_keys(s, "backbone", {"stages", "base_channels", "input_h", "input_w", "k_max"});
        read_field(s, "backbone", "stages", cfg.backbone.stages);
        read_field(s, "backbone", "base_channels", cfg.backbone.base_channels);
        read_field(s, "backbone", "input_h", cfg.backbone.input_h);
        read_field(s, "backbone", "input_w", cfg.backbone.input_w);
        read_field(s, "backbone", "k_max", cfg.backbone.k_max);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(format("cannot open config %s", path.c_str()));
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(format("%s: %s", path.c_str(), e.what()));
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(format("cannot write config %s", path.c_str()));
    out << config_to_json(cfg).dump(2) << "\n";
}

std::uint64_t config_checksum(const RunConfig& cfg) {
    // nlohmann::json serializes object keys in sorted order, so dump() is a
    // canonical form.
    return fnv1a64(config_to_json(cfg).dump());
}

}  // namespace ril
