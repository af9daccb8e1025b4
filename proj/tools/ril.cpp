// Command-line entry point wiring the full pipeline: synthetic data,
// repainting, the two training phases, evaluation, and the ablation table.
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ril/checkpoint.hpp"
#include "ril/config.hpp"
#include "ril/dataset.hpp"
#include "ril/eval.hpp"
#include "ril/repaint.hpp"
#include "ril/trainer.hpp"

#ifndef RIL_SOURCE_REV
#define RIL_SOURCE_REV "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ril;

namespace {

std::string now_iso() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string resolve_data_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("RIL_DATA_ROOT"); env && *env) return env;
    throw ValidationError("no data root: pass --data-root or set RIL_DATA_ROOT");
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError(format("cannot write %s", path.string().c_str()));
    out << text;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(format("cannot open %s", path.string().c_str()));
    json j;
    in >> j;
    return j;
}

// ---- run-directory management ------------------------------------------

bool run_complete(const fs::path& dir) {
    fs::path mpath = dir / "manifest.json";
    if (!fs::exists(mpath)) return false;
    try {
        json m = read_json_file(mpath);
        return m.value("status", "") == "complete";
    } catch (...) {
        return false;
    }
}

/// Prepares a content-addressed run directory. Returns true if the run is
/// already complete and should be skipped (only possible with resume).
bool prepare_run_dir(const fs::path& dir, bool resume) {
    if (fs::exists(dir)) {
        if (run_complete(dir)) {
            if (resume) return true;
            throw ValidationError(format(
                "run directory %s already holds a completed run; pass --resume to reuse it",
                dir.string().c_str()));
        }
        if (!resume)
            throw ValidationError(format(
                "run directory %s exists but is incomplete; pass --resume to restart it",
                dir.string().c_str()));
        // Incomplete run: restart deterministically from a clean slate.
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    return false;
}

void write_manifest(const fs::path& dir, const std::string& kind, const RunConfig& cfg,
                    const std::string& status, const json& artifacts, const std::string& started) {
    json m = {
        {"kind", kind},
        {"status", status},
        {"seed", cfg.seed},
        {"config", config_to_json(cfg)},
        {"config_checksum", format("%016llx", static_cast<unsigned long long>(config_checksum(cfg)))},
        {"revision", RIL_SOURCE_REV},
        {"started", started},
        {"artifacts", artifacts},
    };
    if (status == "complete") m["finished"] = now_iso();
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

EvalOptions eval_options_from(const RunConfig& cfg) {
    EvalOptions o;
    o.iou_threshold = cfg.iou_threshold;
    o.width = cfg.eval_width;
    o.exist_threshold = cfg.exist_threshold;
    return o;
}

std::vector<LaneScene> load_split_checked(const fs::path& root, const std::string& split, double mask_width) {
    std::vector<LaneScene> scenes = load_culane_split(root, split, mask_width);
    if (scenes.empty()) throw ValidationError(format("split '%s' under %s is empty", split.c_str(),
                                                     root.string().c_str()));
    return scenes;
}

// ---- shared runners (used by train-* and ablate) -------------------------

struct StudentRunOutcome {
    fs::path dir;
    double f1 = 0.0;
    std::string checksum;
    bool skipped = false;
};

/// Trains one student (or reuses a completed run when resume is set) and
/// evaluates it. The run directory key covers the config, the teacher
/// checkpoint, and the data selection so distinct runs never collide.
StudentRunOutcome run_student_once(const RunConfig& cfg, const fs::path& out_root,
                                   const std::string& teacher_ckpt, const std::vector<LaneScene>& real,
                                   const std::vector<LaneScene>& virt, const std::vector<LaneScene>& eval_scenes,
                                   const std::string& data_desc, bool resume) {
    std::uint64_t key = config_checksum(cfg);
    key = fnv1a64(teacher_ckpt.data(), teacher_ckpt.size(), key);
    key = fnv1a64(data_desc.data(), data_desc.size(), key);
    StudentRunOutcome out;
    out.dir = out_root / format("student-%016llx-s%llu", static_cast<unsigned long long>(key),
                                static_cast<unsigned long long>(cfg.seed));
    if (prepare_run_dir(out.dir, resume)) {
        json r = read_json_file(out.dir / "result.json");
        out.f1 = r.at("f1").get<double>();
        out.checksum = r.at("checksum").get<std::string>();
        out.skipped = true;
        return out;
    }
    std::string started = now_iso();
    json artifacts = {{"checkpoint", "student.ckpt"},
                      {"metrics", "student_metrics.jsonl"},
                      {"report", "report.json"},
                      {"result", "result.json"}};
    write_manifest(out.dir, "train-student", cfg, "running", artifacts, started);
    save_config((out.dir / "config.json").string(), cfg);

    TrainResult tr = train_student(real, virt, teacher_ckpt, cfg, out.dir.string(), &eval_scenes);
    SegNet<float> student = load_segnet((out.dir / "student.ckpt").string());
    EvalReport report = evaluate_culane(student, eval_scenes, eval_options_from(cfg));
    write_text(out.dir / "report.json", report_json_text(report, "culane"));

    out.f1 = report.f1;
    out.checksum = format("%016llx", static_cast<unsigned long long>(tr.checksum));
    json result = {
        {"checksum", out.checksum},
        {"teacher_checksum", format("%016llx", static_cast<unsigned long long>(tr.teacher_checksum))},
        {"final_total", tr.final_total},
        {"f1", report.f1},
        {"data", data_desc},
    };
    write_text(out.dir / "result.json", result.dump(2) + "\n");
    write_manifest(out.dir, "train-student", cfg, "complete", artifacts, started);
    return out;
}

RunConfig apply_preset(RunConfig cfg, const std::string& preset) {
    if (preset == "baseline") {
        cfg.distill.mode = DistillMode::off;
        cfg.adv.mode = AdvMode::off;
        cfg.virtual_lane_weight = 0.0;  // pure supervised run on real data
    } else if (preset == "same") {
        cfg.distill.mode = DistillMode::same_only;
        cfg.adv.mode = AdvMode::off;
    } else if (preset == "fusing") {
        cfg.distill.mode = DistillMode::scale_fusing;
        cfg.adv.mode = AdvMode::off;
    } else if (preset == "fusing+single") {
        cfg.distill.mode = DistillMode::scale_fusing;
        cfg.adv.mode = AdvMode::single;
    } else if (preset == "fusing+coupled") {
        cfg.distill.mode = DistillMode::scale_fusing;
        cfg.adv.mode = AdvMode::coupled;
    } else {
        throw ValidationError(format(
            "unknown preset '%s' (expected baseline|same|fusing|fusing+single|fusing+coupled)",
            preset.c_str()));
    }
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// ---- subcommands ----------------------------------------------------------

struct SynthOpts {
    std::string out, split = "train";
    SynthParams params;
    double mask_width = 6.0;
};

void run_synth(const SynthOpts& o) {
    o.params.validate();
    std::vector<LaneScene> scenes = generate_synthetic(o.params, o.mask_width);
    write_culane_split(o.out, o.split, scenes);
    json j = {{"root", o.out}, {"split", o.split}, {"count", scenes.size()}};
    std::cout << j.dump() << "\n";
}

struct RepaintOpts {
    std::string data_root, split = "train", out_split;
    RepaintConfig cfg;
    double mask_width = 6.0;
};

void run_repaint(const RepaintOpts& o) {
    o.cfg.validate();
    fs::path root = resolve_data_root(o.data_root);
    std::string out_split = o.out_split.empty() ? "virtual_" + o.split : o.out_split;
    std::vector<LaneScene> scenes = load_split_checked(root, o.split, o.mask_width);
    std::vector<PoissonStats> stats;
    Timer timer;
    std::vector<LaneScene> repainted = repaint_dataset(scenes, o.cfg, &stats);
    double total_s = timer.seconds();
    write_culane_split(root, out_split, repainted);
    double worst_residual = 0.0;
    std::size_t total_omega = 0;
    for (const PoissonStats& s : stats) {
        worst_residual = std::max(worst_residual, s.residual);
        total_omega += s.omega_size;
    }
    json j = {{"root", root.string()},  {"split", out_split},          {"count", repainted.size()},
              {"seconds", total_s},     {"worst_residual", worst_residual}, {"total_omega", total_omega}};
    std::cout << j.dump() << "\n";
}

struct TrainTeacherOpts {
    std::string config, data_root, out_dir;
    std::string train_split = "virtual_train", eval_split = "virtual_test";
    std::int64_t seed = -1;
    bool resume = false;
};

void run_train_teacher(const TrainTeacherOpts& o) {
    RunConfig cfg = load_config_or_default(o.config);
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    fs::path root = resolve_data_root(o.data_root);
    fs::path dir = fs::path(o.out_dir) /
                   format("teacher-%016llx-s%llu", static_cast<unsigned long long>(config_checksum(cfg)),
                          static_cast<unsigned long long>(cfg.seed));
    if (prepare_run_dir(dir, o.resume)) {
        json r = read_json_file(dir / "result.json");
        std::cout << r.dump() << "\n";
        return;
    }
    std::string started = now_iso();
    json artifacts = {{"checkpoint", "teacher.ckpt"}, {"metrics", "teacher_metrics.jsonl"},
                      {"result", "result.json"}};
    write_manifest(dir, "train-teacher", cfg, "running", artifacts, started);
    save_config((dir / "config.json").string(), cfg);

    std::vector<LaneScene> train = load_split_checked(root, o.train_split, cfg.mask_width);
    std::vector<LaneScene> eval_scenes;
    if (!o.eval_split.empty()) eval_scenes = load_culane_split(root, o.eval_split, cfg.mask_width);
    TrainResult tr = train_teacher(train, cfg, dir.string(), &eval_scenes);

    json result = {
        {"checksum", format("%016llx", static_cast<unsigned long long>(tr.checksum))},
        {"final_total", tr.final_total},
        {"f1", tr.final_f1},
        {"checkpoint", (dir / "teacher.ckpt").string()},
    };
    write_text(dir / "result.json", result.dump(2) + "\n");
    write_manifest(dir, "train-teacher", cfg, "complete", artifacts, started);
    std::cout << result.dump() << "\n";
}

struct TrainStudentOpts {
    std::string config, data_root, out_dir, teacher;
    std::string real_split = "train", virtual_split = "virtual_train", eval_split = "test";
    std::string ablation;
    int limit = 0;
    std::int64_t seed = -1;
    bool resume = false;
};

void run_train_student(const TrainStudentOpts& o) {
    RunConfig cfg = load_config_or_default(o.config);
    if (!o.ablation.empty()) cfg = apply_preset(cfg, o.ablation);
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    fs::path root = resolve_data_root(o.data_root);
    std::vector<LaneScene> real = load_split_checked(root, o.real_split, cfg.mask_width);
    std::vector<LaneScene> virt = load_split_checked(root, o.virtual_split, cfg.mask_width);
    if (o.limit > 0) {
        if (o.limit > static_cast<int>(real.size()))
            throw ValidationError(format("--limit %d exceeds split size %zu", o.limit, real.size()));
        real.resize(o.limit);
        virt.resize(std::min<std::size_t>(virt.size(), o.limit));
    }
    std::vector<LaneScene> eval_scenes = load_split_checked(root, o.eval_split, cfg.mask_width);
    std::string data_desc = format("%s|%s|%s|%s|limit=%d", root.string().c_str(), o.real_split.c_str(),
                                   o.virtual_split.c_str(), o.eval_split.c_str(), o.limit);
    StudentRunOutcome out =
        run_student_once(cfg, o.out_dir, o.teacher, real, virt, eval_scenes, data_desc, o.resume);
    json j = {{"run_dir", out.dir.string()}, {"f1", out.f1}, {"checksum", out.checksum},
              {"reused", out.skipped}};
    std::cout << j.dump() << "\n";
}

struct EvaluateOpts {
    std::string checkpoint, data_root, split = "test", mode = "culane", report, records;
    double iou_threshold = 0.5, width = 30.0, exist_threshold = 0.3, px_threshold = 20.0, mask_width = 6.0;
};

void run_evaluate(const EvaluateOpts& o) {
    if (o.mode != "culane" && o.mode != "tusimple")
        throw ValidationError(format("mode '%s' is not one of culane|tusimple", o.mode.c_str()));
    SegNet<float> net = load_segnet(o.checkpoint);
    fs::path root = resolve_data_root(o.data_root);
    EvalOptions opts;
    opts.iou_threshold = o.iou_threshold;
    opts.width = o.width;
    opts.exist_threshold = o.exist_threshold;
    opts.px_threshold = o.px_threshold;
    EvalReport report;
    if (o.mode == "culane") {
        std::vector<LaneScene> scenes = load_split_checked(root, o.split, o.mask_width);
        report = evaluate_culane(net, scenes, opts);
    } else {
        if (o.records.empty()) throw ValidationError("tusimple mode needs --records <jsonl>");
        std::ifstream in(o.records);
        if (!in) throw ValidationError(format("cannot open %s", o.records.c_str()));
        std::vector<TusimpleRecord> records;
        std::vector<LaneScene> scenes;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            TusimpleRecord rec = parse_tusimple_record(line);
            LaneScene scene;
            scene.image = read_ppm((root / rec.raw_file).string());
            scene.lanes = rec.lanes;
            scene.category = SceneCategory::normal;
            scene.id = rec.raw_file;
            records.push_back(std::move(rec));
            scenes.push_back(std::move(scene));
        }
        if (records.empty()) throw ValidationError(format("%s holds no records", o.records.c_str()));
        report = evaluate_tusimple(net, scenes, records, opts);
    }
    std::cout << report_table(report, o.mode);
    if (!o.report.empty()) write_text(o.report, report_json_text(report, o.mode));
}

struct AblateOpts {
    std::string config, data_root, out_dir, teacher;
    std::string presets = "baseline,same,fusing,fusing+single,fusing+coupled";
    std::string seeds;
    std::string real_split = "train", virtual_split = "virtual_train", eval_split = "test";
    int limit = 0;
    bool resume = true;
};

void run_ablate(const AblateOpts& o) {
    RunConfig base = load_config_or_default(o.config);
    std::vector<std::string> presets = split_csv(o.presets);
    if (presets.empty()) throw ValidationError("--presets is empty");
    for (const std::string& p : presets) apply_preset(base, p);  // validate names up front
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : o.seeds.empty() ? std::vector<std::string>{} : split_csv(o.seeds))
        seeds.push_back(std::stoull(s));
    if (seeds.empty()) seeds.push_back(base.seed);

    fs::path root = resolve_data_root(o.data_root);
    std::vector<LaneScene> real = load_split_checked(root, o.real_split, base.mask_width);
    std::vector<LaneScene> virt = load_split_checked(root, o.virtual_split, base.mask_width);
    if (o.limit > 0 && o.limit <= static_cast<int>(real.size())) {
        real.resize(o.limit);
        virt.resize(std::min<std::size_t>(virt.size(), o.limit));
    }
    std::vector<LaneScene> eval_scenes = load_split_checked(root, o.eval_split, base.mask_width);
    std::string data_desc = format("%s|%s|%s|%s|limit=%d", root.string().c_str(), o.real_split.c_str(),
                                   o.virtual_split.c_str(), o.eval_split.c_str(), o.limit);

    fs::create_directories(o.out_dir);
    json rows = json::array();
    std::optional<double> baseline_mean;
    auto flush_table = [&](const std::string& status) {
        json table = {{"status", status}, {"seeds", seeds}, {"rows", rows}};
        write_text(fs::path(o.out_dir) / "ablation.json", table.dump(2) + "\n");
    };
    try {
        for (const std::string& preset : presets) {
            json row = {{"preset", preset}};
            json per_seed = json::array();
            double sum = 0.0;
            for (std::uint64_t seed : seeds) {
                RunConfig cfg = apply_preset(base, preset);
                cfg.seed = seed;
                StudentRunOutcome out = run_student_once(cfg, o.out_dir, o.teacher, real, virt, eval_scenes,
                                                         data_desc, o.resume);
                per_seed.push_back({{"seed", seed}, {"f1", out.f1}, {"run_dir", out.dir.string()}});
                sum += out.f1;
            }
            double mean = sum / seeds.size();
            row["runs"] = per_seed;
            row["mean_f1"] = mean;
            if (preset == "baseline") baseline_mean = mean;
            if (baseline_mean) row["delta_vs_baseline"] = mean - *baseline_mean;
            rows.push_back(row);
            flush_table("running");
        }
    } catch (...) {
        flush_table("aborted");  // keep partial results for inspection
        throw;
    }
    flush_table("complete");

    // Plain-text summary table.
    std::cout << format("%-16s %10s %18s\n", "preset", "mean_f1", "delta_vs_baseline");
    for (const json& row : rows) {
        std::string delta = row.contains("delta_vs_baseline")
                                ? format("%18.4f", row["delta_vs_baseline"].get<double>())
                                : format("%18s", "-");
        std::cout << format("%-16s %10.4f %s\n", row["preset"].get<std::string>().c_str(),
                            row["mean_f1"].get<double>(), delta.c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repaint-and-imitate lane detection workbench"};
    app.require_subcommand(1);

    SynthOpts synth;
    CLI::App* cmd_synth = app.add_subcommand("synth", "generate a synthetic scene split");
    cmd_synth->add_option("--out", synth.out, "dataset root directory")->required();
    cmd_synth->add_option("--split", synth.split, "split name");
    cmd_synth->add_option("--count", synth.params.count, "number of scenes");
    cmd_synth->add_option("--seed", synth.params.seed, "generator seed");
    cmd_synth->add_option("--height", synth.params.height, "image height");
    cmd_synth->add_option("--width", synth.params.width, "image width");
    cmd_synth->add_option("--lanes-min", synth.params.lane_count_min, "min lanes per scene");
    cmd_synth->add_option("--lanes-max", synth.params.lane_count_max, "max lanes per scene");
    cmd_synth->add_option("--occlusion", synth.params.occlusion_density, "occluder density [0,1]");
    cmd_synth->add_option("--shadow", synth.params.shadow_strength, "shadow strength [0,1]");
    cmd_synth->add_option("--dash", synth.params.dash_probability, "dashed-lane probability");
    cmd_synth->add_option("--contrast", synth.params.mark_contrast, "lane mark contrast [0,1]");
    cmd_synth->add_option("--mask-width", synth.mask_width, "ground-truth mask width in px");

    RepaintOpts rep;
    CLI::App* cmd_repaint = app.add_subcommand("repaint", "build the virtual split by lane-region enhancement");
    cmd_repaint->add_option("--data-root", rep.data_root, "dataset root (or RIL_DATA_ROOT)");
    cmd_repaint->add_option("--split", rep.split, "source split");
    cmd_repaint->add_option("--out-split", rep.out_split, "target split name (default virtual_<split>)");
    cmd_repaint->add_option("--gain", rep.cfg.gain, "contrast gain inside the lane region");
    cmd_repaint->add_option("--lift", rep.cfg.lift, "brightness lift inside the lane region");
    cmd_repaint->add_option("--region-width", rep.cfg.region_width, "lane region width in px");
    cmd_repaint->add_option("--tol", rep.cfg.solver_tol, "solver relative-residual tolerance");
    cmd_repaint->add_option("--max-iter", rep.cfg.solver_max_iter, "solver iteration cap (0 = auto)");
    cmd_repaint->add_option("--mask-width", rep.mask_width, "ground-truth mask width in px");

    TrainTeacherOpts tt;
    CLI::App* cmd_tt = app.add_subcommand("train-teacher", "train the teacher on the virtual split");
    cmd_tt->add_option("--config", tt.config, "run config json");
    cmd_tt->add_option("--data-root", tt.data_root, "dataset root (or RIL_DATA_ROOT)");
    cmd_tt->add_option("--out-dir", tt.out_dir, "directory for run directories")->required();
    cmd_tt->add_option("--train-split", tt.train_split, "training split");
    cmd_tt->add_option("--eval-split", tt.eval_split, "evaluation split (empty to skip)");
    cmd_tt->add_option("--seed", tt.seed, "override config seed");
    cmd_tt->add_flag("--resume", tt.resume, "reuse a completed run / restart an incomplete one");

    TrainStudentOpts ts;
    CLI::App* cmd_ts = app.add_subcommand("train-student", "imitation phase with a frozen teacher");
    cmd_ts->add_option("--config", ts.config, "run config json");
    cmd_ts->add_option("--data-root", ts.data_root, "dataset root (or RIL_DATA_ROOT)");
    cmd_ts->add_option("--out-dir", ts.out_dir, "directory for run directories")->required();
    cmd_ts->add_option("--teacher", ts.teacher, "teacher checkpoint path")->required();
    cmd_ts->add_option("--real-split", ts.real_split, "real training split");
    cmd_ts->add_option("--virtual-split", ts.virtual_split, "paired virtual split");
    cmd_ts->add_option("--eval-split", ts.eval_split, "held-out real split");
    cmd_ts->add_option("--ablation", ts.ablation,
                       "preset: baseline|same|fusing|fusing+single|fusing+coupled");
    cmd_ts->add_option("--limit", ts.limit, "use only the first N scene pairs (0 = all)");
    cmd_ts->add_option("--seed", ts.seed, "override config seed");
    cmd_ts->add_flag("--resume", ts.resume, "reuse a completed run / restart an incomplete one");

    EvaluateOpts ev;
    CLI::App* cmd_ev = app.add_subcommand("evaluate", "score a checkpoint on a split");
    cmd_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
    cmd_ev->add_option("--data-root", ev.data_root, "dataset root (or RIL_DATA_ROOT)");
    cmd_ev->add_option("--split", ev.split, "split to score");
    cmd_ev->add_option("--mode", ev.mode, "culane or tusimple");
    cmd_ev->add_option("--iou-threshold", ev.iou_threshold, "IoU threshold for a true positive");
    cmd_ev->add_option("--width", ev.width, "rasterization width in px");
    cmd_ev->add_option("--exist-threshold", ev.exist_threshold, "decoding existence threshold");
    cmd_ev->add_option("--px-threshold", ev.px_threshold, "tusimple lateral point threshold in px");
    cmd_ev->add_option("--mask-width", ev.mask_width, "ground-truth mask width in px");
    cmd_ev->add_option("--report", ev.report, "write the JSON report here");
    cmd_ev->add_option("--records", ev.records, "tusimple ground-truth jsonl");

    AblateOpts ab;
    CLI::App* cmd_ab = app.add_subcommand("ablate", "run the preset ladder and tabulate F1");
    cmd_ab->add_option("--config", ab.config, "run config json");
    cmd_ab->add_option("--data-root", ab.data_root, "dataset root (or RIL_DATA_ROOT)");
    cmd_ab->add_option("--out-dir", ab.out_dir, "directory for run directories")->required();
    cmd_ab->add_option("--teacher", ab.teacher, "teacher checkpoint path")->required();
    cmd_ab->add_option("--presets", ab.presets, "comma-separated preset list");
    cmd_ab->add_option("--seeds", ab.seeds, "comma-separated seed list (default: config seed)");
    cmd_ab->add_option("--real-split", ab.real_split, "real training split");
    cmd_ab->add_option("--virtual-split", ab.virtual_split, "paired virtual split");
    cmd_ab->add_option("--eval-split", ab.eval_split, "held-out real split");
    cmd_ab->add_option("--limit", ab.limit, "use only the first N scene pairs (0 = all)");
    cmd_ab->add_flag("!--no-resume", ab.resume, "force fresh runs instead of reusing completed ones");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "validation"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }

    try {
        if (*cmd_synth) run_synth(synth);
        if (*cmd_repaint) run_repaint(rep);
        if (*cmd_tt) run_train_teacher(tt);
        if (*cmd_ts) run_train_student(ts);
        if (*cmd_ev) run_evaluate(ev);
        if (*cmd_ab) run_ablate(ab);
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << json{{"error", "validation"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
        return 2;
    }
}
