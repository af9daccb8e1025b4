#include "ril/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ril/common.hpp"

namespace ril {

namespace {

/// Square-matrix assignment minimizing total cost via the potential-based
/// Hungarian algorithm (O(n^3)). Returns row index assigned to each column.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_of_col(n, -1);
    for (int j = 1; j <= n; ++j) row_of_col[j - 1] = p[j] - 1;
    return row_of_col;
}

/// Nearest-neighbor image resize; adequate for feeding the fixed-size model.
Image resize_nearest(const Image& src, int h, int w) {
    if (src.h == h && src.w == w) return src;
    Image out(h, w);
    for (int y = 0; y < h; ++y) {
        int sy = std::min(src.h - 1, static_cast<int>(static_cast<double>(y) * src.h / h));
        for (int x = 0; x < w; ++x) {
            int sx = std::min(src.w - 1, static_cast<int>(static_cast<double>(x) * src.w / w));
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
        }
    }
    return out;
}

Tensor<float> image_to_tensor(const Image& img) {
    Tensor<float> t(1, 3, img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = img.at(y, x, c) / 255.0f;
    return t;
}

void finalize(CategoryReport& r) {
    CategoryReport f = f1_from_counts(r.tp, r.fp, r.fn);
    r.precision = f.precision;
    r.recall = f.recall;
    r.f1 = f.f1;
}

nlohmann::json report_to_json(const EvalReport& report, const std::string& mode) {
    nlohmann::json per_cat = nlohmann::json::object();
    for (const auto& [name, cat] : report.per_category)
        per_cat[name] = {{"tp", cat.tp},       {"fp", cat.fp},           {"fn", cat.fn},
                         {"precision", cat.precision}, {"recall", cat.recall}, {"f1", cat.f1}};
    nlohmann::json j = {
        {"mode", mode},
        {"tp", report.tp},
        {"fp", report.fp},
        {"fn", report.fn},
        {"precision", report.precision},
        {"recall", report.recall},
        {"f1", report.f1},
        {"per_category", per_cat},
    };
    if (mode == "tusimple") {
        j["accuracy"] = report.accuracy;
        j["fp_rate"] = report.fp_rate;
        j["fn_rate"] = report.fn_rate;
    }
    return j;
}

}  // namespace

double lane_iou(const Polyline& pred, const Polyline& gt, double width, int h, int w) {
    LaneMask a = rasterize_lane_mask({pred}, width, h, w);
    LaneMask b = rasterize_lane_mask({gt}, width, h, w);
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        bool pa = a.v[i] != 0, pb = b.v[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_lanes(const std::vector<Polyline>& preds, const std::vector<Polyline>& gts,
                        double iou_threshold, double width, int h, int w) {
    MatchResult res;
    const int np = static_cast<int>(preds.size()), ng = static_cast<int>(gts.size());
    res.assignment.assign(np, -1);
    if (np == 0 || ng == 0) {
        res.fp = np;
        res.fn = ng;
        return res;
    }
    std::vector<std::vector<double>> iou(np, std::vector<double>(ng, 0.0));
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j) iou[i][j] = lane_iou(preds[i], gts[j], width, h, w);
    // Pad to square; dummy pairings carry IoU 0. Negate to maximize.
    const int n = std::max(np, ng);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j) cost[i][j] = -iou[i][j];
    std::vector<int> row_of_col = hungarian_min(cost);
    for (int j = 0; j < n; ++j) {
        int i = row_of_col[j];
        if (i < np && j < ng && iou[i][j] > iou_threshold) {
            res.assignment[i] = j;
            ++res.tp;
        }
    }
    res.fp = np - res.tp;
    res.fn = ng - res.tp;
    return res;
}

CategoryReport f1_from_counts(long tp, long fp, long fn) {
    CategoryReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

TusimpleCounts tusimple_score_record(const std::vector<Polyline>& preds, const TusimpleRecord& gt,
                                     double px_threshold) {
    if (gt.h_samples.empty()) throw ValidationError(format("record %s has no h_samples", gt.raw_file.c_str()));
    TusimpleCounts counts;
    counts.preds = static_cast<long>(preds.size());
    counts.gts = static_cast<long>(gt.lanes.size());
    std::vector<char> pred_used(preds.size(), 0);
    for (const Polyline& lane : gt.lanes) {
        const long total = static_cast<long>(lane.size());
        counts.total += total;
        // Best unused prediction by matched-point count.
        long best_correct = -1;
        int best_pred = -1;
        for (int pi = 0; pi < static_cast<int>(preds.size()); ++pi) {
            if (pred_used[pi]) continue;
            long correct = 0;
            for (const PointF& pt : lane) {
                auto px = interp_x_at_y(preds[pi], pt.y);
                if (px && std::abs(*px - pt.x) <= px_threshold) ++correct;
            }
            if (correct > best_correct) {
                best_correct = correct;
                best_pred = pi;
            }
        }
        if (best_pred < 0) continue;  // no predictions at all
        counts.correct += best_correct;
        double lane_acc = total > 0 ? static_cast<double>(best_correct) / total : 0.0;
        if (lane_acc > 0.85) {
            ++counts.tp;
            pred_used[best_pred] = 1;
        }
    }
    counts.fn = counts.gts - counts.tp;
    counts.fp = counts.preds - counts.tp;
    return counts;
}

TusimpleResult tusimple_accuracy(const std::vector<Polyline>& preds, const TusimpleRecord& gt,
                                 double px_threshold) {
    TusimpleCounts c = tusimple_score_record(preds, gt, px_threshold);
    TusimpleResult r;
    r.accuracy = c.total > 0 ? static_cast<double>(c.correct) / c.total : 0.0;
    r.fp_rate = c.preds > 0 ? static_cast<double>(c.fp) / c.preds : 0.0;
    r.fn_rate = c.gts > 0 ? static_cast<double>(c.fn) / c.gts : 0.0;
    return r;
}

std::vector<Polyline> predict_lanes(SegNet<float>& net, const LaneScene& scene, double exist_threshold) {
    Image scaled = resize_nearest(scene.image, net.spec.input_h, net.spec.input_w);
    Tensor<float> x = image_to_tensor(scaled);
    SegNet<float>::Cache cache;
    Tensor<float> logits = net.forward_logits(x, false, cache);
    Tensor<float> probs = softmax_channels(logits);
    std::vector<Polyline> lanes = decode_lanes(probs, 0, exist_threshold);
    // Rescale from model resolution to the scene's native resolution,
    // mapping pixel centers to pixel centers.
    double sx = static_cast<double>(scene.image.w) / net.spec.input_w;
    double sy = static_cast<double>(scene.image.h) / net.spec.input_h;
    for (Polyline& lane : lanes)
        for (PointF& p : lane) {
            p.x = (p.x + 0.5) * sx - 0.5;
            p.y = (p.y + 0.5) * sy - 0.5;
        }
    return lanes;
}

EvalReport evaluate_culane(SegNet<float>& net, const std::vector<LaneScene>& scenes, const EvalOptions& opts) {
    EvalReport report;
    for (const LaneScene& scene : scenes) {
        std::vector<Polyline> preds = predict_lanes(net, scene, opts.exist_threshold);
        MatchResult m =
            match_lanes(preds, scene.lanes, opts.iou_threshold, opts.width, scene.image.h, scene.image.w);
        report.tp += m.tp;
        report.fp += m.fp;
        report.fn += m.fn;
        CategoryReport& cat = report.per_category[to_string(scene.category)];
        cat.tp += m.tp;
        cat.fp += m.fp;
        cat.fn += m.fn;
    }
    CategoryReport total = f1_from_counts(report.tp, report.fp, report.fn);
    report.precision = total.precision;
    report.recall = total.recall;
    report.f1 = total.f1;
    for (auto& [name, cat] : report.per_category) finalize(cat);
    return report;
}

EvalReport evaluate_tusimple(SegNet<float>& net, const std::vector<LaneScene>& scenes,
                             const std::vector<TusimpleRecord>& records, const EvalOptions& opts) {
    if (scenes.size() != records.size())
        throw ValidationError(format("scene count %zu does not match record count %zu", scenes.size(),
                                     records.size()));
    EvalReport report;
    TusimpleCounts agg;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        std::vector<Polyline> preds = predict_lanes(net, scenes[i], opts.exist_threshold);
        TusimpleCounts c = tusimple_score_record(preds, records[i], opts.px_threshold);
        agg.correct += c.correct;
        agg.total += c.total;
        agg.tp += c.tp;
        agg.fp += c.fp;
        agg.fn += c.fn;
        agg.preds += c.preds;
        agg.gts += c.gts;
        CategoryReport& cat = report.per_category[to_string(scenes[i].category)];
        cat.tp += c.tp;
        cat.fp += c.fp;
        cat.fn += c.fn;
    }
    report.tp = agg.tp;
    report.fp = agg.fp;
    report.fn = agg.fn;
    CategoryReport total = f1_from_counts(report.tp, report.fp, report.fn);
    report.precision = total.precision;
    report.recall = total.recall;
    report.f1 = total.f1;
    for (auto& [name, cat] : report.per_category) finalize(cat);
    report.accuracy = agg.total > 0 ? static_cast<double>(agg.correct) / agg.total : 0.0;
    report.fp_rate = agg.preds > 0 ? static_cast<double>(agg.fp) / agg.preds : 0.0;
    report.fn_rate = agg.gts > 0 ? static_cast<double>(agg.fn) / agg.gts : 0.0;
    return report;
}

std::string report_table(const EvalReport& report, const std::string& mode) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %10s %10s %10s\n", "category", "tp", "fp", "fn",
                  "precision", "recall", "f1");
    out << line;
    for (const auto& [name, cat] : report.per_category) {
        if (name == "cross") {
            // Crossroad scenes carry no ground-truth lanes; only false
            // positives are meaningful there.
            std::snprintf(line, sizeof(line), "%-12s %8s %8ld %8s %10s %10s %10s\n", name.c_str(), "-", cat.fp,
                          "-", "-", "-", "-");
        } else {
            std::snprintf(line, sizeof(line), "%-12s %8ld %8ld %8ld %10.4f %10.4f %10.4f\n", name.c_str(), cat.tp,
                          cat.fp, cat.fn, cat.precision, cat.recall, cat.f1);
        }
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-12s %8ld %8ld %8ld %10.4f %10.4f %10.4f\n", "total", report.tp,
                  report.fp, report.fn, report.precision, report.recall, report.f1);
    out << line;
    if (mode == "tusimple") {
        std::snprintf(line, sizeof(line), "accuracy %.4f  fp_rate %.4f  fn_rate %.4f\n", report.accuracy,
                      report.fp_rate, report.fn_rate);
        out << line;
    }
    return out.str();
}

std::string report_json_text(const EvalReport& report, const std::string& mode) {
    return report_to_json(report, mode).dump(2) + "\n";
}

}  // namespace ril
