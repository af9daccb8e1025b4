#pragma once

#include <map>
#include <string>
#include <vector>

#include "ril/dataset.hpp"
#include "ril/geometry.hpp"
#include "ril/model.hpp"

namespace ril {

struct CategoryReport {
    long tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
    long tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::map<std::string, CategoryReport> per_category;
    // TuSimple-mode extras.
    double accuracy = 0.0, fp_rate = 0.0, fn_rate = 0.0;
};

/// Detection-style lane overlap: both polylines are rasterized as wide lines
/// and compared pixelwise. 0 when the union is empty.
double lane_iou(const Polyline& pred, const Polyline& gt, double width, int h, int w);

struct MatchResult {
    int tp = 0, fp = 0, fn = 0;
    std::vector<int> assignment;  // assignment[pred index] = gt index or -1
};

/// One-to-one assignment maximizing total IoU (optimal bipartite matching);
/// pairs with IoU strictly above the threshold count as true positives.
MatchResult match_lanes(const std::vector<Polyline>& preds, const std::vector<Polyline>& gts,
                        double iou_threshold, double width, int h, int w);

/// Precision/recall/F1 from counts, with 0 conventions for empty denominators.
CategoryReport f1_from_counts(long tp, long fp, long fn);

/// Point- and lane-level accounting for one TuSimple-style record.
struct TusimpleCounts {
    long correct = 0, total = 0;  // point level
    long tp = 0, fp = 0, fn = 0;  // lane level
    long preds = 0, gts = 0;
};

TusimpleCounts tusimple_score_record(const std::vector<Polyline>& preds, const TusimpleRecord& gt,
                                     double px_threshold = 20.0);

struct TusimpleResult {
    double accuracy = 0.0, fp_rate = 0.0, fn_rate = 0.0;
};

TusimpleResult tusimple_accuracy(const std::vector<Polyline>& preds, const TusimpleRecord& gt,
                                 double px_threshold = 20.0);

struct EvalOptions {
    double iou_threshold = 0.5;
    double width = 30.0;
    double exist_threshold = 0.3;
    double px_threshold = 20.0;
};

/// Runs the model over a split and scores detections against the ground
/// truth polylines. Predictions decoded at model resolution are rescaled to
/// each scene's native resolution before rasterization.
EvalReport evaluate_culane(SegNet<float>& net, const std::vector<LaneScene>& scenes, const EvalOptions& opts);

/// TuSimple-mode evaluation; records[i] supplies h_samples and ground truth
/// for scenes[i].
EvalReport evaluate_tusimple(SegNet<float>& net, const std::vector<LaneScene>& scenes,
                             const std::vector<TusimpleRecord>& records, const EvalOptions& opts);

/// Decodes lane polylines for one scene at native resolution.
std::vector<Polyline> predict_lanes(SegNet<float>& net, const LaneScene& scene, double exist_threshold);

std::string report_table(const EvalReport& report, const std::string& mode);
std::string report_json_text(const EvalReport& report, const std::string& mode);

}  // namespace ril
