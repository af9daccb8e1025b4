#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ril/geometry.hpp"
#include "ril/image.hpp"

namespace ril {

/// Lane capacity per scene. Extra lanes in source data are dropped with a warning.
constexpr int kMaxLanes = 4;

enum class SceneCategory {
    normal, crowded, dazzle, shadow, no_line, arrow, curve, cross, night, synthetic
};

const char* to_string(SceneCategory c);
SceneCategory category_from_string(const std::string& s);

/// Integer label mask: 0 = background, k = lane index k (1-based).
struct LaneMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    LaneMask() = default;
    LaneMask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}
    std::uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

/// One sample: image, lane polylines, rasterized ground-truth mask, scene tag.
/// Immutable after construction by convention; safe to share across threads.
struct LaneScene {
    Image image;
    std::vector<Polyline> lanes;
    LaneMask mask;
    SceneCategory category = SceneCategory::normal;
    std::string id;
};

/// Parses the CULane ".lines.txt" convention: one lane per line,
/// whitespace-separated "x1 y1 x2 y2 ...".
std::vector<Polyline> parse_culane_lines(const std::string& text);

std::string format_culane_lines(const std::vector<Polyline>& lanes);

struct TusimpleRecord {
    std::string raw_file;
    std::vector<int> h_samples;
    std::vector<Polyline> lanes;
};

/// Parses one TuSimple JSON record: "lanes" x-lists paired with the shared
/// "h_samples" y-list; x = -2 marks an absent point. Lanes with fewer than
/// two valid points are dropped.
TusimpleRecord parse_tusimple_record(const std::string& json_line);

/// Labels pixel (r,c) with lane k iff the pixel center is within width/2 of
/// lane k's segments (Euclidean). Overlaps keep the lower lane index.
LaneMask rasterize_lane_mask(const std::vector<Polyline>& lanes, double width, int h, int w);

struct SynthParams {
    std::uint64_t seed = 1;
    int count = 16;
    int height = 48;
    int width = 96;
    int lane_count_min = 2;
    int lane_count_max = 4;
    double occlusion_density = 0.5;
    double shadow_strength = 0.6;
    double dash_probability = 0.4;
    double mark_contrast = 0.35;

    void validate() const;
};

/// Procedural road scenes with faint/occluded lane marks. Degradations touch
/// the image only; polylines and mask always describe the full lane geometry.
/// Pure function of params: same params give identical scenes.
std::vector<LaneScene> generate_synthetic(const SynthParams& params, double mask_width = 6.0);

// CULane on-disk layout: <root>/<split>.txt lists relative image paths; each
// image has a sibling <name>.lines.txt and optional <name>_category.txt.
void write_culane_split(const std::filesystem::path& root, const std::string& split,
                        const std::vector<LaneScene>& scenes);
std::vector<LaneScene> load_culane_split(const std::filesystem::path& root, const std::string& split,
                                         double mask_width = 6.0);

}  // namespace ril
