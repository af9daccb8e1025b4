#include "ril/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "ril/common.hpp"

namespace ril {

namespace {

const char* kCategoryNames[] = {
    "normal", "crowded", "dazzle", "shadow", "no_line", "arrow", "curve", "cross", "night", "synthetic"
};

}  // namespace

const char* to_string(SceneCategory c) { return kCategoryNames[static_cast<int>(c)]; }

SceneCategory category_from_string(const std::string& s) {
    for (int i = 0; i < static_cast<int>(std::size(kCategoryNames)); ++i)
        if (s == kCategoryNames[i]) return static_cast<SceneCategory>(i);
    throw ValidationError("unknown scene category: " + s);
}

std::vector<Polyline> parse_culane_lines(const std::string& text) {
    std::vector<Polyline> lanes;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        std::istringstream tokens(line);
        std::vector<double> values;
        std::string tok;
        while (tokens >> tok) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size())
                throw ValidationError(format("lines file, line %d: non-numeric token '%s'", line_no, tok.c_str()));
            values.push_back(v);
        }
        if (values.empty()) continue;
        if (values.size() % 2 != 0)
            throw ValidationError(format("lines file, line %d: odd coordinate count %zu", line_no, values.size()));
        Polyline lane;
        lane.reserve(values.size() / 2);
        for (std::size_t i = 0; i < values.size(); i += 2) lane.push_back({values[i], values[i + 1]});
        lanes.push_back(std::move(lane));
    }
    return lanes;
}

std::string format_culane_lines(const std::vector<Polyline>& lanes) {
    std::ostringstream out;
    out.precision(12);
    for (const auto& lane : lanes) {
        bool first = true;
        for (const auto& p : lane) {
            if (!first) out << " ";
            out << p.x << " " << p.y;
            first = false;
        }
        out << "\n";
    }
    return out.str();
}

TusimpleRecord parse_tusimple_record(const std::string& json_line) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("tusimple record: invalid json: ") + e.what());
    }
    for (const char* key : {"lanes", "h_samples", "raw_file"})
        if (!doc.contains(key)) throw ValidationError(std::string("tusimple record: missing key ") + key);

    TusimpleRecord rec;
    rec.raw_file = doc["raw_file"].get<std::string>();
    rec.h_samples = doc["h_samples"].get<std::vector<int>>();
    int lane_no = 0;
    for (const auto& xs_json : doc["lanes"]) {
        ++lane_no;
        auto xs = xs_json.get<std::vector<double>>();
        if (xs.size() != rec.h_samples.size())
            throw ValidationError(format("tusimple record: lane %d has %zu x-values for %zu h_samples",
                                         lane_no, xs.size(), rec.h_samples.size()));
        Polyline lane;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i] == -2.0) continue;  // absent point
            lane.push_back({xs[i], static_cast<double>(rec.h_samples[i])});
        }
        if (lane.size() >= 2) rec.lanes.push_back(std::move(lane));
    }
    return rec;
}

LaneMask rasterize_lane_mask(const std::vector<Polyline>& lanes, double width, int h, int w) {
    if (width < 1.0 || h <= 0 || w <= 0) throw ValidationError("rasterize_lane_mask: width >= 1 and positive dims required");
    LaneMask mask(h, w);
    const double half = width / 2.0;
    const double half2 = half * half;
    // Lower lane index wins: paint in order, never overwrite a nonzero label.
    for (std::size_t k = 0; k < lanes.size(); ++k) {
        const Polyline& lane = lanes[k];
        if (lane.empty()) continue;
        auto label = static_cast<std::uint8_t>(k + 1);
        if (lane.size() == 1) {
            int y0 = std::max(0, static_cast<int>(std::floor(lane[0].y - half)));
            int y1 = std::min(h - 1, static_cast<int>(std::ceil(lane[0].y + half)));
            int x0 = std::max(0, static_cast<int>(std::floor(lane[0].x - half)));
            int x1 = std::min(w - 1, static_cast<int>(std::ceil(lane[0].x + half)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    double dx = x - lane[0].x, dy = y - lane[0].y;
                    if (dx * dx + dy * dy <= half2 && mask.at(y, x) == 0) mask.at(y, x) = label;
                }
            continue;
        }
        for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
            double ax = lane[i].x, ay = lane[i].y, bx = lane[i + 1].x, by = lane[i + 1].y;
            int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half)));
            int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + half)));
            int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half)));
            int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    if (mask.at(y, x) != 0) continue;
                    if (point_segment_dist2(x, y, ax, ay, bx, by) <= half2) mask.at(y, x) = label;
                }
        }
    }
    return mask;
}

void SynthParams::validate() const {
    if (count < 0) throw ValidationError("synth.count must be >= 0");
    if (height < 32 || width < 32) throw ValidationError("synth image dims must be >= 32");
    if (lane_count_min < 1 || lane_count_max > kMaxLanes || lane_count_min > lane_count_max)
        throw ValidationError(format("synth lane_count range [%d,%d] invalid (1..%d)",
                                     lane_count_min, lane_count_max, kMaxLanes));
    for (double f : {occlusion_density, shadow_strength, dash_probability, mark_contrast})
        if (f < 0.0 || f > 1.0) throw ValidationError("synth fractions must lie in [0,1]");
}

void write_culane_split(const std::filesystem::path& root, const std::string& split,
                        const std::vector<LaneScene>& scenes) {
    std::filesystem::create_directories(root / split);
    std::ofstream list(root / (split + ".txt"));
    if (!list) throw ValidationError("cannot write split list under " + root.string());
    for (const auto& scene : scenes) {
        std::string stem = scene.id;
        // Strip any virtual-sample marker; on disk the layout is plain CULane.
        if (auto pos = stem.find('@'); pos != std::string::npos) stem = stem.substr(0, pos);
        std::filesystem::path rel = std::filesystem::path(split) / (stem + ".ppm");
        write_ppm(root / rel, scene.image);
        std::ofstream lines(root / split / (stem + ".lines.txt"));
        lines << format_culane_lines(scene.lanes);
        std::ofstream cat(root / split / (stem + "_category.txt"));
        cat << to_string(scene.category) << "\n";
        list << rel.generic_string() << "\n";
    }
}

std::vector<LaneScene> load_culane_split(const std::filesystem::path& root, const std::string& split,
                                         double mask_width) {
    std::ifstream list(root / (split + ".txt"));
    if (!list) throw ValidationError("missing split list: " + (root / (split + ".txt")).string());
    std::vector<LaneScene> scenes;
    std::string rel;
    while (std::getline(list, rel)) {
        if (rel.empty()) continue;
        if (rel.front() == '/') rel.erase(0, 1);
        std::filesystem::path img_path = root / rel;
        LaneScene scene;
        scene.image = read_ppm(img_path);
        std::filesystem::path stem = img_path;
        stem.replace_extension();
        std::ifstream lines_file(stem.string() + ".lines.txt");
        if (!lines_file) throw ValidationError("missing lines file for " + rel);
        std::stringstream buf;
        buf << lines_file.rdbuf();
        scene.lanes = parse_culane_lines(buf.str());
        if (scene.lanes.size() > static_cast<std::size_t>(kMaxLanes)) {
            std::cerr << "warning: " << rel << " has " << scene.lanes.size()
                      << " lanes, keeping first " << kMaxLanes << "\n";
            scene.lanes.resize(kMaxLanes);
        }
        std::ifstream cat_file(stem.string() + "_category.txt");
        if (cat_file) {
            std::string tag;
            cat_file >> tag;
            if (!tag.empty()) scene.category = category_from_string(tag);
        }
        std::filesystem::path id = rel;
        id.replace_extension();
        scene.id = id.generic_string();
        // Drop the leading split directory from the id so ids are stable across roots.
        if (auto pos = scene.id.find('/'); pos != std::string::npos && scene.id.substr(0, pos) == split)
            scene.id = scene.id.substr(pos + 1);
        scene.mask = rasterize_lane_mask(scene.lanes, mask_width, scene.image.h, scene.image.w);
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

}  // namespace ril
