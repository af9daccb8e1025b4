#include <array>
#include <cmath>
#include <random>

#include "ril/common.hpp"
#include "ril/dataset.hpp"

namespace ril {

namespace {

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double u01() { return (gen() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(gen() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    bool bernoulli(double p) { return u01() < p; }
};

struct Canvas {
    int h, w;
    std::vector<double> v;  // rgb, double precision until the final quantize
    Canvas(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_ * 3, 0.0) {}
    double& at(int y, int x, int c) { return v[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

struct LaneStyle {
    bool dashed;
    double dash_period;
    double dash_phase;
    double visibility;
    double paint_width;
    std::array<double, 3> color;
};

void paint_background(Canvas& img, Rng& rng, SceneCategory cat, double horizon) {
    double road = rng.uniform(78, 105);
    double sky = road + rng.uniform(40, 70);
    if (cat == SceneCategory::night) {
        road = rng.uniform(30, 48);
        sky = rng.uniform(8, 22);
    }
    std::array<double, 3> tint = {rng.uniform(0.96, 1.04), rng.uniform(0.96, 1.04), rng.uniform(0.96, 1.04)};
    for (int y = 0; y < img.h; ++y) {
        double base;
        if (y < horizon) {
            base = sky;
        } else {
            double t = (y - horizon) / std::max(1.0, img.h - 1 - horizon);
            base = road * (0.92 + 0.14 * t);  // road brightens slightly toward the camera
        }
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = base * tint[c];
    }
}

void paint_marks(Canvas& img, const std::vector<Polyline>& lanes, const std::vector<LaneStyle>& styles) {
    for (std::size_t k = 0; k < lanes.size(); ++k) {
        const Polyline& lane = lanes[k];
        const LaneStyle& st = styles[k];
        double arc = st.dash_phase;
        for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
            double ax = lane[i].x, ay = lane[i].y;
            double dx = lane[i + 1].x - ax, dy = lane[i + 1].y - ay;
            double len = std::hypot(dx, dy);
            int steps = std::max(1, static_cast<int>(len / 0.35));
            for (int s = 0; s <= steps; ++s) {
                double t = static_cast<double>(s) / steps;
                double px = ax + t * dx, py = ay + t * dy;
                double pos = arc + t * len;
                if (st.dashed && std::fmod(pos, st.dash_period) > 0.45 * st.dash_period) continue;
                double r = st.paint_width / 2.0;
                int y0 = std::max(0, static_cast<int>(std::floor(py - r)));
                int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(py + r)));
                int x0 = std::max(0, static_cast<int>(std::floor(px - r)));
                int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(px + r)));
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                        if (d2 > r * r) continue;
                        for (int c = 0; c < 3; ++c) {
                            double& p = img.at(y, x, c);
                            p += st.visibility * (st.color[c] - p);
                        }
                    }
            }
            arc += len;
        }
    }
}

void paint_shadow_blob(Canvas& img, Rng& rng, double strength, double horizon) {
    double cx = rng.uniform(0, img.w - 1);
    double cy = rng.uniform(horizon, img.h - 1);
    double rx = rng.uniform(0.12, 0.4) * img.w;
    double ry = rng.uniform(0.08, 0.3) * img.h;
    double ang = rng.uniform(0, 3.14159);
    double ca = std::cos(ang), sa = std::sin(ang);
    int y0 = std::max(0, static_cast<int>(cy - rx - ry)), y1 = std::min(img.h - 1, static_cast<int>(cy + rx + ry));
    int x0 = std::max(0, static_cast<int>(cx - rx - ry)), x1 = std::min(img.w - 1, static_cast<int>(cx + rx + ry));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double ux = (x - cx) * ca + (y - cy) * sa;
            double uy = -(x - cx) * sa + (y - cy) * ca;
            double d = (ux * ux) / (rx * rx) + (uy * uy) / (ry * ry);
            if (d >= 1.0) continue;
            double alpha = (1.0 - d) * strength;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) *= (1.0 - alpha);
        }
}

void paint_occluder(Canvas& img, Rng& rng, double cx, double cy) {
    double rw = rng.uniform(0.08, 0.22) * img.w;
    double rh = rng.uniform(0.08, 0.2) * img.h;
    double base = rng.uniform(55, 150);
    std::array<double, 3> col = {base * rng.uniform(0.85, 1.15), base * rng.uniform(0.85, 1.15),
                                 base * rng.uniform(0.85, 1.15)};
    int y0 = std::max(0, static_cast<int>(cy - rh / 2)), y1 = std::min(img.h - 1, static_cast<int>(cy + rh / 2));
    int x0 = std::max(0, static_cast<int>(cx - rw / 2)), x1 = std::min(img.w - 1, static_cast<int>(cx + rw / 2));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double shade = (y == y1 || y == y1 - 1) ? 0.55 : 1.0;  // contact shadow at the base
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c] * shade;
        }
}

void paint_dazzle(Canvas& img, Rng& rng, double horizon) {
    double cx = rng.uniform(0.25, 0.75) * img.w;
    double cy = rng.uniform(0.6, 1.2) * horizon;
    double rad = rng.uniform(0.3, 0.55) * img.w;
    double glare = rng.uniform(0.55, 0.9);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double d = std::hypot(x - cx, y - cy) / rad;
            if (d >= 1.0) continue;
            double a = glare * (1.0 - d) * (1.0 - d);
            for (int c = 0; c < 3; ++c) {
                double& p = img.at(y, x, c);
                p += a * (255.0 - p);
            }
        }
}

SceneCategory roll_category(Rng& rng) {
    double r = rng.u01();
    if (r < 0.28) return SceneCategory::normal;
    if (r < 0.52) return SceneCategory::crowded;
    if (r < 0.74) return SceneCategory::shadow;
    if (r < 0.9) return SceneCategory::night;
    return SceneCategory::dazzle;
}

}  // namespace

std::vector<LaneScene> generate_synthetic(const SynthParams& params, double mask_width) {
    params.validate();
    std::vector<LaneScene> scenes;
    scenes.reserve(params.count);
    const int H = params.height, W = params.width;
    const std::array<double, 4> slot_frac = {0.14, 0.38, 0.62, 0.86};

    for (int idx = 0; idx < params.count; ++idx) {
        Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(idx)));
        LaneScene scene;
        scene.id = format("img_%05d", idx);
        scene.category = roll_category(rng);

        double horizon = H * rng.uniform(0.2, 0.3);
        double vanish_x = W * rng.uniform(0.38, 0.62);
        double scene_curv = rng.uniform(-0.12, 0.12);

        int lane_count = rng.uniform_int(params.lane_count_min, params.lane_count_max);
        int slot_start = rng.uniform_int(0, kMaxLanes - lane_count);

        std::vector<LaneStyle> styles;
        for (int k = 0; k < lane_count; ++k) {
            double xb = W * (slot_frac[slot_start + k] + rng.uniform(-0.04, 0.04));
            double y_top = horizon + H * rng.uniform(0.0, 0.05);
            double curv = scene_curv + rng.uniform(-0.03, 0.03);
            Polyline lane;
            int y_start = static_cast<int>(std::ceil(y_top));
            for (int y = y_start; y <= H - 1; y += 2) {
                double t = (y - horizon) / (H - 1 - horizon);
                double x = vanish_x + (xb - vanish_x) * t + curv * W * t * (1.0 - t);
                if (x < 0.0 || x > W - 1.0) {
                    if (lane.empty()) continue;
                    break;
                }
                lane.push_back({x, static_cast<double>(y)});
            }
            if (lane.size() < 2) continue;
            scene.lanes.push_back(std::move(lane));

            LaneStyle st;
            st.dashed = rng.bernoulli(params.dash_probability);
            st.dash_period = rng.uniform(7, 12);
            st.dash_phase = rng.uniform(0, st.dash_period);
            double vis = params.mark_contrast * rng.uniform(0.5, 1.0);
            if (scene.category == SceneCategory::night) vis *= 0.8;
            st.visibility = vis;
            st.paint_width = rng.uniform(2.2, 3.2);
            st.color = rng.bernoulli(0.85) ? std::array<double, 3>{215, 215, 205}
                                           : std::array<double, 3>{205, 188, 120};
            styles.push_back(st);
        }

        Canvas canvas(H, W);
        paint_background(canvas, rng, scene.category, horizon);
        paint_marks(canvas, scene.lanes, styles);

        int shadow_blobs = 0;
        switch (scene.category) {
            case SceneCategory::shadow: shadow_blobs = rng.uniform_int(3, 5); break;
            case SceneCategory::night: shadow_blobs = rng.uniform_int(1, 2); break;
            default: shadow_blobs = rng.uniform_int(0, 2); break;
        }
        for (int s = 0; s < shadow_blobs; ++s)
            paint_shadow_blob(canvas, rng, params.shadow_strength * rng.uniform(0.4, 1.0), horizon);

        if (scene.category == SceneCategory::dazzle) paint_dazzle(canvas, rng, horizon);

        double occ_scale = scene.category == SceneCategory::crowded ? rng.uniform(3.0, 6.0) : rng.uniform(0.0, 3.0);
        int occluders = static_cast<int>(std::lround(params.occlusion_density * occ_scale));
        for (int o = 0; o < occluders; ++o) {
            // Half the occluders sit directly on a lane so marks really disappear.
            if (!scene.lanes.empty() && rng.bernoulli(0.5)) {
                const Polyline& lane = scene.lanes[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(scene.lanes.size()) - 1))];
                const PointF& p = lane[static_cast<size_t>(rng.uniform_int(static_cast<int>(lane.size()) / 3, static_cast<int>(lane.size()) - 1))];
                paint_occluder(canvas, rng, p.x, p.y);
            } else {
                paint_occluder(canvas, rng, rng.uniform(0, W - 1), rng.uniform(horizon, H - 1));
            }
        }

        scene.image = Image(H, W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c)
                    scene.image.at(y, x, c) = clamp_u8(canvas.at(y, x, c) + rng.uniform(-3.0, 3.0));

        scene.mask = rasterize_lane_mask(scene.lanes, mask_width, H, W);
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

}  // namespace ril
