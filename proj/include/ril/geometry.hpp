#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace ril {

struct PointF {
    double x = 0.0;
    double y = 0.0;
};

/// Lane polyline in image coordinates, points ordered by increasing y.
using Polyline = std::vector<PointF>;

inline double point_segment_dist2(double px, double py, double ax, double ay, double bx, double by) {
    double vx = bx - ax, vy = by - ay;
    double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - ax) * vx + (py - ay) * vy) / len2;
        t = std::clamp(t, 0.0, 1.0);
    }
    double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return dx * dx + dy * dy;
}

inline double point_polyline_dist2(double px, double py, const Polyline& line) {
    double best = std::numeric_limits<double>::infinity();
    if (line.size() == 1) {
        double dx = px - line[0].x, dy = py - line[0].y;
        return dx * dx + dy * dy;
    }
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        best = std::min(best, point_segment_dist2(px, py, line[i].x, line[i].y, line[i + 1].x, line[i + 1].y));
    }
    return best;
}

/// Linear interpolation of lane x at a query row. Points must be sorted by y.
/// Returns nullopt when y falls outside the polyline's vertical span.
inline std::optional<double> interp_x_at_y(const Polyline& line, double y) {
    if (line.size() < 2) return std::nullopt;
    if (y < line.front().y || y > line.back().y) return std::nullopt;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        if (y >= line[i].y && y <= line[i + 1].y) {
            double dy = line[i + 1].y - line[i].y;
            if (dy <= 0.0) return line[i].x;
            double t = (y - line[i].y) / dy;
            return line[i].x + t * (line[i + 1].x - line[i].x);
        }
    }
    return std::nullopt;
}

}  // namespace ril
