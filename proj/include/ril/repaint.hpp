#pragma once

#include <string>
#include <vector>

#include "ril/dataset.hpp"

namespace ril {

struct RepaintConfig {
    double gain = 1.5;
    double lift = 30.0;
    int region_width = 8;
    double solver_tol = 1e-6;
    int solver_max_iter = 0;  // 0 = 10 * |omega|

    void validate() const;
};

struct PoissonStats {
    std::string id;
    std::size_t omega_size = 0;
    double residual = 0.0;  // worst relative residual across channels
    int iterations = 0;     // worst channel
    double seconds = 0.0;
};

/// Binary lane-region selection: union of all lanes rasterized at region_width.
LaneMask extract_region(const LaneScene& scene, const RepaintConfig& cfg);

/// out = clamp(gain * in + lift, 0, 255) per channel, applied to every pixel.
Image enhance_linear(const Image& img, const RepaintConfig& cfg);

/// Solves the screened grid system for one color channel over omega:
///   |N_p| f_p - sum_{q in N_p ∩ omega} f_q
///     = sum_{q in N_p ∩ boundary} dest_q + sum_{q in N_p} (g_p - g_q)
/// with N_p the in-image 4-neighborhood. Returns f for omega pixels in
/// row-major omega order, before clamping.
std::vector<double> solve_poisson_channel(const Image& dest, const Image& source, const LaneMask& omega,
                                          int channel, const RepaintConfig& cfg,
                                          double* residual_out = nullptr, int* iters_out = nullptr);

/// Gradient-domain fuse of source into dest over omega; three independent
/// channel solves. Pixels outside omega are bit-identical to dest.
Image poisson_fuse(const Image& dest, const Image& source, const LaneMask& omega, const RepaintConfig& cfg,
                   PoissonStats* stats = nullptr);

/// Lane-region enhancement pipeline: extract omega, brighten inside it,
/// blend back. Labels are copied unchanged; the id gains a "@v" marker.
LaneScene repaint_scene(const LaneScene& scene, const RepaintConfig& cfg, PoissonStats* stats = nullptr);

std::vector<LaneScene> repaint_dataset(const std::vector<LaneScene>& scenes, const RepaintConfig& cfg,
                                       std::vector<PoissonStats>* stats = nullptr);

}  // namespace ril
