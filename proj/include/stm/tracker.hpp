#pragma once

#include <vector>

#include "stm/arm.hpp"
#include "stm/params.hpp"

namespace stm {

// literal: temporal state only moves when a candidate other than the argmax
// wins (the no-update branch leaves it untouched). always: refresh label,
// heatmap and peak from the current prediction every frame.
enum class RefreshPolicy { literal, always };

enum class Precision { f64, f32 };

RefreshPolicy refresh_from_string(const std::string& s);
std::string to_string(RefreshPolicy p);

struct TrackConfig {
    int k = 3;
    double window_influence = 0.35;
    double penalty_k = 0.04;
    RefreshPolicy refresh = RefreshPolicy::literal;
    bool arm = true;
    double arm_eps = 1e-8;
    // response modes below this value are not credible aberrance candidates
    double arm_floor = 0.25;
    // accept a non-argmax candidate only when its score is decisively better
    double arm_margin = 0.8;
    // blur the score inputs to steady the ranking on coarse grids
    bool arm_smooth = true;
    // rescue candidates must sit within this many cells of the anchor peak
    int arm_radius = 2;
    // f32 runs the spatial correlation kernel in single precision
    Precision precision = Precision::f64;
};

struct TrackerState {
    Tensor3 template_feat;
    Tensor2 label_last;  // Gaussian label of the anchor frame
    Tensor2 pred_last;   // heatmap of the anchor frame
    PeakLocation p_last;
    BoundingBox box;  // last emitted box, world units
    int frame_count = 0;
};

struct StepDebug {
    Tensor2 heat_raw;       // head output
    Tensor2 heat_selected;  // after candidate reweighting (if any)
    Tensor2 heat_windowed;
    std::vector<ArmCandidateScore> scores;
    double resp_origin_x = 0.0, resp_origin_y = 0.0;
};

struct StepResult {
    BoundingBox box;
    double confidence = 0.0;  // selected heatmap value at the emitted peak
    int k_hat = 1;
    TrackerState state;
};

TrackerState tracker_init(const FrameInput& frame, const BoundingBox& box,
                          const ModelParams& params, const TrackConfig& cfg);

StepResult tracker_step(const TrackerState& state, const FrameInput& frame,
                        const ModelParams& params, const TrackConfig& cfg,
                        StepDebug* debug = nullptr);

// Scale/aspect penalty against the last box, then additive cosine window.
Tensor2 apply_window_penalty(const Tensor2& heat, const Tensor3& size_map, double last_w_cells,
                             double last_h_cells, const TrackConfig& cfg);

// Search-window placement: integer crop center plus the world coordinate of
// response cell (0,0) with zero offset. Shared by tracking and training so
// labels and decoded boxes land on the same grid.
struct WindowGeom {
    int center_y = 0, center_x = 0;
    double origin_y = 0.0, origin_x = 0.0;
};
WindowGeom window_geometry(double cy, double cx, const ModelParams& params);

// Correlation dispatch shared by the engine and the training loop.
Tensor3 correlate(const Tensor3& z, const Tensor3& x, const ModelParams& params,
                  Precision precision = Precision::f64, SvcCache* cache = nullptr);

}  // namespace stm
