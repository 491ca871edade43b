#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stm/tracker.hpp"

namespace stm {

struct MotionConfig {
    std::string kind = "random_walk";  // linear | random_walk | abrupt_jump
    double step_sigma = 0.6;           // random-walk step scale, cells
    double speed_y = 0.0, speed_x = 0.0;  // linear velocity, cells/frame
    int jump_frame = -1;
    double jump_dy = 0.0, jump_dx = 0.0;
};

struct OcclusionWindow {
    int first = 0;
    int last = 0;       // inclusive
    double depth = 0.1; // target amplitude multiplier while occluded
};

struct ScenarioConfig {
    int frames = 40;
    int grid = 24;
    int channels = 16;
    std::vector<double> target_signature;  // empty: drawn from the seed
    int distractors = 2;
    double overlap = 0.7;  // cosine similarity between distractor and target signatures
    MotionConfig motion;
    std::vector<OcclusionWindow> occlusions;
    double noise = 0.02;
    double target_size = 3.0;  // box side, cells
    double target_amp = 1.0;
    double distractor_amp = 1.0;
    // amplitude pulse on the first distractor (a sudden interference peak)
    double flicker_amp = 0.0;
    int flicker_frame = -1;
    int flicker_len = 3;
    // render single-channel pixel frames at this scale instead of feature
    // maps; object identity then lives in a signature-driven texture
    bool pixel_mode = false;
    int pixel_scale = 8;
    uint64_t seed = 0;
};

struct SyntheticSequence {
    ScenarioConfig cfg;
    std::vector<Tensor3> frames;      // feature-space maps, or pixels when cfg.pixel_mode
    std::vector<BoundingBox> boxes;   // one ground-truth box per frame, frame units
    bool pixel_mode = false;
};

SyntheticSequence gen_sequence(const ScenarioConfig& cfg);

double iou(const BoundingBox& a, const BoundingBox& b);

struct FrameRecord {
    int frame = 0;
    BoundingBox gt, pred;
    double iou = 0.0;
    double center_err = 0.0;
    double confidence = 0.0;
    int k_hat = 1;
    // track: live prediction; skip: suspended after a failure; reinit: restart
    std::string phase = "track";
};

struct SequenceMetrics {
    double mean_iou = 0.0;
    double mean_center_err = 0.0;
    int failures = 0;
    std::vector<FrameRecord> records;
};

// Tracks one sequence with the VOT-style reset rule: five consecutive
// zero-overlap frames count one failure, the tracker restarts from ground
// truth five frames later.
SequenceMetrics run_sequence(const SyntheticSequence& seq, const ModelParams& params,
                             const TrackConfig& cfg);

struct BenchmarkResult {
    std::vector<SequenceMetrics> per_sequence;  // in scenario order
    double mean_iou = 0.0;
    double mean_center_err = 0.0;
    int total_failures = 0;
};

// threads <= 1 runs inline; results are collected in scenario order either way.
BenchmarkResult run_benchmark(const std::vector<ScenarioConfig>& scenarios,
                              const ModelParams& params, const TrackConfig& cfg,
                              int threads = 1);

// One-sided paired sign test for H1 "a is typically smaller than b";
// ties are dropped.
double sign_test_p(const std::vector<int>& a, const std::vector<int>& b);

// STM_THREADS environment override, otherwise the fallback.
int harness_threads(int fallback = 1);

}  // namespace stm
