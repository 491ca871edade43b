#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stm/params.hpp"
#include "stm/rng.hpp"
#include "stm/sim.hpp"

namespace stm {

// Frame indices of one training example inside its source sequence; the
// template always comes from the first frame.
struct Triplet {
    const SyntheticSequence* seq = nullptr;
    int template_frame = 0;
    int frame_a = 0;
    int frame_b = 0;
    int gap = 1;
};

// Uniform anchor frame, gap uniform in [1, min(100, remaining)).
Triplet sample_triplet(const SyntheticSequence& seq, Rng& rng);

struct OptimConfig {
    double lr_start = 0.001;
    double lr_peak = 0.005;
    double lr_end = 0.0005;
    int warmup_steps = 500;
    int decay_steps = 1500;
    double momentum = 0.9;
    int freeze_backbone_steps = 0;
    double lambda_off = 1.0;
    double lambda_size = 0.1;
    double lambda_arm = 0.5;
    int batch = 8;
    int total_steps = 200;
    // fraction of total steps that aligns interframe peaks by label argmax
    double label_peak_frac = 0.1;
    double jitter = 2.0;  // search-window center jitter, cells
};

// Linear warmup to lr_peak, then exponential decay to lr_end, then flat.
double schedule_lr(const OptimConfig& cfg, int step);

struct OptimState {
    int step = 0;
    ModelParams velocity;
};
OptimState make_optim_state(const ModelParams& params);

struct LossBreakdown {
    double cls = 0.0, off = 0.0, size = 0.0, arm = 0.0, total = 0.0;
};

// One cropped search frame with its window-local labels.
struct SampleGeom {
    FrameInput input;
    Labels labels;
};
SampleGeom build_sample(const SyntheticSequence& seq, int frame, const ModelParams& params,
                        double jitter_y, double jitter_x);
FrameInput build_template(const SyntheticSequence& seq, int frame, const ModelParams& params);

struct TripletResult {
    LossBreakdown loss;
    ModelParams grads;
};
// Forward and backward of the whole objective on one triplet: both search
// frames through correlation and head, base losses averaged, plus the
// interframe constraint between the two heatmaps.
TripletResult triplet_forward_backward(const ModelParams& params, const FrameInput& tmpl,
                                       const SampleGeom& a, const SampleGeom& b,
                                       const OptimConfig& cfg, bool peaks_from_labels);

// Momentum SGD over every bank; backbone banks are skipped while frozen.
void apply_sgd(ModelParams& params, const ModelParams& grads, OptimState& opt,
               const OptimConfig& cfg);

LossBreakdown train_step(const std::vector<Triplet>& batch, ModelParams& params, OptimState& opt,
                         const OptimConfig& cfg, Rng& rng);

struct LossRow {
    int step = 0;
    LossBreakdown loss;
    double lr = 0.0;
};

// Full loop: per step, sample `batch` triplets from random sequences, one
// gradient update each step. Bit-reproducible for a fixed (seed, config).
std::vector<LossRow> train(const std::vector<SyntheticSequence>& data, ModelParams& params,
                           const OptimConfig& cfg, uint64_t seed);

}  // namespace stm
