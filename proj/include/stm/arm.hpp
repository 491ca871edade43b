#pragma once

#include <vector>

#include "stm/ops.hpp"
#include "stm/tensor.hpp"

namespace stm {

// Two heatmap/label pairs from one sequence, peaks cached for alignment.
struct ArmPair {
    Tensor2 pred_a, pred_b;    // heatmaps of the earlier/later frame
    Tensor2 label_a, label_b;  // matching Gaussian labels
    PeakLocation peak_a, peak_b;
    int gap = 1;
};

// peaks_from_labels anchors alignment at the label maxima instead of the
// predicted maxima (useful before the heatmaps are trained).
ArmPair make_arm_pair(const Tensor2& pred_a, const Tensor2& pred_b, const Tensor2& label_a,
                      const Tensor2& label_b, bool peaks_from_labels = false, int gap = 1);

// KL(y||x) with both maps first normalized to eps-floored distributions.
double kl_divergence(const Tensor2& y, const Tensor2& x, double eps);

struct ArmLossResult {
    double loss = 0.0;
    Tensor2 gpred_a, gpred_b;
};

// Symmetric interframe constraint: each frame's squared label against the
// peak-aligned product of the two heatmaps, in both directions.
ArmLossResult arm_loss(const ArmPair& pair, double eps = 1e-8);

double total_loss(double base, double arm, double lambda_arm);

struct ArmCandidateScore {
    PeakLocation q;
    double score = 0.0;
};

struct ArmSelection {
    int k_hat = 1;  // 1-based; ties resolved toward the smaller index
    std::vector<ArmCandidateScore> scores;
};

// Scores the top-K response modes of pred_t (local maxima, strongest first)
// against the last frame's peak-aligned label/heatmap and returns the
// temporally most consistent one. A unimodal map yields a single candidate,
// so the selection only acts when additional response modes appear.
// min_candidate drops weak modes (the argmax always stays); smooth applies a
// 3x3 binomial blur to the score inputs, which steadies the ranking on very
// coarse grids.
ArmSelection arm_select(const Tensor2& pred_t, const Tensor2& label_last,
                        const Tensor2& pred_last, const PeakLocation& p_last, int k,
                        double eps = 1e-8, double min_candidate = 0.0, bool smooth = false);

// (1 + aligned previous heatmap) as a multiplicative weight on pred_t.
Tensor2 arm_reweight(const Tensor2& pred_t, const Tensor2& pred_last,
                     const PeakLocation& p_last, const PeakLocation& q_hat);

}  // namespace stm
