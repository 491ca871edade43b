#include "stm/arm.hpp"

#include <cmath>

namespace stm {

namespace {

void check_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

// d KL(T || normalize(f)) / d f for fixed target distribution T.
Tensor2 kl_backward_wrt_second(const Tensor2& target_dist, const Tensor2& fused, double eps) {
    Tensor2 fused_dist = normalize_distribution(fused, eps);
    Tensor2 g(fused.h, fused.w);
    for (size_t i = 0; i < g.size(); i++)
        g.data[i] = -target_dist.data[i] / fused_dist.data[i];
    return normalize_distribution_backward(fused, eps, g);
}

}  // namespace

ArmPair make_arm_pair(const Tensor2& pred_a, const Tensor2& pred_b, const Tensor2& label_a,
                      const Tensor2& label_b, bool peaks_from_labels, int gap) {
    check_same_shape(pred_a, pred_b, "arm_pair");
    check_same_shape(pred_a, label_a, "arm_pair");
    check_same_shape(pred_a, label_b, "arm_pair");
    ArmPair pair;
    pair.pred_a = pred_a;
    pair.pred_b = pred_b;
    pair.label_a = label_a;
    pair.label_b = label_b;
    pair.peak_a = topk_peaks(peaks_from_labels ? label_a : pred_a, 1)[0];
    pair.peak_b = topk_peaks(peaks_from_labels ? label_b : pred_b, 1)[0];
    pair.gap = gap;
    return pair;
}

double kl_divergence(const Tensor2& y, const Tensor2& x, double eps) {
    check_same_shape(y, x, "kl_divergence");
    Tensor2 yd = normalize_distribution(y, eps);
    Tensor2 xd = normalize_distribution(x, eps);
    double acc = 0.0;
    for (size_t i = 0; i < yd.size(); i++)
        acc += yd.data[i] * (std::log(yd.data[i]) - std::log(xd.data[i]));
    return acc;
}

ArmLossResult arm_loss(const ArmPair& pair, double eps) {
    const int dy = pair.peak_b.y - pair.peak_a.y;
    const int dx = pair.peak_b.x - pair.peak_a.x;

    // first direction: earlier heatmap aligned onto the later frame's peak
    Tensor2 shifted_a = circular_shift(pair.pred_a, dy, dx);
    Tensor2 fused_ab = mul(shifted_a, pair.pred_b);
    Tensor2 target_b = normalize_distribution(mul(pair.label_b, pair.label_b), eps);

    // second direction: later heatmap aligned back onto the earlier peak
    Tensor2 shifted_b = circular_shift(pair.pred_b, -dy, -dx);
    Tensor2 fused_ba = mul(shifted_b, pair.pred_a);
    Tensor2 target_a = normalize_distribution(mul(pair.label_a, pair.label_a), eps);

    ArmLossResult res;
    {
        Tensor2 fused_dist = normalize_distribution(fused_ab, eps);
        for (size_t i = 0; i < fused_dist.size(); i++)
            res.loss += target_b.data[i] *
                        (std::log(target_b.data[i]) - std::log(fused_dist.data[i]));
    }
    {
        Tensor2 fused_dist = normalize_distribution(fused_ba, eps);
        for (size_t i = 0; i < fused_dist.size(); i++)
            res.loss += target_a.data[i] *
                        (std::log(target_a.data[i]) - std::log(fused_dist.data[i]));
    }

    Tensor2 g_ab = kl_backward_wrt_second(target_b, fused_ab, eps);
    Tensor2 g_ba = kl_backward_wrt_second(target_a, fused_ba, eps);

    res.gpred_a = Tensor2(pair.pred_a.h, pair.pred_a.w);
    res.gpred_b = Tensor2(pair.pred_b.h, pair.pred_b.w);

    // fused_ab = shift(pred_a) * pred_b
    Tensor2 g_shifted_a = mul(g_ab, pair.pred_b);
    Tensor2 g_a_first = circular_shift(g_shifted_a, -dy, -dx);
    Tensor2 g_b_first = mul(g_ab, shifted_a);

    // fused_ba = shift(pred_b) * pred_a
    Tensor2 g_shifted_b = mul(g_ba, pair.pred_a);
    Tensor2 g_b_second = circular_shift(g_shifted_b, dy, dx);
    Tensor2 g_a_second = mul(g_ba, shifted_b);

    for (size_t i = 0; i < res.gpred_a.size(); i++) {
        res.gpred_a.data[i] = g_a_first.data[i] + g_a_second.data[i];
        res.gpred_b.data[i] = g_b_first.data[i] + g_b_second.data[i];
    }
    return res;
}

double total_loss(double base, double arm, double lambda_arm) {
    if (lambda_arm < 0.0) throw ConfigError("total_loss: lambda_arm must be non-negative");
    return base + lambda_arm * arm;
}

// Distinct response modes: cells not exceeded by any 8-neighbor, best K by
// score with row-major tie-break. A unimodal map yields a single candidate.
std::vector<PeakLocation> top_local_peaks(const Tensor2& map, int k) {
    std::vector<int> idx;
    for (int y = 0; y < map.h; y++)
        for (int x = 0; x < map.w; x++) {
            const double v = map.at(y, x);
            bool is_peak = true;
            for (int dy = -1; dy <= 1 && is_peak; dy++)
                for (int dx = -1; dx <= 1; dx++) {
                    if (dy == 0 && dx == 0) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= map.h || nx < 0 || nx >= map.w) continue;
                    if (map.at(ny, nx) > v) {
                        is_peak = false;
                        break;
                    }
                }
            if (is_peak) idx.push_back(y * map.w + x);
        }
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (map.data[a] != map.data[b]) return map.data[a] > map.data[b];
        return a < b;
    });
    if (static_cast<int>(idx.size()) > k) idx.resize(k);
    std::vector<PeakLocation> peaks;
    peaks.reserve(idx.size());
    for (int i : idx) peaks.push_back({i / map.w, i % map.w, map.data[i]});
    return peaks;
}

namespace {
// 3x3 binomial smoothing, edge-clamped; quells sub-cell phase noise in the
// candidate scores on coarse grids
Tensor2 binomial_blur(const Tensor2& m) {
    static const double w[3] = {0.25, 0.5, 0.25};
    Tensor2 tmp(m.h, m.w), out(m.h, m.w);
    for (int y = 0; y < m.h; y++)
        for (int x = 0; x < m.w; x++) {
            double acc = 0.0;
            for (int d = -1; d <= 1; d++) {
                int xx = std::clamp(x + d, 0, m.w - 1);
                acc += w[d + 1] * m.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < m.h; y++)
        for (int x = 0; x < m.w; x++) {
            double acc = 0.0;
            for (int d = -1; d <= 1; d++) {
                int yy = std::clamp(y + d, 0, m.h - 1);
                acc += w[d + 1] * tmp.at(yy, x);
            }
            out.at(y, x) = acc;
        }
    return out;
}
}  // namespace

ArmSelection arm_select(const Tensor2& pred_t, const Tensor2& label_last,
                        const Tensor2& pred_last, const PeakLocation& p_last, int k,
                        double eps, double min_candidate, bool smooth) {
    check_same_shape(pred_t, pred_last, "arm_select");
    check_same_shape(pred_t, label_last, "arm_select");
    if (k < 1 || k > pred_t.h * pred_t.w)
        throw ConfigError("arm_select: K=" + std::to_string(k) + " out of range");
    std::vector<PeakLocation> peaks = top_local_peaks(pred_t, k);
    // the global argmax always stays a candidate; weaker modes must clear the
    // floor to count as aberrance evidence
    if (min_candidate > 0.0) {
        std::vector<PeakLocation> kept;
        for (size_t i = 0; i < peaks.size(); i++)
            if (i == 0 || peaks[i].score >= min_candidate) kept.push_back(peaks[i]);
        peaks = std::move(kept);
    }

    Tensor2 pred_t_s = smooth ? binomial_blur(pred_t) : pred_t;
    Tensor2 label_s = smooth ? binomial_blur(label_last) : label_last;
    Tensor2 pred_s = smooth ? binomial_blur(pred_last) : pred_last;

    ArmSelection sel;
    sel.scores.reserve(peaks.size());
    double best = 0.0;
    for (size_t i = 0; i < peaks.size(); i++) {
        const int dy = peaks[i].y - p_last.y;
        const int dx = peaks[i].x - p_last.x;
        Tensor2 shifted_label = circular_shift(label_s, dy, dx);
        Tensor2 shifted_pred = circular_shift(pred_s, dy, dx);
        // only the forward direction is available at inference time
        const double score = kl_divergence(mul(shifted_label, shifted_label),
                                           mul(shifted_pred, pred_t_s), eps);
        sel.scores.push_back({peaks[i], score});
        if (i == 0 || score < best) {
            best = score;
            sel.k_hat = static_cast<int>(i) + 1;
        }
    }
    return sel;
}

Tensor2 arm_reweight(const Tensor2& pred_t, const Tensor2& pred_last,
                     const PeakLocation& p_last, const PeakLocation& q_hat) {
    check_same_shape(pred_t, pred_last, "arm_reweight");
    Tensor2 aligned = circular_shift(pred_last, q_hat.y - p_last.y, q_hat.x - p_last.x);
    Tensor2 out(pred_t.h, pred_t.w);
    for (size_t i = 0; i < out.size(); i++)
        out.data[i] = (1.0 + aligned.data[i]) * pred_t.data[i];
    return out;
}

}  // namespace stm
