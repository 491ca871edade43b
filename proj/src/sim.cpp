#include "stm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "stm/rng.hpp"

namespace stm {

namespace {

std::vector<double> unit_vector(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw DataError("gen_sequence: zero signature");
    for (double& x : v) x /= norm;
    return v;
}

std::vector<double> random_nonneg_signature(int channels, Rng& rng) {
    std::vector<double> v(channels);
    for (double& x : v) x = 0.1 + std::fabs(rng.normal());
    return unit_vector(std::move(v));
}

// unit vector with the requested cosine similarity to base
std::vector<double> overlapping_signature(const std::vector<double>& base, double overlap,
                                          Rng& rng) {
    const int n = static_cast<int>(base.size());
    std::vector<double> raw(n);
    for (double& x : raw) x = rng.normal();
    double dot = 0.0;
    for (int i = 0; i < n; i++) dot += raw[i] * base[i];
    for (int i = 0; i < n; i++) raw[i] -= dot * base[i];
    std::vector<double> orth = unit_vector(std::move(raw));
    std::vector<double> mixed(n);
    const double ortho_part = std::sqrt(std::max(0.0, 1.0 - overlap * overlap));
    for (int i = 0; i < n; i++) mixed[i] = overlap * base[i] + ortho_part * orth[i];
    return mixed;
}

// signature-keyed oriented texture under a Gaussian envelope; objects with
// different signatures look different at pixel level
void add_textured_blob(Tensor3& img, double cy, double cx, double amp, double sigma,
                       const std::vector<double>& signature, int scale) {
    const double inv = 1.0 / (2.0 * sigma * sigma * scale * scale);
    const int n = static_cast<int>(signature.size());
    for (int y = 0; y < img.h; y++)
        for (int x = 0; x < img.w; x++) {
            const double dy = y - cy * scale, dx = x - cx * scale;
            const double env = std::exp(-(dy * dy + dx * dx) * inv);
            if (env < 1e-10) continue;
            double tex = 0.6;
            for (int c = 0; c < n; c++) {
                const double freq = 0.4 + 0.25 * c;
                const double angle = 2.39996322972865332 * c;  // golden-angle fan
                const double u = dx * std::cos(angle) + dy * std::sin(angle);
                tex += 0.4 * signature[c] * std::cos(freq * u);
            }
            img.at(y, x, 0) += amp * env * tex;
        }
}

void add_blob(Tensor3& world, double cy, double cx, double amp, double sigma,
              const std::vector<double>& signature) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < world.h; y++)
        for (int x = 0; x < world.w; x++) {
            const double dy = y - cy, dx = x - cx;
            const double g = amp * std::exp(-(dy * dy + dx * dx) * inv);
            if (g < 1e-12) continue;
            for (int c = 0; c < world.c; c++) world.at(y, x, c) += g * signature[c];
        }
}

struct Walker {
    double y, x;
};

}  // namespace

SyntheticSequence gen_sequence(const ScenarioConfig& cfg) {
    if (cfg.frames < 1 || cfg.grid < 8 || cfg.channels < 1)
        throw ConfigError("gen_sequence: bad dimensions");
    if (cfg.overlap < 0.0 || cfg.overlap > 1.0)
        throw ConfigError("gen_sequence: overlap fraction must be in [0,1]");
    for (const OcclusionWindow& occ : cfg.occlusions)
        if (occ.first < 0 || occ.last >= cfg.frames || occ.first > occ.last)
            throw ConfigError("gen_sequence: occlusion window outside the sequence");

    const double margin = std::max(3.0, cfg.target_size);
    const double min_sep = 4.0;
    const double usable = cfg.grid - 2.0 * margin;
    if (usable < 1.0 || (cfg.distractors + 1) * min_sep * min_sep > usable * usable * 4.0)
        throw ConfigError("gen_sequence: too many blobs for a " + std::to_string(cfg.grid) +
                          "x" + std::to_string(cfg.grid) + " grid");

    Rng rng(cfg.seed * 6364136223846793005ULL + 1442695040888963407ULL);

    std::vector<double> sig_t =
        cfg.target_signature.empty() ? random_nonneg_signature(cfg.channels, rng)
                                     : unit_vector(cfg.target_signature);
    if (static_cast<int>(sig_t.size()) != cfg.channels)
        throw ConfigError("gen_sequence: signature length != channels");

    std::vector<std::vector<double>> sig_d;
    for (int d = 0; d < cfg.distractors; d++)
        sig_d.push_back(overlapping_signature(sig_t, cfg.overlap, rng));

    auto clamp_pos = [&](double v) {
        return std::clamp(v, margin, cfg.grid - 1.0 - margin);
    };

    Walker target{clamp_pos(cfg.grid / 2.0 + rng.uniform(-3.0, 3.0)),
                  clamp_pos(cfg.grid / 2.0 + rng.uniform(-3.0, 3.0))};
    std::vector<Walker> distractors;
    for (int d = 0; d < cfg.distractors; d++) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; attempt++) {
            Walker w{clamp_pos(rng.uniform(0.0, cfg.grid)), clamp_pos(rng.uniform(0.0, cfg.grid))};
            double nearest = std::hypot(w.y - target.y, w.x - target.x);
            for (const Walker& other : distractors)
                nearest = std::min(nearest, std::hypot(w.y - other.y, w.x - other.x));
            if (nearest >= min_sep) {
                distractors.push_back(w);
                placed = true;
            }
        }
        if (!placed) throw ConfigError("gen_sequence: could not place all distractors");
    }

    double vel_y = cfg.motion.speed_y, vel_x = cfg.motion.speed_x;
    if (cfg.motion.kind == "linear" && vel_y == 0.0 && vel_x == 0.0) {
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        vel_y = 0.4 * std::sin(angle);
        vel_x = 0.4 * std::cos(angle);
    }

    const double sigma_blob = cfg.target_size / 3.0;
    SyntheticSequence seq;
    seq.cfg = cfg;
    seq.frames.reserve(cfg.frames);
    seq.boxes.reserve(cfg.frames);

    for (int t = 0; t < cfg.frames; t++) {
        if (t > 0) {
            if (cfg.motion.kind == "linear") {
                target.y = clamp_pos(target.y + vel_y);
                target.x = clamp_pos(target.x + vel_x);
            } else {
                target.y = clamp_pos(target.y + cfg.motion.step_sigma * rng.normal());
                target.x = clamp_pos(target.x + cfg.motion.step_sigma * rng.normal());
            }
            if (cfg.motion.kind == "abrupt_jump" && t == cfg.motion.jump_frame) {
                target.y = clamp_pos(target.y + cfg.motion.jump_dy);
                target.x = clamp_pos(target.x + cfg.motion.jump_dx);
            }
            for (Walker& w : distractors) {
                w.y = clamp_pos(w.y + cfg.motion.step_sigma * rng.normal());
                w.x = clamp_pos(w.x + cfg.motion.step_sigma * rng.normal());
            }
        }

        double amp_t = cfg.target_amp;
        for (const OcclusionWindow& occ : cfg.occlusions)
            if (t >= occ.first && t <= occ.last) amp_t *= occ.depth;

        const int scale = cfg.pixel_mode ? cfg.pixel_scale : 1;
        Tensor3 world = cfg.pixel_mode ? Tensor3(cfg.grid * scale, cfg.grid * scale, 1)
                                       : Tensor3(cfg.grid, cfg.grid, cfg.channels);
        if (cfg.pixel_mode)
            add_textured_blob(world, target.y, target.x, amp_t, sigma_blob, sig_t, scale);
        else
            add_blob(world, target.y, target.x, amp_t, sigma_blob, sig_t);
        for (int d = 0; d < cfg.distractors; d++) {
            double amp_d = cfg.distractor_amp;
            if (d == 0 && cfg.flicker_frame >= 0 && t >= cfg.flicker_frame &&
                t < cfg.flicker_frame + cfg.flicker_len) {
                // triangular envelope: the pulse builds up and fades out
                const double phase =
                    (t - cfg.flicker_frame + 1.0) / ((cfg.flicker_len + 1.0) / 2.0);
                const double env = phase <= 1.0 ? phase : 2.0 - phase;
                amp_d *= 1.0 + cfg.flicker_amp * std::max(0.0, env);
            }
            if (cfg.pixel_mode)
                add_textured_blob(world, distractors[d].y, distractors[d].x, amp_d, sigma_blob,
                                  sig_d[d], scale);
            else
                add_blob(world, distractors[d].y, distractors[d].x, amp_d, sigma_blob, sig_d[d]);
        }
        if (cfg.noise > 0.0)
            for (double& v : world.data) v += cfg.noise * rng.normal();

        seq.frames.push_back(std::move(world));
        seq.boxes.push_back(BoundingBox{target.x * scale, target.y * scale,
                                        cfg.target_size * scale, cfg.target_size * scale});
    }
    seq.pixel_mode = cfg.pixel_mode;
    return seq;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0)
        throw DataError("iou: boxes must have positive size");
    const double ax0 = a.cx - a.w / 2.0, ax1 = a.cx + a.w / 2.0;
    const double ay0 = a.cy - a.h / 2.0, ay1 = a.cy + a.h / 2.0;
    const double bx0 = b.cx - b.w / 2.0, bx1 = b.cx + b.w / 2.0;
    const double by0 = b.cy - b.h / 2.0, by1 = b.cy + b.h / 2.0;
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

SequenceMetrics run_sequence(const SyntheticSequence& seq, const ModelParams& params,
                             const TrackConfig& cfg) {
    SequenceMetrics metrics;
    if (seq.frames.empty()) return metrics;

    auto frame_input = [&](int t) {
        return seq.pixel_mode ? FrameInput::from_pixels(seq.frames[t], t)
                              : FrameInput::from_features(seq.frames[t], t);
    };
    TrackerState state = tracker_init(frame_input(0), seq.boxes[0], params, cfg);
    int zero_streak = 0;
    int reinit_at = -1;
    double iou_sum = 0.0, err_sum = 0.0;
    int tracked = 0;

    for (int t = 1; t < static_cast<int>(seq.frames.size()); t++) {
        FrameRecord rec;
        rec.frame = t;
        rec.gt = seq.boxes[t];

        if (reinit_at >= 0) {
            if (t < reinit_at) {
                rec.phase = "skip";
                metrics.records.push_back(rec);
                continue;
            }
            state = tracker_init(frame_input(t), seq.boxes[t], params, cfg);
            reinit_at = -1;
            zero_streak = 0;
            rec.phase = "reinit";
            rec.pred = seq.boxes[t];
            rec.iou = 1.0;
            metrics.records.push_back(rec);
            continue;
        }

        StepResult res = tracker_step(state, frame_input(t), params, cfg);
        state = res.state;
        rec.pred = res.box;
        rec.iou = iou(res.box, seq.boxes[t]);
        rec.center_err = std::hypot(res.box.cx - seq.boxes[t].cx, res.box.cy - seq.boxes[t].cy);
        rec.confidence = res.confidence;
        rec.k_hat = res.k_hat;
        iou_sum += rec.iou;
        err_sum += rec.center_err;
        tracked++;

        zero_streak = rec.iou == 0.0 ? zero_streak + 1 : 0;
        if (zero_streak >= 5) {
            metrics.failures++;
            reinit_at = t + 5;
            zero_streak = 0;
        }
        metrics.records.push_back(rec);
    }

    metrics.mean_iou = tracked > 0 ? iou_sum / tracked : 0.0;
    metrics.mean_center_err = tracked > 0 ? err_sum / tracked : 0.0;
    return metrics;
}

BenchmarkResult run_benchmark(const std::vector<ScenarioConfig>& scenarios,
                              const ModelParams& params, const TrackConfig& cfg, int threads) {
    BenchmarkResult result;
    result.per_sequence.resize(scenarios.size());

    auto worker = [&](size_t begin, size_t step) {
        for (size_t i = begin; i < scenarios.size(); i += step) {
            SyntheticSequence seq = gen_sequence(scenarios[i]);
            result.per_sequence[i] = run_sequence(seq, params, cfg);
        }
    };

    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(scenarios.size())));
    if (n_threads <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; i++) pool.emplace_back(worker, i, n_threads);
        for (std::thread& th : pool) th.join();
    }

    double iou_sum = 0.0, err_sum = 0.0;
    for (const SequenceMetrics& m : result.per_sequence) {
        iou_sum += m.mean_iou;
        err_sum += m.mean_center_err;
        result.total_failures += m.failures;
    }
    if (!result.per_sequence.empty()) {
        result.mean_iou = iou_sum / result.per_sequence.size();
        result.mean_center_err = err_sum / result.per_sequence.size();
    }
    return result;
}

double sign_test_p(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw ConfigError("sign_test_p: length mismatch");
    int wins = 0, losses = 0;
    for (size_t i = 0; i < a.size(); i++) {
        if (a[i] < b[i]) wins++;
        else if (a[i] > b[i]) losses++;
    }
    const int n = wins + losses;
    if (n == 0) return 1.0;
    // P[Binomial(n, 1/2) >= wins]
    double p = 0.0;
    for (int k = wins; k <= n; k++) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                std::lgamma(n - k + 1.0) - n * std::log(2.0);
        p += std::exp(log_term);
    }
    return std::min(1.0, p);
}

int harness_threads(int fallback) {
    const char* env = std::getenv("STM_THREADS");
    if (!env) return fallback;
    const int v = std::atoi(env);
    return v >= 1 ? v : fallback;
}

}  // namespace stm
