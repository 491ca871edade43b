#include "stm/train.hpp"

#include <cmath>

#include "stm/arm.hpp"

namespace stm {

namespace {

void accumulate(KernelBank& dst, const KernelBank& src, double scale = 1.0) {
    for (size_t i = 0; i < dst.weights.size(); i++) dst.weights[i] += scale * src.weights[i];
    for (size_t i = 0; i < dst.bias.size(); i++) dst.bias[i] += scale * src.bias[i];
}

void accumulate_svc(SvcParams& dst, const SvcParams& src, double scale = 1.0) {
    accumulate(dst.ch.phi1, src.ch.phi1, scale);
    accumulate(dst.ch.fc1, src.ch.fc1, scale);
    accumulate(dst.ch.fc2, src.ch.fc2, scale);
    accumulate(dst.phi2, src.phi2, scale);
}

void accumulate_head(HeadParams& dst, const HeadParams& src, double scale = 1.0) {
    accumulate(dst.trunk, src.trunk, scale);
    accumulate(dst.heat, src.heat, scale);
    accumulate(dst.offset, src.offset, scale);
    accumulate(dst.size, src.size, scale);
}

struct BranchCaches {
    BackboneCache backbone;
    SvcCache svc;
    HeadCache head;
    Tensor3 feat;
    Tensor3 resp;
    HeadOutputs outs;
};

void forward_branch(const ModelParams& params, const Tensor3& z_feat, const FrameInput& input,
                    BranchCaches& c) {
    c.feat = extract(input, params.backbone, &c.backbone);
    c.resp = params.cfg.corr == CorrMode::dw ? dw_xcorr(z_feat, c.feat)
                                             : svc_corr(z_feat, c.feat, params.svc, &c.svc);
    c.outs = head_forward(c.resp, params.head, &c.head);
}

// returns the gradient w.r.t. the template features
Tensor3 backward_branch(const ModelParams& params, const Tensor3& z_feat, const FrameInput& input,
                        const BranchCaches& c, const Tensor2& gheat, const Tensor3& goffset,
                        const Tensor3& gsize, ModelParams& grads) {
    HeadGrads hg = head_backward(c.resp, params.head, c.head, c.outs, gheat, goffset, gsize);
    accumulate_head(grads.head, hg.params);

    Tensor3 gz;
    Tensor3 gx;
    if (params.cfg.corr == CorrMode::dw) {
        DwGrads dg = dw_xcorr_backward(z_feat, c.feat, hg.resp);
        gz = std::move(dg.z);
        gx = std::move(dg.x);
    } else {
        SvcGrads sg = svc_corr_backward(z_feat, c.feat, params.svc, c.svc, hg.resp);
        accumulate_svc(grads.svc, sg.params);
        gz = std::move(sg.z);
        gx = std::move(sg.x);
    }
    if (params.cfg.pixel_mode)
        extract_backward(input, params.backbone, c.backbone, gx, grads.backbone);
    return gz;
}

}  // namespace

Triplet sample_triplet(const SyntheticSequence& seq, Rng& rng) {
    const int len = static_cast<int>(seq.frames.size());
    if (len < 2) throw DataError("sample_triplet: sequence needs at least two frames");
    Triplet t;
    t.seq = &seq;
    t.template_frame = 0;
    t.frame_a = rng.uniform_int(0, len - 2);
    const int max_gap = std::min(99, len - 1 - t.frame_a);
    t.gap = rng.uniform_int(1, max_gap);
    t.frame_b = t.frame_a + t.gap;
    return t;
}

double schedule_lr(const OptimConfig& cfg, int step) {
    if (step < cfg.warmup_steps) {
        const double f = cfg.warmup_steps > 0 ? static_cast<double>(step) / cfg.warmup_steps : 1.0;
        return cfg.lr_start + f * (cfg.lr_peak - cfg.lr_start);
    }
    const int into_decay = step - cfg.warmup_steps;
    if (into_decay >= cfg.decay_steps) return cfg.lr_end;
    const double f = cfg.decay_steps > 0 ? static_cast<double>(into_decay) / cfg.decay_steps : 1.0;
    return cfg.lr_peak * std::pow(cfg.lr_end / cfg.lr_peak, f);
}

OptimState make_optim_state(const ModelParams& params) {
    OptimState s;
    s.velocity = grads_like(params);
    return s;
}

FrameInput build_template(const SyntheticSequence& seq, int frame, const ModelParams& params) {
    const BoundingBox& box = seq.boxes[frame];
    const int stride = params.stride();
    const int span = params.cfg.template_cells * stride;
    const int cy = static_cast<int>(std::floor(box.cy + 0.5));
    const int cx = static_cast<int>(std::floor(box.cx + 0.5));
    Tensor3 crop = crop_window(seq.frames[frame], cy, cx, span);
    return params.cfg.pixel_mode ? FrameInput::from_pixels(std::move(crop), frame)
                                 : FrameInput::from_features(std::move(crop), frame);
}

SampleGeom build_sample(const SyntheticSequence& seq, int frame, const ModelParams& params,
                        double jitter_y, double jitter_x) {
    const BoundingBox& box = seq.boxes[frame];
    const int stride = params.stride();
    WindowGeom geom = window_geometry(box.cy + jitter_y, box.cx + jitter_x, params);
    const int span = params.cfg.search_cells * stride;
    Tensor3 crop = crop_window(seq.frames[frame], geom.center_y, geom.center_x, span);

    SampleGeom s;
    s.input = params.cfg.pixel_mode ? FrameInput::from_pixels(std::move(crop), frame)
                                    : FrameInput::from_features(std::move(crop), frame);
    BoundingBox local{box.cx - geom.origin_x, box.cy - geom.origin_y, box.w, box.h};
    const int resp = params.resp_cells();
    s.labels = make_labels(local, resp, resp, stride);
    return s;
}

TripletResult triplet_forward_backward(const ModelParams& params, const FrameInput& tmpl,
                                       const SampleGeom& a, const SampleGeom& b,
                                       const OptimConfig& cfg, bool peaks_from_labels) {
    TripletResult res;
    res.grads = grads_like(params);

    BackboneCache tmpl_cache;
    Tensor3 z_feat = extract(tmpl, params.backbone, &tmpl_cache);

    BranchCaches ca, cb;
    forward_branch(params, z_feat, a.input, ca);
    forward_branch(params, z_feat, b.input, cb);

    BaseLossResult base_a = base_loss(ca.outs, a.labels, cfg.lambda_off, cfg.lambda_size);
    BaseLossResult base_b = base_loss(cb.outs, b.labels, cfg.lambda_off, cfg.lambda_size);

    res.loss.cls = 0.5 * (base_a.cls + base_b.cls);
    res.loss.off = 0.5 * (base_a.off + base_b.off);
    res.loss.size = 0.5 * (base_a.size + base_b.size);

    Tensor2 gheat_a = base_a.gheat;
    Tensor2 gheat_b = base_b.gheat;
    for (double& v : gheat_a.data) v *= 0.5;
    for (double& v : gheat_b.data) v *= 0.5;

    if (cfg.lambda_arm > 0.0) {
        ArmPair pair = make_arm_pair(ca.outs.heat, cb.outs.heat, a.labels.heat, b.labels.heat,
                                     peaks_from_labels, 1);
        ArmLossResult arm = arm_loss(pair);
        res.loss.arm = arm.loss;
        for (size_t i = 0; i < gheat_a.size(); i++) {
            gheat_a.data[i] += cfg.lambda_arm * arm.gpred_a.data[i];
            gheat_b.data[i] += cfg.lambda_arm * arm.gpred_b.data[i];
        }
    }
    res.loss.total = res.loss.cls + cfg.lambda_off * res.loss.off +
                     cfg.lambda_size * res.loss.size + cfg.lambda_arm * res.loss.arm;

    Tensor3 goff_a = base_a.goffset, gsize_a = base_a.gsize;
    Tensor3 goff_b = base_b.goffset, gsize_b = base_b.gsize;
    for (double& v : goff_a.data) v *= 0.5;
    for (double& v : gsize_a.data) v *= 0.5;
    for (double& v : goff_b.data) v *= 0.5;
    for (double& v : gsize_b.data) v *= 0.5;

    Tensor3 gz_a = backward_branch(params, z_feat, a.input, ca, gheat_a, goff_a, gsize_a,
                                   res.grads);
    Tensor3 gz_b = backward_branch(params, z_feat, b.input, cb, gheat_b, goff_b, gsize_b,
                                   res.grads);
    if (params.cfg.pixel_mode) {
        Tensor3 gz = add(gz_a, gz_b);
        extract_backward(tmpl, params.backbone, tmpl_cache, gz, res.grads.backbone);
    }
    return res;
}

void apply_sgd(ModelParams& params, const ModelParams& grads, OptimState& opt,
               const OptimConfig& cfg) {
    const double lr = schedule_lr(cfg, opt.step);
    const bool freeze = opt.step < cfg.freeze_backbone_steps;

    std::vector<KernelBank*> p_banks, v_banks;
    std::vector<const KernelBank*> g_banks;
    std::vector<bool> backbone_flags;
    for_each_bank(params, [&](const std::string&, KernelBank& k, bool bb) {
        p_banks.push_back(&k);
        backbone_flags.push_back(bb);
    });
    for_each_bank(opt.velocity, [&](const std::string&, KernelBank& k, bool) {
        v_banks.push_back(&k);
    });
    for_each_bank(grads, [&](const std::string&, const KernelBank& k, bool) {
        g_banks.push_back(&k);
    });

    for (size_t i = 0; i < p_banks.size(); i++) {
        if (freeze && backbone_flags[i]) continue;
        KernelBank& p = *p_banks[i];
        KernelBank& v = *v_banks[i];
        const KernelBank& g = *g_banks[i];
        for (size_t j = 0; j < p.weights.size(); j++) {
            v.weights[j] = cfg.momentum * v.weights[j] - lr * g.weights[j];
            p.weights[j] += v.weights[j];
        }
        for (size_t j = 0; j < p.bias.size(); j++) {
            v.bias[j] = cfg.momentum * v.bias[j] - lr * g.bias[j];
            p.bias[j] += v.bias[j];
        }
    }
    opt.step++;
}

LossBreakdown train_step(const std::vector<Triplet>& batch, ModelParams& params, OptimState& opt,
                         const OptimConfig& cfg, Rng& rng) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    const bool label_peaks =
        opt.step < static_cast<int>(cfg.label_peak_frac * cfg.total_steps);

    ModelParams grads = grads_like(params);
    LossBreakdown sum;
    for (const Triplet& t : batch) {
        FrameInput tmpl = build_template(*t.seq, t.template_frame, params);
        SampleGeom a = build_sample(*t.seq, t.frame_a, params, rng.uniform(-cfg.jitter, cfg.jitter),
                                    rng.uniform(-cfg.jitter, cfg.jitter));
        SampleGeom b = build_sample(*t.seq, t.frame_b, params, rng.uniform(-cfg.jitter, cfg.jitter),
                                    rng.uniform(-cfg.jitter, cfg.jitter));
        TripletResult r = triplet_forward_backward(params, tmpl, a, b, cfg, label_peaks);
        sum.cls += r.loss.cls;
        sum.off += r.loss.off;
        sum.size += r.loss.size;
        sum.arm += r.loss.arm;
        sum.total += r.loss.total;
        accumulate_svc(grads.svc, r.grads.svc);
        accumulate_head(grads.head, r.grads.head);
        for (size_t i = 0; i < grads.backbone.layers.size(); i++)
            accumulate(grads.backbone.layers[i].bank, r.grads.backbone.layers[i].bank);
    }
    const double inv = 1.0 / batch.size();
    sum.cls *= inv;
    sum.off *= inv;
    sum.size *= inv;
    sum.arm *= inv;
    sum.total *= inv;
    if (!std::isfinite(sum.total))
        throw DataError("train_step: non-finite loss (cls=" + std::to_string(sum.cls) +
                        ", off=" + std::to_string(sum.off) + ", size=" + std::to_string(sum.size) +
                        ", arm=" + std::to_string(sum.arm) + ") at step " +
                        std::to_string(opt.step));

    ModelParams scaled = grads;
    for_each_bank(scaled, [&](const std::string&, KernelBank& k, bool) {
        for (double& v : k.weights) v *= inv;
        for (double& v : k.bias) v *= inv;
    });
    apply_sgd(params, scaled, opt, cfg);
    return sum;
}

std::vector<LossRow> train(const std::vector<SyntheticSequence>& data, ModelParams& params,
                           const OptimConfig& cfg, uint64_t seed) {
    if (data.empty()) throw DataError("train: no sequences");
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    OptimState opt = make_optim_state(params);
    std::vector<LossRow> curve;
    curve.reserve(cfg.total_steps);
    for (int step = 0; step < cfg.total_steps; step++) {
        std::vector<Triplet> batch;
        batch.reserve(cfg.batch);
        for (int b = 0; b < cfg.batch; b++) {
            const int idx = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
            batch.push_back(sample_triplet(data[idx], rng));
        }
        const double lr = schedule_lr(cfg, opt.step);
        LossBreakdown loss = train_step(batch, params, opt, cfg, rng);
        curve.push_back(LossRow{step, loss, lr});
    }
    return curve;
}

}  // namespace stm
