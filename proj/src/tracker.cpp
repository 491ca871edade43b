#include "stm/tracker.hpp"

#include <algorithm>
#include <cmath>

namespace stm {

RefreshPolicy refresh_from_string(const std::string& s) {
    if (s == "literal") return RefreshPolicy::literal;
    if (s == "always") return RefreshPolicy::always;
    throw ConfigError("unknown refresh policy '" + s + "' (expected literal or always)");
}

std::string to_string(RefreshPolicy p) {
    return p == RefreshPolicy::literal ? "literal" : "always";
}

Tensor3 correlate(const Tensor3& z, const Tensor3& x, const ModelParams& params,
                  Precision precision, SvcCache* cache) {
    if (params.cfg.corr == CorrMode::dw)
        return precision == Precision::f32 ? dw_xcorr_f32(z, x) : dw_xcorr(z, x);
    if (precision == Precision::f32) {
        SvcCache local;
        SvcCache& c = cache ? *cache : local;
        Tensor3 out = svc_corr(z, x, params.svc, &c);
        // swap the spatial branch for the single-precision kernel
        Tensor3 spatial32 = dw_xcorr_f32(z, x);
        for (size_t i = 0; i < out.size(); i++)
            out.data[i] += spatial32.data[i] - c.spatial.data[i];
        return out;
    }
    return svc_corr(z, x, params.svc, cache);
}

WindowGeom window_geometry(double cy, double cx, const ModelParams& params) {
    const int stride = params.stride();
    WindowGeom g;
    g.center_x = static_cast<int>(std::floor(cx + 0.5));
    g.center_y = static_cast<int>(std::floor(cy + 0.5));
    const double window_span = static_cast<double>(params.cfg.search_cells) * stride;
    g.origin_x = g.center_x - window_span / 2.0 +
                 static_cast<double>(params.cfg.template_cells) * stride / 2.0;
    g.origin_y = g.center_y - window_span / 2.0 +
                 static_cast<double>(params.cfg.template_cells) * stride / 2.0;
    return g;
}

namespace {

Tensor3 crop_search(const FrameInput& frame, const WindowGeom& geom, const ModelParams& params) {
    const int span = params.cfg.search_cells * params.stride();
    Tensor3 crop = crop_window(frame.payload(), geom.center_y, geom.center_x, span);
    FrameInput sub = frame.is_pixel() ? FrameInput::from_pixels(std::move(crop))
                                      : FrameInput::from_features(std::move(crop));
    return extract(sub, params.backbone);
}

}  // namespace

Tensor2 apply_window_penalty(const Tensor2& heat, const Tensor3& size_map, double last_w_cells,
                             double last_h_cells, const TrackConfig& cfg) {
    Tensor2 hann = hanning2d(heat.h, heat.w);
    Tensor2 out(heat.h, heat.w);
    auto change = [](double v) { return std::max(v, 1.0 / v); };
    auto span = [](double w, double h) {
        const double pad = (w + h) / 2.0;
        return std::sqrt((w + pad) * (h + pad));
    };
    const double last_ratio = last_w_cells / last_h_cells;
    const double last_span = span(last_w_cells, last_h_cells);
    for (int y = 0; y < heat.h; y++)
        for (int x = 0; x < heat.w; x++) {
            const double w = size_map.at(y, x, 0);
            const double h = size_map.at(y, x, 1);
            const double r = change((w / h) / last_ratio);
            const double s = change(span(w, h) / last_span);
            const double penalty = std::exp(-cfg.penalty_k * (r * s - 1.0));
            out.at(y, x) = (1.0 - cfg.window_influence) * penalty * heat.at(y, x) +
                           cfg.window_influence * hann.at(y, x);
        }
    return out;
}

TrackerState tracker_init(const FrameInput& frame, const BoundingBox& box,
                          const ModelParams& params, const TrackConfig& cfg) {
    (void)cfg;
    if (box.w <= 0.0 || box.h <= 0.0)
        throw DataError("tracker_init: degenerate box (zero area)");

    const int stride = params.stride();
    WindowGeom geom = window_geometry(box.cy, box.cx, params);

    TrackerState state;
    const int tmpl_span = params.cfg.template_cells * stride;
    Tensor3 tmpl_crop = crop_window(frame.payload(), geom.center_y, geom.center_x, tmpl_span);
    FrameInput tmpl = frame.is_pixel() ? FrameInput::from_pixels(std::move(tmpl_crop))
                                       : FrameInput::from_features(std::move(tmpl_crop));
    state.template_feat = extract(tmpl, params.backbone);

    Tensor3 search_feat = crop_search(frame, geom, params);
    Tensor3 resp = correlate(state.template_feat, search_feat, params, cfg.precision);
    HeadOutputs outs = head_forward(resp, params.head);

    BoundingBox local{box.cx - geom.origin_x, box.cy - geom.origin_y, box.w, box.h};
    Labels labels = make_labels(local, resp.h, resp.w, stride);
    state.label_last = labels.heat;
    state.pred_last = outs.heat;
    state.p_last = PeakLocation{labels.cy_cell, labels.cx_cell, 1.0};
    state.box = box;
    state.frame_count = 1;
    return state;
}

StepResult tracker_step(const TrackerState& state, const FrameInput& frame,
                        const ModelParams& params, const TrackConfig& cfg, StepDebug* debug) {
    const int stride = params.stride();
    WindowGeom geom = window_geometry(state.box.cy, state.box.cx, params);

    Tensor3 search_feat = crop_search(frame, geom, params);
    Tensor3 resp = correlate(state.template_feat, search_feat, params, cfg.precision);
    HeadOutputs outs = head_forward(resp, params.head);

    StepResult res;
    res.state = state;
    res.state.frame_count = state.frame_count + 1;

    Tensor2 heat_sel = outs.heat;
    if (cfg.arm) {
        const int k = std::min(cfg.k, outs.heat.h * outs.heat.w);
        ArmSelection sel = arm_select(outs.heat, state.label_last, state.pred_last, state.p_last,
                                      k, cfg.arm_eps, cfg.arm_floor, cfg.arm_smooth);
        // hysteresis: near-ties stay with the argmax; redirects far outside the
        // motion prior are not credible either
        if (sel.k_hat != 1) {
            const PeakLocation& q = sel.scores[sel.k_hat - 1].q;
            const bool decisive =
                sel.scores[sel.k_hat - 1].score <= cfg.arm_margin * sel.scores[0].score;
            const bool reachable = std::abs(q.y - state.p_last.y) <= cfg.arm_radius &&
                                   std::abs(q.x - state.p_last.x) <= cfg.arm_radius;
            if (!decisive || !reachable) sel.k_hat = 1;
        }
        res.k_hat = sel.k_hat;
        if (debug) debug->scores = sel.scores;
        if (sel.k_hat != 1) {
            const PeakLocation q = sel.scores[sel.k_hat - 1].q;
            heat_sel = arm_reweight(outs.heat, state.pred_last, state.p_last, q);
            const int dy = q.y - state.p_last.y;
            const int dx = q.x - state.p_last.x;
            res.state.label_last = circular_shift(state.label_last, dy, dx);
            res.state.pred_last = circular_shift(state.pred_last, dy, dx);
            res.state.p_last = q;
        }
    }

    Tensor2 windowed = apply_window_penalty(heat_sel, outs.size, state.box.w / stride,
                                            state.box.h / stride, cfg);
    PeakLocation peak = topk_peaks(windowed, 1)[0];

    BoundingBox local = decode_box(outs, peak, stride);
    res.box = BoundingBox{geom.origin_x + local.cx, geom.origin_y + local.cy, local.w, local.h};
    res.confidence = heat_sel.at(peak.y, peak.x);
    res.state.box = res.box;

    if (cfg.refresh == RefreshPolicy::always) {
        res.state.pred_last = heat_sel;
        res.state.p_last = topk_peaks(heat_sel, 1)[0];
        // a wild offset prediction could leave the grid; clamp before labeling
        auto clamp_center = [&](double v, int n) {
            return std::clamp(v, 0.0, static_cast<double>(n) * stride - 1e-9);
        };
        BoundingBox local_pred{clamp_center(local.cx, heat_sel.w), clamp_center(local.cy, heat_sel.h),
                               res.box.w, res.box.h};
        Labels labels = make_labels(local_pred, heat_sel.h, heat_sel.w, stride);
        res.state.label_last = labels.heat;
    }

    if (debug) {
        debug->heat_raw = outs.heat;
        debug->heat_selected = heat_sel;
        debug->heat_windowed = windowed;
        debug->resp_origin_x = geom.origin_x;
        debug->resp_origin_y = geom.origin_y;
    }
    return res;
}

}  // namespace stm
