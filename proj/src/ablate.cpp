#include "stm/ablate.hpp"

#include <algorithm>

namespace stm {

std::vector<std::pair<CorrMode, bool>> parse_ablation_cells(const std::string& spec) {
    const size_t cross = spec.find(" x ");
    if (cross == std::string::npos)
        throw ConfigError("ablation cells: expected '<corr,...> x <arm,...>', got '" + spec + "'");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        size_t start = 0;
        while (start <= s.size()) {
            size_t comma = s.find(',', start);
            if (comma == std::string::npos) comma = s.size();
            std::string tok = s.substr(start, comma - start);
            if (!tok.empty()) out.push_back(tok);
            start = comma + 1;
        }
        return out;
    };
    std::vector<std::pair<CorrMode, bool>> cells;
    for (const std::string& corr : split(spec.substr(0, cross))) {
        for (const std::string& arm : split(spec.substr(cross + 3))) {
            bool arm_on;
            if (arm == "arm") arm_on = true;
            else if (arm == "noarm") arm_on = false;
            else throw ConfigError("ablation cells: unknown temporal mode '" + arm + "'");
            cells.emplace_back(corr_mode_from_string(corr), arm_on);
        }
    }
    return cells;
}

ScenarioConfig ablation_scenario(int index, uint64_t seed_base, int channels) {
    ScenarioConfig c;
    c.frames = 40;
    c.grid = 22;
    c.channels = channels;
    c.distractors = 2;
    c.noise = 0.04;
    c.motion.step_sigma = 0.55;
    c.seed = seed_base + static_cast<uint64_t>(index);
    switch (index % 4) {
        case 0:  // channel-identical capture pulse
            c.overlap = 1.0;
            c.distractor_amp = 1.15;
            c.flicker_frame = 12 + (index % 5) * 4;
            c.flicker_len = 6;
            c.flicker_amp = 1.8;
            break;
        case 1:  // barely separable capture pulse
            c.overlap = 0.9;
            c.distractor_amp = 1.15;
            c.flicker_frame = 10 + (index % 6) * 4;
            c.flicker_len = 7;
            c.flicker_amp = 2.2;
            break;
        case 2:  // separable capture pulse
            c.overlap = 0.8;
            c.distractor_amp = 1.15;
            c.flicker_frame = 10 + (index % 6) * 4;
            c.flicker_len = 7;
            c.flicker_amp = 2.4;
            break;
        default:  // moderately separable capture pulse
            c.overlap = 0.7;
            c.distractor_amp = 1.1;
            c.flicker_frame = 11 + (index % 7) * 3;
            c.flicker_len = 6;
            c.flicker_amp = 2.0;
            break;
    }
    return c;
}

std::vector<SyntheticSequence> ablation_train_set(int count, uint64_t seed_base, int channels) {
    std::vector<SyntheticSequence> out;
    out.reserve(count);
    for (int i = 0; i < count; i++) {
        ScenarioConfig c;
        c.frames = 25;
        c.grid = 24;
        c.channels = channels;
        c.distractors = 2;
        c.overlap = 0.5 + 0.4 * ((i * 7) % 5) / 4.0;
        c.noise = 0.03;
        c.motion.step_sigma = 0.5;
        if (i % 3 == 1) c.occlusions = {{10, 13, 0.15}};
        if (i % 3 == 2) {
            c.flicker_frame = 12;
            c.flicker_len = 3;
            c.flicker_amp = 0.8;
        }
        c.seed = seed_base + i;
        out.push_back(gen_sequence(c));
    }
    return out;
}

AblationResult run_ablation(const AblationConfig& cfg,
                            const std::function<void(const std::string&)>& log) {
    auto say = [&](const std::string& msg) {
        if (log) log(msg);
    };

    auto train_data = ablation_train_set(cfg.train_sequences, cfg.train_seed_base, cfg.channels);

    std::vector<ScenarioConfig> scenarios;
    scenarios.reserve(cfg.scenarios);
    for (int s = 0; s < cfg.scenarios; s++)
        scenarios.push_back(ablation_scenario(s, cfg.scenario_seed_base, cfg.channels));

    AblationResult result;
    for (const auto& [corr, arm_on] : cfg.cells) {
        ModelConfig mc;
        mc.channels = cfg.channels;
        mc.template_cells = cfg.template_cells;
        mc.search_cells = cfg.search_cells;
        mc.reduction = 4;
        mc.corr = corr;
        // the two correlation modes start from their own seeds, the temporal
        // cells differ only in the training objective
        ModelParams params = make_model_params(mc, 100 + (corr == CorrMode::svc ? 1 : 0));

        OptimConfig oc;
        oc.total_steps = cfg.train_steps;
        oc.batch = cfg.batch;
        oc.warmup_steps = cfg.train_steps / 4;
        oc.decay_steps = cfg.train_steps;
        oc.lambda_arm = arm_on ? 0.5 : 0.0;
        auto curve = train(train_data, params, oc, 1000 + (corr == CorrMode::svc ? 1 : 0));
        say("trained " + to_string(corr) + (arm_on ? "+arm" : "") + ": loss " +
            std::to_string(curve.front().loss.total) + " -> " +
            std::to_string(curve.back().loss.total));

        TrackConfig tc;
        tc.arm = arm_on;
        tc.window_influence = cfg.window_influence;
        BenchmarkResult bench = run_benchmark(scenarios, params, tc, cfg.threads);

        AblationCell cell;
        cell.corr = corr;
        cell.arm = arm_on;
        cell.total_failures = bench.total_failures;
        cell.mean_iou = bench.mean_iou;
        cell.mean_center_err = bench.mean_center_err;
        for (const SequenceMetrics& m : bench.per_sequence) cell.failures.push_back(m.failures);
        result.cells.push_back(std::move(cell));
        say("evaluated " + to_string(corr) + (arm_on ? "+arm" : "") + ": failures " +
            std::to_string(bench.total_failures));
    }

    auto find = [&](CorrMode corr, bool arm_on) -> const AblationCell* {
        for (const AblationCell& c : result.cells)
            if (c.corr == corr && c.arm == arm_on) return &c;
        return nullptr;
    };
    const AblationCell* dw = find(CorrMode::dw, false);
    const AblationCell* dw_arm = find(CorrMode::dw, true);
    const AblationCell* svc = find(CorrMode::svc, false);
    const AblationCell* svc_arm = find(CorrMode::svc, true);
    if (svc_arm && svc) result.p_svc_arm_lt_svc = sign_test_p(svc_arm->failures, svc->failures);
    if (svc && dw) result.p_svc_lt_dw = sign_test_p(svc->failures, dw->failures);
    if (dw_arm && dw) result.p_dw_arm_lt_dw = sign_test_p(dw_arm->failures, dw->failures);
    if (svc_arm && dw) result.p_svc_arm_lt_dw = sign_test_p(svc_arm->failures, dw->failures);
    return result;
}

}  // namespace stm
