#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stm/train.hpp"

namespace stm {

// Desk-scale ablation grid: {dw, svc} correlation x {off, on} temporal module,
// every cell trained separately (the temporal loss is part of the module) and
// evaluated on one shared scenario set.
struct AblationConfig {
    int scenarios = 200;
    uint64_t scenario_seed_base = 0;
    int train_sequences = 16;
    uint64_t train_seed_base = 5000;
    int train_steps = 600;
    int batch = 8;
    int channels = 8;
    int template_cells = 4;
    int search_cells = 12;
    double window_influence = 0.2;
    int threads = 1;
    // cells to evaluate, parsed from "dw,svc x arm,noarm"
    std::vector<std::pair<CorrMode, bool>> cells = {
        {CorrMode::dw, false}, {CorrMode::dw, true}, {CorrMode::svc, false},
        {CorrMode::svc, true}};
};

std::vector<std::pair<CorrMode, bool>> parse_ablation_cells(const std::string& spec);

// The shared evaluation scenarios: distractor capture pulses at descending
// signature overlap (1.0, 0.9, 0.8, 0.7 cycling by index).
ScenarioConfig ablation_scenario(int index, uint64_t seed_base, int channels);

// Training sequences with mixed occlusion/pulse events.
std::vector<SyntheticSequence> ablation_train_set(int count, uint64_t seed_base, int channels);

struct AblationCell {
    CorrMode corr = CorrMode::dw;
    bool arm = false;
    int total_failures = 0;
    double mean_iou = 0.0;
    double mean_center_err = 0.0;
    std::vector<int> failures;  // per scenario
};

struct AblationResult {
    std::vector<AblationCell> cells;
    // one-sided sign-test p values for the stated orderings; -1 when the
    // required cells were not part of the run
    double p_svc_arm_lt_svc = -1.0;
    double p_svc_lt_dw = -1.0;
    double p_dw_arm_lt_dw = -1.0;
    double p_svc_arm_lt_dw = -1.0;
};

AblationResult run_ablation(const AblationConfig& cfg,
                            const std::function<void(const std::string&)>& log = nullptr);

}  // namespace stm
