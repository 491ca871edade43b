#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "stm/backbone.hpp"
#include "stm/head.hpp"
#include "stm/svc.hpp"

namespace stm {

enum class CorrMode { dw, svc };

CorrMode corr_mode_from_string(const std::string& s);
std::string to_string(CorrMode m);

// Geometry and wiring of one trained model.
struct ModelConfig {
    int channels = 16;
    int template_cells = 8;
    int search_cells = 16;
    int reduction = 4;
    bool pixel_mode = false;
    CorrMode corr = CorrMode::svc;
};

struct ModelParams {
    ModelConfig cfg;
    BackboneParams backbone;  // populated only in pixel mode
    SvcParams svc;
    HeadParams head;

    int stride() const { return cfg.pixel_mode ? backbone.total_stride() : 1; }
    int resp_cells() const { return cfg.search_cells - cfg.template_cells + 1; }
};

ModelParams make_model_params(const ModelConfig& cfg, uint64_t seed);

// Zeroed copy with identical bank shapes, used as a gradient accumulator.
ModelParams grads_like(const ModelParams& p);

// Visits every parameter bank in a fixed order. is_backbone marks banks
// covered by the freeze mask.
void for_each_bank(ModelParams& p,
                   const std::function<void(const std::string&, KernelBank&, bool)>& fn);
void for_each_bank(const ModelParams& p,
                   const std::function<void(const std::string&, const KernelBank&, bool)>& fn);

// Directory layout: manifest.json plus one ST1 pair (weights, bias) per bank.
void save_params(const ModelParams& p, const std::string& dir);
ModelParams load_params(const std::string& dir);

}  // namespace stm
