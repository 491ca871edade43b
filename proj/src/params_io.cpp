#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stm/params.hpp"
#include "stm/rng.hpp"

namespace stm {

namespace fs = std::filesystem;
using nlohmann::json;

CorrMode corr_mode_from_string(const std::string& s) {
    if (s == "dw") return CorrMode::dw;
    if (s == "svc") return CorrMode::svc;
    throw ConfigError("unknown correlation mode '" + s + "' (expected dw or svc)");
}

std::string to_string(CorrMode m) { return m == CorrMode::dw ? "dw" : "svc"; }

ModelParams make_model_params(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.template_cells < 1 || cfg.search_cells <= cfg.template_cells)
        throw ConfigError("model: search_cells must exceed template_cells");
    ModelParams p;
    p.cfg = cfg;
    if (cfg.pixel_mode) p.backbone = make_backbone_params(1, cfg.channels, seed * 3 + 1);
    p.svc = make_svc_params(cfg.channels, cfg.reduction, seed * 3 + 2);
    p.head = make_head_params(cfg.channels, seed * 3 + 3);
    return p;
}

ModelParams grads_like(const ModelParams& p) {
    ModelParams g;
    g.cfg = p.cfg;
    g.backbone = p.backbone;
    for (BackboneLayer& l : g.backbone.layers) {
        std::fill(l.bank.weights.begin(), l.bank.weights.end(), 0.0);
        std::fill(l.bank.bias.begin(), l.bank.bias.end(), 0.0);
    }
    g.svc = zeros_like(p.svc);
    g.head = zeros_like(p.head);
    return g;
}

void for_each_bank(ModelParams& p,
                   const std::function<void(const std::string&, KernelBank&, bool)>& fn) {
    for (size_t i = 0; i < p.backbone.layers.size(); i++)
        fn("backbone" + std::to_string(i), p.backbone.layers[i].bank, true);
    fn("svc_phi1", p.svc.ch.phi1, false);
    fn("svc_fc1", p.svc.ch.fc1, false);
    fn("svc_fc2", p.svc.ch.fc2, false);
    fn("svc_phi2", p.svc.phi2, false);
    fn("head_trunk", p.head.trunk, false);
    fn("head_heat", p.head.heat, false);
    fn("head_offset", p.head.offset, false);
    fn("head_size", p.head.size, false);
}

void for_each_bank(const ModelParams& p,
                   const std::function<void(const std::string&, const KernelBank&, bool)>& fn) {
    for_each_bank(const_cast<ModelParams&>(p),
                  [&](const std::string& name, KernelBank& k, bool bb) { fn(name, k, bb); });
}

void save_params(const ModelParams& p, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "stmtrack-params";
    manifest["version"] = 1;
    manifest["channels"] = p.cfg.channels;
    manifest["template_cells"] = p.cfg.template_cells;
    manifest["search_cells"] = p.cfg.search_cells;
    manifest["reduction"] = p.cfg.reduction;
    manifest["pixel_mode"] = p.cfg.pixel_mode;
    manifest["corr"] = to_string(p.cfg.corr);

    json banks = json::array();
    for_each_bank(p, [&](const std::string& name, const KernelBank& k, bool) {
        json b;
        b["name"] = name;
        b["out_c"] = k.out_c;
        b["in_c"] = k.in_c;
        b["kh"] = k.kh;
        b["kw"] = k.kw;
        banks.push_back(b);

        Tensor3 w(k.out_c, k.in_c, k.kh * k.kw);
        w.data = k.weights;
        write_st1((fs::path(dir) / (name + "_w.st1")).string(), w);
        Tensor3 bias(1, 1, k.out_c);
        bias.data = k.bias;
        write_st1((fs::path(dir) / (name + "_b.st1")).string(), bias);
    });
    manifest["banks"] = banks;

    json strides = json::array();
    for (const BackboneLayer& l : p.backbone.layers) strides.push_back(l.stride);
    manifest["backbone_strides"] = strides;

    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

ModelParams load_params(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("missing params manifest: " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("bad manifest " + manifest_path.string() + ": " + e.what());
    }

    ModelConfig cfg;
    cfg.channels = manifest.at("channels").get<int>();
    cfg.template_cells = manifest.at("template_cells").get<int>();
    cfg.search_cells = manifest.at("search_cells").get<int>();
    cfg.reduction = manifest.at("reduction").get<int>();
    cfg.pixel_mode = manifest.at("pixel_mode").get<bool>();
    cfg.corr = corr_mode_from_string(manifest.at("corr").get<std::string>());

    ModelParams p = make_model_params(cfg, 0);
    if (cfg.pixel_mode) {
        const auto strides = manifest.at("backbone_strides");
        if (strides.size() != p.backbone.layers.size())
            throw DataError("manifest backbone layout mismatch in " + dir);
        for (size_t i = 0; i < p.backbone.layers.size(); i++)
            p.backbone.layers[i].stride = strides[i].get<int>();
    }

    for_each_bank(p, [&](const std::string& name, KernelBank& k, bool) {
        Tensor3 w = read_st1((fs::path(dir) / (name + "_w.st1")).string());
        Tensor3 b = read_st1((fs::path(dir) / (name + "_b.st1")).string());
        if (w.h != k.out_c || w.w != k.in_c || w.c != k.kh * k.kw || b.c != k.out_c)
            throw DataError("bank " + name + " in " + dir + " does not match the manifest");
        k.weights = std::move(w.data);
        k.bias = std::move(b.data);
    });
    return p;
}

}  // namespace stm
