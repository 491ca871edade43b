// Command-line front end: scenario generation, training, tracking,
// evaluation, gradient verification and the ablation grid.

#include <cstdio>
#include <filesystem>
#include <thread>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stm/ablate.hpp"
#include "stm/gradcheck.hpp"
#include "stm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stm;

namespace {

// defaults < config-file section < command-line flags, with unknown config
// keys rejected and the effective values echoed for reproducibility
class Layered {
public:
    Layered(const json& section, std::string name) : section_(section), name_(std::move(name)) {}

    template <typename T>
    void layer(const CLI::Option* opt, const std::string& key, T& value) {
        known_.push_back(key);
        if (opt->count() == 0 && section_.contains(key)) {
            try {
                value = section_.at(key).get<T>();
            } catch (const json::exception&) {
                throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
            }
        }
        resolved_[key] = value;
    }

    void reject_unknown() const {
        for (auto it = section_.begin(); it != section_.end(); ++it) {
            if (std::find(known_.begin(), known_.end(), it.key()) == known_.end())
                throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
        }
    }

    const json& resolved() const { return resolved_; }

    void echo(const std::string& out_path) const {
        json doc;
        doc["command"] = name_;
        doc["config"] = resolved_;
        std::cerr << doc.dump() << "\n";
        if (!out_path.empty()) {
            std::ofstream out(out_path);
            if (out) out << doc.dump(2) << "\n";
        }
    }

private:
    json section_;
    std::string name_;
    std::vector<std::string> known_;
    json resolved_;
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("bad config file " + path + ": " + e.what());
    }
    static const std::vector<std::string> sections = {"gen",  "train",     "track",
                                                      "eval", "gradcheck", "ablate"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (std::find(sections.begin(), sections.end(), it.key()) == sections.end())
            throw ConfigError("unknown config section '" + it.key() + "'");
    return doc;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    std::string out;
    uint64_t seed = 0;
    int count = 1;
    int frames = 40, grid = 24, channels = 16, distractors = 2;
    double overlap = 0.7, noise = 0.02, target_size = 3.0;
    double target_amp = 1.0, distractor_amp = 1.0, step_sigma = 0.6;
    std::string motion = "random_walk";
    int jump_frame = -1;
    double jump_dy = 0.0, jump_dx = 0.0;
    std::vector<std::string> occlude;
    int flicker_frame = -1, flicker_len = 3;
    double flicker_amp = 0.0;
    bool pixel_mode = false;
};

ScenarioConfig to_scenario(const GenArgs& a, uint64_t seed) {
    ScenarioConfig c;
    c.frames = a.frames;
    c.grid = a.grid;
    c.channels = a.channels;
    c.distractors = a.distractors;
    c.overlap = a.overlap;
    c.noise = a.noise;
    c.target_size = a.target_size;
    c.target_amp = a.target_amp;
    c.distractor_amp = a.distractor_amp;
    c.motion.kind = a.motion;
    c.motion.step_sigma = a.step_sigma;
    c.motion.jump_frame = a.jump_frame;
    c.motion.jump_dy = a.jump_dy;
    c.motion.jump_dx = a.jump_dx;
    c.flicker_frame = a.flicker_frame;
    c.flicker_len = a.flicker_len;
    c.flicker_amp = a.flicker_amp;
    c.pixel_mode = a.pixel_mode;
    c.seed = seed;
    for (const std::string& spec : a.occlude) {
        OcclusionWindow w;
        if (std::sscanf(spec.c_str(), "%d:%d:%lf", &w.first, &w.last, &w.depth) != 3)
            throw ConfigError("bad occlusion spec '" + spec + "', expected first:last:depth");
        c.occlusions.push_back(w);
    }
    return c;
}

json scenario_json(const ScenarioConfig& c) {
    json j;
    j["frames"] = c.frames;
    j["grid"] = c.grid;
    j["channels"] = c.channels;
    j["distractors"] = c.distractors;
    j["overlap"] = c.overlap;
    j["noise"] = c.noise;
    j["target_size"] = c.target_size;
    j["target_amp"] = c.target_amp;
    j["distractor_amp"] = c.distractor_amp;
    j["motion"] = c.motion.kind;
    j["step_sigma"] = c.motion.step_sigma;
    j["jump_frame"] = c.motion.jump_frame;
    j["jump_dy"] = c.motion.jump_dy;
    j["jump_dx"] = c.motion.jump_dx;
    j["flicker_frame"] = c.flicker_frame;
    j["flicker_len"] = c.flicker_len;
    j["flicker_amp"] = c.flicker_amp;
    j["pixel_mode"] = c.pixel_mode;
    j["seed"] = c.seed;
    json occ = json::array();
    for (const OcclusionWindow& w : c.occlusions)
        occ.push_back({{"first", w.first}, {"last", w.last}, {"depth", w.depth}});
    j["occlusions"] = occ;
    return j;
}

ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig c;
    c.frames = j.at("frames").get<int>();
    c.grid = j.at("grid").get<int>();
    c.channels = j.at("channels").get<int>();
    c.distractors = j.at("distractors").get<int>();
    c.overlap = j.at("overlap").get<double>();
    c.noise = j.at("noise").get<double>();
    c.target_size = j.at("target_size").get<double>();
    c.target_amp = j.at("target_amp").get<double>();
    c.distractor_amp = j.at("distractor_amp").get<double>();
    c.motion.kind = j.at("motion").get<std::string>();
    c.motion.step_sigma = j.at("step_sigma").get<double>();
    c.motion.jump_frame = j.at("jump_frame").get<int>();
    c.motion.jump_dy = j.at("jump_dy").get<double>();
    c.motion.jump_dx = j.at("jump_dx").get<double>();
    c.flicker_frame = j.at("flicker_frame").get<int>();
    c.flicker_len = j.at("flicker_len").get<int>();
    c.flicker_amp = j.at("flicker_amp").get<double>();
    c.pixel_mode = j.value("pixel_mode", false);
    c.seed = j.at("seed").get<uint64_t>();
    for (const json& w : j.at("occlusions"))
        c.occlusions.push_back({w.at("first").get<int>(), w.at("last").get<int>(),
                                w.at("depth").get<double>()});
    return c;
}

void write_sequence_dir(const SyntheticSequence& seq, const fs::path& dir) {
    fs::create_directories(dir / "frames");
    json desc;
    desc["format"] = "stmtrack-seq";
    desc["version"] = 1;
    desc["config"] = scenario_json(seq.cfg);
    desc["pixel_mode"] = seq.pixel_mode;
    json frames = json::array();
    json boxes = json::array();
    for (size_t t = 0; t < seq.frames.size(); t++) {
        char name[40];
        std::snprintf(name, sizeof(name), "frames/frame_%04zu.st1", t);
        write_st1((dir / name).string(), seq.frames[t]);
        frames.push_back(name);
        boxes.push_back({seq.boxes[t].cx, seq.boxes[t].cy, seq.boxes[t].w, seq.boxes[t].h});
    }
    desc["frames"] = frames;
    desc["boxes"] = boxes;
    std::ofstream out(dir / "descriptor.json");
    if (!out) throw DataError("cannot write descriptor in " + dir.string());
    out << desc.dump(2) << "\n";
}

SyntheticSequence load_sequence_dir(const fs::path& descriptor_path) {
    std::ifstream in(descriptor_path);
    if (!in) throw DataError("missing sequence descriptor: " + descriptor_path.string());
    json desc;
    try {
        in >> desc;
    } catch (const json::exception& e) {
        throw DataError("bad descriptor " + descriptor_path.string() + ": " + e.what());
    }
    if (desc.value("format", "") != "stmtrack-seq")
        throw DataError("not a sequence descriptor: " + descriptor_path.string());
    SyntheticSequence seq;
    seq.cfg = scenario_from_json(desc.at("config"));
    seq.pixel_mode = desc.value("pixel_mode", false);
    const fs::path dir = descriptor_path.parent_path();
    for (const json& rel : desc.at("frames"))
        seq.frames.push_back(read_st1((dir / rel.get<std::string>()).string()));
    for (const json& b : desc.at("boxes"))
        seq.boxes.push_back(BoundingBox{b.at(0).get<double>(), b.at(1).get<double>(),
                                        b.at(2).get<double>(), b.at(3).get<double>()});
    if (seq.boxes.size() != seq.frames.size())
        throw DataError("descriptor frame/box count mismatch: " + descriptor_path.string());
    return seq;
}

std::vector<fs::path> find_sequence_dirs(const std::string& data_dir) {
    std::vector<fs::path> descriptors;
    if (fs::exists(fs::path(data_dir) / "descriptor.json")) {
        descriptors.push_back(fs::path(data_dir) / "descriptor.json");
        return descriptors;
    }
    if (!fs::is_directory(data_dir)) throw DataError("no such data directory: " + data_dir);
    for (const auto& entry : fs::directory_iterator(data_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "descriptor.json"))
            descriptors.push_back(entry.path() / "descriptor.json");
    std::sort(descriptors.begin(), descriptors.end());
    if (descriptors.empty()) throw DataError("no sequence descriptors under " + data_dir);
    return descriptors;
}

int run_gen(const GenArgs& a, Layered& layered) {
    fs::create_directories(a.out);
    layered.echo((fs::path(a.out) / "resolved_config.json").string());
    for (int i = 0; i < a.count; i++) {
        SyntheticSequence seq = gen_sequence(to_scenario(a, a.seed + i));
        char name[32];
        std::snprintf(name, sizeof(name), "seq_%04d", i);
        write_sequence_dir(seq, fs::path(a.out) / name);
    }
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data, out;
    uint64_t seed = 0;
    int steps = 200, batch = 8;
    std::string corr = "svc";
    int channels = 16, template_cells = 8, search_cells = 16, reduction = 4;
    bool pixel_mode = false;
    double lambda_arm = 0.5, lambda_off = 1.0, lambda_size = 0.1;
    double lr_start = 0.001, lr_peak = 0.005, lr_end = 0.0005;
    int warmup = 500, decay = 1500, freeze_steps = 0;
    double momentum = 0.9, jitter = 2.0, label_peak_frac = 0.1;
};

int run_train(const TrainArgs& a, Layered& layered) {
    std::vector<SyntheticSequence> data;
    for (const fs::path& p : find_sequence_dirs(a.data)) data.push_back(load_sequence_dir(p));

    ModelConfig mc;
    mc.channels = a.channels;
    mc.template_cells = a.template_cells;
    mc.search_cells = a.search_cells;
    mc.reduction = a.reduction;
    mc.pixel_mode = a.pixel_mode;
    mc.corr = corr_mode_from_string(a.corr);
    ModelParams params = make_model_params(mc, a.seed);

    OptimConfig oc;
    oc.total_steps = a.steps;
    oc.batch = a.batch;
    oc.lambda_arm = a.lambda_arm;
    oc.lambda_off = a.lambda_off;
    oc.lambda_size = a.lambda_size;
    oc.lr_start = a.lr_start;
    oc.lr_peak = a.lr_peak;
    oc.lr_end = a.lr_end;
    oc.warmup_steps = a.warmup;
    oc.decay_steps = a.decay;
    oc.freeze_backbone_steps = a.freeze_steps;
    oc.momentum = a.momentum;
    oc.jitter = a.jitter;
    oc.label_peak_frac = a.label_peak_frac;

    std::vector<LossRow> curve = train(data, params, oc, a.seed);

    save_params(params, a.out);
    layered.echo((fs::path(a.out) / "resolved_config.json").string());
    std::ofstream csv(fs::path(a.out) / "loss.csv");
    csv << "step,L_cls,L_off,L_size,L_arm,L,lr\n";
    for (const LossRow& row : curve)
        csv << row.step << "," << fmt(row.loss.cls) << "," << fmt(row.loss.off) << ","
            << fmt(row.loss.size) << "," << fmt(row.loss.arm) << "," << fmt(row.loss.total) << ","
            << fmt(row.lr) << "\n";
    return 0;
}

// ---------------------------------------------------------------- track

struct TrackArgs {
    std::string seq, params, out;
    bool no_arm = false;
    int k = 3;
    double window_influence = 0.35, penalty_k = 0.04;
    std::string refresh = "literal";
    std::string precision = "double";
    double arm_floor = 0.25, arm_margin = 0.8, arm_eps = 1e-8;
    int arm_radius = 2;
    bool no_arm_smooth = false;
    std::string dump_heatmaps, scores_csv;
};

TrackConfig to_track_config(const TrackArgs& a) {
    TrackConfig tc;
    tc.arm = !a.no_arm;
    tc.k = a.k;
    tc.window_influence = a.window_influence;
    tc.penalty_k = a.penalty_k;
    tc.refresh = refresh_from_string(a.refresh);
    if (a.precision == "double") tc.precision = Precision::f64;
    else if (a.precision == "single") tc.precision = Precision::f32;
    else throw ConfigError("precision must be double or single");
    tc.arm_floor = a.arm_floor;
    tc.arm_margin = a.arm_margin;
    tc.arm_eps = a.arm_eps;
    tc.arm_radius = a.arm_radius;
    tc.arm_smooth = !a.no_arm_smooth;
    return tc;
}

int run_track(const TrackArgs& a, Layered& layered) {
    SyntheticSequence seq = load_sequence_dir(a.seq);
    ModelParams params = load_params(a.params);
    TrackConfig tc = to_track_config(a);

    layered.echo(a.out + ".config.json");
    if (!a.dump_heatmaps.empty()) fs::create_directories(a.dump_heatmaps);

    std::ofstream boxes(a.out);
    if (!boxes) throw DataError("cannot write " + a.out);
    boxes << "frame,cx,cy,w,h,confidence,k_hat\n";

    std::ofstream scores;
    if (!a.scores_csv.empty()) {
        scores.open(a.scores_csv);
        scores << "frame,k,q_y,q_x,L_arm_k,chosen\n";
    }

    auto frame_input = [&](int t) {
        return seq.pixel_mode ? FrameInput::from_pixels(seq.frames[t], t)
                              : FrameInput::from_features(seq.frames[t], t);
    };

    TrackerState state = tracker_init(frame_input(0), seq.boxes[0], params, tc);
    boxes << 0 << "," << fmt(seq.boxes[0].cx) << "," << fmt(seq.boxes[0].cy) << ","
          << fmt(seq.boxes[0].w) << "," << fmt(seq.boxes[0].h) << "," << fmt(1.0) << ",1\n";

    for (int t = 1; t < static_cast<int>(seq.frames.size()); t++) {
        StepDebug debug;
        StepResult res = tracker_step(state, frame_input(t), params, tc, &debug);
        boxes << t << "," << fmt(res.box.cx) << "," << fmt(res.box.cy) << "," << fmt(res.box.w)
              << "," << fmt(res.box.h) << "," << fmt(res.confidence) << "," << res.k_hat << "\n";
        if (scores.is_open())
            for (size_t k = 0; k < debug.scores.size(); k++)
                scores << t << "," << k + 1 << "," << debug.scores[k].q.y << ","
                       << debug.scores[k].q.x << "," << fmt(debug.scores[k].score) << ","
                       << (static_cast<int>(k) + 1 == res.k_hat ? 1 : 0) << "\n";
        if (!a.dump_heatmaps.empty()) {
            char name[40];
            std::snprintf(name, sizeof(name), "heat_%04d.pgm", t);
            write_pgm((fs::path(a.dump_heatmaps) / name).string(), debug.heat_selected);
        }
        state = res.state;
    }
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string data, params, out, summary, frames_csv;
    TrackArgs track;  // tracker flags shared with `track`
    int threads = 0;  // 0: use STM_THREADS or 1
};

int run_eval(const EvalArgs& a, Layered& layered) {
    ModelParams params = load_params(a.params);
    TrackConfig tc = to_track_config(a.track);

    layered.echo(a.out + ".config.json");

    std::vector<fs::path> dirs = find_sequence_dirs(a.data);
    std::vector<SyntheticSequence> seqs;
    for (const fs::path& p : dirs) seqs.push_back(load_sequence_dir(p));

    // evaluate via the shared per-sequence path, in deterministic order;
    // STM_THREADS (or --threads) caps harness parallelism
    std::vector<SequenceMetrics> metrics(seqs.size());
    const int n_threads = std::max(
        1, std::min<int>(a.threads > 0 ? a.threads : harness_threads(1),
                         static_cast<int>(seqs.size())));
    auto worker = [&](size_t begin) {
        for (size_t i = begin; i < seqs.size(); i += n_threads)
            metrics[i] = run_sequence(seqs[i], params, tc);
    };
    if (n_threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; i++) pool.emplace_back(worker, i);
        for (std::thread& th : pool) th.join();
    }

    std::ofstream out(a.out);
    if (!out) throw DataError("cannot write " + a.out);
    out << "scenario,frames,mean_iou,mean_center_err,failures\n";
    double iou_sum = 0.0, err_sum = 0.0;
    int failures = 0;
    for (size_t i = 0; i < seqs.size(); i++) {
        out << dirs[i].parent_path().filename().string() << "," << seqs[i].frames.size() << ","
            << fmt(metrics[i].mean_iou) << "," << fmt(metrics[i].mean_center_err) << ","
            << metrics[i].failures << "\n";
        iou_sum += metrics[i].mean_iou;
        err_sum += metrics[i].mean_center_err;
        failures += metrics[i].failures;
    }
    if (!a.summary.empty()) {
        std::ofstream sum(a.summary);
        sum << "sequences,mean_iou,mean_center_err,total_failures\n";
        sum << seqs.size() << "," << fmt(iou_sum / seqs.size()) << ","
            << fmt(err_sum / seqs.size()) << "," << failures << "\n";
    }
    if (!a.frames_csv.empty()) {
        std::ofstream fr(a.frames_csv);
        fr << "scenario,frame,phase,gt_cx,gt_cy,gt_w,gt_h,pred_cx,pred_cy,pred_w,pred_h,iou,"
              "center_err,confidence,k_hat\n";
        for (size_t i = 0; i < seqs.size(); i++)
            for (const FrameRecord& r : metrics[i].records)
                fr << dirs[i].parent_path().filename().string() << "," << r.frame << ","
                   << r.phase << "," << fmt(r.gt.cx) << "," << fmt(r.gt.cy) << "," << fmt(r.gt.w)
                   << "," << fmt(r.gt.h) << "," << fmt(r.pred.cx) << "," << fmt(r.pred.cy) << ","
                   << fmt(r.pred.w) << "," << fmt(r.pred.h) << "," << fmt(r.iou) << ","
                   << fmt(r.center_err) << "," << fmt(r.confidence) << "," << r.k_hat << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
    std::string scope = "all";
    uint64_t seed = 0;
    double step = 1e-5;
    int max_coords = 200;
};

int run_gradcheck(const GradArgs& a, Layered& layered) {
    layered.echo("");
    std::vector<GradCheckReport> reports = grad_check(a.scope, a.seed, a.step, a.max_coords);
    bool ok = true;
    for (const GradCheckReport& r : reports) {
        std::printf("%-9s max_rel_err=%.3e coords=%d %s\n", r.scope.c_str(), r.max_rel_err,
                    r.coords, r.max_rel_err <= 1e-4 ? "ok" : "FAIL");
        ok = ok && r.max_rel_err <= 1e-4;
    }
    return ok ? 0 : 2;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
    std::string cells = "dw,svc x arm,noarm";
    std::string out;
    int scenarios = 200;
    uint64_t seed_base = 0;
    int train_steps = 600, train_sequences = 16;
    int channels = 8, template_cells = 4, search_cells = 12;
    double window_influence = 0.2;
    int threads = 0;
};

int run_ablate(const AblateArgs& a, Layered& layered) {
    AblationConfig cfg;
    cfg.cells = parse_ablation_cells(a.cells);
    cfg.scenarios = a.scenarios;
    cfg.scenario_seed_base = a.seed_base;
    cfg.train_steps = a.train_steps;
    cfg.train_sequences = a.train_sequences;
    cfg.channels = a.channels;
    cfg.template_cells = a.template_cells;
    cfg.search_cells = a.search_cells;
    cfg.window_influence = a.window_influence;
    cfg.threads = a.threads > 0 ? a.threads : harness_threads(1);

    layered.echo(a.out + ".config.json");
    AblationResult res =
        run_ablation(cfg, [](const std::string& msg) { std::cerr << msg << "\n"; });

    std::ofstream out(a.out);
    if (!out) throw DataError("cannot write " + a.out);
    out << "corr,arm,sequences,total_failures,mean_iou,mean_center_err\n";
    for (const AblationCell& cell : res.cells)
        out << to_string(cell.corr) << "," << (cell.arm ? "on" : "off") << ","
            << cell.failures.size() << "," << cell.total_failures << "," << fmt(cell.mean_iou)
            << "," << fmt(cell.mean_center_err) << "\n";

    std::ofstream pv(a.out + ".pvalues.csv");
    pv << "comparison,p\n";
    auto emit = [&](const char* name, double p) {
        if (p >= 0.0) {
            pv << name << "," << fmt(p) << "\n";
            std::printf("%s p=%.4f\n", name, p);
        }
    };
    emit("svc+arm<svc", res.p_svc_arm_lt_svc);
    emit("svc<dw", res.p_svc_lt_dw);
    emit("dw+arm<dw", res.p_dw_arm_lt_dw);
    emit("svc+arm<dw", res.p_svc_arm_lt_dw);
    return 0;
}

void add_track_options(CLI::App* cmd, TrackArgs& t, std::vector<std::pair<CLI::Option*,
                       std::function<void(Layered&)>>>& opts) {
    auto bind = [&](CLI::Option* o, auto key, auto* field) {
        opts.emplace_back(o, [o, key, field](Layered& lay) { lay.layer(o, key, *field); });
    };
    bind(cmd->add_flag("--no-arm", t.no_arm, "disable the temporal module"), "no_arm", &t.no_arm);
    bind(cmd->add_option("--k", t.k, "candidate count"), "k", &t.k);
    bind(cmd->add_option("--window-influence", t.window_influence, "cosine window weight"),
         "window_influence", &t.window_influence);
    bind(cmd->add_option("--penalty-k", t.penalty_k, "scale penalty coefficient"), "penalty_k",
         &t.penalty_k);
    bind(cmd->add_option("--refresh", t.refresh, "state refresh policy: literal|always"),
         "refresh", &t.refresh);
    bind(cmd->add_option("--precision", t.precision, "correlation precision: double|single"),
         "precision", &t.precision);
    bind(cmd->add_option("--arm-floor", t.arm_floor, "candidate confidence floor"), "arm_floor",
         &t.arm_floor);
    bind(cmd->add_option("--arm-margin", t.arm_margin, "redirect acceptance margin"),
         "arm_margin", &t.arm_margin);
    bind(cmd->add_option("--arm-radius", t.arm_radius, "redirect radius, cells"), "arm_radius",
         &t.arm_radius);
    bind(cmd->add_option("--arm-eps", t.arm_eps, "score normalization floor"), "arm_eps",
         &t.arm_eps);
    bind(cmd->add_flag("--no-arm-smooth", t.no_arm_smooth, "disable score smoothing"),
         "no_arm_smooth", &t.no_arm_smooth);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stmtrack: spatio-temporal matching tracker workbench"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (defaults < config < flags)");

    using Binder = std::vector<std::pair<CLI::Option*, std::function<void(Layered&)>>>;

    GenArgs gen;
    Binder gen_binds;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate synthetic sequences");
    {
        auto bind = [&](CLI::Option* o, const char* key, auto* field) {
            gen_binds.emplace_back(o, [o, key, field](Layered& l) { l.layer(o, key, *field); });
        };
        bind(gen_cmd->add_option("--out", gen.out, "output directory")->required(), "out",
             &gen.out);
        bind(gen_cmd->add_option("--seed", gen.seed, "base seed"), "seed", &gen.seed);
        bind(gen_cmd->add_option("--count", gen.count, "number of sequences"), "count",
             &gen.count);
        bind(gen_cmd->add_option("--frames", gen.frames, "frames per sequence"), "frames",
             &gen.frames);
        bind(gen_cmd->add_option("--grid", gen.grid, "world grid size, cells"), "grid",
             &gen.grid);
        bind(gen_cmd->add_option("--channels", gen.channels, "feature channels"), "channels",
             &gen.channels);
        bind(gen_cmd->add_option("--distractors", gen.distractors, "distractor count"),
             "distractors", &gen.distractors);
        bind(gen_cmd->add_option("--overlap", gen.overlap, "signature overlap in [0,1]"),
             "overlap", &gen.overlap);
        bind(gen_cmd->add_option("--noise", gen.noise, "additive noise level"), "noise",
             &gen.noise);
        bind(gen_cmd->add_option("--target-size", gen.target_size, "target box side, cells"),
             "target_size", &gen.target_size);
        bind(gen_cmd->add_option("--target-amp", gen.target_amp, "target amplitude"),
             "target_amp", &gen.target_amp);
        bind(gen_cmd->add_option("--distractor-amp", gen.distractor_amp, "distractor amplitude"),
             "distractor_amp", &gen.distractor_amp);
        bind(gen_cmd->add_option("--motion", gen.motion,
                                 "motion model: random_walk|linear|abrupt_jump"),
             "motion", &gen.motion);
        bind(gen_cmd->add_option("--step-sigma", gen.step_sigma, "random walk step, cells"),
             "step_sigma", &gen.step_sigma);
        bind(gen_cmd->add_option("--jump-frame", gen.jump_frame, "abrupt jump frame"),
             "jump_frame", &gen.jump_frame);
        bind(gen_cmd->add_option("--jump-dy", gen.jump_dy, "jump offset y"), "jump_dy",
             &gen.jump_dy);
        bind(gen_cmd->add_option("--jump-dx", gen.jump_dx, "jump offset x"), "jump_dx",
             &gen.jump_dx);
        bind(gen_cmd->add_option("--occlude", gen.occlude,
                                 "occlusion window first:last:depth (repeatable)"),
             "occlude", &gen.occlude);
        bind(gen_cmd->add_option("--flicker-frame", gen.flicker_frame, "distractor pulse frame"),
             "flicker_frame", &gen.flicker_frame);
        bind(gen_cmd->add_option("--flicker-len", gen.flicker_len, "pulse length"),
             "flicker_len", &gen.flicker_len);
        bind(gen_cmd->add_option("--flicker-amp", gen.flicker_amp, "pulse amplitude gain"),
             "flicker_amp", &gen.flicker_amp);
        bind(gen_cmd->add_flag("--pixel-mode", gen.pixel_mode, "render pixel frames"),
             "pixel_mode", &gen.pixel_mode);
    }

    TrainArgs tr;
    Binder tr_binds;
    CLI::App* tr_cmd = app.add_subcommand("train", "train a model on generated sequences");
    {
        auto bind = [&](CLI::Option* o, const char* key, auto* field) {
            tr_binds.emplace_back(o, [o, key, field](Layered& l) { l.layer(o, key, *field); });
        };
        bind(tr_cmd->add_option("--data", tr.data, "directory of sequences")->required(), "data",
             &tr.data);
        bind(tr_cmd->add_option("--out", tr.out, "output params directory")->required(), "out",
             &tr.out);
        bind(tr_cmd->add_option("--steps", tr.steps, "gradient steps"), "steps", &tr.steps);
        bind(tr_cmd->add_option("--seed", tr.seed, "training seed"), "seed", &tr.seed);
        bind(tr_cmd->add_option("--batch", tr.batch, "triplets per step"), "batch", &tr.batch);
        bind(tr_cmd->add_option("--corr", tr.corr, "correlation: dw|svc"), "corr", &tr.corr);
        bind(tr_cmd->add_option("--channels", tr.channels, "feature channels"), "channels",
             &tr.channels);
        bind(tr_cmd->add_option("--template-cells", tr.template_cells, "template span, cells"),
             "template_cells", &tr.template_cells);
        bind(tr_cmd->add_option("--search-cells", tr.search_cells, "search span, cells"),
             "search_cells", &tr.search_cells);
        bind(tr_cmd->add_option("--reduction", tr.reduction, "bottleneck reduction"),
             "reduction", &tr.reduction);
        bind(tr_cmd->add_flag("--pixel-mode", tr.pixel_mode, "train the pixel frontend"),
             "pixel_mode", &tr.pixel_mode);
        bind(tr_cmd->add_option("--lambda-arm", tr.lambda_arm, "temporal loss weight"),
             "lambda_arm", &tr.lambda_arm);
        bind(tr_cmd->add_option("--lambda-off", tr.lambda_off, "offset loss weight"),
             "lambda_off", &tr.lambda_off);
        bind(tr_cmd->add_option("--lambda-size", tr.lambda_size, "size loss weight"),
             "lambda_size", &tr.lambda_size);
        bind(tr_cmd->add_option("--lr-start", tr.lr_start, "warmup start rate"), "lr_start",
             &tr.lr_start);
        bind(tr_cmd->add_option("--lr-peak", tr.lr_peak, "post-warmup rate"), "lr_peak",
             &tr.lr_peak);
        bind(tr_cmd->add_option("--lr-end", tr.lr_end, "final decayed rate"), "lr_end",
             &tr.lr_end);
        bind(tr_cmd->add_option("--warmup", tr.warmup, "warmup steps"), "warmup", &tr.warmup);
        bind(tr_cmd->add_option("--decay", tr.decay, "decay steps"), "decay", &tr.decay);
        bind(tr_cmd->add_option("--freeze-steps", tr.freeze_steps, "backbone freeze steps"),
             "freeze_steps", &tr.freeze_steps);
        bind(tr_cmd->add_option("--momentum", tr.momentum, "momentum"), "momentum",
             &tr.momentum);
        bind(tr_cmd->add_option("--jitter", tr.jitter, "window jitter, cells"), "jitter",
             &tr.jitter);
        bind(tr_cmd->add_option("--label-peak-frac", tr.label_peak_frac,
                                "fraction of steps aligning by label peaks"),
             "label_peak_frac", &tr.label_peak_frac);
    }

    TrackArgs tk;
    Binder tk_binds;
    CLI::App* tk_cmd = app.add_subcommand("track", "track one sequence");
    {
        auto bind = [&](CLI::Option* o, const char* key, auto* field) {
            tk_binds.emplace_back(o, [o, key, field](Layered& l) { l.layer(o, key, *field); });
        };
        bind(tk_cmd->add_option("--seq", tk.seq, "sequence descriptor.json")->required(), "seq",
             &tk.seq);
        bind(tk_cmd->add_option("--params", tk.params, "params directory")->required(), "params",
             &tk.params);
        bind(tk_cmd->add_option("--out", tk.out, "boxes csv")->required(), "out", &tk.out);
        bind(tk_cmd->add_option("--dump-heatmaps", tk.dump_heatmaps, "PGM dump directory"),
             "dump_heatmaps", &tk.dump_heatmaps);
        bind(tk_cmd->add_option("--scores-csv", tk.scores_csv, "candidate score log"),
             "scores_csv", &tk.scores_csv);
    }
    add_track_options(tk_cmd, tk, tk_binds);

    EvalArgs ev;
    Binder ev_binds;
    CLI::App* ev_cmd = app.add_subcommand("eval", "evaluate a model on a sequence set");
    {
        auto bind = [&](CLI::Option* o, const char* key, auto* field) {
            ev_binds.emplace_back(o, [o, key, field](Layered& l) { l.layer(o, key, *field); });
        };
        bind(ev_cmd->add_option("--data", ev.data, "directory of sequences")->required(), "data",
             &ev.data);
        bind(ev_cmd->add_option("--params", ev.params, "params directory")->required(), "params",
             &ev.params);
        bind(ev_cmd->add_option("--out", ev.out, "per-sequence metrics csv")->required(), "out",
             &ev.out);
        bind(ev_cmd->add_option("--summary", ev.summary, "summary csv"), "summary", &ev.summary);
        bind(ev_cmd->add_option("--frames-csv", ev.frames_csv, "per-frame records csv"),
             "frames_csv", &ev.frames_csv);
        bind(ev_cmd->add_option("--threads", ev.threads, "harness threads (0: STM_THREADS)"),
             "threads", &ev.threads);
    }
    add_track_options(ev_cmd, ev.track, ev_binds);

    GradArgs gc;
    Binder gc_binds;
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    {
        auto bind = [&](CLI::Option* o, const char* key, auto* field) {
            gc_binds.emplace_back(o, [o, key, field](Layered& l) { l.layer(o, key, *field); });
        };
        bind(gc_cmd->add_option("--scope", gc.scope,
                                "core|svc|head|arm|full|backbone|all"),
             "scope", &gc.scope);
        bind(gc_cmd->add_option("--seed", gc.seed, "scenario seed"), "seed", &gc.seed);
        bind(gc_cmd->add_option("--step", gc.step, "difference step"), "step", &gc.step);
        bind(gc_cmd->add_option("--max-coords", gc.max_coords, "subsample cap per bank"),
             "max_coords", &gc.max_coords);
    }

    AblateArgs ab;
    Binder ab_binds;
    CLI::App* ab_cmd = app.add_subcommand("ablate", "train and evaluate the ablation grid");
    {
        auto bind = [&](CLI::Option* o, const char* key, auto* field) {
            ab_binds.emplace_back(o, [o, key, field](Layered& l) { l.layer(o, key, *field); });
        };
        bind(ab_cmd->add_option("--cells", ab.cells, "grid spec, e.g. 'dw,svc x arm,noarm'"),
             "cells", &ab.cells);
        bind(ab_cmd->add_option("--out", ab.out, "summary csv")->required(), "out", &ab.out);
        bind(ab_cmd->add_option("--scenarios", ab.scenarios, "scenario count"), "scenarios",
             &ab.scenarios);
        bind(ab_cmd->add_option("--seed-base", ab.seed_base, "scenario seed base"), "seed_base",
             &ab.seed_base);
        bind(ab_cmd->add_option("--train-steps", ab.train_steps, "steps per cell"),
             "train_steps", &ab.train_steps);
        bind(ab_cmd->add_option("--train-sequences", ab.train_sequences, "training sequences"),
             "train_sequences", &ab.train_sequences);
        bind(ab_cmd->add_option("--channels", ab.channels, "feature channels"), "channels",
             &ab.channels);
        bind(ab_cmd->add_option("--template-cells", ab.template_cells, "template span"),
             "template_cells", &ab.template_cells);
        bind(ab_cmd->add_option("--search-cells", ab.search_cells, "search span"),
             "search_cells", &ab.search_cells);
        bind(ab_cmd->add_option("--window-influence", ab.window_influence,
                                "cosine window weight"),
             "window_influence", &ab.window_influence);
        bind(ab_cmd->add_option("--threads", ab.threads, "harness threads (0: STM_THREADS)"),
             "threads", &ab.threads);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        json config = load_config_file(config_path);
        auto layer_all = [&](const char* name, Binder& binds) {
            Layered lay(config.value(name, json::object()), name);
            for (auto& [opt, fn] : binds) fn(lay);
            lay.reject_unknown();
            return lay;
        };
        if (gen_cmd->parsed()) {
            Layered lay = layer_all("gen", gen_binds);
            return run_gen(gen, lay);
        }
        if (tr_cmd->parsed()) {
            Layered lay = layer_all("train", tr_binds);
            return run_train(tr, lay);
        }
        if (tk_cmd->parsed()) {
            Layered lay = layer_all("track", tk_binds);
            return run_track(tk, lay);
        }
        if (ev_cmd->parsed()) {
            Layered lay = layer_all("eval", ev_binds);
            return run_eval(ev, lay);
        }
        if (gc_cmd->parsed()) {
            Layered lay = layer_all("gradcheck", gc_binds);
            return run_gradcheck(gc, lay);
        }
        if (ab_cmd->parsed()) {
            Layered lay = layer_all("ablate", ab_binds);
            return run_ablate(ab, lay);
        }
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
