// Python bindings for the main operations: correlation, labels, losses,
// candidate selection, the scenario generator and the tracking engine.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stm/ablate.hpp"
#include "stm/gradcheck.hpp"
#include "stm/train.hpp"

namespace py = pybind11;
using namespace stm;

namespace {

Tensor3 to_tensor3(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3) throw ShapeError("expected a (H, W, C) array");
    Tensor3 t(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
              static_cast<int>(arr.shape(2)));
    std::memcpy(t.data.data(), arr.data(), t.size() * sizeof(double));
    return t;
}

Tensor2 to_tensor2(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ShapeError("expected a (H, W) array");
    Tensor2 t(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::memcpy(t.data.data(), arr.data(), t.size() * sizeof(double));
    return t;
}

py::array_t<double> from_tensor3(const Tensor3& t) {
    py::array_t<double> arr({t.h, t.w, t.c});
    std::memcpy(arr.mutable_data(), t.data.data(), t.size() * sizeof(double));
    return arr;
}

py::array_t<double> from_tensor2(const Tensor2& t) {
    py::array_t<double> arr({t.h, t.w});
    std::memcpy(arr.mutable_data(), t.data.data(), t.size() * sizeof(double));
    return arr;
}

BoundingBox to_box(const py::sequence& seq) {
    if (py::len(seq) != 4) throw ShapeError("box must be (cx, cy, w, h)");
    return BoundingBox{seq[0].cast<double>(), seq[1].cast<double>(), seq[2].cast<double>(),
                       seq[3].cast<double>()};
}

py::tuple from_box(const BoundingBox& b) { return py::make_tuple(b.cx, b.cy, b.w, b.h); }

ScenarioConfig scenario_from_kwargs(const py::kwargs& kw) {
    ScenarioConfig c;
    for (auto item : kw) {
        const std::string key = py::str(item.first);
        if (key == "frames") c.frames = item.second.cast<int>();
        else if (key == "grid") c.grid = item.second.cast<int>();
        else if (key == "channels") c.channels = item.second.cast<int>();
        else if (key == "distractors") c.distractors = item.second.cast<int>();
        else if (key == "overlap") c.overlap = item.second.cast<double>();
        else if (key == "noise") c.noise = item.second.cast<double>();
        else if (key == "target_size") c.target_size = item.second.cast<double>();
        else if (key == "target_amp") c.target_amp = item.second.cast<double>();
        else if (key == "distractor_amp") c.distractor_amp = item.second.cast<double>();
        else if (key == "motion") c.motion.kind = item.second.cast<std::string>();
        else if (key == "step_sigma") c.motion.step_sigma = item.second.cast<double>();
        else if (key == "jump_frame") c.motion.jump_frame = item.second.cast<int>();
        else if (key == "flicker_frame") c.flicker_frame = item.second.cast<int>();
        else if (key == "flicker_len") c.flicker_len = item.second.cast<int>();
        else if (key == "flicker_amp") c.flicker_amp = item.second.cast<double>();
        else if (key == "pixel_mode") c.pixel_mode = item.second.cast<bool>();
        else if (key == "seed") c.seed = item.second.cast<uint64_t>();
        else throw ConfigError("unknown scenario option '" + key + "'");
    }
    return c;
}

class Model {
public:
    Model(int channels, int template_cells, int search_cells, const std::string& corr,
          uint64_t seed, int reduction, bool pixel_mode) {
        ModelConfig cfg;
        cfg.channels = channels;
        cfg.template_cells = template_cells;
        cfg.search_cells = search_cells;
        cfg.reduction = reduction;
        cfg.pixel_mode = pixel_mode;
        cfg.corr = corr_mode_from_string(corr);
        params_ = make_model_params(cfg, seed);
    }
    explicit Model(const std::string& dir) : params_(load_params(dir)) {}

    void save(const std::string& dir) const { save_params(params_, dir); }

    py::array_t<double> correlate(const py::array_t<double>& z, const py::array_t<double>& x) const {
        return from_tensor3(stm::correlate(to_tensor3(z), to_tensor3(x), params_));
    }

    py::dict head(const py::array_t<double>& resp) const {
        HeadOutputs outs = head_forward(to_tensor3(resp), params_.head);
        py::dict d;
        d["heat"] = from_tensor2(outs.heat);
        d["offset"] = from_tensor3(outs.offset);
        d["size"] = from_tensor3(outs.size);
        return d;
    }

    std::string corr_mode() const { return to_string(params_.cfg.corr); }
    int channels() const { return params_.cfg.channels; }
    const ModelParams& params() const { return params_; }

private:
    ModelParams params_;
};

TrackConfig track_config_from_kwargs(const py::kwargs& kw) {
    TrackConfig tc;
    for (auto item : kw) {
        const std::string key = py::str(item.first);
        if (key == "arm") tc.arm = item.second.cast<bool>();
        else if (key == "k") tc.k = item.second.cast<int>();
        else if (key == "window_influence") tc.window_influence = item.second.cast<double>();
        else if (key == "penalty_k") tc.penalty_k = item.second.cast<double>();
        else if (key == "refresh") tc.refresh = refresh_from_string(item.second.cast<std::string>());
        else if (key == "arm_floor") tc.arm_floor = item.second.cast<double>();
        else if (key == "arm_margin") tc.arm_margin = item.second.cast<double>();
        else if (key == "arm_radius") tc.arm_radius = item.second.cast<int>();
        else if (key == "arm_eps") tc.arm_eps = item.second.cast<double>();
        else if (key == "arm_smooth") tc.arm_smooth = item.second.cast<bool>();
        else throw ConfigError("unknown tracker option '" + key + "'");
    }
    return tc;
}

class Tracker {
public:
    Tracker(const Model& model, const py::kwargs& kw)
        : params_(model.params()), cfg_(track_config_from_kwargs(kw)) {}

    void init(const py::array_t<double>& frame, const py::sequence& box) {
        state_ = tracker_init(wrap(frame), to_box(box), params_, cfg_);
        ready_ = true;
    }

    py::dict step(const py::array_t<double>& frame) {
        if (!ready_) throw DataError("tracker not initialized");
        StepResult res = tracker_step(state_, wrap(frame), params_, cfg_);
        state_ = res.state;
        py::dict d;
        d["box"] = from_box(res.box);
        d["confidence"] = res.confidence;
        d["k_hat"] = res.k_hat;
        return d;
    }

private:
    FrameInput wrap(const py::array_t<double>& frame) const {
        if (params_.cfg.pixel_mode) return FrameInput::from_pixels(to_tensor3(frame));
        return FrameInput::from_features(to_tensor3(frame));
    }
    ModelParams params_;
    TrackConfig cfg_;
    TrackerState state_;
    bool ready_ = false;
};

}  // namespace

PYBIND11_MODULE(stmtrack, m) {
    m.doc() = "spatio-temporal matching tracker: core operations";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<ConfigError>(m, "ConfigError");

    m.def("dw_xcorr",
          [](const py::array_t<double>& z, const py::array_t<double>& x) {
              return from_tensor3(dw_xcorr(to_tensor3(z), to_tensor3(x)));
          },
          py::arg("z"), py::arg("x"), "depth-wise valid cross correlation");

    m.def("circular_shift",
          [](const py::array_t<double>& map, int dy, int dx) {
              return from_tensor2(circular_shift(to_tensor2(map), dy, dx));
          },
          py::arg("map"), py::arg("dy"), py::arg("dx"));

    m.def("topk_peaks",
          [](const py::array_t<double>& map, int k) {
              py::list out;
              for (const PeakLocation& p : topk_peaks(to_tensor2(map), k))
                  out.append(py::make_tuple(p.y, p.x, p.score));
              return out;
          },
          py::arg("map"), py::arg("k"));

    m.def("hanning2d",
          [](int h, int w) { return from_tensor2(hanning2d(h, w)); }, py::arg("h"), py::arg("w"));

    m.def("normalize_distribution",
          [](const py::array_t<double>& map, double eps) {
              return from_tensor2(normalize_distribution(to_tensor2(map), eps));
          },
          py::arg("map"), py::arg("eps") = 1e-8);

    m.def("kl_divergence",
          [](const py::array_t<double>& y, const py::array_t<double>& x, double eps) {
              return kl_divergence(to_tensor2(y), to_tensor2(x), eps);
          },
          py::arg("y"), py::arg("x"), py::arg("eps") = 1e-8);

    m.def("focal_loss",
          [](const py::array_t<double>& pred, const py::array_t<double>& target) {
              FocalResult res = focal_loss(to_tensor2(pred), to_tensor2(target));
              return py::make_tuple(res.loss, from_tensor2(res.grad));
          },
          py::arg("pred"), py::arg("target"));

    m.def("arm_loss",
          [](const py::array_t<double>& pred_a, const py::array_t<double>& pred_b,
             const py::array_t<double>& label_a, const py::array_t<double>& label_b) {
              ArmPair pair = make_arm_pair(to_tensor2(pred_a), to_tensor2(pred_b),
                                           to_tensor2(label_a), to_tensor2(label_b));
              ArmLossResult res = arm_loss(pair);
              return py::make_tuple(res.loss, from_tensor2(res.gpred_a),
                                    from_tensor2(res.gpred_b));
          },
          py::arg("pred_a"), py::arg("pred_b"), py::arg("label_a"), py::arg("label_b"));

    m.def("arm_select",
          [](const py::array_t<double>& pred_t, const py::array_t<double>& label_last,
             const py::array_t<double>& pred_last, const std::pair<int, int>& p_last, int k) {
              ArmSelection sel =
                  arm_select(to_tensor2(pred_t), to_tensor2(label_last), to_tensor2(pred_last),
                             PeakLocation{p_last.first, p_last.second, 0.0}, k);
              py::list scores;
              for (const ArmCandidateScore& s : sel.scores)
                  scores.append(py::make_tuple(s.q.y, s.q.x, s.q.score, s.score));
              return py::make_tuple(sel.k_hat, scores);
          },
          py::arg("pred_t"), py::arg("label_last"), py::arg("pred_last"), py::arg("p_last"),
          py::arg("k") = 3);

    m.def("arm_reweight",
          [](const py::array_t<double>& pred_t, const py::array_t<double>& pred_last,
             const std::pair<int, int>& p_last, const std::pair<int, int>& q_hat) {
              return from_tensor2(arm_reweight(to_tensor2(pred_t), to_tensor2(pred_last),
                                               PeakLocation{p_last.first, p_last.second, 0.0},
                                               PeakLocation{q_hat.first, q_hat.second, 0.0}));
          },
          py::arg("pred_t"), py::arg("pred_last"), py::arg("p_last"), py::arg("q_hat"));

    m.def("make_labels",
          [](const py::sequence& box, int map_h, int map_w, int stride) {
              Labels lab = make_labels(to_box(box), map_h, map_w, stride);
              py::dict d;
              d["heat"] = from_tensor2(lab.heat);
              d["cell"] = py::make_tuple(lab.cy_cell, lab.cx_cell);
              d["offset"] = py::make_tuple(lab.off_x, lab.off_y);
              d["size"] = py::make_tuple(lab.size_w, lab.size_h);
              d["sigma"] = lab.sigma;
              return d;
          },
          py::arg("box"), py::arg("map_h"), py::arg("map_w"), py::arg("stride"));

    m.def("iou",
          [](const py::sequence& a, const py::sequence& b) { return iou(to_box(a), to_box(b)); },
          py::arg("a"), py::arg("b"));

    m.def("gen_sequence",
          [](const py::kwargs& kw) {
              SyntheticSequence seq = gen_sequence(scenario_from_kwargs(kw));
              py::list frames;
              for (const Tensor3& f : seq.frames) frames.append(from_tensor3(f));
              py::list boxes;
              for (const BoundingBox& b : seq.boxes) boxes.append(from_box(b));
              return py::make_tuple(frames, boxes);
          },
          "generate a synthetic sequence; returns (frames, boxes)");

    m.def("grad_check",
          [](const std::string& scope, uint64_t seed) {
              py::dict d;
              for (const GradCheckReport& r : grad_check(scope, seed))
                  d[py::str(r.scope)] = r.max_rel_err;
              return d;
          },
          py::arg("scope") = "all", py::arg("seed") = 0);

    py::class_<Model>(m, "Model")
        .def(py::init<int, int, int, const std::string&, uint64_t, int, bool>(),
             py::arg("channels") = 16, py::arg("template_cells") = 8,
             py::arg("search_cells") = 16, py::arg("corr") = "svc", py::arg("seed") = 0,
             py::arg("reduction") = 4, py::arg("pixel_mode") = false)
        .def_static("load", [](const std::string& dir) { return Model(dir); }, py::arg("dir"))
        .def("save", &Model::save, py::arg("dir"))
        .def("correlate", &Model::correlate, py::arg("z"), py::arg("x"))
        .def("head", &Model::head, py::arg("response"))
        .def_property_readonly("corr", &Model::corr_mode)
        .def_property_readonly("channels", &Model::channels);

    py::class_<Tracker>(m, "Tracker")
        .def(py::init<const Model&, const py::kwargs&>(), py::arg("model"))
        .def("init", &Tracker::init, py::arg("frame"), py::arg("box"))
        .def("step", &Tracker::step, py::arg("frame"));
}
