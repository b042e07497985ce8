#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dsrefine/cli.hpp"
#include "dsrefine/dataset.hpp"
#include "dsrefine/errors.hpp"
#include "dsrefine/influence.hpp"
#include "dsrefine/model.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/refine.hpp"
#include "dsrefine/trainer.hpp"
#include "dsrefine/uncertainty.hpp"

namespace py = pybind11;
using namespace dsrefine;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

// (n, channels, timepoints) samples plus labels and subject ids.
Dataset from_arrays(const FloatArray& x, const LabelArray& labels, const LabelArray& subjects, std::uint32_t n_classes) {
    if (x.ndim() != 3) throw InvalidArgument("x must have shape (n_trials, n_channels, n_timepoints)");
    const auto n = static_cast<std::size_t>(x.shape(0));
    if (static_cast<std::size_t>(labels.size()) != n || static_cast<std::size_t>(subjects.size()) != n)
        throw InvalidArgument("labels and subjects need one entry per trial");
    Dataset d;
    d.n_channels = static_cast<std::uint32_t>(x.shape(1));
    d.n_timepoints = static_cast<std::uint32_t>(x.shape(2));
    d.n_classes = n_classes;
    const std::size_t len = d.trial_length();
    const float* src = x.data();
    for (std::size_t i = 0; i < n; ++i)
        d.trials.push_back({{src + i * len, src + (i + 1) * len}, labels.data()[i], subjects.data()[i]});
    d.validate();
    return d;
}

py::array_t<float> samples_array(const Dataset& d) {
    py::array_t<float> out({d.size(), std::size_t{d.n_channels}, std::size_t{d.n_timepoints}});
    float* dst = out.mutable_data();
    for (const auto& t : d.trials) dst = std::copy(t.data.begin(), t.data.end(), dst);
    return out;
}

template <class F>
std::vector<std::uint32_t> column(const Dataset& d, F f) {
    std::vector<std::uint32_t> v;
    v.reserve(d.size());
    for (const auto& t : d.trials) v.push_back(f(t));
    return v;
}

ScoreVector as_scores(std::vector<double> v, MetricTag tag) { return {std::move(v), tag}; }

py::dict plan_dict(const RefinementPlan& p) {
    py::dict out;
    out["ratio"] = p.ratio;
    out["threshold"] = p.threshold;
    out["removed_indices"] = p.removed_indices;
    out["metric_tag"] = std::string(to_string(p.metric_tag));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Influence- and MC-dropout-based training set refinement";
    m.attr("__version__") = std::string(version_string());

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<NotFound>(m, "NotFound", PyExc_KeyError);
    py::register_exception<UnsupportedArchitecture>(m, "UnsupportedArchitecture", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&from_arrays), py::arg("x"), py::arg("labels"), py::arg("subjects"), py::arg("n_classes"))
        .def_readonly("n_channels", &Dataset::n_channels)
        .def_readonly("n_timepoints", &Dataset::n_timepoints)
        .def_readonly("n_classes", &Dataset::n_classes)
        .def_property_readonly("x", &samples_array)
        .def_property_readonly("labels", [](const Dataset& d) { return column(d, [](const Trial& t) { return t.label; }); })
        .def_property_readonly("subject_ids",
                               [](const Dataset& d) { return column(d, [](const Trial& t) { return t.subject_id; }); })
        .def_readonly("noise_mask", &Dataset::noise_mask)
        .def("subjects", &Dataset::subjects)
        .def("subset", [](const Dataset& d, const std::vector<std::size_t>& idx) { return d.subset(idx); })
        .def("__len__", &Dataset::size)
        .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

    m.def(
        "generate_synthetic",
        [](std::uint32_t n_subjects, std::uint32_t trials_per_subject, std::uint32_t n_channels,
           std::uint32_t n_timepoints, std::uint32_t n_classes, double class_separation, std::uint64_t seed) {
            return generate_synthetic(
                {n_subjects, trials_per_subject, n_channels, n_timepoints, n_classes, class_separation, seed});
        },
        py::arg("n_subjects") = 9, py::arg("trials_per_subject") = 32, py::arg("n_channels") = 3,
        py::arg("n_timepoints") = 128, py::arg("n_classes") = 2, py::arg("class_separation") = 2.0, py::arg("seed") = 0);
    m.def("inject_label_noise", &inject_label_noise, py::arg("dataset"), py::arg("ratio"), py::arg("seed"));
    m.def(
        "ems_standardize",
        [](const Dataset& d, double alpha, double eps, double init_var) {
            EmsConfig c;
            c.alpha = alpha;
            c.eps = eps;
            c.init_var = init_var;
            return ems_standardize(d, c);
        },
        py::arg("dataset"), py::arg("alpha") = 0.999, py::arg("eps") = 1e-8, py::arg("init_var") = 1.0);
    m.def(
        "ems_standardize_channel",
        [](const std::vector<double>& x, double alpha, double eps, double init_var) {
            EmsConfig c;
            c.alpha = alpha;
            c.eps = eps;
            c.init_var = init_var;
            return ems_standardize_channel(x, c);
        },
        py::arg("x"), py::arg("alpha") = 0.999, py::arg("eps") = 1e-8, py::arg("init_var") = 1.0);
    m.def("split_loso", &split_loso, py::arg("dataset"), py::arg("held_out_subject"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("load_dataset", &load_dataset, py::arg("path"));

    py::enum_<Arch>(m, "Arch").value("LINEAR_SOFTMAX", Arch::LinearSoftmax).value("MLP_DROPOUT", Arch::MlpDropout);

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init([](Arch arch, std::size_t input_dim, std::size_t n_classes, std::size_t hidden_dim,
                         double dropout_rate, double weight_decay) {
                 ModelSpec s;
                 s.arch = arch;
                 s.input_dim = input_dim;
                 s.n_classes = n_classes;
                 s.hidden_dim = hidden_dim;
                 s.dropout_rate = dropout_rate;
                 s.weight_decay = weight_decay;
                 return s;
             }),
             py::arg("arch") = Arch::LinearSoftmax, py::arg("input_dim") = 0, py::arg("n_classes") = 0,
             py::arg("hidden_dim") = 16, py::arg("dropout_rate") = 0.5, py::arg("weight_decay") = 1e-3)
        .def_readwrite("arch", &ModelSpec::arch)
        .def_readwrite("input_dim", &ModelSpec::input_dim)
        .def_readwrite("n_classes", &ModelSpec::n_classes)
        .def_readwrite("hidden_dim", &ModelSpec::hidden_dim)
        .def_readwrite("dropout_rate", &ModelSpec::dropout_rate)
        .def_readwrite("weight_decay", &ModelSpec::weight_decay)
        .def_property_readonly("param_count", &ModelSpec::param_count)
        .def("resolved", [](const ModelSpec& s, const Dataset& d) { return resolve_model(s, d); });

    py::enum_<Optimizer>(m, "Optimizer")
        .value("ADAMW", Optimizer::AdamW)
        .value("SGD", Optimizer::Sgd)
        .value("NEWTON", Optimizer::Newton);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lr_peak", &TrainConfig::lr_peak)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("grad_tol", &TrainConfig::grad_tol)
        .def_readwrite("optimizer", &TrainConfig::optimizer);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("theta", &TrainReport::theta)
        .def_readonly("loss_curve", &TrainReport::loss_curve)
        .def_readonly("final_grad_norm", &TrainReport::final_grad_norm);

    m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));
    m.def(
        "train", [](const ModelSpec& s, const Dataset& d, const TrainConfig& c) { return train(s, d, c); },
        py::arg("spec"), py::arg("dataset"), py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def(
        "evaluate", [](const ModelSpec& s, const ParamVector& t, const Dataset& d) { return evaluate(s, t, d); },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"));
    m.def(
        "predict_proba",
        [](const ModelSpec& s, const ParamVector& t, const Dataset& d) { return Matrix(predict_proba(s, t, to_samples(d)).transpose()); },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"));
    m.def(
        "loss", [](const ModelSpec& s, const ParamVector& t, const Dataset& d) { return loss(s, t, to_samples(d)); },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"));
    m.def(
        "grad", [](const ModelSpec& s, const ParamVector& t, const Dataset& d) { return grad(s, t, to_samples(d)); },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"));
    m.def(
        "hvp",
        [](const ModelSpec& s, const ParamVector& t, const Dataset& d, const ParamVector& v, double damping) {
            return hvp(s, t, to_samples(d), v, damping);
        },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"), py::arg("v"), py::arg("damping") = 0.0);
    m.def("save_params", &save_params, py::arg("theta"), py::arg("path"));
    m.def("load_params", &load_params, py::arg("path"));

    m.def(
        "influence_scores",
        [](const ModelSpec& s, const ParamVector& t, const Dataset& d, const std::string& mode, double damping,
           std::optional<Dataset> ref) {
            InfluenceConfig c;
            c.mode = parse_influence_mode(mode);
            c.damping = damping;
            py::gil_scoped_release release;
            const Samples rs = ref ? to_samples(*ref) : Samples{};
            return influence_scores(s, t, to_samples(d), c, ref ? &rs : nullptr).scores;
        },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"), py::arg("mode") = "self", py::arg("damping") = 1e-3,
        py::arg("reference") = py::none());
    m.def(
        "mc_dropout_scores",
        [](const ModelSpec& s, const ParamVector& t, const Dataset& d, int T, std::uint64_t seed,
           const std::string& confidence, std::optional<double> rate) {
            McConfig c;
            c.T = T;
            c.seed = seed;
            c.confidence = parse_confidence(confidence);
            c.dropout_rate_override = rate;
            py::gil_scoped_release release;
            return mc_dropout_scores(s, t, to_samples(d), c).scores;
        },
        py::arg("spec"), py::arg("theta"), py::arg("dataset"), py::arg("T") = 30, py::arg("seed") = 0,
        py::arg("confidence") = "true-label", py::arg("dropout_rate") = py::none());

    m.def(
        "refine_dataset",
        [](const Dataset& d, std::vector<double> scores, double ratio) {
            auto [kept, plan] = refine_dataset(d, as_scores(std::move(scores), MetricTag::Influence), ratio);
            return py::make_tuple(kept, plan_dict(plan));
        },
        py::arg("dataset"), py::arg("scores"), py::arg("ratio"));
    m.def(
        "random_dropout",
        [](const Dataset& d, double ratio, std::uint64_t seed) {
            auto [kept, plan] = random_dropout(d, ratio, seed);
            return py::make_tuple(kept, plan_dict(plan));
        },
        py::arg("dataset"), py::arg("ratio"), py::arg("seed"));

    m.def(
        "grid_search",
        [](const std::string& config_json, const Dataset& d) {
            const PipelineConfig cfg = parse_cli_config(config_json).pipeline;
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = grid_search(cfg, d);
            }
            py::list cells, summary;
            for (const auto& c : r.cells) {
                py::dict x;
                x["fold"] = c.fold;
                x["ratio"] = c.ratio;
                x["seed"] = c.seed;
                x["accuracy"] = c.accuracy;
                x["n_removed"] = c.n_removed;
                x["recall"] = c.recall;
                x["precision"] = c.precision;
                cells.append(x);
            }
            for (const auto& s : r.summary) {
                py::dict x;
                x["ratio"] = s.ratio;
                x["mean"] = s.mean;
                x["std"] = s.std;
                x["count"] = s.count;
                summary.append(x);
            }
            py::dict out;
            out["metric_tag"] = std::string(to_string(r.metric_tag));
            out["cells"] = cells;
            out["summary"] = summary;
            out["best_ratio"] = r.best_ratio;
            return out;
        },
        py::arg("config_json"), py::arg("dataset"),
        "Leave-one-subject-out sweep; the config uses the same JSON schema as the command line.");

    m.def("set_num_threads", &set_num_threads, py::arg("n"));
    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "dsrefine");
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = execute(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a command-line invocation in-process; returns (exit_code, stdout, stderr).");
}
