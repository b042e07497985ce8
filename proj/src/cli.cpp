#include "dsrefine/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/report.hpp"

#ifndef DSREFINE_VERSION
#define DSREFINE_VERSION "dev"
#endif

namespace dsrefine {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view version_string() { return DSREFINE_VERSION; }

namespace {

// Object reader that remembers which keys were consumed so leftovers can be rejected.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    template <typename T>
    T get(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!has(key)) return fallback;
        return convert<T>(key);
    }

    template <typename T>
    std::optional<T> get_optional(const std::string& key) {
        seen_.insert(key);
        if (!has(key)) return std::nullopt;
        return convert<T>(key);
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(has(key) ? j_.at(key) : empty, path_ + "." + key);
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + path_ + "." + key + "'");
    }

private:
    template <typename T>
    T convert(const std::string& key) const {
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError("");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            }
            return v.get<T>();
        } catch (const std::exception&) {
            throw ConfigError("config key '" + path_ + "." + key + "' has the wrong type (got " +
                              std::string(v.type_name()) + ")");
        }
    }

    std::string where() const { return "config section '" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
auto as_config_error(const std::string& what, F&& fn) {
    try {
        return fn();
    } catch (const InvalidArgument& e) {
        throw ConfigError(what + ": " + e.what());
    } catch (const UnsupportedArchitecture& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace

CliConfig parse_cli_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Section top(root, "$");
    CliConfig cfg;
    cfg.dataset = top.get_optional<std::string>("dataset");
    cfg.model_path = top.get_optional<std::string>("model_path");
    cfg.output_dir = top.get_optional<std::string>("output_dir");

    PipelineConfig& p = cfg.pipeline;
    {
        Section m = top.child("model");
        p.model.arch = as_config_error("model.arch", [&] {
            return parse_arch(m.get<std::string>("arch", std::string(to_string(p.model.arch))));
        });
        p.model.hidden_dim = m.get<std::size_t>("hidden_dim", p.model.hidden_dim);
        p.model.dropout_rate = m.get<double>("dropout_rate", p.model.dropout_rate);
        p.model.weight_decay = m.get<double>("weight_decay", p.model.weight_decay);
        m.finish();
    }
    {
        Section t = top.child("train");
        TrainConfig& tc = p.train;
        tc.lr_peak = t.get<double>("lr_peak", tc.lr_peak);
        tc.epochs = t.get<int>("epochs", tc.epochs);
        tc.warmup_epochs = t.get<int>("warmup_epochs", tc.warmup_epochs);
        tc.batch_size = t.get<int>("batch_size", tc.batch_size);
        tc.weight_decay = t.get<double>("weight_decay", tc.weight_decay);
        tc.grad_tol = t.get_optional<double>("grad_tol");
        tc.optimizer = as_config_error("train.optimizer", [&] {
            return parse_optimizer(t.get<std::string>("optimizer", std::string(to_string(tc.optimizer))));
        });
        tc.beta1 = t.get<double>("beta1", tc.beta1);
        tc.beta2 = t.get<double>("beta2", tc.beta2);
        tc.adam_eps = t.get<double>("adam_eps", tc.adam_eps);
        tc.seed = t.get<std::uint64_t>("seed", tc.seed);
        t.finish();
    }
    {
        Section mt = top.child("metric");
        p.metric.kind = as_config_error("metric.kind", [&] {
            return parse_metric_kind(mt.get<std::string>("kind", std::string(to_string(p.metric.kind))));
        });
        Section inf = mt.child("influence");
        InfluenceConfig& ic = p.metric.influence;
        ic.mode = as_config_error("metric.influence.mode", [&] {
            return parse_influence_mode(inf.get<std::string>("mode", std::string(to_string(ic.mode))));
        });
        ic.damping = inf.get<double>("damping", ic.damping);
        ic.cg_tol = inf.get<double>("cg_tol", ic.cg_tol);
        ic.cg_max_iters = inf.get_optional<int>("cg_max_iters");
        ic.use_dense_if_P_leq = inf.get<std::size_t>("use_dense_if_P_leq", ic.use_dense_if_P_leq);
        inf.finish();
        Section mc = mt.child("mc");
        McConfig& mcc = p.metric.mc;
        mcc.T = mc.get<int>("T", mcc.T);
        mcc.dropout_rate_override = mc.get_optional<double>("dropout_rate_override");
        mcc.seed = mc.get<std::uint64_t>("seed", mcc.seed);
        mcc.confidence = as_config_error("metric.mc.confidence", [&] {
            return parse_confidence(mc.get<std::string>("confidence", std::string(to_string(mcc.confidence))));
        });
        mc.finish();
        mt.finish();
    }
    p.ratios = top.get<std::vector<double>>("ratios", p.ratios);
    p.seeds = top.get<std::vector<std::uint64_t>>("seeds", p.seeds);
    {
        Section e = top.child("ems");
        p.apply_ems = e.get<bool>("enabled", p.apply_ems);
        p.ems.alpha = e.get<double>("alpha", p.ems.alpha);
        p.ems.eps = e.get<double>("eps", p.ems.eps);
        p.ems.init_var = e.get<double>("init_var", p.ems.init_var);
        e.finish();
    }
    top.finish();

    as_config_error("invalid config", [&] {
        p.validate();
        ModelSpec probe = p.model;
        probe.input_dim = 1;
        probe.n_classes = 2;
        probe.validate();
        return 0;
    });
    return cfg;
}

std::string resolved_config_json(const CliConfig& cfg) {
    const PipelineConfig& p = cfg.pipeline;
    auto opt_str = [](const std::optional<std::string>& s) { return s ? ordered_json(*s) : ordered_json(nullptr); };
    ordered_json j;
    j["dataset"] = opt_str(cfg.dataset);
    j["model_path"] = opt_str(cfg.model_path);
    j["output_dir"] = opt_str(cfg.output_dir);
    j["model"] = {{"arch", to_string(p.model.arch)},
                  {"hidden_dim", p.model.hidden_dim},
                  {"dropout_rate", p.model.dropout_rate},
                  {"weight_decay", p.model.weight_decay}};
    j["train"] = {{"lr_peak", p.train.lr_peak},
                  {"epochs", p.train.epochs},
                  {"warmup_epochs", p.train.warmup_epochs},
                  {"batch_size", p.train.batch_size},
                  {"weight_decay", p.train.weight_decay},
                  {"grad_tol", p.train.grad_tol ? ordered_json(*p.train.grad_tol) : ordered_json(nullptr)},
                  {"optimizer", to_string(p.train.optimizer)},
                  {"beta1", p.train.beta1},
                  {"beta2", p.train.beta2},
                  {"adam_eps", p.train.adam_eps},
                  {"seed", p.train.seed}};
    const InfluenceConfig& ic = p.metric.influence;
    const McConfig& mc = p.metric.mc;
    j["metric"] = {
        {"kind", to_string(p.metric.kind)},
        {"influence",
         {{"mode", to_string(ic.mode)},
          {"damping", ic.damping},
          {"cg_tol", ic.cg_tol},
          {"cg_max_iters", ic.cg_max_iters ? ordered_json(*ic.cg_max_iters) : ordered_json(nullptr)},
          {"use_dense_if_P_leq", ic.use_dense_if_P_leq}}},
        {"mc",
         {{"T", mc.T},
          {"dropout_rate_override",
           mc.dropout_rate_override ? ordered_json(*mc.dropout_rate_override) : ordered_json(nullptr)},
          {"seed", mc.seed},
          {"confidence", to_string(mc.confidence)}}}};
    j["ratios"] = p.ratios;
    j["seeds"] = p.seeds;
    j["ems"] = {{"enabled", p.apply_ems}, {"alpha", p.ems.alpha}, {"eps", p.ems.eps}, {"init_var", p.ems.init_var}};
    return j.dump(2) + "\n";
}

namespace {

struct Logger {
    std::ostream& out;
    void operator()(const std::string& msg) const { out << "[dsrefine] " << msg << '\n' << std::flush; }
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) ensure_dir(file.parent_path());
}

unsigned resolve_threads(const std::optional<unsigned>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("REFINE_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("REFINE_THREADS must be a non-negative integer, got '") + env + "'");
    }
    return 0;
}

// Flags shared by the config-driven subcommands.
struct CommonFlags {
    std::string config_path;
    std::optional<std::string> dataset;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* sub, bool out_is_file = false) {
        sub->add_option("-c,--config", config_path, "JSON config file");
        sub->add_option("-d,--dataset", dataset, "dataset file (overrides config)");
        sub->add_option("-o,--out", out, out_is_file ? "output file" : "output directory (overrides config)");
        sub->add_option("--seed", seed, "experiment seed (overrides config)");
    }

    CliConfig load() const {
        CliConfig cfg = config_path.empty() ? parse_cli_config("{}") : parse_cli_config(read_text(config_path));
        if (dataset) cfg.dataset = dataset;
        if (seed) {
            cfg.pipeline.train.seed = *seed;
            cfg.pipeline.seeds = {*seed};
        }
        return cfg;
    }
};

std::string require(const std::optional<std::string>& v, const std::string& field, const std::string& flag) {
    if (!v || v->empty()) throw ConfigError("missing required field '" + field + "' (set it in the config or pass " + flag + ")");
    return *v;
}

Dataset preprocess(const Dataset& d, const PipelineConfig& p) { return p.apply_ems ? ems_standardize(d, p.ems) : d; }

struct HoldoutSplit {
    Dataset train;
    std::optional<Dataset> test;
};

HoldoutSplit maybe_holdout(const Dataset& d, const std::optional<std::uint32_t>& subject) {
    if (!subject) return {d, std::nullopt};
    auto [train_d, test_d] = split_loso(d, *subject);
    return {std::move(train_d), std::move(test_d)};
}

std::uint64_t run_seed(const CliConfig& cfg) { return cfg.pipeline.train.seed; }

}  // namespace

int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const Logger log{out};
    CLI::App app{"Influence- and uncertainty-based training set refinement", "dsrefine"};
    app.require_subcommand(1);
    std::optional<unsigned> threads;
    app.add_option("--threads", threads, "worker cap (0 = all cores; falls back to REFINE_THREADS)");

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    SyntheticSpec syn;
    std::string gen_out;
    double noise_ratio = 0.0;
    std::optional<std::uint64_t> noise_seed;
    gen->add_option("-o,--out", gen_out, "output dataset file")->required();
    gen->add_option("--subjects", syn.n_subjects, "number of subjects")->capture_default_str();
    gen->add_option("--trials", syn.trials_per_subject, "trials per subject")->capture_default_str();
    gen->add_option("--channels", syn.n_channels, "channels per trial")->capture_default_str();
    gen->add_option("--timepoints", syn.n_timepoints, "samples per channel")->capture_default_str();
    gen->add_option("--classes", syn.n_classes, "number of classes")->capture_default_str();
    gen->add_option("--separation", syn.class_separation, "class signal amplitude")->capture_default_str();
    gen->add_option("--seed", syn.seed, "generator seed")->capture_default_str();
    gen->add_option("--noise-ratio", noise_ratio, "fraction of labels to flip")->capture_default_str();
    gen->add_option("--noise-seed", noise_seed, "label-noise seed (default: --seed)");

    // train
    auto* tr = app.add_subcommand("train", "train a baseline model");
    CommonFlags tr_flags;
    std::optional<std::uint32_t> tr_holdout;
    tr_flags.attach(tr);
    tr->add_option("--holdout", tr_holdout, "subject to hold out and evaluate on");

    // score
    auto* sc = app.add_subcommand("score", "score training trials (influence or MC dropout)");
    CommonFlags sc_flags;
    std::optional<std::string> sc_model, sc_metric, sc_mode;
    std::optional<std::uint32_t> sc_holdout;
    sc_flags.attach(sc, true);
    sc->add_option("-m,--model", sc_model, "trained parameter file (.prmv)");
    sc->add_option("--metric", sc_metric, "influence | mcdropout");
    sc->add_option("--mode", sc_mode, "influence mode: total-train | self | reference-set");
    sc->add_option("--holdout", sc_holdout, "subject excluded from scoring (reference set in reference-set mode)");

    // refine
    auto* rf = app.add_subcommand("refine", "score, prune and retrain at one ratio");
    CommonFlags rf_flags;
    double rf_ratio = 0.2;
    std::optional<std::string> rf_metric;
    std::optional<std::uint32_t> rf_holdout;
    rf_flags.attach(rf);
    rf->add_option("--ratio", rf_ratio, "fraction of training trials to remove")->capture_default_str();
    rf->add_option("--metric", rf_metric, "influence | mcdropout | random");
    rf->add_option("--holdout", rf_holdout, "subject to hold out and evaluate on");

    // sweep
    auto* sw = app.add_subcommand("sweep", "leave-one-subject-out grid search over ratios and seeds");
    CommonFlags sw_flags;
    sw_flags.attach(sw);

    auto* ver = app.add_subcommand("version", "print the version");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("dsrefine");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        set_num_threads(resolve_threads(threads));

        if (*ver) {
            out << "dsrefine " << version_string() << '\n';
            return 0;
        }

        if (*gen) {
            if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0)) throw ConfigError("--noise-ratio must lie in [0, 1]");
            Dataset d = as_config_error("generate", [&] { return generate_synthetic(syn); });
            if (noise_ratio > 0.0) d = inject_label_noise(d, noise_ratio, noise_seed.value_or(syn.seed));
            ensure_parent(gen_out);
            save_dataset(d, gen_out);
            log("wrote " + std::to_string(d.size()) + " trials to " + gen_out);
            return 0;
        }

        if (*tr) {
            CliConfig cfg = tr_flags.load();
            if (tr_flags.out) cfg.output_dir = tr_flags.out;
            const fs::path outdir = require(cfg.output_dir, "output_dir", "--out");
            const Dataset raw = load_dataset(require(cfg.dataset, "dataset", "--dataset"));
            const Dataset data = preprocess(raw, cfg.pipeline);
            const auto split = maybe_holdout(data, tr_holdout);
            const ModelSpec spec = resolve_model(cfg.pipeline.model, split.train);
            TrainConfig tc = cfg.pipeline.train;
            log("training " + std::string(to_string(spec.arch)) + " on " + std::to_string(split.train.size()) +
                " trials, P = " + std::to_string(spec.param_count()));
            const TrainReport rep = train(spec, split.train, tc);
            ensure_dir(outdir);
            save_params(rep.theta, outdir / "model.prmv");
            write_text(outdir / "loss_curve.csv", loss_curve_csv(rep, tc));
            cfg.model_path = (outdir / "model.prmv").string();
            write_text(outdir / "resolved_config.json", resolved_config_json(cfg));
            log("train accuracy " + format_number(evaluate(spec, rep.theta, split.train)) + ", final grad norm " +
                format_number(rep.final_grad_norm));
            if (split.test) log("held-out accuracy " + format_number(evaluate(spec, rep.theta, *split.test)));
            return 0;
        }

        if (*sc) {
            CliConfig cfg = sc_flags.load();
            if (sc_model) cfg.model_path = sc_model;
            if (sc_metric) {
                const MetricKind k = as_config_error("--metric", [&] { return parse_metric_kind(*sc_metric); });
                if (k == MetricKind::Random) throw ConfigError("--metric random has no scores");
                cfg.pipeline.metric.kind = k;
            }
            if (sc_mode)
                cfg.pipeline.metric.influence.mode =
                    as_config_error("--mode", [&] { return parse_influence_mode(*sc_mode); });
            if (cfg.pipeline.metric.kind == MetricKind::Random) throw ConfigError("metric 'random' has no scores");
            const std::string model_path = require(cfg.model_path, "model_path", "--model");
            const std::string out_path = require(sc_flags.out, "out", "--out");
            const std::string dataset_path = require(cfg.dataset, "dataset", "--dataset");
            as_config_error("invalid config", [&] {
                cfg.pipeline.validate();
                return 0;
            });
            if (cfg.pipeline.metric.influence.mode == InfluenceMode::ReferenceSet && !sc_holdout)
                throw ConfigError("reference-set mode needs --holdout to name the reference subject");

            const Dataset data = preprocess(load_dataset(dataset_path), cfg.pipeline);
            const auto split = maybe_holdout(data, sc_holdout);
            const ModelSpec spec = resolve_model(cfg.pipeline.model, split.train);
            const ParamVector theta = load_params(model_path);
            if (static_cast<std::size_t>(theta.size()) != spec.param_count())
                throw InvalidArgument("model file has " + std::to_string(theta.size()) + " parameters, config needs " +
                                      std::to_string(spec.param_count()));
            const Samples train_s = to_samples(split.train);
            ScoreVector scores;
            if (cfg.pipeline.metric.kind == MetricKind::Influence) {
                const Samples ref = split.test ? to_samples(*split.test) : Samples{};
                scores = influence_scores(spec, theta, train_s, cfg.pipeline.metric.influence,
                                          split.test ? &ref : nullptr);
            } else {
                scores = compute_scores(spec, theta, train_s, cfg.pipeline.metric, run_seed(cfg));
            }
            ensure_parent(out_path);
            write_text(out_path, scores_csv(split.train, scores));
            log("wrote " + std::to_string(scores.size()) + " " + std::string(to_string(scores.metric_tag)) +
                " scores (" +
                (cfg.pipeline.metric.kind == MetricKind::Influence
                     ? "mode " + std::string(to_string(cfg.pipeline.metric.influence.mode))
                     : "T = " + std::to_string(cfg.pipeline.metric.mc.T)) +
                ") to " + out_path);
            return 0;
        }

        if (*rf) {
            CliConfig cfg = rf_flags.load();
            if (rf_flags.out) cfg.output_dir = rf_flags.out;
            if (rf_metric)
                cfg.pipeline.metric.kind = as_config_error("--metric", [&] { return parse_metric_kind(*rf_metric); });
            as_config_error("invalid config", [&] {
                cfg.pipeline.validate();
                if (!(rf_ratio >= 0.0 && rf_ratio < 1.0)) throw InvalidArgument("--ratio must lie in [0, 1)");
                return 0;
            });
            const fs::path outdir = require(cfg.output_dir, "output_dir", "--out");
            const Dataset raw = load_dataset(require(cfg.dataset, "dataset", "--dataset"));
            const auto raw_split = maybe_holdout(raw, rf_holdout);
            const auto split = maybe_holdout(preprocess(raw, cfg.pipeline), rf_holdout);
            const ModelSpec spec = resolve_model(cfg.pipeline.model, split.train);
            const std::uint64_t seed = run_seed(cfg);

            TrainConfig tc = cfg.pipeline.train;
            const Samples train_s = to_samples(split.train);
            log("stage I: training on " + std::to_string(split.train.size()) + " trials");
            const TrainReport stage1 = train(spec, train_s, tc);

            ScoreVector scores;
            std::pair<Dataset, RefinementPlan> pruned;
            if (cfg.pipeline.metric.kind == MetricKind::Random) {
                pruned = random_dropout(split.train, rf_ratio, seed);
            } else {
                log("stage II: scoring with " + std::string(to_string(cfg.pipeline.metric.kind)));
                scores = compute_scores(spec, stage1.theta, train_s, cfg.pipeline.metric, seed);
                pruned = refine_dataset(split.train, scores, rf_ratio);
            }
            const RefinementPlan& plan = pruned.second;
            if (pruned.first.empty()) throw InvalidArgument("pruning removed every training trial");
            log("stage III: removed " + std::to_string(plan.removed_indices.size()) + " trials, threshold " +
                format_number(plan.threshold));
            const TrainReport stage3 = rf_ratio == 0.0 ? stage1 : train(spec, pruned.first, tc);

            ensure_dir(outdir);
            write_text(outdir / "plan.csv",
                       plan_csv(split.train, plan, cfg.pipeline.metric.kind == MetricKind::Random ? nullptr : &scores));
            if (!scores.scores.empty()) write_text(outdir / "scores.csv", scores_csv(split.train, scores));
            // The refined dataset keeps the original (unstandardized) samples.
            save_dataset(apply_plan(raw_split.train, plan), outdir / "refined.eegd");
            save_params(stage3.theta, outdir / "model.prmv");
            write_text(outdir / "resolved_config.json", resolved_config_json(cfg));
            if (split.train.noise_mask) {
                const RemovalQuality q = removal_quality(plan, *split.train.noise_mask);
                log("removal precision " + format_number(q.precision) + ", recall " + format_number(q.recall));
            }
            if (split.test) {
                log("held-out accuracy: baseline " + format_number(evaluate(spec, stage1.theta, *split.test)) +
                    ", refined " + format_number(evaluate(spec, stage3.theta, *split.test)));
            }
            return 0;
        }

        if (*sw) {
            CliConfig cfg = sw_flags.load();
            if (sw_flags.out) cfg.output_dir = sw_flags.out;
            const fs::path outdir = require(cfg.output_dir, "output_dir", "--out");
            const Dataset d = load_dataset(require(cfg.dataset, "dataset", "--dataset"));
            if (d.subjects().size() < 2) throw ConfigError("sweep needs a dataset with at least two subjects");
            log("sweep: " + std::to_string(d.subjects().size()) + " folds x " +
                std::to_string(cfg.pipeline.ratios.size()) + " ratios x " + std::to_string(cfg.pipeline.seeds.size()) +
                " seeds, metric " + std::string(to_string(cfg.pipeline.metric.kind)));
            const auto t0 = std::chrono::steady_clock::now();
            const ExperimentResult r = grid_search(cfg.pipeline, d);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            emit_report(r, outdir, resolved_config_json(cfg));
            for (const auto& s : r.summary)
                log("ratio " + format_number(s.ratio) + ": mean " + format_number(s.mean) + " std " + format_number(s.std));
            log("best ratio " + format_number(r.best_ratio) + " (selected on test accuracy), " + format_number(secs) +
                " s");
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace dsrefine
