#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcx/errors.hpp"
#include "pcx/eval.hpp"
#include "pcx/io.hpp"
#include "pcx/knn.hpp"
#include "pcx/network.hpp"
#include "pcx/shapes.hpp"
#include "pcx/xai.hpp"

namespace pcx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // usage or contract violations
inline constexpr int kExitIo = 3;     // filesystem failures

// Every run writes its resolved parameters next to its outputs before any
// result file, so interrupted runs stay legible.
inline void write_run_echo(const std::string& out_dir, const nlohmann::json& params) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir.empty() ? "." : out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir);
    fs::path path = fs::path(out_dir.empty() ? "." : out_dir) / "run.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << params.dump(2) << "\n";
    if (!out) throw IoError("write failed on " + path.string());
}

inline std::string parent_dir(const std::string& file_path) {
    std::filesystem::path p(file_path);
    return p.parent_path().string();
}

// Maps the error taxonomy onto the documented exit codes: contract, format
// and parse problems are usage errors (2); filesystem failures are I/O (3).
template <typename Fn>
int run_guarded(Fn&& body, std::ostream& err) {
    try {
        body();
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

// ---- gen ---------------------------------------------------------------------

struct GenOptions {
    std::string out_dir;
    std::size_t per_class = 100;
    std::size_t points = 256;
    std::uint64_t seed = 0;
};

inline int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err) {
    return run_guarded(
        [&] {
            std::size_t test_per_class =
                std::max<std::size_t>(1, opt.per_class / 5);
            write_run_echo(opt.out_dir,
                           {{"command", "gen"},
                            {"out", opt.out_dir},
                            {"per_class", opt.per_class},
                            {"test_per_class", test_per_class},
                            {"points", opt.points},
                            {"seed", opt.seed}});
            write_dataset_dir(opt.out_dir, opt.per_class, test_per_class,
                              opt.points, opt.seed);
            out << "train_files=" << opt.per_class * kNumClasses << "\n";
            out << "test_files=" << test_per_class * kNumClasses << "\n";
        },
        err);
}

// ---- train -------------------------------------------------------------------

struct TrainCmdOptions {
    std::string data_dir;
    std::string out_path;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    bool augment_rotations = false;
    std::string pooling = "max";
};

inline int cmd_train(const TrainCmdOptions& opt, std::ostream& out,
                     std::ostream& err) {
    return run_guarded(
        [&] {
            ModelConfig config;
            if (opt.pooling == "max")
                config.pooling = Pooling::max;
            else if (opt.pooling == "max_mean")
                config.pooling = Pooling::max_mean_concat;
            else
                throw ContractError("unknown pooling mode '" + opt.pooling +
                                    "' (valid: max, max_mean)");
            write_run_echo(parent_dir(opt.out_path),
                           {{"command", "train"},
                            {"data", opt.data_dir},
                            {"out", opt.out_path},
                            {"epochs", opt.epochs},
                            {"seed", opt.seed},
                            {"augment_rotations", opt.augment_rotations},
                            {"pooling", opt.pooling}});
            Dataset train_set = load_dataset_dir(opt.data_dir, "train");
            Dataset test_set = load_dataset_dir(opt.data_dir, "test");
            TrainOptions topt;
            topt.epochs = opt.epochs;
            topt.seed = opt.seed;
            topt.augment_rotations = opt.augment_rotations;
            ModelBundle m = train(config, train_set, test_set, topt);
            save_model(m, opt.out_path);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", m.info.test_accuracy);
            out << "test_acc=" << buf << "\n";
        },
        err);
}

// ---- explain -----------------------------------------------------------------

struct ExplainOptions {
    std::string model_path;
    std::string input_path;
    std::string method = "fbi";
    double p = 2.0;
    int steps = 200;
    std::uint64_t seed = 0;
    std::string out_ply;
    std::string scores_csv;  // optional
};

inline int cmd_explain(const ExplainOptions& opt, std::ostream& out,
                       std::ostream& err) {
    return run_guarded(
        [&] {
            std::optional<Method> method = parse_method(opt.method);
            if (!method)
                throw ContractError(
                    "unknown method '" + opt.method +
                    "' (valid: fbi, fbi_p, critical, gradient, intgrad, "
                    "random)");
            write_run_echo(parent_dir(opt.out_ply),
                           {{"command", "explain"},
                            {"model", opt.model_path},
                            {"input", opt.input_path},
                            {"method", opt.method},
                            {"p", opt.p},
                            {"steps", opt.steps},
                            {"seed", opt.seed},
                            {"out", opt.out_ply},
                            {"scores", opt.scores_csv}});
            ModelBundle m = load_model(opt.model_path);
            PointCloud pc = read_xyz(opt.input_path);
            EstimatorSpec spec{*method, opt.p, opt.steps, opt.seed};
            InfluenceMap map = compute_influence(m, pc, spec);
            write_ply(pc, map.scores, opt.out_ply);
            if (!opt.scores_csv.empty()) {
                std::vector<std::pair<std::string, double>> rows;
                rows.reserve(map.scores.size());
                for (std::size_t i = 0; i < map.scores.size(); ++i)
                    rows.emplace_back(std::to_string(i), map.scores[i]);
                write_csv(opt.scores_csv, "index,score", rows);
            }
            out << "method=" << opt.method << "\n";
            out << "points=" << pc.size() << "\n";
        },
        err);
}

// ---- eval --------------------------------------------------------------------

struct EvalOptions {
    std::string model_path;
    std::string data_dir;
    std::string suite;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

namespace detail {

inline void emit(std::ostream& out,
                 std::vector<std::pair<std::string, double>>& rows,
                 const std::string& key, double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    out << key << "=" << buf << "\n";
    rows.emplace_back(key, value);
}

// Integer-valued metrics print without decimals; the CSV row keeps the
// uniform 6-decimal formatting.
inline void emit_count(std::ostream& out,
                       std::vector<std::pair<std::string, double>>& rows,
                       const std::string& key, std::size_t value) {
    out << key << "=" << value << "\n";
    rows.emplace_back(key, double(value));
}

inline void write_curve_csv(const std::string& path,
                            const PerturbationCurve& curve) {
    std::vector<std::pair<std::string, double>> rows;
    char buf[32];
    for (std::size_t i = 0; i < curve.drop_ratios.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", curve.drop_ratios[i]);
        rows.emplace_back(buf, curve.accuracies[i]);
    }
    write_csv(path, "ratio,accuracy", rows);
}

inline void suite_perturb(const ModelBundle& m, const Dataset& test_set,
                          const EvalOptions& opt, std::ostream& out,
                          std::vector<std::pair<std::string, double>>& rows) {
    namespace fs = std::filesystem;
    const std::vector<Method> methods = {Method::fbi, Method::critical,
                                         Method::gradient, Method::random};
    for (Method method : methods) {
        EstimatorSpec spec;
        spec.method = method;
        spec.seed = opt.seed;
        PerturbationCurve curve = perturbation_test(
            m, test_set, spec, default_drop_ratios(), opt.jobs);
        std::string name = method_name(method);
        write_curve_csv((fs::path(opt.out_dir) / ("curve_" + name + ".csv")).string(),
                        curve);
        if (method == Method::fbi)  // headline curve keeps the short name
            write_curve_csv((fs::path(opt.out_dir) / "curve.csv").string(), curve);
        emit(out, rows, "auc_" + name, curve.auc);
    }
}

inline void suite_rotate(const ModelBundle& m, const Dataset& test_set,
                         const EvalOptions& opt, std::ostream& out,
                         std::vector<std::pair<std::string, double>>& rows) {
    RotationReport rep = rotation_deviation(m, test_set, {}, opt.jobs);
    emit(out, rows, "delta_percent", rep.delta_percent);
    emit(out, rows, "excluded_fraction",
         rep.total_points == 0
             ? 0.0
             : double(rep.excluded_points) / double(rep.total_points));
    emit(out, rows, "excluded_warning", rep.warning ? 1.0 : 0.0);
}

inline void suite_outliers(const ModelBundle& m, const Dataset& test_set,
                           const EvalOptions& opt, std::ostream& out,
                           std::vector<std::pair<std::string, double>>& rows) {
    OutlierStudy study = outlier_study(m, test_set, opt.seed, opt.jobs);
    emit(out, rows, "r_percent", study.r_percent);
    for (std::size_t s = 0; s < study.per_severity.size(); ++s)
        emit(out, rows, "r_severity_" + std::to_string(s + 1),
             study.per_severity[s]);
}

inline void suite_timing(const ModelBundle& m, const Dataset& test_set,
                         const EvalOptions& opt, std::ostream& out,
                         std::vector<std::pair<std::string, double>>& rows) {
    // timing must stay single-context regardless of --jobs
    const PointCloud& pc = test_set.front();
    std::vector<EstimatorSpec> specs(4);
    specs[0].method = Method::fbi;
    specs[1].method = Method::critical;
    specs[2].method = Method::gradient;
    specs[3].method = Method::intgrad;
    specs[3].steps = 20;
    std::vector<TimingEntry> entries = timing_bench(m, pc, specs);
    double fbi_ms = 0.0;
    for (const TimingEntry& e : entries) {
        emit(out, rows, std::string("median_ms_") + method_name(e.method),
             e.median_ms);
        if (e.method == Method::fbi) fbi_ms = e.median_ms;
    }
    for (const TimingEntry& e : entries)
        if (e.method != Method::fbi && fbi_ms > 0.0)
            emit(out, rows,
                 std::string("ratio_") + method_name(e.method) + "_over_fbi",
                 e.median_ms / fbi_ms);

    // fbi timing is architecture-independent: re-time against a model whose
    // head depth is doubled, with an adjacent re-baseline for a fair delta
    ModelConfig deep = m.config;
    std::vector<std::size_t> head;
    for (std::size_t i = 0; i + 1 < deep.head_widths.size(); ++i) {
        head.push_back(deep.head_widths[i]);
        head.push_back(deep.head_widths[i]);
    }
    head.push_back(deep.head_widths.back());
    deep.head_widths = head;
    ModelBundle deep_model = init_model(deep, m.info.seed);
    std::vector<EstimatorSpec> fbi_only(1);
    emit(out, rows, "median_ms_fbi_rebase",
         timing_bench(m, pc, fbi_only, 101)[0].median_ms);
    emit(out, rows, "median_ms_fbi_deep_head",
         timing_bench(deep_model, pc, fbi_only, 101)[0].median_ms);
}

inline void suite_smoothness(const ModelBundle& m, const Dataset& test_set,
                             const EvalOptions& opt, std::ostream& out,
                             std::vector<std::pair<std::string, double>>& rows) {
    struct CloudStats {
        double tv_fbi = 0.0, tv_cp = 0.0, jump_cp = 0.0;
        bool connected = false;
    };
    std::vector<CloudStats> stats(test_set.size());
    parallel_for(test_set.size(), opt.jobs, [&](std::size_t ci) {
        const PointCloud& pc = test_set[ci];
        KnnGraph g = build_knn_graph(pc, 8);
        FeatureMatrix features = forward(m, pc).features;
        Smoothness fb = smoothness_tv(fbi(features), g);
        Smoothness cp = smoothness_tv(critical_points(features), g);
        stats[ci] = {fb.mean_tv, cp.mean_tv, cp.max_jump, g.connected};
    });
    double tv_fbi = 0.0, tv_cp = 0.0, jump = 0.0, connected = 0.0;
    for (const CloudStats& s : stats) {
        tv_fbi += s.tv_fbi;
        tv_cp += s.tv_cp;
        jump = std::max(jump, s.jump_cp);
        connected += s.connected ? 1.0 : 0.0;
    }
    emit(out, rows, "tv_fbi_mean", tv_fbi / double(stats.size()));
    emit(out, rows, "tv_critical_mean", tv_cp / double(stats.size()));
    emit(out, rows, "max_edge_jump_critical", jump);
    emit(out, rows, "connected_fraction", connected / double(stats.size()));
}

inline void suite_zerograd(const ModelBundle& m, const Dataset& test_set,
                           const EvalOptions& opt, std::ostream& out,
                           std::vector<std::pair<std::string, double>>& rows) {
    std::vector<std::size_t> counts(test_set.size(), 0);
    std::vector<char> bound_ok(test_set.size(), 0);
    parallel_for(test_set.size(), opt.jobs, [&](std::size_t ci) {
        counts[ci] = zero_gradient_count(m, test_set[ci]);
        std::size_t n = test_set[ci].size();
        std::size_t f = m.config.feature_dim();
        bound_ok[ci] = n > f && counts[ci] + f >= n ? 1 : 0;
    });
    std::size_t mn = counts[0];
    double mean = 0.0, ok = 0.0;
    for (std::size_t ci = 0; ci < counts.size(); ++ci) {
        mn = std::min(mn, counts[ci]);
        mean += double(counts[ci]);
        ok += bound_ok[ci];
    }
    emit_count(out, rows, "zero_grad_min", mn);
    emit(out, rows, "zero_grad_mean", mean / double(counts.size()));
    emit(out, rows, "bound_satisfied_fraction", ok / double(counts.size()));
}

}  // namespace detail

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    return run_guarded(
        [&] {
            static const std::vector<std::string> suites = {
                "perturb", "rotate", "outliers",
                "timing",  "smoothness", "zerograd"};
            if (std::find(suites.begin(), suites.end(), opt.suite) ==
                suites.end())
                throw ContractError(
                    "unknown suite '" + opt.suite +
                    "' (valid: perturb, rotate, outliers, timing, smoothness, "
                    "zerograd)");
            write_run_echo(opt.out_dir, {{"command", "eval"},
                                         {"model", opt.model_path},
                                         {"data", opt.data_dir},
                                         {"suite", opt.suite},
                                         {"out", opt.out_dir},
                                         {"seed", opt.seed},
                                         {"jobs", opt.jobs}});
            ModelBundle m = load_model(opt.model_path);
            Dataset test_set = load_dataset_dir(opt.data_dir, "test");

            std::vector<std::pair<std::string, double>> rows;
            if (opt.suite == "perturb")
                detail::suite_perturb(m, test_set, opt, out, rows);
            else if (opt.suite == "rotate")
                detail::suite_rotate(m, test_set, opt, out, rows);
            else if (opt.suite == "outliers")
                detail::suite_outliers(m, test_set, opt, out, rows);
            else if (opt.suite == "timing")
                detail::suite_timing(m, test_set, opt, out, rows);
            else if (opt.suite == "smoothness")
                detail::suite_smoothness(m, test_set, opt, out, rows);
            else
                detail::suite_zerograd(m, test_set, opt, out, rows);

            write_csv(
                (std::filesystem::path(opt.out_dir) / "report.csv").string(),
                "metric,value", rows);
        },
        err);
}

// ---- argument wiring -----------------------------------------------------------

inline int cli_main(std::vector<std::string> args, std::ostream& out,
                    std::ostream& err) {
    CLI::App app{"synthetic point-cloud classifier with per-point influence maps"};
    app.require_subcommand(1);

    GenOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate a labeled shape dataset");
    gen_cmd->add_option("--out", gen.out_dir, "dataset directory")->required();
    gen_cmd->add_option("--per-class", gen.per_class, "training clouds per class");
    gen_cmd->add_option("--points", gen.points, "points per cloud");
    gen_cmd->add_option("--seed", gen.seed, "base RNG seed");

    TrainCmdOptions tr;
    CLI::App* train_cmd = app.add_subcommand("train", "train the classifier");
    train_cmd->add_option("--data", tr.data_dir, "dataset directory")->required();
    train_cmd->add_option("--out", tr.out_path, "output PCXW path")->required();
    train_cmd->add_option("--epochs", tr.epochs, "training epochs");
    train_cmd->add_option("--seed", tr.seed, "RNG seed");
    train_cmd->add_flag("--augment-rotations", tr.augment_rotations,
                        "random rotation per training step");
    train_cmd->add_option("--pooling", tr.pooling, "max or max_mean");

    ExplainOptions ex;
    CLI::App* explain_cmd =
        app.add_subcommand("explain", "per-point influence for one cloud");
    explain_cmd->add_option("--model", ex.model_path, "PCXW model")->required();
    explain_cmd->add_option("--input", ex.input_path, "cloud .xyz")->required();
    explain_cmd->add_option("--method", ex.method,
                            "fbi|fbi_p|critical|gradient|intgrad|random");
    explain_cmd->add_option("--p", ex.p, "fbi_p norm order");
    explain_cmd->add_option("--steps", ex.steps, "intgrad path steps");
    explain_cmd->add_option("--seed", ex.seed, "seed for the random baseline");
    explain_cmd->add_option("--out", ex.out_ply, "output PLY")->required();
    explain_cmd->add_option("--scores", ex.scores_csv, "optional scores CSV");

    EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "run an evaluation suite");
    eval_cmd->add_option("--model", ev.model_path, "PCXW model")->required();
    eval_cmd->add_option("--data", ev.data_dir, "dataset directory")->required();
    eval_cmd
        ->add_option("--suite", ev.suite,
                     "perturb|rotate|outliers|timing|smoothness|zerograd")
        ->required();
    eval_cmd->add_option("--out", ev.out_dir, "output directory")->required();
    eval_cmd->add_option("--seed", ev.seed, "RNG seed");
    eval_cmd->add_option("--jobs", ev.jobs, "parallel workers over clouds");

    try {
        std::reverse(args.begin(), args.end());  // CLI11 consumes back-to-front
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    if (gen_cmd->parsed()) return cmd_gen(gen, out, err);
    if (train_cmd->parsed()) return cmd_train(tr, out, err);
    if (explain_cmd->parsed()) return cmd_explain(ex, out, err);
    return cmd_eval(ev, out, err);
}

}  // namespace pcx::cli
