// Workbench CLI: generate synthetic rider-intention data, train any of the
// four methods on the single- or multi-view task, evaluate checkpoints, and
// run the full benchmark grid.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "rip/checkpoint.hpp"
#include "rip/data.hpp"
#include "rip/error.hpp"
#include "rip/metrics.hpp"
#include "rip/models.hpp"
#include "rip/runconfig.hpp"
#include "rip/svm.hpp"
#include "rip/synth.hpp"
#include "rip/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rip;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw DataError(DataError::Kind::other, "cannot write " + p.string());
    out << text;
}

GenConfig parse_gen_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("gen config parse error: " + std::string(e.what()));
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> allowed = {"n_samples",  "dim",   "fps",
                                                      "len_min_s",  "len_max_s",
                                                      "class_dist", "noise_scale", "views"};
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in gen config");
        }
    }
    GenConfig cfg;
    if (j.contains("n_samples")) cfg.n_samples = j["n_samples"].get<std::size_t>();
    if (j.contains("dim")) cfg.dim = j["dim"].get<std::uint32_t>();
    if (j.contains("fps")) cfg.fps = j["fps"].get<double>();
    if (j.contains("len_min_s")) cfg.len_min_s = j["len_min_s"].get<double>();
    if (j.contains("len_max_s")) cfg.len_max_s = j["len_max_s"].get<double>();
    if (j.contains("noise_scale")) cfg.noise_scale = j["noise_scale"].get<double>();
    if (j.contains("views")) cfg.views = j["views"].get<int>();
    if (j.contains("class_dist")) {
        const json& d = j["class_dist"];
        for (int c = 0; c < kNumClasses; ++c) {
            const char* name = label_name(static_cast<ManeuverLabel>(c));
            if (!d.contains(name)) throw ConfigError("class_dist is missing " + std::string(name));
            cfg.class_dist[c] = d[name].get<double>();
        }
    }
    return cfg;
}

int cmd_gen_data(const std::string& config_path, const std::string& out, std::uint64_t seed) {
    GenConfig cfg;
    if (!config_path.empty()) cfg = parse_gen_config(read_file(config_path));
    // validation and generation happen fully in memory before any file IO
    Dataset ds = generate_synthetic(cfg, seed);
    try {
        fs::create_directories(out);
        write_dataset(out, ds);
    } catch (const std::exception& e) {
        // an unwritable destination is a usage error
        throw ConfigError(std::string("cannot write dataset: ") + e.what());
    }
    GenReport report;
    report.seed = seed;
    for (const auto& s : ds.samples) ++report.class_counts[label_code(s.label)];
    report.probe_accuracy = nearest_centroid_probe(ds);
    {
        json j;
        j["seed"] = seed;
        j["n_samples"] = cfg.n_samples;
        j["dim"] = cfg.dim;
        j["fps"] = cfg.fps;
        j["len_min_s"] = cfg.len_min_s;
        j["len_max_s"] = cfg.len_max_s;
        j["noise_scale"] = cfg.noise_scale;
        j["views"] = cfg.views;
        json counts, dist;
        for (int c = 0; c < kNumClasses; ++c) {
            counts[label_name(static_cast<ManeuverLabel>(c))] = report.class_counts[c];
            dist[label_name(static_cast<ManeuverLabel>(c))] = cfg.class_dist[c];
        }
        j["class_counts"] = counts;
        j["class_dist"] = dist;
        j["probe_accuracy"] = report.probe_accuracy;
        write_file(fs::path(out) / "gen_report.json", j.dump(2) + "\n");
    }
    std::cout << "generated " << ds.samples.size() << " samples (dim " << ds.dim << ", "
              << ds.views.size() << " views) into " << out << "\n"
              << "nearest-centroid probe accuracy: " << report.probe_accuracy << "\n";
    return 0;
}

struct SplitSets {
    std::vector<const Sample*> train, val, test;
};

SplitSets make_splits(const Dataset& ds, const RunConfig& cfg) {
    SplitIndices idx = split_dataset(ds, cfg.split_ratios, cfg.split_seed, true);
    return SplitSets{select(ds, idx.train), select(ds, idx.val), select(ds, idx.test)};
}

void check_dataset_compat(const Dataset& ds, const RunConfig& cfg) {
    for (const auto& v : cfg.task_views()) {
        if (std::find(ds.views.begin(), ds.views.end(), v) == ds.views.end()) {
            throw DataError(DataError::Kind::incompatible,
                            "task '" + cfg.task + "' needs view '" + v +
                                "' which the dataset does not provide");
        }
    }
}

std::string checkpoint_config(const RunConfig& cfg, const Dataset& ds) {
    json j = json::parse(cfg.resolved_json());
    j["data"] = {{"dim", ds.dim}, {"views", ds.views}};
    return j.dump(2) + "\n";
}

int cmd_train(const std::string& config_path, const CliOverrides& cli, bool resolve_only) {
    RunConfig cfg = resolve_run_config(read_file(config_path), cli);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
    if (cfg.out.empty()) throw ConfigError("no output directory (config 'out' or --out)");
    fs::create_directories(cfg.out);
    write_file(fs::path(cfg.out) / "resolved_config.json", cfg.resolved_json());
    if (resolve_only) {
        std::cout << "resolved config written to " << cfg.out << "\n";
        return 0;
    }
    if (cfg.dataset.empty()) throw ConfigError("no dataset (config 'dataset' or --dataset)");

    Dataset ds = load_dataset(cfg.dataset);
    check_dataset_compat(ds, cfg);
    SplitSets split = make_splits(ds, cfg);
    const auto views = cfg.task_views();
    const auto t0 = std::chrono::steady_clock::now();

    if (cfg.method == "svm") {
        SvmTrainOutcome outcome = train_ovr_svm(split.train, views, cfg.svm, cfg.seed);
        Checkpoint ckpt = checkpoint_from_svm(outcome.model, checkpoint_config(cfg, ds));
        write_checkpoint(fs::path(cfg.out) / "checkpoint.ripm", ckpt);
        json rep;
        rep["train_accuracy"] = outcome.train_accuracy;
        json before, after;
        for (const auto& [label, n] : outcome.resample.before) {
            before[label_name(static_cast<ManeuverLabel>(label))] = n;
        }
        for (const auto& [label, n] : outcome.resample.after) {
            after[label_name(static_cast<ManeuverLabel>(label))] = n;
        }
        rep["resample"] = {{"before", before},
                           {"after", after},
                           {"synthetic_rows", outcome.resample.synthetic.size()}};
        json kkt = json::array();
        for (int c = 0; c < kNumClasses; ++c) {
            kkt.push_back({{"class", label_name(static_cast<ManeuverLabel>(c))},
                           {"kkt_violations", outcome.kkt_violations[c]},
                           {"converged", outcome.converged[c]}});
            if (!outcome.converged[c]) {
                std::cerr << "warning: svm machine for "
                          << label_name(static_cast<ManeuverLabel>(c)) << " stopped with "
                          << outcome.kkt_violations[c] << " KKT violations\n";
            }
        }
        rep["machines"] = kkt;
        write_file(fs::path(cfg.out) / "train_report.json", rep.dump(2) + "\n");
        std::cout << "svm " << cfg.task << ": train acc " << outcome.train_accuracy << "\n";
    } else {
        NormStats stats = fit_zscore(split.train, views, ds.dim);
        Rng init_rng = Rng::stream(cfg.seed, "init");
        auto model = build_neural_model(cfg, ds.dim, init_rng);
        TaskData train_data{split.train, views, &stats};
        TaskData val_data{split.val, views, &stats};
        History history = fit(*model, train_data, val_data, cfg.train);
        Checkpoint ckpt =
            checkpoint_from_neural(*model, cfg.method, checkpoint_config(cfg, ds), stats);
        write_checkpoint(fs::path(cfg.out) / "checkpoint.ripm", ckpt);
        write_file(fs::path(cfg.out) / "history.txt", history.to_text());
        const auto& best = history.epochs.at(history.best_epoch);
        std::cout << cfg.method << " " << cfg.task << ": best epoch " << history.best_epoch
                  << ", val acc " << best.val_acc << "\n";
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "training time: " << secs << " s\n";
    return 0;
}

struct EvalOutcome {
    EvalReport report;
};

EvalOutcome run_eval(const fs::path& model_dir, const std::string& dataset_path,
                     const std::string& split_name, const fs::path& out_dir) {
    const fs::path ckpt_path =
        fs::is_directory(model_dir) ? model_dir / "checkpoint.ripm" : model_dir;
    Checkpoint ckpt = read_checkpoint(ckpt_path);
    json embedded;
    try {
        embedded = json::parse(ckpt.config_json);
    } catch (const json::exception& e) {
        throw DataError(DataError::Kind::incompatible,
                        "checkpoint config echo unreadable: " + std::string(e.what()));
    }
    const json data_facts = embedded.value("data", json::object());
    embedded.erase("provenance");
    embedded.erase("data");
    RunConfig cfg = resolve_run_config(embedded.dump(), CliOverrides{});
    if (method_id(cfg.method) != ckpt.method_id) {
        throw DataError(DataError::Kind::incompatible, "checkpoint method id mismatch");
    }
    if (split_name != "train" && split_name != "val" && split_name != "test") {
        throw ConfigError("unknown split '" + split_name + "' (expected train, val or test)");
    }

    Dataset ds = load_dataset(dataset_path);
    check_dataset_compat(ds, cfg);
    if (data_facts.contains("dim") && data_facts["dim"].get<std::uint32_t>() != ds.dim) {
        throw DataError(DataError::Kind::incompatible,
                        "checkpoint was trained on dim " +
                            std::to_string(data_facts["dim"].get<std::uint32_t>()) +
                            ", dataset has dim " + std::to_string(ds.dim));
    }
    SplitSets splits = make_splits(ds, cfg);
    const std::vector<const Sample*>& subset =
        split_name == "train" ? splits.train : (split_name == "val" ? splits.val : splits.test);
    if (subset.empty()) {
        throw DataError(DataError::Kind::incompatible,
                        "split '" + split_name + "' is empty for this dataset");
    }

    std::vector<ManeuverLabel> preds;
    if (cfg.method == "svm") {
        OvrSvmModel model = load_svm_checkpoint(ckpt);
        model.views = cfg.task_views();
        preds = svm_predict(model, subset, cfg.seed);
    } else {
        Rng init_rng = Rng::stream(cfg.seed, "init");
        auto model = build_neural_model(cfg, ds.dim, init_rng);
        NormStats stats = load_neural_checkpoint(ckpt, *model);
        TaskData data{subset, cfg.task_views(), &stats};
        preds = predict(*model, data, cfg.train.batch_size);
    }
    std::vector<ManeuverLabel> targets;
    targets.reserve(subset.size());
    for (const Sample* s : subset) targets.push_back(s->label);

    EvalOutcome outcome;
    outcome.report = per_class_report(preds, targets);
    fs::create_directories(out_dir);
    write_file(out_dir / ("report_" + split_name + ".txt"), format_report(outcome.report));
    char row[160];
    std::snprintf(row, sizeof(row), "%s,%s,%.2f,%.2f\n", cfg.method.c_str(), cfg.task.c_str(),
                  outcome.report.accuracy * 100.0, outcome.report.f1 * 100.0);
    write_file(out_dir / ("row_" + split_name + ".csv"), row);
    return outcome;
}

int cmd_eval(const std::string& model_dir, const std::string& dataset_path,
             const std::string& split_name, std::string out_dir) {
    if (out_dir.empty()) out_dir = model_dir;
    EvalOutcome outcome = run_eval(model_dir, dataset_path, split_name, out_dir);
    std::cout << format_report(outcome.report);
    return 0;
}

int cmd_bench(const std::string& dataset_path, const std::string& out,
              std::uint64_t seed, std::size_t epochs_cap) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out);
    struct Row {
        std::string method, task;
        double acc, f1;
    };
    std::vector<Row> rows;
    for (const std::string method : {"mamba2", "svm", "cnn_lstm", "baseline"}) {
        for (const std::string task : {"single", "multi"}) {
            json user;
            user["method"] = method;
            user["task"] = task;
            user["dataset"] = dataset_path;
            user["out"] = out + "/" + method + "_" + task;
            user["seed"] = seed;
            if (epochs_cap > 0 && method != "svm") {
                user["train"] = {{"epochs", epochs_cap}};
            }
            RunConfig cfg = resolve_run_config(user.dump(), CliOverrides{});
            std::cout << "=== bench " << method << " / " << task << " ===\n";
            const fs::path cell_dir = cfg.out;
            {
                // reuse the training entry point via a temp config file
                fs::create_directories(cell_dir);
                write_file(cell_dir / "config.json", user.dump(2) + "\n");
                int rc = cmd_train((cell_dir / "config.json").string(), CliOverrides{}, false);
                if (rc != 0) return rc;
            }
            EvalOutcome outcome = run_eval(cell_dir, dataset_path, "test", cell_dir);
            rows.push_back(Row{method, task, outcome.report.accuracy * 100.0,
                               outcome.report.f1 * 100.0});
        }
    }
    std::ostringstream table;
    table << "method    task    acc     f1\n";
    std::ostringstream csv;
    csv << "method,task,acc,f1\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-9s %-7s %6.2f  %6.2f\n", r.method.c_str(),
                      r.task.c_str(), r.acc, r.f1);
        table << buf;
        std::snprintf(buf, sizeof(buf), "%s,%s,%.2f,%.2f\n", r.method.c_str(), r.task.c_str(),
                      r.acc, r.f1);
        csv << buf;
    }
    write_file(fs::path(out) / "summary.txt", table.str());
    write_file(fs::path(out) / "summary.csv", csv.str());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << table.str() << "bench wall time: " << secs << " s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rider-intention prediction workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::string gen_config, gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--config", gen_config, "generator config JSON");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "generator seed");

    auto* train = app.add_subcommand("train", "train one method on one task");
    std::string train_config;
    CliOverrides cli;
    bool resolve_only = false;
    std::uint64_t cli_seed = 0;
    train->add_option("--config", train_config, "run config JSON")->required();
    train->add_option("--out", cli.out, "output directory override");
    train->add_option("--dataset", cli.dataset, "dataset directory override");
    auto* seed_opt = train->add_option("--seed", cli_seed, "seed override");
    train->add_flag("--resolve-only", resolve_only,
                    "write the resolved config echo and exit without training");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string eval_model, eval_dataset, eval_split = "test", eval_out;
    eval->add_option("--model", eval_model, "checkpoint directory or file")->required();
    eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
    eval->add_option("--split", eval_split, "train|val|test (default test)");
    eval->add_option("--out", eval_out, "report output directory (default: model dir)");

    auto* bench = app.add_subcommand("bench", "run all 4 methods x 2 tasks and summarize");
    std::string bench_dataset, bench_out;
    std::uint64_t bench_seed = 0;
    std::size_t bench_cap = 0;
    bench->add_option("--dataset", bench_dataset, "dataset directory")->required();
    bench->add_option("--out", bench_out, "output directory")->required();
    bench->add_option("--seed", bench_seed, "seed for every cell");
    bench->add_option("--epochs-cap", bench_cap, "cap train epochs of the neural cells");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_config, gen_out, gen_seed);
        if (train->parsed()) {
            cli.has_seed = seed_opt->count() > 0;
            cli.seed = cli_seed;
            return cmd_train(train_config, cli, resolve_only);
        }
        if (eval->parsed()) return cmd_eval(eval_model, eval_dataset, eval_split, eval_out);
        if (bench->parsed()) return cmd_bench(bench_dataset, bench_out, bench_seed, bench_cap);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
