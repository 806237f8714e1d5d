#include "rip/runconfig.hpp"

#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "rip/error.hpp"

namespace rip {

namespace {

using nlohmann::json;

// provenance map filled while resolving; keys are dotted paths
struct Resolver {
    const json& user;
    std::map<std::string, std::string> prov;

    const json* find(const json& obj, const std::string& key) {
        auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    template <typename T>
    T get(const json* section, const std::string& section_name, const std::string& key,
          T fallback) {
        const std::string path = section_name.empty() ? key : section_name + "." + key;
        if (section) {
            if (const json* v = find(*section, key)) {
                prov[path] = "config";
                try {
                    return v->get<T>();
                } catch (const json::exception&) {
                    throw ConfigError("config key '" + path + "' has the wrong type");
                }
            }
        }
        prov[path] = "default";
        return fallback;
    }
};

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            std::string valid;
            for (const auto& k : allowed) {
                if (!valid.empty()) valid += ", ";
                valid += k;
            }
            throw ConfigError("unknown key '" + it.key() + "' in " + where +
                              " (valid keys: " + valid + ")");
        }
    }
}

json train_defaults_for(const std::string& method) {
    json d;
    if (method == "mamba2") {
        d = {{"optimizer", "adamw"},     {"lr", 1e-3},
             {"weight_decay", 1e-5},     {"batch_size", 16},
             {"epochs", 20},             {"scheduler", "steplr"},
             {"scheduler_step", 3},      {"scheduler_gamma", 0.8},
             {"early_stop_patience", 5}};
    } else if (method == "cnn_lstm") {
        d = {{"optimizer", "adam"},      {"lr", 1e-3},
             {"weight_decay", 0.0},      {"batch_size", 16},
             {"epochs", 400},            {"scheduler", "none"},
             {"scheduler_step", 3},      {"scheduler_gamma", 0.8},
             {"early_stop_patience", 5}};
    } else {  // baseline
        d = {{"optimizer", "adam"},      {"lr", 1e-3},
             {"weight_decay", 0.0},      {"batch_size", 16},
             {"epochs", 40},             {"scheduler", "none"},
             {"scheduler_step", 3},      {"scheduler_gamma", 0.8},
             {"early_stop_patience", 5}};
    }
    return d;
}

}  // namespace

RunConfig resolve_run_config(const std::string& json_text, const CliOverrides& cli) {
    json user;
    try {
        user = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(user, {"task", "method", "dataset", "out", "seed", "split", "train", "model"},
                   "config");

    RunConfig cfg;
    Resolver r{user, {}};

    cfg.task = r.get<std::string>(&user, "", "task", "single");
    cfg.method = r.get<std::string>(&user, "", "method", "mamba2");
    if (cfg.task != "single" && cfg.task != "multi") {
        throw ConfigError("task must be 'single' or 'multi', got '" + cfg.task + "'");
    }
    if (cfg.method != "mamba2" && cfg.method != "svm" && cfg.method != "cnn_lstm" &&
        cfg.method != "baseline") {
        throw ConfigError("unknown method '" + cfg.method +
                          "' (valid methods: mamba2, svm, cnn_lstm, baseline)");
    }

    cfg.dataset = r.get<std::string>(&user, "", "dataset", "");
    cfg.out = r.get<std::string>(&user, "", "out", "");
    cfg.seed = r.get<std::uint64_t>(&user, "", "seed", 0);
    if (cli.has_seed) {
        cfg.seed = cli.seed;
        r.prov["seed"] = "cli";
    }
    if (!cli.dataset.empty()) {
        cfg.dataset = cli.dataset;
        r.prov["dataset"] = "cli";
    }
    if (!cli.out.empty()) {
        cfg.out = cli.out;
        r.prov["out"] = "cli";
    }

    const json* split = r.find(user, "split");
    if (split) reject_unknown(*split, {"ratios", "seed"}, "split");
    auto ratios = r.get<std::vector<double>>(split, "split", "ratios", {0.5, 0.2, 0.3});
    if (ratios.size() != 3) throw ConfigError("split.ratios must have 3 entries");
    cfg.split_ratios = {ratios[0], ratios[1], ratios[2]};
    cfg.split_seed = r.get<std::uint64_t>(split, "split", "seed", cfg.seed);
    if (r.prov["split.seed"] == "default") r.prov["split.seed"] = "default (= seed)";

    // train section
    const json* train = r.find(user, "train");
    const json train_defaults = train_defaults_for(cfg.method);
    if (cfg.method == "svm") {
        if (train) {
            for (auto it = train->begin(); it != train->end(); ++it) {
                cfg.warnings.push_back("train." + it.key() +
                                       " is ignored by the svm method (no epoch training)");
            }
        }
    } else {
        if (train) {
            reject_unknown(*train,
                           {"optimizer", "lr", "weight_decay", "batch_size", "epochs", "scheduler",
                            "scheduler_step", "scheduler_gamma", "early_stop_patience"},
                           "train");
        }
        cfg.train.optimizer =
            r.get<std::string>(train, "train", "optimizer", train_defaults["optimizer"]);
        cfg.train.lr = r.get<double>(train, "train", "lr", train_defaults["lr"]);
        cfg.train.weight_decay =
            r.get<double>(train, "train", "weight_decay", train_defaults["weight_decay"]);
        cfg.train.batch_size =
            r.get<std::size_t>(train, "train", "batch_size", train_defaults["batch_size"]);
        cfg.train.epochs = r.get<std::size_t>(train, "train", "epochs", train_defaults["epochs"]);
        cfg.train.scheduler =
            r.get<std::string>(train, "train", "scheduler", train_defaults["scheduler"]);
        cfg.train.scheduler_step =
            r.get<std::size_t>(train, "train", "scheduler_step", train_defaults["scheduler_step"]);
        cfg.train.scheduler_gamma =
            r.get<double>(train, "train", "scheduler_gamma", train_defaults["scheduler_gamma"]);
        cfg.train.early_stop_patience = r.get<std::size_t>(
            train, "train", "early_stop_patience", train_defaults["early_stop_patience"]);
        cfg.train.seed = cfg.seed;
        if (cfg.train.optimizer != "adamw" && cfg.train.optimizer != "adam") {
            throw ConfigError("train.optimizer must be adamw or adam");
        }
        if (cfg.train.scheduler != "steplr" && cfg.train.scheduler != "none") {
            throw ConfigError("train.scheduler must be steplr or none");
        }
        if (cfg.train.lr <= 0) throw ConfigError("train.lr must be positive");
        if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    }

    // model section, method-specific
    const json* model = r.find(user, "model");
    if (cfg.method == "mamba2") {
        if (model) {
            reject_unknown(*model,
                           {"d_model", "n_blocks", "d_state", "d_conv", "expand", "n_heads",
                            "ensemble_combine"},
                           "model");
        }
        cfg.mamba.d_model = r.get<std::size_t>(model, "model", "d_model", 64);
        cfg.mamba.n_blocks = r.get<std::size_t>(model, "model", "n_blocks", 2);
        cfg.mamba.d_state = r.get<std::size_t>(model, "model", "d_state", 32);
        cfg.mamba.d_conv = r.get<std::size_t>(model, "model", "d_conv", 4);
        cfg.mamba.expand = r.get<std::size_t>(model, "model", "expand", 8);
        cfg.mamba.n_heads = r.get<std::size_t>(model, "model", "n_heads", 4);
        cfg.mamba.ensemble_combine =
            r.get<std::string>(model, "model", "ensemble_combine", "logits");
        if (cfg.mamba.ensemble_combine != "logits" && cfg.mamba.ensemble_combine != "probs") {
            throw ConfigError("model.ensemble_combine must be logits or probs");
        }
        if ((cfg.mamba.expand * cfg.mamba.d_model) % cfg.mamba.n_heads != 0) {
            throw ConfigError("model: expand*d_model must be divisible by n_heads");
        }
    } else if (cfg.method == "cnn_lstm") {
        if (model) {
            reject_unknown(*model,
                           {"conv_channels", "conv_kernel", "dropout", "lstm_hidden",
                            "lstm_layers"},
                           "model");
        }
        cfg.cnn.conv_channels = r.get<std::size_t>(model, "model", "conv_channels", 64);
        cfg.cnn.conv_kernel = r.get<std::size_t>(model, "model", "conv_kernel", 3);
        cfg.cnn.dropout = r.get<double>(model, "model", "dropout", 0.25);
        cfg.cnn.lstm_hidden = r.get<std::size_t>(model, "model", "lstm_hidden", 128);
        cfg.cnn.lstm_layers = r.get<std::size_t>(model, "model", "lstm_layers", 2);
    } else if (cfg.method == "baseline") {
        if (model) reject_unknown(*model, {"hidden"}, "model");
        cfg.baseline.hidden = r.get<std::size_t>(model, "model", "hidden", 128);
    } else {  // svm
        if (model) {
            reject_unknown(*model, {"k_frames", "c", "gamma", "smote_k", "tol", "max_passes"},
                           "model");
        }
        cfg.svm.k_frames = r.get<std::size_t>(model, "model", "k_frames", 16);
        cfg.svm.c = r.get<double>(model, "model", "c", 1.0);
        cfg.svm.gamma = r.get<double>(model, "model", "gamma", 0.0);
        cfg.svm.smote_k = r.get<std::size_t>(model, "model", "smote_k", 5);
        cfg.svm.tol = r.get<double>(model, "model", "tol", 1e-3);
        cfg.svm.max_passes = r.get<std::size_t>(model, "model", "max_passes", 2000);
        if (cfg.svm.k_frames < 1) throw ConfigError("model.k_frames must be >= 1");
    }

    const double rsum = cfg.split_ratios[0] + cfg.split_ratios[1] + cfg.split_ratios[2];
    if (std::fabs(rsum - 1.0) > 1e-9) throw ConfigError("split.ratios must sum to 1");

    cfg.provenance = std::move(r.prov);
    return cfg;
}

std::string RunConfig::resolved_json() const {
    json j;
    j["task"] = task;
    j["method"] = method;
    j["dataset"] = dataset;
    j["out"] = out;
    j["seed"] = seed;
    j["split"] = {{"ratios", {split_ratios[0], split_ratios[1], split_ratios[2]}},
                  {"seed", split_seed}};
    if (method != "svm") {
        j["train"] = {{"optimizer", train.optimizer},
                      {"lr", train.lr},
                      {"weight_decay", train.weight_decay},
                      {"batch_size", train.batch_size},
                      {"epochs", train.epochs},
                      {"scheduler", train.scheduler},
                      {"early_stop_patience", train.early_stop_patience}};
        if (train.scheduler == "steplr") {
            j["train"]["scheduler_step"] = train.scheduler_step;
            j["train"]["scheduler_gamma"] = train.scheduler_gamma;
        }
    }
    if (method == "mamba2") {
        j["model"] = {{"d_model", mamba.d_model},   {"n_blocks", mamba.n_blocks},
                      {"d_state", mamba.d_state},   {"d_conv", mamba.d_conv},
                      {"expand", mamba.expand},     {"n_heads", mamba.n_heads}};
        if (task == "multi") j["model"]["ensemble_combine"] = mamba.ensemble_combine;
    } else if (method == "cnn_lstm") {
        j["model"] = {{"conv_channels", cnn.conv_channels},
                      {"conv_kernel", cnn.conv_kernel},
                      {"dropout", cnn.dropout},
                      {"lstm_hidden", cnn.lstm_hidden},
                      {"lstm_layers", cnn.lstm_layers}};
    } else if (method == "baseline") {
        j["model"] = {{"hidden", baseline.hidden}};
    } else {
        j["model"] = {{"k_frames", svm.k_frames}, {"c", svm.c},
                      {"gamma", svm.gamma},       {"smote_k", svm.smote_k},
                      {"tol", svm.tol},           {"max_passes", svm.max_passes}};
    }
    json prov;
    for (const auto& [k, v] : provenance) prov[k] = v;
    j["provenance"] = prov;
    return j.dump(2) + "\n";
}

std::unique_ptr<NeuralModel> build_neural_model(const RunConfig& cfg, std::uint32_t feature_dim,
                                                Rng& rng) {
    if (cfg.method == "mamba2") {
        MambaModelConfig m = cfg.mamba;
        m.feature_dim = feature_dim;
        if (cfg.task == "multi") return std::make_unique<MultiViewMambaEnsemble>(m, rng);
        return std::make_unique<FrontalMambaModel>(m, rng);
    }
    if (cfg.method == "cnn_lstm") {
        CnnLstmConfig c = cfg.cnn;
        c.feature_dim = feature_dim;
        c.views = cfg.task == "multi" ? 3 : 1;
        return std::make_unique<CnnLstmModel>(c, rng);
    }
    if (cfg.method == "baseline") {
        BaselineConfig b = cfg.baseline;
        b.feature_dim = feature_dim;
        b.views = cfg.task == "multi" ? 3 : 1;
        return std::make_unique<BaselineRnnModel>(b, rng);
    }
    throw ConfigError("build_neural_model: '" + cfg.method + "' is not a neural method");
}

}  // namespace rip
