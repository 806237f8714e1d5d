// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Criterion 7 drives the real CLI binary end to end and is
// the long pole (a full 8-cell benchmark on the 1000-sample dataset).

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rip/checkpoint.hpp"
#include "rip/data.hpp"
#include "rip/error.hpp"
#include "rip/grad_check.hpp"
#include "rip/metrics.hpp"
#include "rip/models.hpp"
#include "rip/ops.hpp"
#include "rip/smote.hpp"
#include "rip/ssm.hpp"
#include "rip/svm.hpp"
#include "rip/synth.hpp"
#include "rip/train.hpp"

using namespace rip;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal() * scale;
    return t;
}

int run_cli(const std::string& args, const fs::path& cwd, std::string* out = nullptr) {
    const fs::path out_file = cwd / "_acc_cmd.txt";
    const std::string cmd = "cd " + cwd.string() + " && " + std::string(RIP_CLI_PATH) + " " +
                            args + " > _acc_cmd.txt 2>&1";
    const int rc = std::system(cmd.c_str());
    if (out) {
        std::ifstream in(out_file);
        std::stringstream ss;
        ss << in.rdbuf();
        *out = ss.str();
    }
    fs::remove(out_file);
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

// --- criterion 1: gradient suite -------------------------------------------------

bool grad_suite_ok(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_where = "none";
    std::uint64_t cur_seed = 0;
    std::string cur_label;
    auto track = [&](double err) {
        if (err > worst) {
            worst = err;
            worst_where = cur_label + "@seed" + std::to_string(cur_seed);
        }
    };

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        cur_seed = seed;
        // primitive operations
        {
            cur_label = "matmul";
            Tensor a = randn({3, 4}, rng), b = randn({4, 2}, rng);
            track(grad_check([](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); },
                             {a, b}));
        }
        {
            cur_label = "depthwise_conv";
            Tensor x = randn({5, 3}, rng), w = randn({3, 3}, rng), bias = randn({3}, rng);
            track(grad_check(
                [](const std::vector<Tensor>& in) {
                    return sum(causal_conv1d(in[0], in[1], in[2]));
                },
                {x, w, bias}));
        }
        {
            cur_label = "conv1d";
            Tensor x = randn({1, 5, 3}, rng), w = randn({2, 3, 4}, rng), bias = randn({4}, rng);
            track(grad_check(
                [](const std::vector<Tensor>& in) {
                    return sum(square(conv1d_causal(in[0], in[1], in[2])));
                },
                {x, w, bias}));
        }
        {
            cur_label = "activations";
            Tensor x = randn({6}, rng);
            for (auto f : {silu, softplus, sigmoid, tanh_op}) {
                track(grad_check(
                    [&](const std::vector<Tensor>& in) { return sum(square(f(in[0]))); }, {x}));
            }
            track(grad_check(
                [](const std::vector<Tensor>& in) {
                    return sum(square(leaky_relu(in[0], 0.01)));
                },
                {x}));
        }
        {
            cur_label = "rowops";
            Tensor x = randn({2, 5}, rng), g = randn({5}, rng), b = randn({5}, rng);
            track(grad_check(
                [](const std::vector<Tensor>& in) {
                    return sum(square(layer_norm(in[0], in[1], in[2])));
                },
                {x, g, b}));
            track(grad_check(
                [](const std::vector<Tensor>& in) { return sum(square(softmax(in[0]))); }, {x}));
            track(grad_check(
                [](const std::vector<Tensor>& in) { return cross_entropy_logits(in[0], {1, 4}); },
                {x}));
        }
        {
            cur_label = "pooling";
            Tensor x = randn({2, 4, 3}, rng);
            std::vector<int> lengths{3, 4};
            track(grad_check(
                [&](const std::vector<Tensor>& in) {
                    return sum(square(masked_mean_pool(in[0], lengths)));
                },
                {x}));
            track(grad_check(
                [&](const std::vector<Tensor>& in) {
                    return sum(square(gather_last(in[0], lengths)));
                },
                {x}));
        }
        {
            cur_label = "recurrent";
            Tensor x = randn({2, 4, 3}, rng);
            std::vector<int> lengths{4, 3};
            LstmDirParams p{randn({3, 8}, rng), randn({2, 8}, rng), randn({8}, rng)};
            track(grad_check(
                [&](const std::vector<Tensor>& in) {
                    LstmDirParams q{in[1], in[2], in[3]};
                    return sum(square(lstm_bidir(in[0], lengths, {q, q})));
                },
                {x, p.wx, p.wh, p.b}));
            GruParams g{randn({3, 6}, rng), randn({2, 6}, rng), randn({6}, rng), randn({6}, rng)};
            track(grad_check(
                [&](const std::vector<Tensor>& in) {
                    GruParams q{in[1], in[2], in[3], in[4]};
                    return sum(square(gru_forward(in[0], lengths, q)));
                },
                {x, g.wx, g.wh, g.bx, g.bh}));
        }
        {
            cur_label = "batchnorm";
            Tensor x = randn({2, 4, 3}, rng), g = randn({3}, rng), b = randn({3}, rng);
            // fixed random readout; a plain square loss is invariant to x
            // through train-mode standardization
            Tensor w = randn({2, 4, 3}, rng);
            std::vector<int> lengths{4, 3};
            track(grad_check(
                [&](const std::vector<Tensor>& in) {
                    std::vector<double> rm(3, 0.0), rv(3, 1.0);
                    return sum(mul(
                        batch_norm_seq(in[0], in[1], in[2], lengths, rm, rv, 0.1, 1e-5, true), w));
                },
                {x, g, b}));
        }
        {
            cur_label = "ssd_scan";
            Tensor x = randn({2, 5, 4}, rng, 0.7);
            Tensor dt(Shape{2, 5, 2});
            for (auto& v : dt.values()) v = rng.uniform(0.0, 1.0);
            Tensor bmat = randn({2, 5, 3}, rng), cmat = randn({2, 5, 3}, rng);
            Tensor a_log = randn({2}, rng, 0.3);
            std::vector<int> lengths{5, 4};
            track(grad_check(
                [&](const std::vector<Tensor>& in) {
                    return sum(
                        square(ssd_scan(in[0], in[1], in[2], in[3], in[4], lengths, 2)));
                },
                {x, dt, bmat, cmat, a_log}));
        }

        // Full models under cross-entropy, checked at a generic parameter
        // point: the shipped init (dt ~ 0.01) suppresses upstream gradients
        // below what f64 central differences can resolve against the 1e-8
        // denominator floor. Randomized parameters plus a down-scaled loss
        // keep every comparable partial above the floor while the
        // finite-difference noise stays under the tolerance.
        MambaModelConfig mc;
        mc.feature_dim = 4;
        mc.d_model = 6;
        mc.n_blocks = 1;
        mc.d_state = 2;
        mc.d_conv = 2;
        mc.expand = 2;
        mc.n_heads = 2;
        std::vector<int> lengths{3, 2};
        std::vector<int> targets{1, 5};
        auto model_check = [&](NeuralModel& model, std::size_t views) {
            cur_label = "model(" + model.method_name() + "," + std::to_string(views) + "v)";
            for (auto p : model.parameters()) {
                for (auto& v : p.values()) v = rng.normal() * 0.3;
            }
            std::vector<ViewBatch> batch;
            ViewBatch front{randn({2, 3, 4}, rng), lengths};
            batch.push_back(front);
            for (std::size_t v = 1; v < views; ++v) {
                batch.push_back(ViewBatch{randn({2, 3, 4}, rng), lengths});
            }
            track(grad_check(
                [&](const std::vector<Tensor>&) {
                    return scale(
                        cross_entropy_logits(model.forward_logits(batch, true, nullptr), targets),
                        0.005);
                },
                model.parameters(), 1e-4));
        };
        {
            FrontalMambaModel m(mc, rng);
            model_check(m, 1);
        }
        {
            MultiViewMambaEnsemble m(mc, rng);
            model_check(m, 3);
        }
        {
            CnnLstmConfig cc;
            cc.feature_dim = 4;
            cc.views = 1;
            cc.conv_channels = 3;
            cc.lstm_hidden = 3;
            cc.lstm_layers = 2;
            cc.dropout = 0.0;  // grad_check needs a deterministic forward
            CnnLstmModel m(cc, rng);
            model_check(m, 1);
            cc.views = 3;
            CnnLstmModel m3(cc, rng);
            model_check(m3, 3);
        }
        {
            BaselineConfig bc;
            bc.feature_dim = 4;
            bc.views = 1;
            bc.hidden = 3;
            BaselineRnnModel m(bc, rng);
            model_check(m, 1);
            bc.views = 3;
            BaselineRnnModel m3(bc, rng);
            model_check(m3, 3);
        }
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "gradient suite: max rel err %.3g (%s) over 10 seeds in %.1f s (tol 1e-4)",
                  worst, worst_where.c_str(), secs);
    detail = buf;
    return worst <= 1e-4 && secs < 120.0;
}

// --- criterion 2: scan equivalence ------------------------------------------------

bool scan_equivalence_ok(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    double worst = 0.0;
    for (std::size_t t_len : {1u, 7u, 64u, 256u}) {
        Tensor x = randn({t_len, 2, 4}, rng);
        Tensor dt(Shape{t_len, 2});
        for (auto& v : dt.values()) v = rng.uniform(0.0, 1.0);
        Tensor b = randn({t_len, 5}, rng), c = randn({t_len, 5}, rng);
        Tensor a_log = randn({2}, rng, 0.3);
        NoGradGuard ng;
        Tensor seq = ssd_scan(x, dt, b, c, a_log);
        for (std::size_t chunk : {std::size_t{1}, std::size_t{2}, std::size_t{7}, t_len}) {
            Tensor chunked = ssd_scan_chunked(x, dt, b, c, a_log, chunk);
            for (std::size_t i = 0; i < seq.size(); ++i) {
                worst = std::max(worst, std::fabs(seq.data()[i] - chunked.data()[i]));
            }
        }
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "scan equivalence: max |chunked - sequential| %.3g in %.1f s (tol 1e-10)", worst,
                  secs);
    detail = buf;
    return worst <= 1e-10 && secs < 30.0;
}

// --- criterion 3: metric oracles -----------------------------------------------

bool metric_oracles_ok(std::string& detail) {
    using L = ManeuverLabel;
    bool ok = true;
    {
        Prf p = maneuver_prf(MetricCounts{1, 1, 1, 1});
        ok = ok && p.precision == 1.0 / 3.0 && p.recall == 1.0 / 3.0 && p.f1 == 1.0 / 3.0;
    }
    {
        std::vector<L> preds{L::RT, L::RT, L::RT, L::ST};
        std::vector<L> targets{L::RT, L::LT, L::ST, L::RT};
        MetricCounts c = maneuver_counts(preds, targets);
        ok = ok && c.tp == 1 && c.fp == 1 && c.fpp == 1 && c.mp == 1;
    }
    {
        std::vector<L> targets{L::RT, L::RT, L::LT};
        std::vector<L> preds{L::RT, L::LT, L::LT};
        EvalReport rep = per_class_report(preds, targets);
        ok = ok && *rep.per_class[int(L::RT)].accuracy == 0.5 &&
             *rep.per_class[int(L::LT)].accuracy == 1.0 &&
             std::fabs(rep.per_class[int(L::LT)].f1 - 2.0 / 3.0) < 1e-15;
    }
    {
        std::vector<L> t{L::RT, L::LT, L::SS, L::ST};
        std::vector<L> p{L::RT, L::LT, L::ST, L::SS};
        ok = ok && accuracy(p, t) == 0.5;
    }
    Rng rng(99);
    for (int rep_i = 0; rep_i < 5 && ok; ++rep_i) {
        std::vector<L> preds, targets;
        for (int i = 0; i < 1000; ++i) {
            preds.push_back(static_cast<L>(int(rng.below(6))));
            targets.push_back(static_cast<L>(int(rng.below(6))));
        }
        EvalReport rep = per_class_report(preds, targets);
        std::size_t trace = 0;
        for (int c = 0; c < 6; ++c) trace += rep.confusion[c][c];
        ok = ok && rep.accuracy == double(trace) / 1000.0;
    }
    detail = std::string("metric oracles: Eq.(2)-(3) fixtures and trace identity ") +
             (ok ? "hold exactly" : "FAILED");
    return ok;
}

// --- criterion 4: svm correctness -------------------------------------------------

bool svm_ok(std::string& detail) {
    bool xor_ok = true;
    {
        Matrix x(4, 2);
        const double pts[4][2] = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
        std::vector<int> y{1, 1, -1, -1};
        for (int i = 0; i < 4; ++i) {
            x.row(i)[0] = pts[i][0];
            x.row(i)[1] = pts[i][1];
        }
        SmoSettings s;
        s.c = 10.0;
        s.gamma = 1.0;
        SmoResult res = train_binary_svm(x, y, s);
        for (int i = 0; i < 4; ++i) xor_ok = xor_ok && res.machine.decision(x.row(i)) * y[i] > 0;
    }
    double dual_gap = 1e300;
    {
        Matrix x(3, 2);
        x.row(0)[0] = 0.1; x.row(0)[1] = 0.4;
        x.row(1)[0] = 0.9; x.row(1)[1] = -0.3;
        x.row(2)[0] = 0.5; x.row(2)[1] = 0.2;
        std::vector<int> y{1, 1, -1};
        SmoSettings s;
        s.c = 1.5;
        s.gamma = 0.8;
        s.tol = 1e-7;
        s.max_passes = 5000;
        SmoResult res = train_binary_svm(x, y, s);
        const double w_smo = svm_dual_objective(x, y, res.alpha, s.gamma);
        // brute-force zoomed grid over the feasible simplex (a3 = a1 + a2)
        double best = -1e300, b1 = 0, b2 = 0, lo1 = 0, hi1 = s.c, lo2 = 0, hi2 = s.c;
        for (int round = 0; round < 4; ++round) {
            const int steps = 80;
            for (int i = 0; i <= steps; ++i) {
                for (int j = 0; j <= steps; ++j) {
                    const double a1 = lo1 + (hi1 - lo1) * i / steps;
                    const double a2 = lo2 + (hi2 - lo2) * j / steps;
                    if (a1 + a2 > s.c) continue;
                    const double w = svm_dual_objective(x, y, {a1, a2, a1 + a2}, s.gamma);
                    if (w > best) {
                        best = w;
                        b1 = a1;
                        b2 = a2;
                    }
                }
            }
            const double sp1 = (hi1 - lo1) / steps * 2, sp2 = (hi2 - lo2) / steps * 2;
            lo1 = std::max(0.0, b1 - sp1);
            hi1 = std::min(s.c, b1 + sp1);
            lo2 = std::max(0.0, b2 - sp2);
            hi2 = std::min(s.c, b2 + sp2);
        }
        dual_gap = std::fabs(w_smo - best);
    }
    // KKT on every machine of a fitted 6-class model
    std::size_t kkt_total = 0;
    {
        GenConfig cfg;
        cfg.n_samples = 120;
        cfg.dim = 10;
        cfg.len_min_s = 3;
        cfg.len_max_s = 6;
        cfg.class_dist = {0.2, 0.2, 0.15, 0.15, 0.15, 0.15};
        Dataset ds = generate_synthetic(cfg, 5);
        std::vector<const Sample*> train;
        for (const auto& s : ds.samples) train.push_back(&s);
        SvmTaskConfig task_cfg;
        task_cfg.k_frames = 6;
        SvmTrainOutcome out = train_ovr_svm(train, {"front"}, task_cfg, 5);
        for (int c = 0; c < 6; ++c) kkt_total += out.kkt_violations[c];
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "svm: XOR %s, 3-point dual gap %.3g (tol 1e-6), KKT violations %zu",
                  xor_ok ? "100%" : "FAILED", dual_gap, kkt_total);
    detail = buf;
    return xor_ok && dual_gap < 1e-6 && kkt_total == 0;
}

// --- criterion 5: smote ---------------------------------------------------------

bool smote_ok(std::string& detail) {
    Rng data_rng(31);
    Matrix x(40, 5);
    std::vector<int> y;
    for (std::size_t i = 0; i < 40; ++i) {
        for (int j = 0; j < 5; ++j) x.row(i)[j] = data_rng.normal();
        y.push_back(i < 18 ? 0 : (i < 30 ? 1 : (i < 37 ? 2 : 3)));
    }
    Rng rng(32);
    ResampleReport rep = smote(x, y, 5, rng);
    bool counts_equal = true;
    std::map<int, std::size_t> post;
    for (int label : y) ++post[label];
    for (const auto& [label, n] : post) counts_equal = counts_equal && n == 18;
    double worst = 0.0;
    const std::size_t originals = 40;
    for (std::size_t s = 0; s < rep.synthetic.size(); ++s) {
        const auto& prov = rep.synthetic[s];
        const double* parent = x.row(prov.parent);
        const double* nn = x.row(prov.neighbor);
        const double* made = x.row(originals + s);
        for (int j = 0; j < 5; ++j) {
            const double expect = parent[j] + prov.u * (nn[j] - parent[j]);
            worst = std::max(worst, std::fabs(made[j] - expect));
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "smote: balanced counts %s, max provenance residual %.3g (tol 1e-12)",
                  counts_equal ? "yes" : "NO", worst);
    detail = buf;
    return counts_equal && worst <= 1e-12;
}

// --- criterion 6: capacity ---------------------------------------------------------

bool capacity_ok(std::string& detail) {
    GenConfig gen;
    gen.n_samples = 32;
    gen.dim = 8;
    gen.noise_scale = 0.05;
    gen.len_min_s = 3;
    gen.len_max_s = 5;
    gen.class_dist = {0.2, 0.2, 0.15, 0.15, 0.15, 0.15};
    Dataset ds = generate_synthetic(gen, 17);
    std::vector<const Sample*> all;
    for (const auto& s : ds.samples) all.push_back(&s);
    NormStats stats1 = fit_zscore(all, {"front"}, ds.dim);
    NormStats stats3 = fit_zscore(all, {"front", "left", "right"}, ds.dim);
    TaskData d1{all, {"front"}, &stats1};
    TaskData d3{all, {"front", "left", "right"}, &stats3};

    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 8;
    tc.scheduler = "none";
    tc.early_stop_patience = 0;
    tc.seed = 1;

    auto epochs_to_fit = [&](NeuralModel& model, const TaskData& data,
                             const TrainConfig& cfg) -> int {
        History h = fit(model, data, data, cfg);
        for (std::size_t e = 0; e < h.epochs.size(); ++e) {
            if (h.epochs[e].train_acc == 1.0) return static_cast<int>(e);
        }
        return -1;
    };

    std::ostringstream note;
    bool ok = true;
    Rng rng(3);
    {
        MambaModelConfig mc;
        mc.feature_dim = 8;
        mc.d_model = 16;
        mc.n_blocks = 2;
        mc.d_state = 8;
        mc.d_conv = 4;
        mc.expand = 2;
        mc.n_heads = 2;
        FrontalMambaModel m(mc, rng);
        int e = epochs_to_fit(m, d1, tc);
        note << "mamba2@" << e;
        ok = ok && e >= 0;
        MultiViewMambaEnsemble ens(mc, rng);
        e = epochs_to_fit(ens, d3, tc);
        note << " ensemble@" << e;
        ok = ok && e >= 0;
    }
    {
        CnnLstmConfig cc;
        cc.feature_dim = 8;
        cc.views = 1;
        cc.conv_channels = 16;
        cc.lstm_hidden = 32;
        cc.lstm_layers = 2;
        TrainConfig cnn_tc = tc;
        cnn_tc.optimizer = "adam";
        cnn_tc.weight_decay = 0.0;
        CnnLstmModel m(cc, rng);
        int e = epochs_to_fit(m, d1, cnn_tc);
        note << " cnn_lstm@" << e;
        ok = ok && e >= 0;
        cc.views = 3;
        CnnLstmModel m3(cc, rng);
        e = epochs_to_fit(m3, d3, cnn_tc);
        note << " cnn_lstm_multi@" << e;
        ok = ok && e >= 0;
    }
    {
        BaselineConfig bc;
        bc.feature_dim = 8;
        bc.views = 1;
        bc.hidden = 32;
        TrainConfig b_tc = tc;
        b_tc.optimizer = "adam";
        b_tc.weight_decay = 0.0;
        BaselineRnnModel m(bc, rng);
        int e = epochs_to_fit(m, d1, b_tc);
        note << " baseline@" << e;
        ok = ok && e >= 0;
    }
    detail = "capacity: 100% train accuracy reached (first epoch: " + note.str() +
             "; -1 means never within 200)";
    return ok;
}

// --- criteria 7-10: CLI-driven ---------------------------------------------------

fs::path acceptance_dir() {
    fs::path p = fs::temp_directory_path() / "rip_acceptance";
    fs::create_directories(p);
    return p;
}

bool bench_ok(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::path dir = acceptance_dir();
    if (!fs::exists(dir / "data" / "manifest.json")) {
        if (run_cli("gen-data --out data --seed 7", dir) != 0) {
            detail = "benchmark: dataset generation failed";
            return false;
        }
    }
    std::string out;
    if (run_cli("bench --dataset data --out bench --seed 7", dir, &out) != 0) {
        detail = "benchmark: bench command failed: " + out.substr(0, 200);
        return false;
    }
    const double secs = seconds_since(t0);
    // summary.csv rows: method,task,acc,f1
    std::ifstream csv(dir / "bench" / "summary.csv");
    std::string line;
    std::getline(csv, line);  // header
    bool all_beat = true;
    std::ostringstream cells;
    while (std::getline(csv, line)) {
        std::istringstream ls(line);
        std::string method, task, acc_s, f1_s;
        std::getline(ls, method, ',');
        std::getline(ls, task, ',');
        std::getline(ls, acc_s, ',');
        std::getline(ls, f1_s, ',');
        const double acc = std::stod(acc_s);
        cells << " " << method << "/" << task << "=" << acc;
        all_beat = all_beat && acc >= 45.0;  // majority ~30% + 15 points
    }
    char buf[320];
    std::snprintf(buf, sizeof(buf), "benchmark: test acc%s; wall %.0f s (budget 1800 s)",
                  cells.str().c_str(), secs);
    detail = buf;
    return all_beat && secs < 1800.0;
}

bool fidelity_ok(std::string& detail) {
    fs::path dir = acceptance_dir() / "fidelity";
    fs::create_directories(dir);
    write_file(dir / "m.json",
               R"({"task": "single", "method": "mamba2", "dataset": "data", "out": "echo_mamba"})");
    write_file(dir / "c.json",
               R"({"task": "single", "method": "cnn_lstm", "dataset": "data", "out": "echo_cnn"})");
    bool ok = run_cli("train --config m.json --resolve-only", dir) == 0 &&
              run_cli("train --config c.json --resolve-only", dir) == 0;
    ok = ok && slurp(dir / "echo_mamba" / "resolved_config.json") ==
                   slurp(fs::path(RIP_GOLDEN_DIR) / "resolved_mamba2_single.json");
    ok = ok && slurp(dir / "echo_cnn" / "resolved_config.json") ==
                   slurp(fs::path(RIP_GOLDEN_DIR) / "resolved_cnn_lstm_single.json");
    detail = std::string("hyperparameter fidelity: resolved-config echoes ") +
             (ok ? "match the golden files byte-for-byte" : "DIFFER from the golden files");
    return ok;
}

bool determinism_ok(std::string& detail) {
    fs::path dir = acceptance_dir() / "determinism";
    fs::create_directories(dir);
    write_file(dir / "gen.json", R"({"n_samples": 120, "dim": 12, "len_min_s": 3, "len_max_s": 6,)"
                                 R"( "class_dist": {"ST":0.25,"RT":0.2,"LT":0.15,"RLC":0.15,"LLC":0.1,"SS":0.15}})");
    bool ok = run_cli("gen-data --config gen.json --out data --seed 3", dir) == 0;
    write_file(dir / "train.json",
               R"({"task": "single", "method": "mamba2", "dataset": "data", "out": "run",)"
               R"( "seed": 4, "train": {"epochs": 2},)"
               R"( "model": {"d_model": 12, "expand": 2, "d_state": 4, "n_heads": 2}})");
    ok = ok && run_cli("train --config train.json", dir) == 0;
    ok = ok && run_cli("eval --model run --dataset data --split test --out ev1", dir) == 0;
    const std::string ckpt1 = slurp(dir / "run" / "checkpoint.ripm");
    const std::string hist1 = slurp(dir / "run" / "history.txt");
    ok = ok && run_cli("train --config train.json", dir) == 0;
    ok = ok && run_cli("eval --model run --dataset data --split test --out ev2", dir) == 0;
    ok = ok && slurp(dir / "run" / "checkpoint.ripm") == ckpt1;
    ok = ok && slurp(dir / "run" / "history.txt") == hist1;
    ok = ok && slurp(dir / "ev1" / "report_test.txt") == slurp(dir / "ev2" / "report_test.txt");
    detail = std::string("determinism: repeated train+eval artifacts ") +
             (ok ? "are byte-identical" : "DIFFER");
    return ok;
}

bool fuzz_ok(std::string& detail) {
    Rng rng(41);
    FeatureSequence seq;
    seq.t = 3;
    seq.dim = 4;
    seq.frames.resize(12);
    for (auto& f : seq.frames) f = static_cast<float>(rng.normal());
    fs::path dir = acceptance_dir();
    write_ripf(dir / "fuzz.ripf", seq);
    std::ifstream in(dir / "fuzz.ripf", std::ios::binary);
    std::vector<unsigned char> good((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    std::size_t rejected = 0, accepted = 0, wrong_type = 0;
    for (std::size_t pos = 0; pos < kRipfHeaderBytes; ++pos) {
        for (int v = 0; v < 256; ++v) {
            if (static_cast<unsigned char>(v) == good[pos]) continue;
            std::vector<unsigned char> mutated = good;
            mutated[pos] = static_cast<unsigned char>(v);
            try {
                parse_ripf(mutated, "fuzz");
                ++accepted;
            } catch (const DataError&) {
                ++rejected;
            } catch (...) {
                ++wrong_type;
            }
        }
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "format robustness: %zu/%zu header mutations rejected with typed errors "
                  "(%zu accepted, %zu wrong exception)",
                  rejected, kRipfHeaderBytes * 255, accepted, wrong_type);
    detail = buf;
    return accepted == 0 && wrong_type == 0 && rejected == kRipfHeaderBytes * 255;
}

}  // namespace

int main(int argc, char** argv) {
    const bool skip_bench = argc > 1 && std::string(argv[1]) == "--skip-bench";
    std::string detail;

    report(1, grad_suite_ok(detail), detail);
    report(2, scan_equivalence_ok(detail), detail);
    report(3, metric_oracles_ok(detail), detail);
    report(4, svm_ok(detail), detail);
    report(5, smote_ok(detail), detail);
    report(6, capacity_ok(detail), detail);
    if (skip_bench) {
        std::printf("[SKIP] criterion 7: benchmark (run without --skip-bench)\n");
    } else {
        report(7, bench_ok(detail), detail);
    }
    report(8, fidelity_ok(detail), detail);
    report(9, determinism_ok(detail), detail);
    report(10, fuzz_ok(detail), detail);

    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
    } else {
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
    }
    return g_failures;
}
