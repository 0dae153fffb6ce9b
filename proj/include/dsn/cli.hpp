#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "dsn/analysis.hpp"
#include "dsn/checkpoint.hpp"
#include "dsn/data.hpp"
#include "dsn/exploration.hpp"
#include "dsn/model.hpp"
#include "dsn/trainer.hpp"

namespace dsn::cli {

// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime divergence,
// 5 checkpoint error.
inline int exit_code_of(errc kind) {
    switch (kind) {
        case errc::config: return 2;
        case errc::data: return 3;
        case errc::shape: return 3;
        case errc::divergence: return 4;
        case errc::checkpoint: return 5;
    }
    return 1;
}

namespace detail {

// Flat key=value config files: `#` comments and `[section]` headers are
// organizational only; every key mirrors a long flag. File entries are
// injected before the explicit flags, so flags win.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + (long)i, args.begin() + (long)i + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + (long)i);
            break;
        }
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    check(in.good(), errc::config, "cannot open config file: " + path);
    std::vector<std::string> expanded;
    if (!args.empty()) expanded.push_back(args[0]);  // subcommand name
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        line = line.substr(b);
        if (line[0] == '#' || line[0] == '[') continue;
        const size_t eq = line.find('=');
        check(eq != std::string::npos && eq > 0, errc::config,
              path + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        std::string key = line.substr(0, eq);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        const size_t vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        expanded.push_back("--" + key + "=" + value);
    }
    expanded.insert(expanded.end(), args.begin() + (args.empty() ? 0 : 1), args.end());
    return expanded;
}

inline void ensure_writable(const std::string& path, bool overwrite) {
    if (!overwrite && std::filesystem::exists(path))
        fail(errc::config, "output exists: " + path + " (pass --overwrite to replace it)");
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), errc::data, "cannot write " + path);
    out << text;
    check(out.good(), errc::data, "write failed: " + path);
}

}  // namespace detail

struct TrainOpts {
    std::string data_path, test_path, out_dir = ".";
    int layers = 4, channels = 141, kernel_size = 39, groups = 3, pool_mid_len = 8;
    double sparsity = 0.8;
    int epochs = 1000, batch_size = 16, delta_t = 5, eval_every = 0;
    std::string delta_unit = "epoch";
    double lr_init = 3e-4, lr_final = 1e-4, alpha = 0.5;
    uint64_t seed = 42;
    std::string init_mode = "sequential", grow_mode = "random";
    bool fixed_topology = false, dense = false, no_normalize = false, overwrite = false;
    bool no_shuffle = false;
};

inline int cmd_train(const TrainOpts& o) {
    DsnConfig mc;
    mc.num_sparse_layers = o.layers;
    mc.channels = o.channels;
    mc.kernel_size = o.kernel_size;
    mc.groups = o.groups;
    mc.sparsity = (float)o.sparsity;
    mc.pool_mid_len = o.pool_mid_len;
    mc.dense_mode = o.dense;

    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch_size;
    tc.optim.lr_init = (float)o.lr_init;
    tc.optim.lr_final = (float)o.lr_final;
    tc.optim.total_epochs = o.epochs;
    tc.schedule.delta_t_epochs = o.delta_t;
    tc.schedule.alpha = o.alpha;
    tc.schedule.total_epochs = o.epochs;
    tc.schedule.dynamic = !o.fixed_topology;
    tc.schedule.grow = o.grow_mode == "gradient" ? GrowMode::gradient : GrowMode::random;
    tc.schedule.unit = o.delta_unit == "iteration" ? UpdateUnit::iteration : UpdateUnit::epoch;
    tc.seed = o.seed;
    tc.eval_every = o.eval_every;
    tc.shuffle = !o.no_shuffle;
    validate(tc.optim);
    validate(tc.schedule);
    check(o.batch_size >= 1, errc::config, "batch size must be >= 1");
    const InitMode init = o.init_mode == "random" ? InitMode::random : InitMode::sequential;

    const std::string ckpt_path = o.out_dir + "/checkpoint.dsn";
    const std::string csv_path = o.out_dir + "/run_record.csv";
    const std::string json_path = o.out_dir + "/summary.json";
    std::filesystem::create_directories(o.out_dir);
    for (const auto& p : {ckpt_path, csv_path, json_path}) detail::ensure_writable(p, o.overwrite);

    TsDataset train_set = load_dataset(o.data_path);
    train_set.split = "train";
    if (!o.no_normalize) train_set = z_normalize(std::move(train_set));
    TsDataset test_set;
    if (!o.test_path.empty()) {
        test_set = load_dataset(o.test_path);
        test_set.split = "test";
        if (!o.no_normalize) test_set = z_normalize(std::move(test_set));
    }

    mc.num_classes = train_set.num_classes;
    mc.input_variates = train_set.variates;
    validate(mc);
    check(train_set.length >= mc.pool_mid_len, errc::data,
          "series length " + std::to_string(train_set.length) + " is shorter than pool_mid_len " +
              std::to_string(mc.pool_mid_len));

    DsnModel model = build_model(mc, init, Rng(o.seed).split("model"));
    TrainResult result = train(model, train_set, tc, test_set.size() ? &test_set : nullptr);
    if (test_set.size())
        result.record.final_test_acc = evaluate(result.best, test_set);

    save_checkpoint(result.best, o.seed, result.record.best_epoch, ckpt_path);
    detail::write_text(csv_path, run_record_csv(result.record));

    int64_t mask_changed = 0;
    for (const auto& u : result.record.updates) mask_changed += u.changed;
    nlohmann::ordered_json js;
    js["dataset"] = {{"train", o.data_path},
                     {"test", o.test_path},
                     {"instances", train_set.size()},
                     {"length", train_set.length},
                     {"variates", train_set.variates},
                     {"classes", train_set.num_classes}};
    js["model"] = {{"layers", mc.num_sparse_layers}, {"channels", mc.channels},
                   {"kernel_size", mc.kernel_size},  {"groups", mc.groups},
                   {"sparsity", mc.sparsity},        {"pool_mid_len", mc.pool_mid_len},
                   {"dense_mode", mc.dense_mode}};
    js["train"] = {{"epochs", tc.epochs},       {"batch_size", tc.batch_size},
                   {"lr_init", tc.optim.lr_init}, {"lr_final", tc.optim.lr_final},
                   {"delta_t", tc.schedule.delta_t_epochs}, {"delta_unit", o.delta_unit},
                   {"alpha", tc.schedule.alpha},
                   {"dynamic", tc.schedule.dynamic},
                   {"grow", o.grow_mode},        {"init", o.init_mode},
                   {"seed", o.seed},             {"normalize", !o.no_normalize},
                   {"shuffle", tc.shuffle}};
    js["result"] = {{"best_epoch", result.record.best_epoch},
                    {"best_train_loss", result.record.best_loss},
                    {"final_test_accuracy", result.record.final_test_acc},
                    {"topology_updates", result.record.updates.size()},
                    {"mask_bits_changed", mask_changed},
                    {"params_total", count_params(result.best)},
                    {"flops_per_instance", count_flops(result.best, train_set.length)}};
    detail::write_text(json_path, js.dump(2) + "\n");
    std::cout << "best_epoch " << result.record.best_epoch << "\n";
    if (test_set.size()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", result.record.final_test_acc);
        std::cout << "test_accuracy " << buf << "\n";
    }
    return 0;
}

struct EvalOpts {
    std::string checkpoint_path, data_path;
    bool no_normalize = false;
};

inline int cmd_eval(const EvalOpts& o) {
    LoadedCheckpoint ck = load_checkpoint(o.checkpoint_path);
    TsDataset ds = load_dataset(o.data_path);
    if (!o.no_normalize) ds = z_normalize(std::move(ds));
    const double acc = evaluate(ck.model, ds);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", acc);
    std::cout << "accuracy " << buf << "\n";
    return 0;
}

struct AnalyzeOpts {
    std::string checkpoint_path;
    std::string format = "csv";
    int length = 128;
    bool rf_set = false;
};

inline int cmd_analyze(const AnalyzeOpts& o) {
    check(o.format == "csv" || o.format == "json", errc::config,
          "analyze: --format must be csv or json");
    LoadedCheckpoint ck = load_checkpoint(o.checkpoint_path);
    const ResourceReport r = analyze(ck.model, o.length);
    int rf_min = 0, rf_max = 0;
    size_t rf_count = 0;
    if (o.rf_set) {
        const std::set<int> rf = stacked_rf_set(module_enrf_sets(ck.model));
        rf_min = rf.empty() ? 0 : *rf.begin();
        rf_max = rf.empty() ? 0 : *rf.rbegin();
        rf_count = rf.size();
    }
    if (o.format == "csv") {
        std::ostringstream out;
        out << "metric,value\n";
        out << "params_total," << r.params_total << "\n";
        out << "flops_per_instance," << r.flops_per_instance << "\n";
        out << "input_len," << r.input_len << "\n";
        for (size_t i = 0; i < r.sparse_active.size(); ++i)
            out << "sparse_active_" << i << "," << r.sparse_active[(size_t)i] << "\n";
        for (const auto& [name, count] : r.params_per_layer)
            out << "params." << name << "," << count << "\n";
        if (o.rf_set) {
            out << "rf_min," << rf_min << "\n";
            out << "rf_max," << rf_max << "\n";
            out << "rf_count," << rf_count << "\n";
        }
        out << "\n" << topology_report_csv(ck.model);
        std::cout << out.str();
    } else {
        nlohmann::ordered_json js;
        js["params_total"] = r.params_total;
        js["flops_per_instance"] = r.flops_per_instance;
        js["input_len"] = r.input_len;
        js["sparse_active"] = r.sparse_active;
        nlohmann::ordered_json pj;
        for (const auto& [name, count] : r.params_per_layer) pj[name] = count;
        js["params_per_layer"] = pj;
        if (o.rf_set) {
            js["rf_min"] = rf_min;
            js["rf_max"] = rf_max;
            js["rf_count"] = rf_count;
        }
        std::cout << js.dump() << "\n" << topology_report_jsonl(ck.model);
    }
    return 0;
}

struct SpaceOpts {
    int64_t weights = 0;
    double sparsity = 0.8;
    int groups = 3;
};

inline int cmd_space(const SpaceOpts& o) {
    const bigint layerwise =
        exploration_space_size(SpaceKind::layerwise, o.weights, o.sparsity, o.groups);
    const bigint grouped =
        exploration_space_size(SpaceKind::grouped, o.weights, o.sparsity, o.groups);
    const bigint regions =
        exploration_space_size(SpaceKind::grouped_regions, o.weights, o.sparsity, o.groups);
    std::cout << "layerwise " << layerwise << "\n";
    std::cout << "grouped " << grouped << "\n";
    std::cout << "grouped_regions " << regions << "\n";
    std::cout << (regions <= grouped && grouped <= layerwise ? "ordering holds"
                                                             : "ordering violated")
              << "\n";
    return 0;
}

struct SynthOpts {
    std::string out_dir = ".";
    int classes = 3, per_class = 100, per_class_test = 100, length = 128;
    double noise = 0.1, warp = 0.05, offset = 0.5, amp = 1.5;
    std::vector<double> freqs, widths;
    uint64_t seed = 42;
    bool overwrite = false;
};

inline int cmd_synth(const SynthOpts& o) {
    SynthSpec spec;
    spec.num_classes = o.classes;
    spec.train_per_class = o.per_class;
    spec.test_per_class = o.per_class_test;
    spec.length = o.length;
    spec.noise_sigma = o.noise;
    spec.warp = o.warp;
    spec.offset = o.offset;
    spec.transient_amp = o.amp;
    spec.seed = o.seed;
    if (!o.freqs.empty()) spec.base_freq = o.freqs;
    if (!o.widths.empty()) spec.transient_width = o.widths;
    fill_defaults(spec);
    validate(spec);

    std::filesystem::create_directories(o.out_dir);
    const std::string train_path = o.out_dir + "/synth_train.ts3";
    const std::string test_path = o.out_dir + "/synth_test.ts3";
    detail::ensure_writable(train_path, o.overwrite);
    detail::ensure_writable(test_path, o.overwrite);
    auto [train_set, test_set] = gen_synth(spec);
    save_ts3(train_set, train_path);
    save_ts3(test_set, test_path);
    std::cout << "wrote " << train_path << " (" << train_set.size() << " instances)\n";
    std::cout << "wrote " << test_path << " (" << test_set.size() << " instances)\n";
    return 0;
}

inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"Dynamic sparse networks for time-series classification"};
    app.require_subcommand(1);

    TrainOpts t;
    CLI::App* train = app.add_subcommand("train", "Train a DSN model");
    train->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_sink;
    train->add_option("--config", config_sink, "key=value config file; flags win");
    train->add_option("--data", t.data_path, "training set (UCR text or TS3)")->required();
    train->add_option("--test", t.test_path, "held-out set for final accuracy");
    train->add_option("--out", t.out_dir, "output directory");
    train->add_option("--layers", t.layers, "sparse CNN layers (modules + final)");
    train->add_option("--channels", t.channels, "output channels per layer");
    train->add_option("--kernel-size", t.kernel_size, "kernel size k");
    train->add_option("--groups", t.groups, "kernel groups N");
    train->add_option("--sparsity", t.sparsity, "sparsity ratio S in [0,1)");
    train->add_option("--pool-mid-len", t.pool_mid_len, "length after the first pooling stage");
    train->add_option("--epochs", t.epochs, "training epochs");
    train->add_option("--batch-size", t.batch_size, "mini-batch size");
    train->add_option("--lr-init", t.lr_init, "initial learning rate");
    train->add_option("--lr-final", t.lr_final, "final learning rate");
    train->add_option("--delta-t", t.delta_t, "interval between topology updates");
    train->add_option("--delta-unit", t.delta_unit, "topology update interval unit")
        ->check(CLI::IsMember({"epoch", "iteration"}));
    train->add_option("--alpha", t.alpha, "initial refresh fraction");
    train->add_option("--eval-every", t.eval_every, "evaluate test set every N epochs");
    train->add_option("--seed", t.seed, "seed for all randomness");
    train->add_option("--init", t.init_mode, "topology init: sequential|random")
        ->check(CLI::IsMember({"sequential", "random"}));
    train->add_option("--grow", t.grow_mode, "growth rule: random|gradient")
        ->check(CLI::IsMember({"random", "gradient"}));
    train->add_flag("--fixed-topology", t.fixed_topology, "freeze the initial topology");
    train->add_flag("--dense", t.dense, "dense connections along entire kernels");
    train->add_flag("--no-normalize", t.no_normalize, "skip per-instance z-normalization");
    train->add_flag("--no-shuffle", t.no_shuffle, "keep dataset order each epoch");
    train->add_flag("--overwrite", t.overwrite, "replace existing outputs");

    EvalOpts e;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    eval->add_option("--config", config_sink, "key=value config file; flags win");
    eval->add_option("--checkpoint", e.checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", e.data_path, "dataset file")->required();
    eval->add_flag("--no-normalize", e.no_normalize, "skip per-instance z-normalization");

    AnalyzeOpts a;
    CLI::App* analyze = app.add_subcommand("analyze", "Report params, FLOPs and eNRF histograms");
    analyze->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    analyze->add_option("--config", config_sink, "key=value config file; flags win");
    analyze->add_option("--checkpoint", a.checkpoint_path, "checkpoint file")->required();
    analyze->add_option("--format", a.format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    analyze->add_option("--length", a.length, "input length for FLOPs accounting");
    analyze->add_flag("--rf-set", a.rf_set, "include stacked receptive-field set stats");

    SpaceOpts s;
    CLI::App* space = app.add_subcommand("space", "Exploration-space sizes for a layer");
    space->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    space->add_option("--config", config_sink, "key=value config file; flags win");
    space->add_option("--weights", s.weights, "total kernel weights N_l")->required();
    space->add_option("--sparsity", s.sparsity, "sparsity ratio S");
    space->add_option("--groups", s.groups, "kernel groups N");

    SynthOpts y;
    CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic multi-scale task");
    synth->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    synth->add_option("--config", config_sink, "key=value config file; flags win");
    synth->add_option("--out", y.out_dir, "output directory");
    synth->add_option("--classes", y.classes, "number of classes");
    synth->add_option("--per-class", y.per_class, "training instances per class");
    synth->add_option("--per-class-test", y.per_class_test, "test instances per class");
    synth->add_option("--length", y.length, "series length");
    synth->add_option("--noise", y.noise, "Gaussian noise sigma");
    synth->add_option("--warp", y.warp, "relative frequency jitter");
    synth->add_option("--offset", y.offset, "amplitude offset range");
    synth->add_option("--amp", y.amp, "transient amplitude");
    synth->add_option("--freqs", y.freqs, "per-class base frequencies")->delimiter(',');
    synth->add_option("--widths", y.widths, "per-class transient widths")->delimiter(',');
    synth->add_option("--seed", y.seed, "seed for all randomness");
    synth->add_flag("--overwrite", y.overwrite, "replace existing outputs");

    try {
        args = detail::expand_config(std::move(args));
    } catch (const error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_code_of(err.kind());
    }
    std::vector<char*> argv;
    std::string prog = "dsn";
    argv.push_back(prog.data());
    for (auto& s2 : args) argv.push_back(s2.data());
    try {
        app.parse((int)argv.size(), argv.data());
    } catch (const CLI::ParseError& pe) {
        const int code = app.exit(pe);
        return code == 0 ? 0 : 2;
    }
    try {
        if (train->parsed()) return cmd_train(t);
        if (eval->parsed()) return cmd_eval(e);
        if (analyze->parsed()) return cmd_analyze(a);
        if (space->parsed()) return cmd_space(s);
        if (synth->parsed()) return cmd_synth(y);
    } catch (const error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return exit_code_of(err.kind());
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace dsn::cli
