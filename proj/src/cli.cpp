#include "nbm/cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "nbm/dataset.hpp"
#include "nbm/errors.hpp"
#include "nbm/evaluation.hpp"
#include "nbm/mlsd.hpp"
#include "nbm/training.hpp"

namespace nbm {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += ",";
        out += fmt_double(values[i]);
    }
    return out;
}

std::string join_kinds(const std::vector<SimKind>& kinds) {
    std::string out;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (i > 0) out += ",";
        out += sim_kind_name(kinds[i]);
    }
    return out;
}

/// Hyper-parameter flags shared by train / evaluate / sweep; empty or
/// unset values leave the profile untouched.
struct ProfileFlags {
    std::string profile;
    std::optional<int> epochs;
    std::optional<double> beta;
    std::vector<double> lambdas;
    std::vector<double> phis;
    std::string variant;
    std::string reg_form;
    std::optional<double> mu;
    std::optional<int> train_limit;
    bool no_shuffle = false;
    std::optional<int> k;
};

void add_profile_flags(CLI::App* cmd, ProfileFlags& f, bool profile_required) {
    auto* opt = cmd->add_option("--profile", f.profile,
                                "Model preset: pcc|cos|regsim|slim|pnbm|mpnbm|tanh-mpnbm");
    if (profile_required) opt->required();
    cmd->add_option("--epochs", f.epochs, "Training epoch budget");
    cmd->add_option("--beta", f.beta, "SGD learning rate");
    cmd->add_option("--lambda", f.lambdas,
                    "Per-layer regularization (one value broadcasts to all layers)");
    cmd->add_option("--phi", f.phis, "Per-layer importance (one value broadcasts)");
    cmd->add_option("--variant", f.variant, "Prediction variant: linear|tanh");
    cmd->add_option("--reg-form", f.reg_form, "Regularization gradient form: alg1|eq12");
    cmd->add_option("--mu", f.mu, "Sparsity pull toward +/-mu (slim-style prior)");
    cmd->add_option("--train-limit", f.train_limit,
                    "Neighbor cap during training (default: full neighborhood)");
    cmd->add_flag("--no-shuffle", f.no_shuffle, "Visit training samples in fixed order");
    cmd->add_option("--k", f.k, "Neighbor cap for evaluation (default 200)");
}

std::vector<double> broadcast(const std::vector<double>& values, std::size_t layers,
                              const char* what) {
    if (values.size() == layers) return values;
    if (values.size() == 1) return std::vector<double>(layers, values.front());
    throw ConfigError(std::string("expected 1 or ") + std::to_string(layers) + " values for " +
                      what + ", got " + std::to_string(values.size()));
}

Profile resolve_profile(const ProfileFlags& f) {
    Profile p = make_profile(parse_profile(f.profile));
    const bool any_train_flag = f.epochs || f.beta || !f.lambdas.empty() || !f.phis.empty() ||
                                !f.variant.empty() || !f.reg_form.empty() || f.mu ||
                                f.train_limit || f.no_shuffle;
    if (!p.trained) {
        if (any_train_flag) {
            throw ConfigError(std::string("profile ") + profile_name(p.kind) +
                              " is a static baseline and takes no training parameters");
        }
        return p;
    }
    if (f.epochs) p.config.epochs = *f.epochs;
    if (f.beta) p.config.beta = *f.beta;
    if (!f.lambdas.empty()) p.config.lambdas = broadcast(f.lambdas, p.phis.size(), "--lambda");
    if (!f.phis.empty()) p.phis = broadcast(f.phis, p.phis.size(), "--phi");
    if (!f.variant.empty()) p.config.variant = parse_variant(f.variant);
    if (!f.reg_form.empty()) p.config.reg_form = parse_reg_form(f.reg_form);
    if (f.mu) {
        if (*f.mu < 0.0) throw ConfigError("mu must be >= 0");
        p.l1_mu = *f.mu;
    }
    if (f.train_limit) p.config.neighbor_limit_train = *f.train_limit;
    if (f.no_shuffle) p.config.shuffle = false;
    if (f.k) p.config.eval_k = *f.k;
    return p;
}

struct SplitFlags {
    double train_frac = 0.85;
    double valid_frac = 0.05;
    double test_frac = 0.10;
    std::uint64_t seed = 0;
};

void add_split_flags(CLI::App* cmd, SplitFlags& f) {
    cmd->add_option("--train-frac", f.train_frac, "Training fraction (default 0.85)");
    cmd->add_option("--valid-frac", f.valid_frac, "Validation fraction (default 0.05)");
    cmd->add_option("--test-frac", f.test_frac, "Test fraction (default 0.10)");
    cmd->add_option("--split-seed", f.seed, "Shuffle seed for the split (default 0)");
}

SplitSpec to_spec(const SplitFlags& f) {
    SplitSpec spec;
    spec.train_frac = f.train_frac;
    spec.valid_frac = f.valid_frac;
    spec.test_frac = f.test_frac;
    spec.seed = f.seed;
    return spec;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
    if (!out) throw InputError("cannot write " + path.string());
}

void echo_config(const fs::path& path, const std::string& command,
                 const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ostringstream out;
    out << "version=1\n";
    out << "command=" << command << "\n";
    for (const auto& [key, value] : entries) out << key << "=" << value << "\n";
    write_text_file(path, out.str());
}

void emit_report(const EvalReport& report, const std::string& out_dir) {
    std::cout << report_text(report);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(fs::path(out_dir) / "report.json", report_json(report));
        write_text_file(fs::path(out_dir) / "report.txt", report_text(report));
    }
}

void cmd_ingest(const std::string& data, const std::string& format) {
    const RatingDataset ds = load_ratings(data, parse_format(format));
    char line[128];
    std::snprintf(line, sizeof(line), "users=%d items=%d ratings=%zu density=%.2f%%\n",
                  ds.num_users, ds.num_items, ds.size(), 100.0 * ds.density());
    std::cout << line;
    std::snprintf(line, sizeof(line), "scale=[%g,%g]\n", ds.scale_min, ds.scale_max);
    std::cout << line;
}

void cmd_split(const std::string& data, const std::string& format, const SplitFlags& flags,
               const std::string& out_dir) {
    const RatingDataset ds = load_ratings(data, parse_format(format));
    const SplitResult parts = split(ds, to_spec(flags));
    save_split_manifest(parts, out_dir);
    char line[96];
    std::snprintf(line, sizeof(line), "train=%zu valid=%zu test=%zu\n", parts.train.size(),
                  parts.valid.size(), parts.test.size());
    std::cout << line;
}

SplitResult obtain_split(const std::string& data, const std::string& format,
                         const std::string& split_dir, const SplitFlags& flags) {
    if (!split_dir.empty()) return load_split_manifest(split_dir);
    if (data.empty()) throw ConfigError("either --data or --split is required");
    return split(load_ratings(data, parse_format(format)), to_spec(flags));
}

void cmd_train(const std::string& data, const std::string& format, const std::string& split_dir,
               const SplitFlags& split_flags, const ProfileFlags& profile_flags,
               std::uint64_t seed, const std::string& out_dir, bool timing, int jobs) {
    Profile profile = resolve_profile(profile_flags);
    if (!profile.trained) {
        throw ConfigError(std::string("profile ") + profile_name(profile.kind) +
                          " has no training step; use the evaluate command");
    }
    profile.config.seed = seed;
    profile.config.validate();

    const SplitResult parts = obtain_split(data, format, split_dir, split_flags);
    fs::create_directories(out_dir);
    if (split_dir.empty()) save_split_manifest(parts, out_dir);

    std::vector<std::pair<std::string, std::string>> entries;
    entries.emplace_back("profile", profile_name(profile.kind));
    if (!split_dir.empty()) {
        entries.emplace_back("split", split_dir);
    } else {
        entries.emplace_back("data", data);
        entries.emplace_back("format", format);
        entries.emplace_back("split_seed", std::to_string(split_flags.seed));
        entries.emplace_back("train_frac", fmt_double(split_flags.train_frac));
        entries.emplace_back("valid_frac", fmt_double(split_flags.valid_frac));
        entries.emplace_back("test_frac", fmt_double(split_flags.test_frac));
    }
    entries.emplace_back("seed", std::to_string(seed));
    entries.emplace_back("epochs", std::to_string(profile.config.epochs));
    entries.emplace_back("beta", fmt_double(profile.config.beta));
    entries.emplace_back("lambda", join_doubles(profile.config.lambdas));
    entries.emplace_back("phi", join_doubles(profile.phis));
    entries.emplace_back("omega", join_kinds(profile.omegas));
    entries.emplace_back("variant", variant_name(profile.config.variant));
    entries.emplace_back("reg_form", reg_form_name(profile.config.reg_form));
    entries.emplace_back("mu", fmt_double(profile.l1_mu));
    entries.emplace_back("k", std::to_string(profile.config.eval_k));
    entries.emplace_back("neighbor_limit_train",
                         profile.config.neighbor_limit_train
                             ? std::to_string(*profile.config.neighbor_limit_train)
                             : std::string("none"));
    entries.emplace_back("shuffle", profile.config.shuffle ? "true" : "false");
    echo_config(fs::path(out_dir) / "config.txt", "train", entries);

    const CenteredView view = center(parts.train);
    Model model = build_model(profile, parts.train, view, seed);

    const fs::path history_path = fs::path(out_dir) / "history.csv";
    TrainHistory partial;
    TrainResult result;
    try {
        result = train(std::move(model.layers), parts.train, parts.valid, parts.test,
                       profile.config, &partial, jobs);
    } catch (const DivergenceError&) {
        write_history_csv(partial, history_path, timing);
        throw;
    }
    write_history_csv(result.history, history_path, timing);
    save_checkpoint(result.model, (fs::path(out_dir) / "model.ckpt").string());

    double total_seconds = 0.0;
    for (const EpochStats& e : result.history.epochs) total_seconds += e.seconds;
    char line[160];
    std::snprintf(line, sizeof(line), "trained %d epochs in %.1fs\n",
                  static_cast<int>(result.history.epochs.size()), total_seconds);
    std::cout << line;
    const EpochStats& best =
        result.history.epochs[static_cast<std::size_t>(result.history.best_epoch - 1)];
    std::snprintf(line, sizeof(line), "best_epoch=%d valid_rmse=%.6f test_rmse=%.6f\n",
                  result.history.best_epoch, best.valid_rmse, best.test_rmse);
    std::cout << line;
    std::cout << "artifacts: " << (fs::path(out_dir) / "history.csv").string() << ", "
              << (fs::path(out_dir) / "model.ckpt").string() << "\n";
}

void cmd_evaluate_checkpoint(const std::string& checkpoint, const std::string& split_dir,
                             const std::string& partition, std::optional<int> k, int jobs,
                             std::optional<double> baseline_rmse, const std::string& baseline_name,
                             const std::string& out_dir) {
    const SplitResult parts = load_split_manifest(split_dir);
    const CenteredView view = center(parts.train);
    SimilarityLayers layers = load_checkpoint(checkpoint);
    rebuild_constraints(layers, parts.train, view);

    const RatingDataset* part = nullptr;
    if (partition == "valid") {
        part = &parts.valid;
    } else if (partition == "test") {
        part = &parts.test;
    } else {
        throw ConfigError("unknown partition: " + partition + " (expected valid|test)");
    }
    const EvalDetail detail = evaluate_layers(layers, view, *part, k, jobs);

    EvalReport report;
    report.model = "checkpoint:" + fs::path(checkpoint).filename().string();
    report.rmse = detail.rmse;
    report.repeats = 1;
    report.per_repeat = {detail.rmse};
    if (baseline_rmse) {
        report.inc = inc_percent(*baseline_rmse, report.rmse);
        report.baseline = baseline_name.empty() ? "baseline" : baseline_name;
    }
    emit_report(report, out_dir);
    char line[160];
    std::snprintf(line, sizeof(line),
                  "partition=%s pairs=%zu clamped=%zu raw_range=[%.6f,%.6f]\n", partition.c_str(),
                  detail.count, detail.clamp_count, detail.raw_min, detail.raw_max);
    std::cout << line;
}

void cmd_evaluate_protocol(const std::string& data, const std::string& format,
                           const SplitFlags& split_flags, const ProfileFlags& profile_flags,
                           int repeats, std::uint64_t seed, const std::string& repeat_mode,
                           int jobs, std::optional<double> baseline_rmse,
                           const std::string& baseline_name, const std::string& out_dir) {
    const Profile profile = resolve_profile(profile_flags);
    const RatingDataset ds = load_ratings(data, parse_format(format));

    RepeatOptions opt;
    opt.repeats = repeats;
    opt.base_seed = seed;
    opt.mode = parse_repeat_mode(repeat_mode);
    opt.split = to_spec(split_flags);
    opt.k = profile_flags.k ? *profile_flags.k : 200;
    opt.jobs = jobs;
    opt.baseline_rmse = baseline_rmse;
    opt.baseline_name = baseline_name;

    emit_report(repeat_protocol(profile, ds, opt), out_dir);
}

void cmd_sweep(const std::string& data, const std::string& format, const SplitFlags& split_flags,
               const ProfileFlags& profile_flags, int slices, int min_users, int repeats,
               std::uint64_t seed, const std::string& repeat_mode, int jobs,
               const std::string& out_dir) {
    const Profile profile = resolve_profile(profile_flags);
    const RatingDataset ds = load_ratings(data, parse_format(format));

    SweepOptions opt;
    opt.n_slices = slices;
    opt.min_users = min_users;
    opt.eval.repeats = repeats;
    opt.eval.base_seed = seed;
    opt.eval.mode = parse_repeat_mode(repeat_mode);
    opt.eval.split = to_spec(split_flags);
    opt.eval.k = profile_flags.k ? *profile_flags.k : 200;
    opt.eval.jobs = jobs;

    const std::vector<DensitySlice> result = density_sweep(profile, ds, opt);
    bool any = false;
    for (const DensitySlice& s : result) any = any || !s.skipped;
    if (!any) throw EmptyResultError("all slices skipped");

    std::cout << sweep_text(result);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(fs::path(out_dir) / "sweep.csv", sweep_csv(result));
    }
}

void cmd_stability(const std::string& history_path, const std::string& metric, double tol,
                   int budget) {
    const TrainHistory history = load_history_csv(history_path);
    std::vector<double> series;
    series.reserve(history.epochs.size());
    for (const EpochStats& e : history.epochs) {
        if (metric == "valid") {
            series.push_back(e.valid_rmse);
        } else if (metric == "test") {
            series.push_back(e.test_rmse);
        } else {
            throw ConfigError("unknown metric: " + metric + " (expected valid|test)");
        }
    }
    const StabilityStats st = stability(series, tol, budget);
    char line[128];
    std::snprintf(line, sizeof(line), "epsilon=%d zeta=%s%d censored=%s converged=%s best=%.6f\n",
                  st.epsilon, st.censored ? ">=" : "", st.zeta, st.censored ? "yes" : "no",
                  st.converged ? "yes" : "no", st.best);
    std::cout << line;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Benchmark for neighborhood recommenders with learned item similarities"};
    app.name("nbmbench");
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load a rating file and print its shape");
    std::string in_data;
    std::string in_format = "tsv";
    ingest->add_option("--data", in_data, "Rating file")->required();
    ingest->add_option("--format", in_format, "File format: tsv|double-colon");
    ingest->callback([&] { cmd_ingest(in_data, in_format); });

    // split
    auto* split_cmd = app.add_subcommand("split", "Write train/valid/test manifests");
    std::string sp_data;
    std::string sp_format = "tsv";
    std::string sp_out;
    SplitFlags sp_flags;
    split_cmd->add_option("--data", sp_data, "Rating file")->required();
    split_cmd->add_option("--format", sp_format, "File format: tsv|double-colon");
    add_split_flags(split_cmd, sp_flags);
    split_cmd->add_option("--out", sp_out, "Output directory")->required();
    split_cmd->callback([&] { cmd_split(sp_data, sp_format, sp_flags, sp_out); });

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a profile and save its artifacts");
    std::string tr_data;
    std::string tr_format = "tsv";
    std::string tr_split;
    std::string tr_out;
    SplitFlags tr_split_flags;
    ProfileFlags tr_profile;
    std::uint64_t tr_seed = 0;
    bool tr_timing = false;
    int tr_jobs = 1;
    train_cmd->add_option("--data", tr_data, "Rating file (split internally)");
    train_cmd->add_option("--format", tr_format, "File format: tsv|double-colon");
    train_cmd->add_option("--split", tr_split, "Existing split manifest directory");
    add_split_flags(train_cmd, tr_split_flags);
    add_profile_flags(train_cmd, tr_profile, /*profile_required=*/true);
    train_cmd->add_option("--seed", tr_seed, "Training seed (default 0)");
    train_cmd->add_option("--out", tr_out, "Output directory")->required();
    train_cmd->add_flag("--timing", tr_timing,
                        "Record measured wall time in history.csv (breaks byte reproducibility)");
    train_cmd->add_option("--jobs", tr_jobs, "Threads for per-epoch metric passes");
    train_cmd->callback([&] {
        cmd_train(tr_data, tr_format, tr_split, tr_split_flags, tr_profile, tr_seed, tr_out,
                  tr_timing, tr_jobs);
    });

    // evaluate
    auto* eval_cmd = app.add_subcommand(
        "evaluate", "Evaluate a checkpoint, or run the split/train/evaluate repeat protocol");
    std::string ev_checkpoint;
    std::string ev_split;
    std::string ev_partition = "test";
    std::string ev_data;
    std::string ev_format = "tsv";
    std::string ev_out;
    std::string ev_repeat_mode = "split";
    std::string ev_baseline_name;
    SplitFlags ev_split_flags;
    ProfileFlags ev_profile;
    std::uint64_t ev_seed = 0;
    int ev_repeats = 5;
    int ev_jobs = 1;
    std::optional<double> ev_baseline_rmse;
    eval_cmd->add_option("--checkpoint", ev_checkpoint, "Trained model checkpoint");
    eval_cmd->add_option("--split", ev_split, "Split manifest directory (checkpoint mode)");
    auto* ev_partition_opt =
        eval_cmd->add_option("--partition", ev_partition, "Partition to score: valid|test");
    eval_cmd->add_option("--data", ev_data, "Rating file (protocol mode)");
    eval_cmd->add_option("--format", ev_format, "File format: tsv|double-colon");
    add_split_flags(eval_cmd, ev_split_flags);
    add_profile_flags(eval_cmd, ev_profile, /*profile_required=*/false);
    eval_cmd->add_option("--repeats", ev_repeats, "Protocol repeats (default 5)");
    eval_cmd->add_option("--repeat-mode", ev_repeat_mode,
                         "What varies per repeat: split|train (default split)");
    eval_cmd->add_option("--seed", ev_seed, "Base seed (default 0)");
    eval_cmd->add_option("--jobs", ev_jobs, "Evaluation threads");
    eval_cmd->add_option("--baseline-rmse", ev_baseline_rmse, "Reference RMSE for the INC% column");
    eval_cmd->add_option("--baseline-name", ev_baseline_name, "Label for the INC% reference");
    eval_cmd->add_option("--out", ev_out, "Directory for report.json / report.txt");
    eval_cmd->callback([&] {
        const bool checkpoint_mode = !ev_checkpoint.empty();
        if (checkpoint_mode && !ev_profile.profile.empty()) {
            throw ConfigError("--checkpoint and --profile are mutually exclusive");
        }
        if (checkpoint_mode) {
            if (ev_split.empty()) throw ConfigError("--checkpoint requires --split");
            cmd_evaluate_checkpoint(ev_checkpoint, ev_split, ev_partition,
                                    ev_profile.k ? *ev_profile.k : 200, ev_jobs, ev_baseline_rmse,
                                    ev_baseline_name, ev_out);
        } else {
            if (ev_profile.profile.empty() || ev_data.empty()) {
                throw ConfigError("evaluate needs --checkpoint + --split, or --data + --profile");
            }
            if (ev_partition_opt->count() > 0) {
                throw ConfigError("--partition applies only to checkpoint evaluation");
            }
            cmd_evaluate_protocol(ev_data, ev_format, ev_split_flags, ev_profile, ev_repeats,
                                  ev_seed, ev_repeat_mode, ev_jobs, ev_baseline_rmse,
                                  ev_baseline_name, ev_out);
        }
    });

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a profile across user-density slices");
    std::string sw_data;
    std::string sw_format = "tsv";
    std::string sw_out;
    std::string sw_repeat_mode = "split";
    SplitFlags sw_split_flags;
    ProfileFlags sw_profile;
    std::uint64_t sw_seed = 0;
    int sw_slices = 10;
    int sw_min_users = 50;
    int sw_repeats = 1;
    int sw_jobs = 1;
    sweep_cmd->add_option("--data", sw_data, "Rating file")->required();
    sweep_cmd->add_option("--format", sw_format, "File format: tsv|double-colon");
    add_split_flags(sweep_cmd, sw_split_flags);
    add_profile_flags(sweep_cmd, sw_profile, /*profile_required=*/true);
    sweep_cmd->add_option("--slices", sw_slices, "Number of density slices (default 10)");
    sweep_cmd->add_option("--min-users", sw_min_users, "Minimum users per slice (default 50)");
    sweep_cmd->add_option("--repeats", sw_repeats, "Repeats per slice (default 1)");
    sweep_cmd->add_option("--repeat-mode", sw_repeat_mode,
                          "What varies per repeat: split|train (default split)");
    sweep_cmd->add_option("--seed", sw_seed, "Base seed (default 0)");
    sweep_cmd->add_option("--jobs", sw_jobs, "Evaluation threads");
    sweep_cmd->add_option("--out", sw_out, "Directory for sweep.csv");
    sweep_cmd->callback([&] {
        cmd_sweep(sw_data, sw_format, sw_split_flags, sw_profile, sw_slices, sw_min_users,
                  sw_repeats, sw_seed, sw_repeat_mode, sw_jobs, sw_out);
    });

    // stability
    auto* stab_cmd = app.add_subcommand("stability", "Plateau metrics of a training history");
    std::string st_history;
    std::string st_metric = "valid";
    double st_tol = 1e-4;
    int st_budget = 200;
    stab_cmd->add_option("--history", st_history, "history.csv from a training run")->required();
    stab_cmd->add_option("--metric", st_metric, "Series to analyze: valid|test");
    stab_cmd->add_option("--tol", st_tol, "Equality tolerance (default 1e-4)");
    stab_cmd->add_option("--budget", st_budget, "Epoch budget (default 200)");
    stab_cmd->callback([&] { cmd_stability(st_history, st_metric, st_tol, st_budget); });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const EmptyResultError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace nbm
