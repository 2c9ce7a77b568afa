// Experiment runner. Subcommands: train, eval-noise, correlate, quag,
// gradcheck, demo-cycle. Configuration is flat dotted keys with precedence
// command line > config file > defaults; every run echoes its effective
// configuration into the output directory before any work happens.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmfusion/config.hpp"
#include "mmfusion/diagnostics.hpp"
#include "mmfusion/errors.hpp"
#include "mmfusion/gradcheck.hpp"
#include "mmfusion/text.hpp"
#include "mmfusion/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmfusion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

constexpr std::uint64_t kNoiseEvalStream = 21;
constexpr std::uint64_t kCorrelateStream = 22;

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::string seed;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "plain-text config file (key = value lines)");
    cmd->add_option("--preset", opts.preset,
                    "start from a benchmark preset: global-bias or sample-varying");
    cmd->add_option("--out", opts.out_dir, "shorthand for the 'out' key");
    cmd->add_option("--seed", opts.seed, "shorthand for the 'seed' key");
    cmd->add_option("overrides", opts.overrides, "key=value overrides (highest precedence)");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (opts.preset.empty()) {
        cfg = default_config();
    } else if (opts.preset == "global-bias") {
        cfg = global_bias_benchmark();
    } else if (opts.preset == "sample-varying") {
        cfg = sample_varying_benchmark();
    } else {
        throw ConfigError("unknown preset '" + opts.preset +
                          "' (expected global-bias or sample-varying)");
    }
    if (const char* env = std::getenv("MMFUSION_OUT")) {
        cfg.out_dir = env;  // environment adjusts the default only
    }
    if (!opts.config_path.empty()) {
        apply_config_file(cfg, opts.config_path);
    }
    if (!opts.out_dir.empty()) {
        apply_override(cfg, "out=" + opts.out_dir);
    }
    if (!opts.seed.empty()) {
        apply_override(cfg, "seed=" + opts.seed);
    }
    for (const std::string& kv : opts.overrides) {
        apply_override(cfg, kv);
    }
    return cfg;
}

Modality parse_modality(const std::string& s) {
    if (s == "a") {
        return Modality::a;
    }
    if (s == "v") {
        return Modality::v;
    }
    throw ConfigError("modality must be 'a' or 'v', got '" + s + "'");
}

void write_config_echo(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.txt");
    if (!out) {
        throw IoError("cannot write config echo to '" + (dir / "config.txt").string() + "'");
    }
    out << config_echo(cfg);
    out.flush();
}

FinalMetrics final_metrics_of(const TrainReport& report) {
    const DiagnosticsRecord& last = report.records.back();
    FinalMetrics fm;
    fm.epochs = report.records.size();
    fm.train_loss = last.train_loss;
    fm.test_accuracy = last.test_accuracy;
    fm.air = last.air;
    fm.score_sum_a = last.score_sum_a;
    fm.score_sum_v = last.score_sum_v;
    fm.rotations_used = report.controller.rotations_used;
    return fm;
}

TrainReport run_and_export(const RunConfig& cfg, const Dataset& dataset) {
    const fs::path dir(cfg.out_dir);
    write_config_echo(cfg, dir);
    TrainReport report = run(cfg.train_config(), cfg.model, dataset);
    write_diagnostics_csv(report.records, dir / "diagnostics.csv");
    write_scatter_csv(report.final_scatter, dir / "scatter.csv");
    write_summary(config_echo(cfg), report.controller_events, final_metrics_of(report),
                  dir / "summary.txt");
    save_checkpoint(report.model, cfg.seed, dir / "checkpoint.txt");
    return report;
}

int cmd_train(const CommonOpts& opts, bool dump_data) {
    const RunConfig cfg = resolve_config(opts);
    const Dataset dataset = generate(cfg.data_spec());
    if (dump_data) {
        fs::create_directories(cfg.out_dir);
        dump_dataset(dataset, fs::path(cfg.out_dir) / "dataset.txt");
    }
    const TrainReport report = run_and_export(cfg, dataset);
    const DiagnosticsRecord& last = report.records.back();
    std::cout << "final epoch " << last.epoch << ": loss "
              << text::format_double(last.train_loss) << ", accuracy "
              << text::format_double(last.test_accuracy) << ", air "
              << text::format_double(last.air) << ", rotations "
              << report.controller.rotations_used << "\n";
    std::cout << "exports written to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_eval_noise(const CommonOpts& opts, const std::string& checkpoint,
                   const std::string& modality_str, const std::string& levels_str,
                   const std::string& mode_str) {
    const RunConfig cfg = resolve_config(opts);
    const Modality modality = parse_modality(modality_str);
    PerturbMode mode;
    if (mode_str == "additive") {
        mode = PerturbMode::additive;
    } else if (mode_str == "replace") {
        mode = PerturbMode::replace;
    } else {
        throw ConfigError("mode must be 'additive' or 'replace', got '" + mode_str + "'");
    }
    std::vector<double> levels;
    for (std::string_view tok : text::split(levels_str, ',')) {
        levels.push_back(text::parse_double(tok));
    }
    const Dataset dataset = generate(cfg.data_spec());
    const Checkpoint ck = load_checkpoint(checkpoint);
    const auto rows = noise_response(ck.model, dataset.test, modality, levels, mode,
                                     mix_seed(cfg.seed, kNoiseEvalStream));
    std::cout << "level,accuracy,mean_score_" << modality_char(modality) << "\n";
    for (const NoiseResponseRow& row : rows) {
        std::cout << text::format_double(row.level) << ',' << text::format_double(row.accuracy)
                  << ',' << text::format_double(row.mean_score_perturbed) << "\n";
    }
    return kExitOk;
}

int cmd_correlate(const CommonOpts& opts, const std::string& checkpoint,
                  const std::string& modality_str, const std::string& scatter_path) {
    const RunConfig cfg = resolve_config(opts);
    const Modality modality = parse_modality(modality_str);
    const Dataset dataset = generate(cfg.data_spec());
    const Checkpoint ck = load_checkpoint(checkpoint);
    Rng rng(mix_seed(cfg.seed, kCorrelateStream));
    std::vector<ScatterRow> scatter;
    const double coef = noise_attention_correlation(
        ck.model, dataset.test, modality, rng, scatter_path.empty() ? nullptr : &scatter);
    if (!scatter_path.empty()) {
        write_scatter_csv(scatter, scatter_path);
    }
    std::cout << "noise_attention_correlation(" << modality_char(modality)
              << ") = " << text::format_double(coef) << "\n";
    return kExitOk;
}

int cmd_quag(const CommonOpts& opts, const std::string& checkpoint) {
    const RunConfig cfg = resolve_config(opts);
    const Dataset dataset = generate(cfg.data_spec());
    const Checkpoint ck = load_checkpoint(checkpoint);
    std::cout << "mode,accuracy\n";
    for (const QuagRow& row : quag_ablation(ck.model, dataset.test)) {
        std::cout << ablation_mode_name(row.mode) << ',' << text::format_double(row.accuracy)
                  << "\n";
    }
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances) {
    const GradCheckReport report = run_gradcheck(seed, instances);
    std::cout << "gradcheck: " << report.instances << " instances, max relative error "
              << text::format_double(report.max_rel_error) << " (worst: " << report.worst_param
              << "), tolerance " << text::format_double(report.tolerance) << " -> "
              << (report.passed ? "PASS" : "FAIL") << "\n";
    return report.passed ? kExitOk : kExitFailure;
}

int cmd_demo_cycle(const CommonOpts& opts) {
    CommonOpts effective = opts;
    if (effective.preset.empty()) {
        effective.preset = "global-bias";
    }
    RunConfig base = resolve_config(effective);
    const fs::path dir(base.out_dir);

    struct Arm {
        const char* name;
        bool rollingq;
    };
    std::string table = "method,accuracy,air,correlation,rotations\n";
    double correlation_vanilla = 0.0;
    double correlation_rollingq = 0.0;
    for (const Arm arm : {Arm{"vanilla", false}, Arm{"rollingq", true}}) {
        RunConfig cfg = base;
        cfg.train.rollingq_enabled = arm.rollingq;
        cfg.out_dir = (dir / arm.name).string();
        const Dataset dataset = generate(cfg.data_spec());
        const TrainReport report = run_and_export(cfg, dataset);
        Rng rng(mix_seed(cfg.seed, kCorrelateStream));
        const double coef =
            noise_attention_correlation(report.model, dataset.test, Modality::a, rng);
        (arm.rollingq ? correlation_rollingq : correlation_vanilla) = coef;
        const DiagnosticsRecord& last = report.records.back();
        table += std::string(arm.name) + ',' + text::format_double(last.test_accuracy) + ',' +
                 text::format_double(last.air) + ',' + text::format_double(coef) + ',' +
                 std::to_string(report.controller.rotations_used) + '\n';
    }
    fs::create_directories(dir);
    std::ofstream out(dir / "comparison.csv");
    out << table;
    std::cout << table;
    std::cout << (correlation_rollingq > correlation_vanilla
                      ? "rolling query restored noise sensitivity\n"
                      : "warning: rolling query did not improve noise sensitivity\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal attention fusion lab"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    bool dump_data = false;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model and export diagnostics");
    add_common(train_cmd, train_opts);
    train_cmd->add_flag("--dump-dataset", dump_data, "also dump the dataset as plain text");

    CommonOpts noise_opts;
    std::string noise_checkpoint;
    std::string noise_modality = "a";
    std::string noise_levels = "0,0.25,0.5,0.75,1";
    std::string noise_mode = "additive";
    CLI::App* noise_cmd =
        app.add_subcommand("eval-noise", "accuracy and attention mass under noise levels");
    add_common(noise_cmd, noise_opts);
    noise_cmd->add_option("--checkpoint", noise_checkpoint, "trained checkpoint")->required();
    noise_cmd->add_option("--modality", noise_modality, "modality to perturb (a or v)");
    noise_cmd->add_option("--levels", noise_levels, "comma-separated noise levels in [0,1]");
    noise_cmd->add_option("--mode", noise_mode, "perturbation mode: additive or replace");

    CommonOpts corr_opts;
    std::string corr_checkpoint;
    std::string corr_modality = "a";
    std::string corr_scatter;
    CLI::App* corr_cmd = app.add_subcommand(
        "correlate", "correlation between a clean indicator and attention mass");
    add_common(corr_cmd, corr_opts);
    corr_cmd->add_option("--checkpoint", corr_checkpoint, "trained checkpoint")->required();
    corr_cmd->add_option("--modality", corr_modality, "modality to replace with noise");
    corr_cmd->add_option("--scatter", corr_scatter, "optional key-distribution dump path");

    CommonOpts quag_opts;
    std::string quag_checkpoint;
    CLI::App* quag_cmd =
        app.add_subcommand("quag", "accuracy under attention masking and block averaging");
    add_common(quag_cmd, quag_opts);
    quag_cmd->add_option("--checkpoint", quag_checkpoint, "trained checkpoint")->required();

    std::uint64_t gradcheck_seed = 12345;
    std::size_t gradcheck_instances = 20;
    CLI::App* grad_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of all analytic gradients");
    grad_cmd->add_option("--seed", gradcheck_seed, "instance seed");
    grad_cmd->add_option("--instances", gradcheck_instances, "number of random instances");

    CommonOpts demo_opts;
    CLI::App* demo_cmd = app.add_subcommand(
        "demo-cycle", "paired vanilla vs rolling-query runs on the global-bias benchmark");
    add_common(demo_cmd, demo_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            return cmd_train(train_opts, dump_data);
        }
        if (noise_cmd->parsed()) {
            return cmd_eval_noise(noise_opts, noise_checkpoint, noise_modality, noise_levels,
                                  noise_mode);
        }
        if (corr_cmd->parsed()) {
            return cmd_correlate(corr_opts, corr_checkpoint, corr_modality, corr_scatter);
        }
        if (quag_cmd->parsed()) {
            return cmd_quag(quag_opts, quag_checkpoint);
        }
        if (grad_cmd->parsed()) {
            return cmd_gradcheck(gradcheck_seed, gradcheck_instances);
        }
        if (demo_cmd->parsed()) {
            return cmd_demo_cycle(demo_opts);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
