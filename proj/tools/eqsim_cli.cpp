// Command-line driver for the equalizer testbench: channel sweeps,
// quantization search, pipeline reports, and model training/evaluation.

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <string>

#include "eqsim/checkpoint.hpp"
#include "eqsim/config.hpp"
#include "eqsim/experiments.hpp"
#include "eqsim/rng.hpp"
#include "eqsim/selftest.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitExperiment = 2;

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    int seed = -1;
    int workers = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "experiment configuration file");
    if (config_required) opt->required();
    cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
    cmd->add_option("--out", args.out_path, "output path (overrides the config)");
    cmd->add_option("--workers", args.workers, "concurrent workers (overrides the config)");
}

eqsim::ExperimentConfig load_config(const CommonArgs& args) {
    eqsim::ExperimentConfig cfg = eqsim::ExperimentConfig::load(args.config_path);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_path.empty()) cfg.out_path = args.out_path;
    if (args.workers > 0) cfg.workers = args.workers;
    return cfg;
}

void emit(const eqsim::ExperimentConfig& cfg, const std::string& csv) {
    if (cfg.out_path.empty())
        std::cout << csv;
    else
        eqsim::write_text_file(cfg.out_path, csv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eqsim - trainable equalizer testbench for a dispersive IM/DD link"};
    app.require_subcommand(1);

    CommonArgs sweep_d, sweep_s, pareto, pipe, train_args, eval_args;
    bool selftest_wrong_flip = false;

    auto* cmd_sweep_d = app.add_subcommand("sweep-dispersion", "BER vs. fiber dispersion for all arms");
    add_common(cmd_sweep_d, sweep_d);
    auto* cmd_sweep_s = app.add_subcommand("sweep-snr", "BER vs. SNR at fixed dispersion offsets");
    add_common(cmd_sweep_s, sweep_s);
    auto* cmd_pareto = app.add_subcommand("quant-pareto", "learnable bit-width trade-off sweep");
    add_common(cmd_pareto, pareto);
    auto* cmd_pipe = app.add_subcommand("pipeline-report", "streaming-architecture throughput and buffers");
    add_common(cmd_pipe, pipe);
    auto* cmd_train = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(cmd_train, train_args);
    auto* cmd_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on the configured channel");
    add_common(cmd_eval, eval_args);
    auto* cmd_selftest = app.add_subcommand("selftest", "run the built-in property suites");
    cmd_selftest->add_flag("--inject-wrong-flip", selftest_wrong_flip,
                           "test fixture: corrupt the gradient path so the suite must fail");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_selftest->parsed()) {
            eqsim::SelftestOptions opts;
            opts.inject_wrong_flip = selftest_wrong_flip;
            return eqsim::run_selftest(std::cout, opts) ? kExitOk : kExitExperiment;
        }

        if (cmd_sweep_d->parsed()) {
            const auto cfg = load_config(sweep_d);
            const auto rows = eqsim::run_dispersion_sweep(cfg);
            emit(cfg, eqsim::dispersion_sweep_csv(
                          rows, cfg.eval_symbols * cfg.channel.modulation.bits_per_symbol()));
            for (const auto& r : rows)
                if (r.diverged) return kExitExperiment;
            return kExitOk;
        }
        if (cmd_sweep_s->parsed()) {
            const auto cfg = load_config(sweep_s);
            const auto rows = eqsim::run_snr_sweep(cfg);
            emit(cfg,
                 eqsim::snr_sweep_csv(rows, cfg.eval_symbols * cfg.channel.modulation.bits_per_symbol()));
            return kExitOk;
        }
        if (cmd_pareto->parsed()) {
            const auto cfg = load_config(pareto);
            const auto points = eqsim::run_quant_pareto(cfg);
            emit(cfg, eqsim::quant_pareto_csv(points));
            for (const auto& p : points)
                if (p.diverged) return kExitExperiment;
            return kExitOk;
        }
        if (cmd_pipe->parsed()) {
            const auto cfg = load_config(pipe);
            const auto rows = eqsim::run_pipeline_report(cfg);
            std::cout << eqsim::pipeline_report_summary(cfg, rows);
            if (!cfg.out_path.empty()) eqsim::write_text_file(cfg.out_path, eqsim::pipeline_report_csv(rows));
            return kExitOk;
        }
        if (cmd_train->parsed()) {
            const auto cfg = load_config(train_args);
            const std::string path = !cfg.out_path.empty() ? cfg.out_path : cfg.checkpoint;
            if (path.empty())
                throw std::invalid_argument("train: set [model] checkpoint or --out for the model file");
            eqsim::Cnn cnn = eqsim::make_default_cnn(eqsim::derive_seed(cfg.seed, 0, 100));
            eqsim::TrainOptions opt;
            opt.iterations = cfg.train.initial_iterations;
            opt.lr = cfg.train.lr;
            opt.batch_symbols = cfg.train.batch_symbols;
            opt.seed = eqsim::derive_seed(cfg.seed, 0, 101);
            const auto stats = eqsim::train(cnn, cfg.channel, cfg.loss, opt);
            eqsim::save_checkpoint(path, cnn);
            std::cout << "trained " << opt.iterations << " iterations, loss " << stats.first_loss << " -> "
                      << stats.last_loss << ", checkpoint " << path << "\n";
            return kExitOk;
        }
        if (cmd_eval->parsed()) {
            const auto cfg = load_config(eval_args);
            if (cfg.checkpoint.empty())
                throw std::invalid_argument("evaluate: set [model] checkpoint in the config");
            const long long bits =
                static_cast<long long>(cfg.eval_symbols) * cfg.channel.modulation.bits_per_symbol();
            double ber_value = 0.0;
            const std::string kind = eqsim::checkpoint_kind(cfg.checkpoint);
            if (kind == "cnn") {
                const eqsim::Cnn cnn = eqsim::load_cnn_checkpoint(cfg.checkpoint);
                ber_value = eqsim::evaluate_ber(cnn, cfg.channel, cfg.eval_symbols, cfg.seed);
            } else {
                const eqsim::VolterraSpec spec = eqsim::load_volterra_checkpoint(cfg.checkpoint);
                ber_value = eqsim::volterra_evaluate_ber(spec, cfg.channel, cfg.eval_symbols, cfg.seed);
            }
            std::cout << "model " << kind << ", " << cfg.eval_symbols << " symbols, ber "
                      << eqsim::ber_display(ber_value, bits) << "\n";
            return kExitOk;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitExperiment;
    }
    return kExitValidation;
}
