#include "eqsim/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "eqsim/checkpoint.hpp"
#include "eqsim/rng.hpp"

namespace eqsim {

const char* arm_name(Arm arm) {
    switch (arm) {
        case Arm::Baseline: return "baseline";
        case Arm::NoRetrain: return "no_retrain";
        case Arm::SupRetrain: return "sup";
        case Arm::UnsupRetrain: return "unsup";
        case Arm::Volterra: return "volterra";
    }
    return "?";
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Runs tasks 0..n-1 on up to `workers` threads; results land in caller slots,
// so output order never depends on scheduling.
void run_parallel(int n, int workers, const std::function<void(int)>& task) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, n);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) task(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

ChannelConfig channel_at(const ExperimentConfig& cfg, double d_cd) {
    ChannelConfig ch = cfg.channel;
    ch.fiber.dispersion_ps_nm_km = d_cd;
    return ch;
}

LossVariant unsup_variant(const ExperimentConfig& cfg) {
    return cfg.channel.modulation.order == 2 ? LossVariant::UnsupPam2 : LossVariant::UnsupPam4;
}

// Initial supervised model for one seed, trained at the first sweep point.
Cnn initial_model(const ExperimentConfig& cfg, double d_cd0, int seed_idx) {
    Cnn cnn = make_default_cnn(derive_seed(cfg.seed, seed_idx, 100));
    TrainOptions opt;
    opt.iterations = cfg.train.initial_iterations;
    opt.lr = cfg.train.lr;
    opt.batch_symbols = cfg.train.batch_symbols;
    opt.seed = derive_seed(cfg.seed, seed_idx, 101);
    train(cnn, channel_at(cfg, d_cd0), cfg.loss_for_channel(LossVariant::Mse), opt);
    return cnn;
}

}  // namespace

std::vector<SweepRow> run_dispersion_sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep.variable != "d_cd")
        throw std::invalid_argument("dispersion sweep: [sweep] variable must be d_cd");
    const auto& points = cfg.sweep.values;
    const int n_points = static_cast<int>(points.size());
    const Arm arms[] = {Arm::Baseline, Arm::NoRetrain, Arm::SupRetrain, Arm::UnsupRetrain, Arm::Volterra};
    const int n_arms = 5;
    std::vector<SweepRow> rows(static_cast<std::size_t>(n_points * n_arms * cfg.num_seeds));

    auto slot = [&](int p, int a, int s) -> SweepRow& {
        return rows[static_cast<std::size_t>((p * n_arms + a) * cfg.num_seeds + s)];
    };

    // One task per (seed, arm): retraining arms are sequential across points.
    const int n_tasks = cfg.num_seeds * n_arms;
    run_parallel(n_tasks, cfg.workers, [&](int task) {
        const int seed_idx = task / n_arms;
        const int arm_idx = task % n_arms;
        const Arm arm = arms[arm_idx];

        std::vector<bool> filled(static_cast<std::size_t>(n_points), false);
        auto eval_seed = [&](int p) { return derive_seed(cfg.seed, seed_idx * 1000 + p, 102); };
        auto fill = [&](int p, double ber_value, bool diverged) {
            SweepRow& r = slot(p, arm_idx, seed_idx);
            r.sweep_value = points[static_cast<std::size_t>(p)];
            r.d_cd = r.sweep_value;
            r.arm = arm;
            r.seed = seed_idx;
            r.ber = ber_value;
            r.diverged = diverged;
            filled[static_cast<std::size_t>(p)] = true;
        };

        try {
            switch (arm) {
                case Arm::Baseline: {
                    for (int p = 0; p < n_points; ++p) {
                        Cnn cnn = make_default_cnn(derive_seed(cfg.seed, seed_idx * 100 + p, 103));
                        TrainOptions opt;
                        opt.iterations = cfg.train.initial_iterations;
                        opt.lr = cfg.train.lr;
                        opt.batch_symbols = cfg.train.batch_symbols;
                        opt.seed = derive_seed(cfg.seed, seed_idx * 100 + p, 104);
                        const ChannelConfig ch = channel_at(cfg, points[static_cast<std::size_t>(p)]);
                        train(cnn, ch, cfg.loss_for_channel(LossVariant::Mse), opt);
                        fill(p, evaluate_ber(cnn, ch, cfg.eval_symbols, eval_seed(p)), false);
                    }
                    break;
                }
                case Arm::NoRetrain: {
                    const Cnn cnn = initial_model(cfg, points[0], seed_idx);
                    for (int p = 0; p < n_points; ++p)
                        fill(p,
                             evaluate_ber(cnn, channel_at(cfg, points[static_cast<std::size_t>(p)]),
                                          cfg.eval_symbols, eval_seed(p)),
                             false);
                    break;
                }
                case Arm::SupRetrain:
                case Arm::UnsupRetrain: {
                    const LossKind retrain_loss = cfg.loss_for_channel(
                        arm == Arm::SupRetrain ? LossVariant::Mse : unsup_variant(cfg));
                    Cnn cnn = initial_model(cfg, points[0], seed_idx);
                    for (int p = 0; p < n_points; ++p) {
                        const ChannelConfig ch = channel_at(cfg, points[static_cast<std::size_t>(p)]);
                        if (p > 0) {
                            TrainOptions opt;
                            opt.iterations = cfg.train.retrain_iterations;
                            opt.lr = cfg.train.lr;
                            opt.batch_symbols = cfg.train.batch_symbols;
                            opt.seed = derive_seed(cfg.seed, seed_idx * 100 + p, 105 + arm_idx);
                            train(cnn, ch, retrain_loss, opt);
                        }
                        fill(p, evaluate_ber(cnn, ch, cfg.eval_symbols, eval_seed(p)), false);
                    }
                    break;
                }
                case Arm::Volterra: {
                    for (int p = 0; p < n_points; ++p) {
                        VolterraSpec spec = cfg.volterra.spec;
                        VolterraTrainOptions opt;
                        opt.iterations = cfg.volterra.iterations;
                        opt.lr = cfg.volterra.lr;
                        opt.batch_symbols = cfg.train.batch_symbols;
                        opt.seed = derive_seed(cfg.seed, seed_idx * 100 + p, 107);
                        const ChannelConfig ch = channel_at(cfg, points[static_cast<std::size_t>(p)]);
                        volterra_train(spec, ch, opt);
                        fill(p, volterra_evaluate_ber(spec, ch, cfg.eval_symbols, eval_seed(p)), false);
                    }
                    break;
                }
            }
        } catch (const std::runtime_error&) {
            // Divergence: flag the unfinished points, keep the sweep alive.
            for (int p = 0; p < n_points; ++p)
                if (!filled[static_cast<std::size_t>(p)]) fill(p, std::nan(""), true);
        }
    });
    return rows;
}

std::vector<SweepRow> run_snr_sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep.variable != "snr_db")
        throw std::invalid_argument("snr sweep: [sweep] variable must be snr_db");
    const auto& snrs = cfg.sweep.values;
    const auto& offsets = cfg.sweep.d_cd_offsets;
    const Arm arms[] = {Arm::NoRetrain, Arm::SupRetrain, Arm::UnsupRetrain};
    const int n_arms = 3;
    const int n_snr = static_cast<int>(snrs.size());
    const int n_off = static_cast<int>(offsets.size());
    std::vector<SweepRow> rows(static_cast<std::size_t>(n_snr * n_off * n_arms * cfg.num_seeds));
    auto slot = [&](int si, int oi, int a, int s) -> SweepRow& {
        return rows[static_cast<std::size_t>(((si * n_off + oi) * n_arms + a) * cfg.num_seeds + s)];
    };

    const double d_cd0 = 17.0;
    run_parallel(cfg.num_seeds, cfg.workers, [&](int seed_idx) {
        const Cnn initial = initial_model(cfg, d_cd0, seed_idx);
        for (int oi = 0; oi < n_off; ++oi) {
            const ChannelConfig drifted = channel_at(cfg, offsets[static_cast<std::size_t>(oi)]);
            Cnn sup = initial;
            Cnn unsup = initial;
            TrainOptions opt;
            opt.iterations = cfg.train.retrain_iterations;
            opt.lr = cfg.train.lr;
            opt.batch_symbols = cfg.train.batch_symbols;
            opt.seed = derive_seed(cfg.seed, seed_idx * 100 + oi, 108);
            train(sup, drifted, cfg.loss_for_channel(LossVariant::Mse), opt);
            opt.seed = derive_seed(cfg.seed, seed_idx * 100 + oi, 109);
            train(unsup, drifted, cfg.loss_for_channel(unsup_variant(cfg)), opt);
            const Cnn* models[] = {&initial, &sup, &unsup};
            for (int si = 0; si < n_snr; ++si) {
                ChannelConfig ch = drifted;
                ch.snr_db = snrs[static_cast<std::size_t>(si)];
                for (int a = 0; a < n_arms; ++a) {
                    SweepRow& r = slot(si, oi, a, seed_idx);
                    r.sweep_value = ch.snr_db;
                    r.d_cd = ch.fiber.dispersion_ps_nm_km;
                    r.arm = arms[a];
                    r.seed = seed_idx;
                    r.ber = evaluate_ber(*models[a], ch, cfg.eval_symbols,
                                         derive_seed(cfg.seed, seed_idx * 10000 + si * 100 + oi, 110));
                }
            }
        }
    });
    return rows;
}

std::string dispersion_sweep_csv(const std::vector<SweepRow>& rows, int eval_bits) {
    std::ostringstream out;
    out << "# eqsim-csv dispersion_sweep v1\n";
    out << "d_cd,arm,ber,seed,ber_floor\n";
    const double floor = 1.0 / static_cast<double>(eval_bits);
    for (const auto& r : rows)
        out << fmt(r.d_cd) << ',' << arm_name(r.arm) << ',' << fmt(r.ber) << ',' << r.seed << ','
            << fmt(floor) << "\n";
    return out.str();
}

std::string snr_sweep_csv(const std::vector<SweepRow>& rows, int eval_bits) {
    std::ostringstream out;
    out << "# eqsim-csv snr_sweep v1\n";
    out << "snr_db,d_cd,arm,ber,seed,ber_floor\n";
    const double floor = 1.0 / static_cast<double>(eval_bits);
    for (const auto& r : rows)
        out << fmt(r.sweep_value) << ',' << fmt(r.d_cd) << ',' << arm_name(r.arm) << ',' << fmt(r.ber)
            << ',' << r.seed << ',' << fmt(floor) << "\n";
    return out.str();
}

std::vector<ParetoPoint> run_quant_pareto(const ExperimentConfig& cfg) {
    const Cnn cnn = initial_model(cfg, cfg.channel.fiber.dispersion_ps_nm_km, 0);
    ParetoSweepOptions opt;
    opt.train_iterations = cfg.quant.qat_iterations;
    opt.lr = cfg.train.lr;
    opt.bit_lr = cfg.quant.bit_lr;
    opt.batch_symbols = cfg.quant.batch_symbols;
    opt.eval_symbols = cfg.quant.eval_symbols;
    opt.seed = derive_seed(cfg.seed, 0, 120);
    return bitwidth_pareto_sweep(cfg.channel, cnn, cfg.loss_for_channel(LossVariant::Mse),
                                 cfg.quant.gammas, opt);
}

std::string quant_pareto_csv(const std::vector<ParetoPoint>& points) {
    std::ostringstream out;
    out << "# eqsim-csv quant_pareto v1\n";
    out << "gamma,avg_bits,ber,pareto\n";
    for (const auto& p : points) {
        if (p.diverged) {
            out << fmt(p.gamma) << ",nan,nan,0\n";
            continue;
        }
        out << fmt(p.gamma) << ',' << fmt(p.avg_bits) << ',' << fmt(p.ber) << ',' << (p.pareto ? 1 : 0)
            << "\n";
    }
    return out.str();
}

std::vector<PipelineReportRow> run_pipeline_report(const ExperimentConfig& cfg) {
    std::vector<PipelineReportRow> rows;
    for (const auto& dop : cfg.pipeline.dop_points) {
        PipelineConfig pc = cfg.pipeline.pipeline;
        pc.set_uniform_dop(dop);
        const Throughput tp = pipeline_throughput(pc);
        PipelineReportRow row;
        row.dop = dop;
        double macs = 0.0;
        for (const auto& layer : pc.layers) {
            const auto& d = layer.fp_dop;
            macs += static_cast<double>(d.in * d.out * d.k * d.instances) * 2.0;  // FP + BP partner
        }
        row.macs_per_cycle = macs;
        row.throughput_symbols_s = tp.symbols_per_s;
        row.throughput_bits_s = tp.bits_per_s;
        // retraining time = iterations * sequence cycles / clock
        row.retrain_time_s = static_cast<double>(cfg.train.retrain_iterations) *
                             (cfg.train.batch_symbols * tp.bottleneck_cycles_per_symbol) / pc.clock_hz;
        row.buffer_words = simulate_buffers(pc, cfg.pipeline.report_symbols).total_max_occupancy();
        rows.push_back(row);
    }
    return rows;
}

std::string pipeline_report_csv(const std::vector<PipelineReportRow>& rows) {
    std::ostringstream out;
    out << "# eqsim-csv pipeline_report v1\n";
    out << "dop,macs_per_cycle,throughput_msym_s,throughput_mbit_s,retrain_time_ms,buffer_words\n";
    for (const auto& r : rows) {
        out << r.dop.in << 'x' << r.dop.out << 'x' << r.dop.k << 'x' << r.dop.instances << ','
            << fmt(r.macs_per_cycle) << ',' << fmt(r.throughput_symbols_s / 1e6) << ','
            << fmt(r.throughput_bits_s / 1e6) << ',' << fmt(r.retrain_time_s * 1e3) << ','
            << r.buffer_words << "\n";
    }
    return out.str();
}

std::string pipeline_report_summary(const ExperimentConfig& cfg, const std::vector<PipelineReportRow>& rows) {
    std::ostringstream out;
    out << "pipeline report (clock " << fmt(cfg.pipeline.pipeline.clock_hz / 1e6) << " MHz, "
        << cfg.train.retrain_iterations << " retrain iterations x " << cfg.train.batch_symbols
        << " symbols)\n";
    out << "  dop(in x out x k x inst)   MACs/cyc   throughput      retrain     buffer words\n";
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %2dx%2dx%2dx%-2d %16.0f %10.1f Mbit/s %9.3f ms %10lld\n",
                      r.dop.in, r.dop.out, r.dop.k, r.dop.instances, r.macs_per_cycle,
                      r.throughput_bits_s / 1e6, r.retrain_time_s * 1e3, r.buffer_words);
        out << line;
    }
    out << "  reference: ZCU102 implementation at 300 MHz retrains in 3.3 ms\n";
    return out.str();
}

std::string ber_display(double ber, long long bits_simulated) {
    if (ber > 0.0) return fmt(ber);
    return "<" + fmt(1.0 / static_cast<double>(bits_simulated));
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace eqsim
