#pragma once

#include <string>
#include <vector>

#include "eqsim/config.hpp"
#include "eqsim/fixedpoint.hpp"

namespace eqsim {

// Experiment arms for the adaptation sweeps, in CSV order.
enum class Arm { Baseline, NoRetrain, SupRetrain, UnsupRetrain, Volterra };
const char* arm_name(Arm arm);

struct SweepRow {
    double sweep_value = 0.0;
    double d_cd = 0.0;
    Arm arm = Arm::Baseline;
    int seed = 0;
    double ber = 0.0;
    bool diverged = false;
};

// BER for every (dispersion value, arm, seed); CNN retraining arms carry
// their model across the drift steps.
std::vector<SweepRow> run_dispersion_sweep(const ExperimentConfig& cfg);

// BER over the SNR grid for the no-retrain and retrained arms at the
// configured dispersion offsets.
std::vector<SweepRow> run_snr_sweep(const ExperimentConfig& cfg);

std::string dispersion_sweep_csv(const std::vector<SweepRow>& rows, int eval_bits);
std::string snr_sweep_csv(const std::vector<SweepRow>& rows, int eval_bits);

std::vector<ParetoPoint> run_quant_pareto(const ExperimentConfig& cfg);
std::string quant_pareto_csv(const std::vector<ParetoPoint>& points);

struct PipelineReportRow {
    DopSpec dop;
    double macs_per_cycle = 0.0;
    double throughput_symbols_s = 0.0;
    double throughput_bits_s = 0.0;
    double retrain_time_s = 0.0;
    long long buffer_words = 0;
};

std::vector<PipelineReportRow> run_pipeline_report(const ExperimentConfig& cfg);
std::string pipeline_report_csv(const std::vector<PipelineReportRow>& rows);
std::string pipeline_report_summary(const ExperimentConfig& cfg, const std::vector<PipelineReportRow>& rows);

// Formats a BER for human-readable summaries; zero becomes "<1/bits".
std::string ber_display(double ber, long long bits_simulated);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace eqsim
