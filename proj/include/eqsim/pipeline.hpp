#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eqsim {

// MAC lanes per dimension plus duplicated stage instances.
struct DopSpec {
    int in = 1;
    int out = 1;
    int k = 1;
    int instances = 1;
};

// One conv layer of the streaming design: a forward stage plus its backward
// CalcGrad partner (CalcKGrad, and CalcInGrad except for the first layer).
struct LayerPipeline {
    int c_in = 1;
    int c_out = 1;
    int kernel = 21;
    int stride = 1;
    DopSpec fp_dop;
    DopSpec bp_dop;
    int fp_depth = 25;
    int bp_depth = 25;
};

// Derived per-stage descriptor used for reporting and the closed-form rate.
struct StageDesc {
    std::string name;
    int c_in = 1, c_out = 1, kernel = 1;
    DopSpec dop;
    int depth = 25;
    double firings_per_symbol = 1.0;

    // ceil(C_in/dop_in) * ceil(C_out/dop_out) * ceil(K/dop_k), clamped to >= 1.
    long long per_instance_interval() const;
    // Aggregate cycles per firing; below 1 when instances overlap work.
    double initiation_interval() const;
    double cycles_per_symbol() const { return initiation_interval() * firings_per_symbol; }
};

struct PipelineConfig {
    std::vector<LayerPipeline> layers;
    int loss_depth = 8;
    double clock_hz = 300e6;
    int bits_per_symbol = 1;
    int oversampling = 2;

    void validate() const;
    std::vector<StageDesc> stages() const;
    // Applies one DOP to every FP stage and mirrors it onto the BP partners,
    // clamping each lane count to its dimension.
    void set_uniform_dop(const DopSpec& dop);
    // Sum of stage depths, the buffer-occupancy scale of the design.
    int total_depth() const;

    // The paper's three-layer equalizer with per-stage DOP = 1.
    static PipelineConfig default_cnn();
};

struct Throughput {
    double symbols_per_s = 0.0;
    double bits_per_s = 0.0;
    double bottleneck_cycles_per_symbol = 0.0;
    std::string bottleneck_stage;
};

// Bottleneck rate: clock / max over stages of cycles-per-symbol.
Throughput pipeline_throughput(const PipelineConfig& cfg);

struct BufferStats {
    std::string name;
    long long max_occupancy = 0;
    long long produced = 0;
    long long consumed = 0;
    long long final_occupancy = 0;
};

struct BufferTrace {
    std::vector<BufferStats> buffers;  // the FP->BP feature-map buffers
    long long cycles = 0;
    double measured_symbols_per_cycle = 0.0;

    long long total_max_occupancy() const;
};

// Cycle-accurate simulation of the streaming pipeline. In naive mode the
// backward stages only start once the forward pass has finished, i.e. the
// buffers hold entire feature maps.
BufferTrace simulate_buffers(const PipelineConfig& cfg, int n_symbols, bool naive_mode = false);

struct MemoryReport {
    long long naive_words = 0;
    long long pipelined_words = 0;
    double ratio = 0.0;
    long long naive_bits = 0;
    long long pipelined_bits = 0;
};

// Full-sequence storage versus the streaming buffers of simulate_buffers.
MemoryReport memory_report(const PipelineConfig& cfg, int n_symbols, int activation_bits);

}  // namespace eqsim
