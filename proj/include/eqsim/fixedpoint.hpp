#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "eqsim/cnn.hpp"

namespace eqsim {

// Signed/unsigned fixed-point descriptor. frac_bits may be negative for
// grids coarser than one.
struct FixedPointFormat {
    int total_bits = 16;
    int frac_bits = 8;
    bool is_signed = true;

    double step() const;       // 2^-frac_bits
    double min_value() const;
    double max_value() const;
    void validate() const;
};

// Round to nearest (ties away from zero) on the format grid, saturating at
// the representable range.
double quantize(double x, const FixedPointFormat& fmt);

// Smallest signed format of the given width whose integer part covers
// [-abs_max, abs_max]; at least one magnitude bit.
FixedPointFormat format_for_range(double abs_max, int total_bits);

struct SoftQuantResult {
    double value = 0.0;
    double d_value_d_bits = 0.0;
    bool saturated = false;  // straight-through x-gradient is zero here
};

// Linear interpolation between the floor(b)- and ceil(b)-bit quantizations;
// the bit-width gradient is their difference.
SoftQuantResult soft_quantize(double x, double bits, double range_abs_max);

// Formats for every tensor class of the CNN dataflow.
struct QuantConfig {
    std::vector<FixedPointFormat> weights;      // per layer
    std::vector<FixedPointFormat> activations;  // per layer input feature map
    FixedPointFormat multiplier;
    FixedPointFormat accumulator;
    FixedPointFormat gradient;
    // Quantize after every accumulator addition (hardware-faithful). The fast
    // mode quantizes only the final accumulated value.
    bool quantize_each_accumulation = true;

    void validate(const Cnn& cnn) const;
};

// Max |value| observed per tensor class over profiled forward/backward runs.
struct RangeProfile {
    std::vector<double> weights;
    std::vector<double> activations;
    double multiplier = 0.0;
    double accumulator = 0.0;
    double gradient = 0.0;
};

struct QuantWidths {
    int weight_bits = 16;
    int activation_bits = 16;
    int multiplier_bits = 24;
    int accumulator_bits = 32;
    int gradient_bits = 24;
};

// Runs forward and backward passes on random sequences, recording dynamic
// ranges per tensor class.
RangeProfile profile_ranges(const Cnn& cnn, const ChannelConfig& channel, const LossKind& loss,
                            int sequences, std::uint64_t seed);

// Integer-bit assignment: magnitude bits cover the profiled range, the rest
// become fraction bits.
QuantConfig quant_config_from_profile(const RangeProfile& profile, const QuantWidths& widths);

// Number of magnitude bits (excluding sign) needed so 2^m > abs_max; >= 1.
int magnitude_bits_for(double abs_max);

// CNN dataflow with quantization at weight read, every multiplier output,
// accumulator additions, activations, and gradient tensors.
Eigen::ArrayXd quantized_forward(const Cnn& cnn, const Eigen::ArrayXd& y, const QuantConfig& qcfg,
                                 ForwardCache* cache = nullptr);
GradientSet quantized_backward(const Cnn& cnn, const ForwardCache& cache, const Eigen::ArrayXd& dz,
                               const QuantConfig& qcfg);

// Mean of the weight and activation bit widths (the learned classes).
double avg_bits(const QuantConfig& qcfg);

// Learnable per-layer bit widths for weights and activations.
struct BitwidthSearchState {
    Eigen::ArrayXd weight_bits;      // per layer, in [2,16]
    Eigen::ArrayXd activation_bits;  // per layer, in [2,16]
    double gamma = 0.0;

    double average() const;
};

struct ParetoPoint {
    double gamma = 0.0;
    double avg_bits = 0.0;
    double ber = 0.0;
    bool pareto = false;
    bool diverged = false;
    BitwidthSearchState state;
};

struct ParetoSweepOptions {
    int train_iterations = 400;
    double lr = 0.02;
    double bit_lr = 0.1;
    int batch_symbols = 1024;
    int eval_symbols = 1 << 16;
    std::uint64_t seed = 1;
};

// For each gamma: quantization-aware retraining of a copy of `initial` with
// total loss = task loss + gamma * mean(bits), then BER evaluation with the
// rounded integer formats. Marks the Pareto-optimal subset.
std::vector<ParetoPoint> bitwidth_pareto_sweep(const ChannelConfig& channel, const Cnn& initial,
                                               const LossKind& loss, const std::vector<double>& gammas,
                                               const ParetoSweepOptions& opt);

// Dominance marking used by the sweep (exposed for the CLI and tests).
void mark_pareto_front(std::vector<ParetoPoint>& points);

}  // namespace eqsim
