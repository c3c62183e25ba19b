#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "eqsim/channel.hpp"
#include "eqsim/conv1d.hpp"
#include "eqsim/losses.hpp"

namespace eqsim {

// Three 1D-conv layers, no bias terms: 1->3 and 3->3 with ReLU, then a
// stride-2 3->1 output layer so one output predicts one transmitted symbol.
struct Cnn {
    std::vector<ConvLayerSpec> specs;
    std::vector<Kernel> weights;

    int parameter_count() const;
    void validate() const;
};

// Default topology with fan-in uniform init, deterministic per seed.
Cnn make_default_cnn(std::uint64_t seed);

struct ForwardCache {
    std::vector<FeatureMap> inputs;   // per-layer input feature maps
    std::vector<FeatureMap> preacts;  // pre-activation values for ReLU layers (empty otherwise)
    int out_len = 0;
};

struct GradientSet {
    std::vector<Kernel> kernels;
};

// Equalizer pass over a received sample sequence; len(y) must be even and the
// output has len(y)/2 entries.
Eigen::ArrayXd cnn_forward(const Cnn& cnn, const Eigen::ArrayXd& y, ForwardCache* cache = nullptr);

GradientSet cnn_backward(const Cnn& cnn, const ForwardCache& cache, const Eigen::ArrayXd& dz);

// Plain SGD, in place: k <- k - lr * grad.
void sgd_step(Cnn& cnn, const GradientSet& grads, double lr);

struct TrainOptions {
    int iterations = 500;
    double lr = 0.02;
    int batch_symbols = 1024;
    std::uint64_t seed = 1;
};

struct TrainStats {
    double first_loss = 0.0;
    double last_loss = 0.0;
};

// Fresh sequence -> channel -> forward -> loss -> backward -> SGD per
// iteration. Throws on non-finite loss.
TrainStats train(Cnn& cnn, const ChannelConfig& channel, const LossKind& loss, const TrainOptions& opt);

// Equalize a received sequence and hard-decide against the target levels.
SymbolSequence cnn_decide(const Cnn& cnn, const Eigen::ArrayXd& y, const ModulationScheme& mod);

// Measure BER over n_symbols fresh random symbols at the given seed.
double evaluate_ber(const Cnn& cnn, const ChannelConfig& channel, int n_symbols, std::uint64_t seed);

}  // namespace eqsim
