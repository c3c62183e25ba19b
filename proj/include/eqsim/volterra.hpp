#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

#include "eqsim/channel.hpp"

namespace eqsim {

// Third-order Volterra equalizer, linear in its weights. Kernels are
// symmetric, so only unique index multisets carry a weight. The second- and
// third-order terms use the central F2 / F3 taps of the F1 window.
struct VolterraSpec {
    std::array<int, 3> memory{35, 17, 9};  // F1 >= F2 >= F3 > 0, all odd
    bool include_bias = true;
    Eigen::VectorXd weights;        // empty until trained; length = feature_count()
    Eigen::VectorXd feature_scale;  // per-feature normalization, 1 = untouched

    int feature_count() const;  // F1 + F2(F2+1)/2 + C(F3+2,3), +1 if bias
    void validate() const;
};

// Feature vector for one decision instant; window must hold at least F1
// samples and is read centered.
Eigen::VectorXd volterra_features(const Eigen::ArrayXd& window, const VolterraSpec& spec);

// One output per symbol: stride-2 windows over the oversampled input,
// zero-padded at the edges.
Eigen::ArrayXd volterra_equalize(const Eigen::ArrayXd& y, const VolterraSpec& spec);

struct VolterraTrainOptions {
    int iterations = 500;
    double lr = 0.02;
    int batch_symbols = 1024;
    std::uint64_t seed = 1;
};

// Supervised MSE training with SGD against the modulation's target levels.
// Features are standardized to unit RMS on a calibration sequence first.
void volterra_train(VolterraSpec& spec, const ChannelConfig& channel, const VolterraTrainOptions& opt);

double volterra_evaluate_ber(const VolterraSpec& spec, const ChannelConfig& channel, int n_symbols,
                             std::uint64_t seed);

}  // namespace eqsim
